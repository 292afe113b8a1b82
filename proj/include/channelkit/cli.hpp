// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file cli.hpp
 * @brief Command-line front end: stats, gradcheck, oracle, train, analyze-fc.
 *
 * Exit codes: 0 success, 1 verification failure (a gradient, oracle or
 * training check did not pass), 2 usage or parameter errors.
 */

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "channelkit/checkpoint.hpp"
#include "channelkit/config.hpp"
#include "channelkit/cost.hpp"
#include "channelkit/data.hpp"
#include "channelkit/gradcheck.hpp"
#include "channelkit/model.hpp"
#include "channelkit/oracle_suite.hpp"
#include "channelkit/train.hpp"

namespace channelkit {
namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFail = 1;
inline constexpr int kExitUsage = 2;

/// Published reference totals the stats matrix compares against.
struct ReferenceRow {
    const char* model;
    double alpha;
    const char* metric;  // params | flops
    long long reference;
};

inline const std::vector<ReferenceRow>& reference_totals() {
    static const std::vector<ReferenceRow> rows = {
        {"v1", 1.0, "params", 3'700'000},        {"v1", 1.0, "flops", 407'000'000},
        {"mobilenet", 1.0, "params", 4'200'000}, {"mobilenet", 1.0, "flops", 569'000'000},
        {"v2", 1.0, "params", 2'700'000},        {"v3", 1.0, "params", 1'700'000},
        {"mobilenet", 0.75, "params", 2'600'000}, {"mobilenet", 0.5, "params", 1'300'000},
        {"v1", 0.75, "params", 2'300'000},        {"v1", 0.5, "params", 1'200'000},
    };
    return rows;
}

namespace detail_cli {

inline bool known_model(const std::string& m) {
    return m == "v1" || m == "v2" || m == "v3" || m == "v1-minus" || m == "mobilenet";
}

inline void print_cost_table(std::ostream& os, const std::string& title, const CostReport& rep) {
    os << title << "\n";
    os << std::left << std::setw(12) << "layer" << std::right << std::setw(12) << "params"
       << std::setw(14) << "flops" << "   out\n";
    for (const LayerCost& lc : rep.per_layer) {
        os << std::left << std::setw(12) << lc.layer << std::right << std::setw(12) << lc.params
           << std::setw(14) << lc.flops << "   " << shape_str(lc.out) << "\n";
    }
    os << std::left << std::setw(12) << "TOTAL" << std::right << std::setw(12) << rep.total_params
       << std::setw(14) << rep.total_flops << "\n";
}

}  // namespace detail_cli

inline int cmd_stats(const std::string& model, double alpha, int64_t input_size, int64_t classes,
                     const std::string& csv_path) {
    if (model == "all") {
        std::cout << std::left << std::setw(22) << "model" << std::setw(8) << "alpha"
                  << std::setw(8) << "metric" << std::right << std::setw(14) << "computed"
                  << std::setw(14) << "reference" << std::setw(10) << "delta\n";
        for (const ReferenceRow& row : reference_totals()) {
            ModelSpec spec = make_model_spec(row.model, row.alpha, 1000, 224);
            CostReport rep = cost_model_total(spec);
            const long long computed =
                std::string(row.metric) == "params" ? rep.total_params : rep.total_flops;
            const double delta = 100.0 * (static_cast<double>(computed) - row.reference) /
                                 static_cast<double>(row.reference);
            std::ostringstream name;
            name << (row.alpha != 1.0 ? (std::ostringstream{} << row.alpha << " ").str() : "")
                 << spec.name;
            std::cout << std::left << std::setw(22) << name.str() << std::setw(8) << row.alpha
                      << std::setw(8) << row.metric << std::right << std::setw(14) << computed
                      << std::setw(14) << row.reference << std::setw(9) << std::showpos
                      << std::fixed << std::setprecision(2) << delta << "%" << std::noshowpos
                      << "\n";
            std::cout.unsetf(std::ios::fixed);
        }
        return kExitOk;
    }
    if (!detail_cli::known_model(model)) {
        std::cerr << "stats: unknown model '" << model
                  << "' (expected v1, v2, v3, v1-minus, mobilenet, all)\n";
        return kExitUsage;
    }
    ModelSpec spec = make_model_spec(model, alpha, classes, input_size);
    CostReport rep = cost_model_total(spec);
    detail_cli::print_cost_table(std::cout,
                                 spec.name + " alpha=" + std::to_string(alpha) + " input=" +
                                     std::to_string(input_size),
                                 rep);
    if (!csv_path.empty()) {
        std::ofstream os(csv_path, std::ios::trunc);
        if (!os) {
            std::cerr << "stats: cannot write '" << csv_path << "'\n";
            return kExitUsage;
        }
        write_cost_csv(os, rep);
    }
    return kExitOk;
}

inline int cmd_gradcheck(const std::string& op, const std::string& model, uint64_t seed,
                         double tol, double alpha, int64_t input_size, int64_t classes,
                         int64_t probes, int trials) {
    std::vector<GradCheckReport> reports;
    if (!op.empty()) {
        reports = check_op(op, seed, tol, trials);
    } else {
        if (!detail_cli::known_model(model)) {
            std::cerr << "gradcheck: unknown model '" << model << "'\n";
            return kExitUsage;
        }
        Model m(make_model_spec(model, alpha, classes, input_size), seed);
        reports = check_model(m, 2, seed, tol, probes);
    }
    print_reports(std::cout, reports);
    const bool ok = all_passed(reports) && !reports.empty();
    std::cout << (ok ? "gradcheck: all blocks passed\n" : "gradcheck: FAILURES present\n");
    return ok ? kExitOk : kExitVerifyFail;
}

inline int cmd_oracle(int trials, uint64_t seed, bool inject_fault) {
    std::vector<OracleReport> reports = run_oracle_suite(trials, seed, inject_fault);
    for (const OracleReport& r : reports)
        std::printf("%-44s trials=%-5d max|diff|=%.3e  %s\n", r.name.c_str(), r.trials,
                    r.max_abs_diff, r.passed ? "ok" : "FAIL");
    if (!all_passed(reports)) {
        std::printf("oracle: FAILURES present\n");
        return kExitVerifyFail;
    }
    std::printf("oracle: all equivalences hold\n");
    return kExitOk;
}

inline int cmd_train(const std::string& model, const std::string& dataset,
                     const std::string& config_path, int epochs, const std::string& out_dir,
                     double alpha, int64_t input_size, int64_t classes, uint64_t seed,
                     int batch_size, double lr, int per_class, double noise, int64_t limit,
                     bool no_augment) {
    if (!detail_cli::known_model(model)) {
        std::cerr << "train: unknown model '" << model << "'\n";
        return kExitUsage;
    }
    TrainConfig cfg;
    if (!config_path.empty()) cfg = load_train_config(config_path);
    if (epochs >= 0) {
        cfg.total_epochs = epochs;
        std::vector<int> kept;
        for (int e : cfg.decay_epochs)
            if (e < epochs) kept.push_back(e);
        cfg.decay_epochs = kept;
    }
    if (batch_size > 0) cfg.batch_size = batch_size;
    if (lr > 0) cfg.base_lr = lr;
    if (seed) cfg.seed = seed;
    if (no_augment) cfg.augment = false;
    cfg.validate();

    Dataset train_ds, eval_ds;
    if (dataset == "synthetic") {
        train_ds = synthetic_dataset(static_cast<int>(classes), per_class, input_size, noise,
                                     cfg.seed, "train");
        eval_ds = synthetic_dataset(static_cast<int>(classes), std::max(per_class / 5, 1),
                                    input_size, noise, cfg.seed, "eval");
    } else if (dataset.rfind("cifar10:", 0) == 0) {
        const std::string dir = dataset.substr(8);
        if (dir.empty() || !std::filesystem::exists(dir)) {
            std::cerr << "train: cifar10 path '" << dir << "' does not exist\n";
            return kExitUsage;
        }
        auto [tr, te] = load_cifar10_dir(dir);
        if (limit > 0) {
            tr = tr.take(static_cast<size_t>(limit));
            te = te.take(static_cast<size_t>(std::max<int64_t>(limit / 5, 1)));
        }
        const ChannelStats st = compute_channel_stats(tr);
        train_ds = normalize(tr, st);
        eval_ds = normalize(te, st);
        if (input_size != kCifarSide) {
            std::cerr << "train: cifar10 images are 32x32; use --input-size 32\n";
            return kExitUsage;
        }
        classes = 10;
    } else {
        std::cerr << "train: dataset must be 'synthetic' or 'cifar10:PATH', got '" << dataset
                  << "'\n";
        return kExitUsage;
    }

    Model m(make_model_spec(model, alpha, classes, input_size), cfg.seed, cfg.dropout_p);
    std::cout << m.spec().name << ": " << m.param_count() << " parameters, train "
              << train_ds.size() << " / eval " << eval_ds.size() << " samples\n";
    TrainResult res = train(m, train_ds, eval_ds, cfg, out_dir);
    if (!out_dir.empty()) {
        ModelConfig mc{m.spec().name, model, alpha, classes, input_size};
        save_model_config(out_dir + "/model.json", mc);
    }
    for (const EpochMetrics& e : res.metrics.epochs)
        std::printf("epoch %3d  lr %.2e  loss %.4f  train %.4f  eval %.4f\n", e.epoch, e.lr,
                    e.train_loss, e.train_top1, e.eval_top1);
    if (res.aborted) {
        std::cerr << "train: aborted (" << res.abort_reason << "); last good checkpoint kept\n";
        return kExitVerifyFail;
    }
    if (!res.best_checkpoint.empty())
        std::cout << "best epoch " << res.best_epoch << " (top1 " << res.best_eval << ") -> "
                  << res.best_checkpoint << "\n";
    return kExitOk;
}

inline int cmd_analyze_fc(const std::string& checkpoint_path, std::vector<double> taus,
                          const std::string& csv_path) {
    auto blocks = load_checkpoint(checkpoint_path);
    const Tensor* fc = nullptr;
    bool has_ccl = false;
    for (const auto& [name, tensor] : blocks) {
        if (name == "fc.weight") fc = &tensor;
        if (name == "ccl.weight") has_ccl = true;
    }
    if (!fc) {
        std::cerr << "analyze-fc: checkpoint has no fc.weight block"
                  << (has_ccl ? " (model uses a ccl classifier, which has no dense weight matrix)"
                              : "")
                  << "\n";
        return kExitUsage;
    }
    if (taus.empty()) taus = {0.01, 0.05, 0.1};
    SparsityReport rep = analyze_fc_sparsity(*fc, taus);
    print_sparsity(std::cout, rep);
    if (!csv_path.empty()) {
        std::ofstream os(csv_path, std::ios::trunc);
        if (!os) {
            std::cerr << "analyze-fc: cannot write '" << csv_path << "'\n";
            return kExitUsage;
        }
        write_sparsity_csv(os, rep);
    }
    return kExitOk;
}

/// Argument-vector entry point; used by main() and exercised by tests.
inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"channelkit: channel-wise convolution networks, cost model and training"};
    app.require_subcommand(1);

    // stats
    auto* stats = app.add_subcommand("stats", "per-layer parameter/FLOP table");
    std::string s_model = "v1", s_csv, s_config;
    double s_alpha = 1.0;
    int64_t s_input = 224, s_classes = 1000;
    stats->add_option("--model", s_model, "v1|v2|v3|v1-minus|mobilenet|all");
    stats->add_option("--alpha", s_alpha, "width multiplier in (0, 1]");
    stats->add_option("--input-size", s_input, "input resolution");
    stats->add_option("--classes", s_classes, "number of classes");
    stats->add_option("--csv", s_csv, "write per-layer CSV here");
    stats->add_option("--model-config", s_config, "read model settings from a JSON file");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string g_op, g_model;
    uint64_t g_seed = 1;
    double g_tol = 1e-6, g_alpha = 0.0625;
    int64_t g_input = 32, g_classes = 10, g_probes = 8;
    int g_trials = 3;
    gc->add_option("--op", g_op, "operator name (see --list)");
    gc->add_option("--model", g_model, "model name for a whole-network check");
    gc->add_option("--seed", g_seed, "rng seed");
    gc->add_option("--tol", g_tol, "relative tolerance");
    gc->add_option("--alpha", g_alpha, "width multiplier for model checks");
    gc->add_option("--input-size", g_input, "input resolution for model checks");
    gc->add_option("--classes", g_classes, "classes for model checks");
    gc->add_option("--probes", g_probes, "max probed elements per block (0 = all)");
    gc->add_option("--trials", g_trials, "randomized shape trials per operator");
    bool g_list = false;
    gc->add_flag("--list", g_list, "list checkable operators");

    // oracle
    auto* orc = app.add_subcommand("oracle", "dense-oracle equivalence suite");
    int o_trials = 100;
    uint64_t o_seed = 1;
    bool o_fault = false;
    orc->add_option("--trials", o_trials, "randomized trials per equivalence");
    orc->add_option("--seed", o_seed, "rng seed");
    orc->add_flag("--inject-fault", o_fault, "perturb one comparison (failure-path fixture)");

    // train
    auto* tr = app.add_subcommand("train", "desk-scale training");
    std::string t_model = "v1", t_dataset, t_config, t_out = "train-out";
    int t_epochs = -1, t_batch = 0, t_per_class = 50;
    double t_alpha = 0.0625, t_lr = 0, t_noise = 0.25;
    int64_t t_input = 32, t_classes = 10, t_limit = 0;
    uint64_t t_seed = 0;
    bool t_noaug = false;
    tr->add_option("--model", t_model, "v1|v2|v3|v1-minus|mobilenet");
    tr->add_option("--dataset", t_dataset, "synthetic | cifar10:PATH")->required();
    tr->add_option("--config", t_config, "JSON train config");
    tr->add_option("--epochs", t_epochs, "override total epochs");
    tr->add_option("--out", t_out, "output directory (metrics.csv, best/last.cnkt)");
    tr->add_option("--alpha", t_alpha, "width multiplier");
    tr->add_option("--input-size", t_input, "input resolution");
    tr->add_option("--classes", t_classes, "number of classes (synthetic)");
    tr->add_option("--seed", t_seed, "override seed");
    tr->add_option("--batch", t_batch, "override batch size");
    tr->add_option("--lr", t_lr, "override base learning rate");
    tr->add_option("--per-class", t_per_class, "synthetic samples per class");
    tr->add_option("--noise", t_noise, "synthetic noise level");
    tr->add_option("--limit", t_limit, "cap cifar10 training samples");
    tr->add_flag("--no-augment", t_noaug, "disable crop/flip augmentation");

    // analyze-fc
    auto* afc = app.add_subcommand("analyze-fc", "classifier weight sparsity report");
    std::string a_ckpt, a_csv;
    std::vector<double> a_taus;
    afc->add_option("--checkpoint", a_ckpt, "CNKT checkpoint path")->required();
    afc->add_option("--tau", a_taus, "sparsity thresholds")->delimiter(',');
    afc->add_option("--csv", a_csv, "write histogram CSV here");

    std::vector<const char*> argv;
    argv.push_back("channelkit");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) ? kExitUsage : kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (stats->parsed()) {
            if (!s_config.empty()) {
                ModelConfig mc = load_model_config(s_config);
                return cmd_stats(mc.version, mc.alpha, mc.input_size, mc.classes, s_csv);
            }
            return cmd_stats(s_model, s_alpha, s_input, s_classes, s_csv);
        }
        if (gc->parsed()) {
            if (g_list) {
                for (const std::string& n : checkable_ops()) std::cout << n << "\n";
                return kExitOk;
            }
            if (g_op.empty() == g_model.empty()) {
                std::cerr << "gradcheck: pass exactly one of --op or --model\n";
                return kExitUsage;
            }
            return cmd_gradcheck(g_op, g_model, g_seed, g_tol, g_alpha, g_input, g_classes,
                                 g_probes, g_trials);
        }
        if (orc->parsed()) return cmd_oracle(o_trials, o_seed, o_fault);
        if (tr->parsed())
            return cmd_train(t_model, t_dataset, t_config, t_epochs, t_out, t_alpha, t_input,
                             t_classes, t_seed, t_batch, t_lr, t_per_class, t_noise, t_limit,
                             t_noaug);
        if (afc->parsed()) return cmd_analyze_fc(a_ckpt, a_taus, a_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace cli
}  // namespace channelkit
