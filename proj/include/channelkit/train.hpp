// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file train.hpp
 * @brief Desk-scale supervised training: SGD with classical momentum, a
 *        step-decay learning-rate schedule, per-epoch metrics, best-eval
 *        checkpointing, and the classifier-weight sparsity analysis.
 *
 * Runs are deterministic for a fixed seed in single-worker mode: every
 * random choice (shuffling, augmentation, dropout) draws from a stream
 * derived from the config seed, and gradient reductions follow a fixed
 * order.
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "channelkit/aux_ops.hpp"
#include "channelkit/checkpoint.hpp"
#include "channelkit/data.hpp"
#include "channelkit/model.hpp"

namespace channelkit {

struct TrainConfig {
    double base_lr = 0.1;
    double momentum = 0.9;
    double decay_factor = 0.1;
    std::vector<int> decay_epochs = {45, 60, 65, 70, 75};
    int total_epochs = 80;
    int batch_size = 64;
    double dropout_p = 1e-4;
    uint64_t seed = 1;
    bool augment = true;

    void validate() const {
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (total_epochs < 0) throw std::invalid_argument("TrainConfig: total_epochs must be >= 0");
        for (size_t i = 0; i < decay_epochs.size(); ++i) {
            if (decay_epochs[i] >= total_epochs)
                throw std::invalid_argument("TrainConfig: decay epoch " +
                                            std::to_string(decay_epochs[i]) +
                                            " not below total_epochs " +
                                            std::to_string(total_epochs));
            if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])
                throw std::invalid_argument("TrainConfig: decay_epochs must be strictly increasing");
        }
    }
};

/// lr = base_lr * decay_factor^(number of decay epochs <= epoch).
inline double lr_at(int epoch, const TrainConfig& cfg) {
    int drops = 0;
    for (int e : cfg.decay_epochs)
        if (e <= epoch) ++drops;
    return cfg.base_lr * std::pow(cfg.decay_factor, drops);
}

// ---------------------------------------------------------------------------
// SGD with classical momentum: v <- momentum*v + g; w <- w - lr*v.
// ---------------------------------------------------------------------------

struct SgdState {
    std::vector<Tensor> velocity;

    void init(const std::vector<ParamBlock*>& params) {
        velocity.clear();
        velocity.reserve(params.size());
        for (const ParamBlock* p : params) velocity.push_back(Tensor::zeros(p->value.shape));
    }
};

inline void sgd_momentum_step(const std::vector<ParamBlock*>& params, SgdState& state, double lr,
                              double momentum) {
    if (state.velocity.size() != params.size())
        throw std::invalid_argument("sgd_momentum_step: velocity not initialized for " +
                                    std::to_string(params.size()) + " blocks");
    for (size_t i = 0; i < params.size(); ++i) {
        ParamBlock& p = *params[i];
        Tensor& v = state.velocity[i];
        if (!v.same_shape(p.grad))
            throw std::invalid_argument("sgd_momentum_step: shape mismatch on " + p.name);
        for (int64_t j = 0; j < v.numel(); ++j) {
            v.data[j] = momentum * v.data[j] + p.grad.data[j];
            p.value.data[j] -= lr * v.data[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    double train_top1 = std::numeric_limits<double>::quiet_NaN();
    double eval_top1 = std::numeric_limits<double>::quiet_NaN();
};

struct Metrics {
    std::vector<EpochMetrics> epochs;
};

inline void write_metrics_csv(std::ostream& os, const Metrics& m) {
    os << "epoch,lr,train_loss,train_top1,eval_top1\n";
    os << std::setprecision(17);
    for (const EpochMetrics& e : m.epochs)
        os << e.epoch << "," << e.lr << "," << e.train_loss << "," << e.train_top1 << ","
           << e.eval_top1 << "\n";
}

// ---------------------------------------------------------------------------
// Evaluation and training
// ---------------------------------------------------------------------------

inline double evaluate_top1(const Model& model, const Dataset& ds, int batch_size) {
    if (ds.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    int64_t correct = 0;
    for (size_t at = 0; at < ds.size(); at += batch_size) {
        std::vector<size_t> idx;
        for (size_t i = at; i < std::min(ds.size(), at + batch_size); ++i) idx.push_back(i);
        Tensor x = make_batch(ds, idx);
        OpCache cache;
        Tensor logits = model.forward(x, Mode::Infer, cache);
        const int64_t K = logits.shape[1];
        for (size_t b = 0; b < idx.size(); ++b) {
            int64_t arg = 0;
            for (int64_t k = 1; k < K; ++k)
                if (logits.data[b * K + k] > logits.data[b * K + arg]) arg = k;
            if (arg == ds.labels[idx[b]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct TrainResult {
    Metrics metrics;
    double best_eval = -1.0;
    int best_epoch = -1;
    bool aborted = false;
    std::string abort_reason;
    std::string best_checkpoint;  // file paths, empty when out_dir is empty
    std::string last_checkpoint;
};

/// Runs the full schedule. Writes metrics.csv, best.cnkt and last.cnkt under
/// out_dir (pass "" to keep everything in memory). A non-finite loss aborts
/// the run; checkpoints already on disk are left as the last good state.
inline TrainResult train(Model& model, const Dataset& train_ds, const Dataset& eval_ds,
                         const TrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    if (train_ds.size() > 0 && train_ds.images.front().shape[1] != model.spec().input_size)
        throw std::invalid_argument("train: dataset image size " +
                                    std::to_string(train_ds.images.front().shape[1]) +
                                    " does not match model input size " +
                                    std::to_string(model.spec().input_size));
    TrainResult result;
    const bool to_disk = !out_dir.empty();
    if (to_disk) std::filesystem::create_directories(out_dir);

    auto save = [&](const std::string& file) -> std::string {
        if (!to_disk) return "";
        const std::string path = out_dir + "/" + file;
        save_checkpoint(path, model.state_blocks());
        return path;
    };
    auto write_metrics = [&]() {
        if (!to_disk) return;
        std::ofstream os(out_dir + "/metrics.csv", std::ios::trunc);
        write_metrics_csv(os, result.metrics);
    };

    std::vector<ParamBlock*> params = model.params();
    SgdState sgd;
    sgd.init(params);

    if (cfg.total_epochs == 0) {
        EpochMetrics em;
        em.epoch = 0;
        em.lr = lr_at(0, cfg);
        em.eval_top1 = evaluate_top1(model, eval_ds, cfg.batch_size);
        result.metrics.epochs.push_back(em);
        result.last_checkpoint = save("last.cnkt");
        write_metrics();
        return result;
    }

    uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        // seeded Fisher-Yates shuffle
        std::vector<size_t> order(train_ds.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(static_cast<int64_t>(i))]);

        double loss_sum = 0.0;
        int64_t seen = 0, correct = 0;
        for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
            std::vector<size_t> idx(order.begin() + at,
                                    order.begin() + std::min(order.size(),
                                                             at + cfg.batch_size));
            Tensor x;
            if (cfg.augment) {
                Dataset batch_ds;
                for (size_t i : idx) {
                    batch_ds.images.push_back(augment(
                        train_ds.images[i],
                        derive_seed(cfg.seed, "augment",
                                    (static_cast<uint64_t>(epoch) << 32) | i)));
                    batch_ds.labels.push_back(train_ds.labels[i]);
                }
                std::vector<size_t> all(idx.size());
                for (size_t i = 0; i < all.size(); ++i) all[i] = i;
                x = make_batch(batch_ds, all);
            } else {
                x = make_batch(train_ds, idx);
            }
            std::vector<int> labels;
            for (size_t i : idx) labels.push_back(train_ds.labels[i]);

            OpCache cache;
            Tensor logits = model.forward(x, Mode::Train, cache,
                                          derive_seed(cfg.seed, "step", step));
            ops::SceResult sce = ops::softmax_cross_entropy(logits, labels);
            if (!std::isfinite(sce.loss)) {
                result.aborted = true;
                result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(step);
                write_metrics();
                return result;
            }
            loss_sum += sce.loss * static_cast<double>(idx.size());
            seen += static_cast<int64_t>(idx.size());
            const int64_t K = logits.shape[1];
            for (size_t b = 0; b < idx.size(); ++b) {
                int64_t arg = 0;
                for (int64_t k = 1; k < K; ++k)
                    if (logits.data[b * K + k] > logits.data[b * K + arg]) arg = k;
                if (arg == labels[b]) ++correct;
            }

            model.zero_grads();
            model.backward(sce.glogits, cache);
            model.commit_batch_stats(cache);
            sgd_momentum_step(params, sgd, lr, cfg.momentum);
            ++step;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.lr = lr;
        em.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        em.train_top1 = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        em.eval_top1 = evaluate_top1(model, eval_ds, cfg.batch_size);
        result.metrics.epochs.push_back(em);

        const double score = std::isnan(em.eval_top1) ? em.train_top1 : em.eval_top1;
        if (score > result.best_eval) {
            result.best_eval = score;
            result.best_epoch = epoch;
            result.best_checkpoint = save("best.cnkt");
        }
        result.last_checkpoint = save("last.cnkt");
        write_metrics();
    }
    return result;
}

// ---------------------------------------------------------------------------
// Classifier-weight sparsity analysis
// ---------------------------------------------------------------------------

inline constexpr int kSparsityBins = 64;

struct SparsityReport {
    int64_t rows = 0, cols = 0;
    double min_w = 0.0, max_w = 0.0;
    std::array<int64_t, kSparsityBins> hist{};
    std::vector<double> thresholds;
    std::vector<double> sparsity_fraction;               // per tau: fraction |w| < tau
    std::vector<std::vector<int64_t>> active_per_class;  // per tau: per-row count |w| >= tau
};

inline SparsityReport analyze_fc_sparsity(const Tensor& w, const std::vector<double>& thresholds) {
    if (w.rank() != 2)
        throw std::invalid_argument("analyze_fc_sparsity: expected [classes, features] matrix, "
                                    "got " + shape_str(w.shape));
    SparsityReport rep;
    rep.rows = w.shape[0];
    rep.cols = w.shape[1];
    rep.thresholds = thresholds;
    rep.min_w = rep.max_w = w.data[0];
    for (double v : w.data) {
        rep.min_w = std::min(rep.min_w, v);
        rep.max_w = std::max(rep.max_w, v);
    }
    const double width = rep.max_w - rep.min_w;
    for (double v : w.data) {
        int bin = width > 0.0 ? static_cast<int>((v - rep.min_w) / width * kSparsityBins) : 0;
        if (bin >= kSparsityBins) bin = kSparsityBins - 1;
        ++rep.hist[bin];
    }
    for (double tau : thresholds) {
        int64_t below = 0;
        std::vector<int64_t> active(rep.rows, 0);
        for (int64_t r = 0; r < rep.rows; ++r)
            for (int64_t c0 = 0; c0 < rep.cols; ++c0) {
                if (std::abs(w.data[r * rep.cols + c0]) < tau)
                    ++below;
                else
                    ++active[r];
            }
        rep.sparsity_fraction.push_back(static_cast<double>(below) /
                                        static_cast<double>(w.numel()));
        rep.active_per_class.push_back(std::move(active));
    }
    return rep;
}

inline void print_sparsity(std::ostream& os, const SparsityReport& rep) {
    os << "classifier weights: " << rep.rows << " classes x " << rep.cols << " features, range ["
       << rep.min_w << ", " << rep.max_w << "]\n";
    int64_t peak = 1;
    for (int64_t h : rep.hist) peak = std::max(peak, h);
    for (int b = 0; b < kSparsityBins; ++b) {
        const double lo = rep.min_w + (rep.max_w - rep.min_w) * b / kSparsityBins;
        const int bar = static_cast<int>(60.0 * static_cast<double>(rep.hist[b]) /
                                         static_cast<double>(peak));
        os << std::setw(12) << std::setprecision(4) << std::fixed << lo << " | "
           << std::string(bar, '#') << " " << rep.hist[b] << "\n";
    }
    os.unsetf(std::ios::fixed);
    for (size_t t = 0; t < rep.thresholds.size(); ++t) {
        os << "tau=" << rep.thresholds[t] << ": fraction |w| < tau = "
           << rep.sparsity_fraction[t] << "; active features per class:";
        const auto& active = rep.active_per_class[t];
        int64_t mn = active[0], mx = active[0];
        double avg = 0.0;
        for (int64_t a : active) {
            mn = std::min(mn, a);
            mx = std::max(mx, a);
            avg += static_cast<double>(a);
        }
        os << " min " << mn << ", mean " << avg / static_cast<double>(active.size()) << ", max "
           << mx << "\n";
    }
}

inline void write_sparsity_csv(std::ostream& os, const SparsityReport& rep) {
    os << "bin_lo,bin_hi,count\n";
    os << std::setprecision(17);
    for (int b = 0; b < kSparsityBins; ++b) {
        const double lo = rep.min_w + (rep.max_w - rep.min_w) * b / kSparsityBins;
        const double hi = rep.min_w + (rep.max_w - rep.min_w) * (b + 1) / kSparsityBins;
        os << lo << "," << hi << "," << rep.hist[b] << "\n";
    }
    for (size_t t = 0; t < rep.thresholds.size(); ++t) {
        os << "tau," << rep.thresholds[t] << "," << rep.sparsity_fraction[t] << "\n";
        os << "active_per_class," << rep.thresholds[t];
        for (int64_t a : rep.active_per_class[t]) os << "," << a;
        os << "\n";
    }
}

}  // namespace channelkit
