// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file gradcheck.hpp
 * @brief Finite-difference verification of analytic gradients.
 *
 * Central differences with h = 1e-5 against 64-bit arithmetic give roughly
 * 1e-10 of headroom, so analytic backward passes are held to a relative
 * tolerance of 1e-6. The relative error uses max(|analytic|, |numeric|,
 * 1e-9) as denominator; elements whose absolute error is below the 1e-9
 * floor are treated as matching regardless of their relative figure, which
 * guards near-zero gradients.
 *
 * Operator-level checks probe every element. Model-level checks probe a
 * seeded random subset per parameter block so whole networks verify in
 * seconds; the subset size is recorded in the report.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "channelkit/model.hpp"
#include "channelkit/random.hpp"

namespace channelkit {

struct GradCheckReport {
    std::string op_name;
    std::string block_name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    int64_t num_elements = 0;        // probes that produced a valid comparison
    int64_t skipped_nonsmooth = 0;   // probes straddling a relu kink
    bool passed = false;
};

inline constexpr double kFdStep = 1e-5;
inline constexpr double kAbsFloor = 1e-9;

/// Central difference (f(x + h e_i) - f(x - h e_i)) / 2h for every element.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
    Tensor g = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double keep = probe.data[i];
        probe.data[i] = keep + h;
        const double fp = f(probe);
        probe.data[i] = keep - h;
        const double fm = f(probe);
        probe.data[i] = keep;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite objective at element " +
                                     std::to_string(i));
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

namespace detail_gc {

/// Probes `var` at the given indices (all elements if empty), comparing the
/// analytic gradient against central differences of `loss`, which must read
/// the live contents of `var`.
///
/// With detect_kinks set, each probe also compares the forward and backward
/// one-sided differences. Along any single coordinate the inference-mode
/// objective is piecewise linear (convolutions and batch norm are affine in
/// one variable at a time, relu is piecewise linear), so the one-sided
/// estimates agree to rounding error on a smooth piece; a disagreement means
/// a relu kink lies inside the probe interval, where the central-difference
/// oracle is invalid, and the probe is skipped.
inline GradCheckReport probe_block(const std::string& op_name, const std::string& block_name,
                                   Tensor& var, const Tensor& analytic,
                                   const std::function<double()>& loss, double tol,
                                   const std::vector<int64_t>& indices,
                                   bool detect_kinks = false) {
    GradCheckReport rep;
    rep.op_name = op_name;
    rep.block_name = block_name;
    std::vector<int64_t> all;
    const std::vector<int64_t>* idx = &indices;
    if (indices.empty()) {
        all.resize(var.numel());
        for (int64_t i = 0; i < var.numel(); ++i) all[i] = i;
        idx = &all;
    }
    const double f0 = detect_kinks ? loss() : 0.0;
    for (int64_t i : *idx) {
        const double keep = var.data[i];
        var.data[i] = keep + kFdStep;
        const double fp = loss();
        var.data[i] = keep - kFdStep;
        const double fm = loss();
        var.data[i] = keep;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("gradcheck: non-finite loss probing " + block_name);
        const double numeric = (fp - fm) / (2.0 * kFdStep);
        if (detect_kinks) {
            const double fwd = (fp - f0) / kFdStep;
            const double bwd = (f0 - fm) / kFdStep;
            const double jump = std::abs(fwd - bwd);
            if (jump > 1e-5 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-12) {
                ++rep.skipped_nonsmooth;
                continue;
            }
        }
        ++rep.num_elements;
        const double a = analytic.data[i];
        const double abs_err = std::abs(a - numeric);
        rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
        if (abs_err >= kAbsFloor) {
            const double denom = std::max({std::abs(a), std::abs(numeric), kAbsFloor});
            rep.max_rel_error = std::max(rep.max_rel_error, abs_err / denom);
        }
    }
    rep.passed = rep.max_rel_error < tol || rep.max_abs_error < kAbsFloor;
    return rep;
}

inline std::vector<int64_t> sample_indices(int64_t numel, int64_t max_probes, uint64_t seed) {
    std::vector<int64_t> idx;
    if (max_probes <= 0 || numel <= max_probes) return idx;  // empty means "all"
    Rng rng(seed);
    std::vector<uint8_t> taken(numel, 0);
    while (static_cast<int64_t>(idx.size()) < max_probes) {
        const int64_t i = rng.below(numel);
        if (!taken[i]) {
            taken[i] = 1;
            idx.push_back(i);
        }
    }
    return idx;
}

}  // namespace detail_gc

/// Verifies every parameter block of a model plus its input, probing at most
/// max_probes elements per block (0 = exhaustive). Runs in inference mode so
/// the objective is pure. Parameters are jittered first: freshly built
/// models sit at a degenerate point (beta exactly zero, whole channels dead
/// at exactly the relu kink) where the true gradient is a subgradient choice
/// and finite differences are meaningless; a generic nearby point is what
/// the derivative code is accountable for.
inline std::vector<GradCheckReport> check_model(Model& model, int64_t batch, uint64_t seed,
                                                double tol, int64_t max_probes = 0) {
    for (ParamBlock* p : model.params()) {
        Tensor noise = seeded_uniform(p->value.shape, -0.02, 0.02,
                                      derive_seed(seed, "jitter." + p->name));
        for (int64_t i = 0; i < p->numel(); ++i) p->value.data[i] += noise.data[i];
    }
    const Shape in_shape{batch, 3, model.spec().input_size, model.spec().input_size};
    Tensor x = seeded_uniform(in_shape, -1.0, 1.0, derive_seed(seed, "gradcheck.input"));
    OpCache cache;
    Tensor out = model.forward(x, Mode::Infer, cache);
    Tensor cot = seeded_uniform(out.shape, -1.0, 1.0, derive_seed(seed, "gradcheck.cotangent"));

    model.zero_grads();
    Tensor gx = model.backward(cot, cache);

    auto loss_with = [&](const Tensor& probe_x) {
        OpCache c;
        Tensor o = model.forward(probe_x, Mode::Infer, c);
        double s = 0.0;
        for (int64_t i = 0; i < o.numel(); ++i) s += o.data[i] * cot.data[i];
        return s;
    };
    auto loss_current = [&]() { return loss_with(x); };

    std::vector<GradCheckReport> reports;
    const std::string op = model.spec().name;
    for (ParamBlock* p : model.params()) {
        auto idx = detail_gc::sample_indices(p->numel(), max_probes,
                                             derive_seed(seed, p->name));
        reports.push_back(detail_gc::probe_block(op, p->name, p->value, p->grad, loss_current,
                                                 tol, idx, /*detect_kinks=*/true));
    }
    auto idx = detail_gc::sample_indices(x.numel(), max_probes, derive_seed(seed, "input"));
    reports.push_back(detail_gc::probe_block(op, "input", x, gx, loss_current, tol, idx,
                                             /*detect_kinks=*/true));
    return reports;
}

inline bool all_passed(const std::vector<GradCheckReport>& reports) {
    for (const auto& r : reports)
        if (!r.passed) return false;
    return true;
}

inline void print_reports(std::ostream& os, const std::vector<GradCheckReport>& reports) {
    os << std::left << std::setw(24) << "op" << std::setw(34) << "block" << std::setw(14)
       << "max_rel" << std::setw(14) << "max_abs" << std::setw(9) << "elems" << std::setw(9)
       << "skipped"
       << "status\n";
    for (const auto& r : reports) {
        os << std::left << std::setw(24) << r.op_name << std::setw(34) << r.block_name
           << std::setw(14) << std::scientific << std::setprecision(3) << r.max_rel_error
           << std::setw(14) << r.max_abs_error << std::setw(9) << r.num_elements << std::setw(9)
           << r.skipped_nonsmooth << (r.passed ? "ok" : "FAIL") << "\n";
    }
    os.flags(std::ios::fmtflags{});
}

// ---------------------------------------------------------------------------
// Operator-level checks (exhaustive, randomized small shapes).
// ---------------------------------------------------------------------------

namespace detail_gc {

struct OpCheckCase {
    std::string op;
    std::string block;
    Tensor* var;
    const Tensor* analytic;
};

inline void run_cases(std::vector<GradCheckReport>& out, const std::string& op,
                      std::vector<std::pair<std::string, std::pair<Tensor*, const Tensor*>>> vars,
                      const std::function<double()>& loss, double tol) {
    for (auto& [block, vp] : vars)
        out.push_back(probe_block(op, block, *vp.first, *vp.second, loss, tol, {}));
}

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

}  // namespace detail_gc

/// Exhaustive finite-difference check of one named operator at `trials`
/// randomized small shapes. Throws std::invalid_argument for unknown names.
inline std::vector<GradCheckReport> check_op(const std::string& name, uint64_t seed, double tol,
                                             int trials = 3) {
    std::vector<GradCheckReport> out;
    for (int t = 0; t < trials; ++t) {
        Rng shape_rng(derive_seed(seed, name, static_cast<uint64_t>(t)));
        const uint64_t s0 = shape_rng.next_u64();
        const int64_t N = 1 + shape_rng.below(2);
        const int64_t sp = 2 + shape_rng.below(3);  // spatial size 2..4
        auto u = [&](Shape sh, const char* tag) {
            return seeded_uniform(std::move(sh), -1.0, 1.0, derive_seed(s0, tag));
        };
        if (name == "conv2d") {
            const int64_t m = 1 + shape_rng.below(3), n = 1 + shape_rng.below(3);
            const int64_t stride = 1 + shape_rng.below(2);
            Tensor x = u({N, m, sp, sp}, "x"), w = u({n, m, 3, 3}, "w");
            Tensor cot = u(ops::conv2d(x, w, stride).shape, "cot");
            auto g = ops::conv2d_backward(x, w, stride, cot);
            auto loss = [&]() { return detail_gc::dot(ops::conv2d(x, w, stride), cot); };
            detail_gc::run_cases(out, name, {{"weight", {&w, &g.gw}}, {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "depthwise_conv2d") {
            const int64_t m = 1 + shape_rng.below(4), stride = 1 + shape_rng.below(2);
            Tensor x = u({N, m, sp, sp}, "x"), w = u({m, 3, 3}, "w");
            Tensor cot = u(ops::depthwise_conv2d(x, w, stride).shape, "cot");
            auto g = ops::depthwise_conv2d_backward(x, w, stride, cot);
            auto loss = [&]() { return detail_gc::dot(ops::depthwise_conv2d(x, w, stride), cot); };
            detail_gc::run_cases(out, name, {{"weight", {&w, &g.gw}}, {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "pointwise_conv") {
            const int64_t m = 1 + shape_rng.below(5), n = 1 + shape_rng.below(5);
            Tensor x = u({N, m, sp, sp}, "x"), w = u({n, m}, "w");
            Tensor cot = u({N, n, sp, sp}, "cot");
            auto g = ops::pointwise_conv_backward(x, w, cot);
            auto loss = [&]() { return detail_gc::dot(ops::pointwise_conv(x, w), cot); };
            detail_gc::run_cases(out, name, {{"weight", {&w, &g.gw}}, {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "group_pointwise_conv") {
            const int64_t g_ = 1 + shape_rng.below(3);
            const int64_t m = g_ * (1 + shape_rng.below(3)), n = g_ * (1 + shape_rng.below(3));
            Tensor x = u({N, m, sp, sp}, "x"), w = u({g_, n / g_, m / g_}, "w");
            Tensor cot = u({N, n, sp, sp}, "cot");
            auto g = ops::group_pointwise_conv_backward(x, w, g_, cot);
            auto loss = [&]() { return detail_gc::dot(ops::group_pointwise_conv(x, w, g_), cot); };
            detail_gc::run_cases(out, name, {{"weight", {&w, &g.gw}}, {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "channelwise_conv") {
            const int64_t stride = 1 + shape_rng.below(2);
            const int64_t mo = 2 + shape_rng.below(3);
            const int64_t m = mo * stride;
            const int64_t d_c = std::max(stride, 1 + shape_rng.below(m));
            const bool valid = stride == 1 && shape_rng.below(2) == 0;
            const auto pad = valid ? ops::Padding::Valid : ops::Padding::Same;
            const int64_t oc = valid ? m - d_c + 1 : mo;
            Tensor x = u({N, m, sp, sp}, "x"), w = u({d_c}, "w");
            Tensor cot = u({N, oc, sp, sp}, "cot");
            auto g = ops::channelwise_conv_backward(x, w, stride, pad, cot);
            auto loss = [&]() {
                return detail_gc::dot(ops::channelwise_conv(x, w, stride, pad, oc), cot);
            };
            detail_gc::run_cases(out, name, {{"weight", {&w, &g.gw}}, {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "group_channelwise_conv") {
            const int64_t g_ = 1 + shape_rng.below(3);
            const int64_t n = g_ * (2 + shape_rng.below(3));
            const int64_t d_c = g_ + shape_rng.below(4);
            Tensor x = u({N, n, sp, sp}, "x"), w = u({g_, d_c}, "w");
            Tensor cot = u({N, n, sp, sp}, "cot");
            auto g = ops::group_channelwise_conv_backward(x, w, g_, cot);
            auto loss = [&]() {
                return detail_gc::dot(ops::group_channelwise_conv(x, w, g_), cot);
            };
            detail_gc::run_cases(out, name, {{"weight", {&w, &g.gw}}, {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "dws_channelwise_conv") {
            const int64_t m = 2 + shape_rng.below(3), q = 1 + shape_rng.below(2);
            const int64_t d_c = 1 + shape_rng.below(m);
            Tensor x = u({N, m, sp, sp}, "x");
            Tensor wd = u({m, 3, 3}, "wd"), wc = u({q, d_c}, "wc");
            Tensor cot = u({N, q * m, sp, sp}, "cot");
            auto g = ops::dws_channelwise_conv_backward(x, wd, wc, 1, cot);
            auto loss = [&]() {
                return detail_gc::dot(ops::dws_channelwise_conv(x, wd, wc, 1), cot);
            };
            detail_gc::run_cases(out, name,
                                 {{"dw.weight", {&wd, &g.gw_dw}},
                                  {"cw.weight", {&wc, &g.gw_cw}},
                                  {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "global_avg_pool") {
            const int64_t m = 1 + shape_rng.below(4);
            Tensor x = u({N, m, sp, sp}, "x");
            Tensor cot = u({N, m, 1, 1}, "cot");
            Tensor gx = ops::global_avg_pool_backward(x.shape, cot);
            auto loss = [&]() { return detail_gc::dot(ops::global_avg_pool(x), cot); };
            detail_gc::run_cases(out, name, {{"input", {&x, &gx}}}, loss, tol);
        } else if (name == "conv_classification") {
            const int64_t classes = 2 + shape_rng.below(3);
            const int64_t m = classes + shape_rng.below(4);
            const int64_t d_c = m - classes + 1;
            Tensor x = u({N, m, sp, sp}, "x"), w = u({sp, sp, d_c}, "w");
            Tensor cot = u({N, classes}, "cot");
            auto g = ops::conv_classification_backward(x, w, cot);
            auto loss = [&]() { return detail_gc::dot(ops::conv_classification(x, w), cot); };
            detail_gc::run_cases(out, name, {{"weight", {&w, &g.gw}}, {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "fully_connected") {
            const int64_t m = 1 + shape_rng.below(6), n = 1 + shape_rng.below(6);
            Tensor x = u({N, m}, "x"), w = u({n, m}, "w");
            Tensor cot = u({N, n}, "cot");
            auto g = ops::fully_connected_backward(x, w, cot);
            auto loss = [&]() { return detail_gc::dot(ops::fully_connected(x, w), cot); };
            detail_gc::run_cases(out, name, {{"weight", {&w, &g.gw}}, {"input", {&x, &g.gx}}},
                                 loss, tol);
        } else if (name == "batchnorm") {
            const int64_t m = 1 + shape_rng.below(4);
            Tensor x = u({2, m, sp, sp}, "x");
            Tensor gamma = u({m}, "gamma"), beta = u({m}, "beta");
            Tensor cot = u(x.shape, "cot");
            // training mode: statistics recomputed from the live input
            ops::BnBatchStats stats;
            ops::batchnorm_train(x, gamma, beta, stats);
            auto g = ops::batchnorm_train_backward(x, gamma, stats, cot);
            auto loss = [&]() {
                ops::BnBatchStats s;
                return detail_gc::dot(ops::batchnorm_train(x, gamma, beta, s), cot);
            };
            detail_gc::run_cases(out, name + "(train)",
                                 {{"gamma", {&gamma, &g.ggamma}},
                                  {"beta", {&beta, &g.gbeta}},
                                  {"input", {&x, &g.gx}}},
                                 loss, tol);
            // inference mode: fixed running statistics
            std::vector<double> rm(m), rv(m);
            Rng r(derive_seed(s0, "stats"));
            for (int64_t i = 0; i < m; ++i) {
                rm[i] = r.uniform(-0.5, 0.5);
                rv[i] = r.uniform(0.5, 1.5);
            }
            auto gi = ops::batchnorm_infer_backward(x, gamma, rm, rv, cot);
            auto loss_i = [&]() {
                return detail_gc::dot(ops::batchnorm_infer(x, gamma, beta, rm, rv), cot);
            };
            detail_gc::run_cases(out, name + "(infer)",
                                 {{"gamma", {&gamma, &gi.ggamma}},
                                  {"beta", {&beta, &gi.gbeta}},
                                  {"input", {&x, &gi.gx}}},
                                 loss_i, tol);
        } else if (name == "relu") {
            const int64_t m = 1 + shape_rng.below(4);
            Tensor x = u({N, m, sp, sp}, "x");
            // keep probes away from the kink at zero
            for (double& v : x.data)
                if (std::abs(v) < 1e-3) v = 0.1;
            Tensor cot = u(x.shape, "cot");
            Tensor gx = ops::relu_backward(x, cot);
            auto loss = [&]() { return detail_gc::dot(ops::relu(x), cot); };
            detail_gc::run_cases(out, name, {{"input", {&x, &gx}}}, loss, tol);
        } else if (name == "softmax_cross_entropy") {
            const int64_t k = 2 + shape_rng.below(5);
            Tensor logits = u({N, k}, "logits");
            std::vector<int> labels(N);
            for (int64_t b = 0; b < N; ++b) labels[b] = static_cast<int>(shape_rng.below(k));
            auto res = ops::softmax_cross_entropy(logits, labels);
            auto loss = [&]() { return ops::softmax_cross_entropy(logits, labels).loss; };
            detail_gc::run_cases(out, name, {{"logits", {&logits, &res.glogits}}}, loss, tol);
        } else {
            throw std::invalid_argument("check_op: unknown operator '" + name + "'");
        }
    }
    return out;
}

/// Names accepted by check_op, in display order.
inline std::vector<std::string> checkable_ops() {
    return {"conv2d",         "depthwise_conv2d",    "pointwise_conv", "group_pointwise_conv",
            "channelwise_conv", "group_channelwise_conv", "dws_channelwise_conv",
            "global_avg_pool",  "conv_classification", "fully_connected", "batchnorm", "relu",
            "softmax_cross_entropy"};
}

}  // namespace channelkit
