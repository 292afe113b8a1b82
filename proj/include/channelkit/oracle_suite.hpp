// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file oracle_suite.hpp
 * @brief Algebraic equivalence checks between the sparse channel operators
 *        and independent dense formulations.
 *
 * Four identities, each exercised over randomized shapes and values:
 *
 *   1. A channel-wise convolution equals a 1x1 convolution whose [n, m]
 *      matrix is the banded Toeplitz expansion of its 1-D kernel.
 *   2. A 1x1 group convolution equals a 1x1 convolution with the
 *      block-diagonal assembly of its per-group matrices.
 *   3. Global average pooling equals a valid-padding depth-wise convolution
 *      whose d_f x d_f kernel is fixed to 1/d_f^2.
 *   4. A convolutional classification layer with a rank-1 kernel
 *      w[i,j,c] = v[c]/d_f^2 equals global average pooling followed by a
 *      valid channel-wise convolution with kernel v.
 *
 * The dense reference side of each identity is computed by plain loops here,
 * independent of the operator implementations under test.
 */

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "channelkit/nn_ops.hpp"
#include "channelkit/random.hpp"

namespace channelkit {

struct OracleReport {
    std::string name;
    int trials = 0;
    double max_abs_diff = 0.0;
    bool passed = false;
};

inline constexpr double kOracleTol = 1e-12;

namespace detail_oracle {

/// Dense reference: out[b,j,p] = sum_i W[j,i] x[b,i,p], straight loops.
inline Tensor dense_channel_mix(const Tensor& x, const std::vector<std::vector<double>>& W) {
    const int64_t N = x.n(), m = x.c(), plane = x.h() * x.w();
    const int64_t n = static_cast<int64_t>(W.size());
    Tensor out = Tensor::zeros({N, n, x.h(), x.w()});
    for (int64_t b = 0; b < N; ++b)
        for (int64_t j = 0; j < n; ++j)
            for (int64_t i = 0; i < m; ++i)
                for (int64_t p = 0; p < plane; ++p)
                    out.data[(b * n + j) * plane + p] += W[j][i] * x.data[(b * m + i) * plane + p];
    return out;
}

/// Banded Toeplitz expansion of a 1-D channel kernel: W[k,i] = w[i - k*s + p_left].
inline std::vector<std::vector<double>> banded_matrix(const std::vector<double>& w, int64_t m,
                                                      int64_t out_channels, int64_t stride,
                                                      int64_t p_left) {
    std::vector<std::vector<double>> W(out_channels, std::vector<double>(m, 0.0));
    const int64_t d_c = static_cast<int64_t>(w.size());
    for (int64_t k = 0; k < out_channels; ++k)
        for (int64_t i = 0; i < m; ++i) {
            const int64_t j = i - k * stride + p_left;
            if (j >= 0 && j < d_c) W[k][i] = w[j];
        }
    return W;
}

}  // namespace detail_oracle

inline OracleReport oracle_banded_toeplitz(int trials, uint64_t seed) {
    OracleReport rep{"channelwise == banded-toeplitz 1x1", trials, 0.0, false};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, "banded", static_cast<uint64_t>(t)));
        const int64_t stride = 1 + rng.below(2);
        const int64_t oc = 2 + rng.below(4);
        const int64_t m = oc * stride;
        const int64_t d_c = std::max(stride, 1 + rng.below(m));
        const int64_t sp = 1 + rng.below(4);
        Tensor x = seeded_uniform({1 + rng.below(2), m, sp, sp}, -1, 1, rng.next_u64());
        Tensor w = seeded_uniform({d_c}, -1, 1, rng.next_u64());
        Tensor got = ops::channelwise_conv(x, w, stride, ops::Padding::Same, oc);
        auto W = detail_oracle::banded_matrix(w.data, m, oc, stride, (d_c - stride) / 2);
        Tensor want = detail_oracle::dense_channel_mix(x, W);
        rep.max_abs_diff = std::max(rep.max_abs_diff, max_abs_diff(got, want));
    }
    rep.passed = rep.max_abs_diff < kOracleTol;
    return rep;
}

inline OracleReport oracle_block_diagonal(int trials, uint64_t seed) {
    OracleReport rep{"group 1x1 == block-diagonal 1x1", trials, 0.0, false};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, "blockdiag", static_cast<uint64_t>(t)));
        const int64_t g = 1 + rng.below(3);
        const int64_t m = g * (1 + rng.below(4)), n = g * (1 + rng.below(4));
        const int64_t sp = 1 + rng.below(4);
        Tensor x = seeded_uniform({1 + rng.below(2), m, sp, sp}, -1, 1, rng.next_u64());
        Tensor w = seeded_uniform({g, n / g, m / g}, -1, 1, rng.next_u64());
        Tensor got = ops::group_pointwise_conv(x, w, g);
        std::vector<std::vector<double>> W(n, std::vector<double>(m, 0.0));
        for (int64_t gq = 0; gq < g; ++gq)
            for (int64_t j = 0; j < n / g; ++j)
                for (int64_t i = 0; i < m / g; ++i)
                    W[gq * (n / g) + j][gq * (m / g) + i] =
                        w.data[(gq * (n / g) + j) * (m / g) + i];
        Tensor want = detail_oracle::dense_channel_mix(x, W);
        rep.max_abs_diff = std::max(rep.max_abs_diff, max_abs_diff(got, want));
    }
    rep.passed = rep.max_abs_diff < kOracleTol;
    return rep;
}

inline OracleReport oracle_avg_pool_fixed_kernel(int trials, uint64_t seed) {
    OracleReport rep{"avg-pool == fixed-kernel depth-wise", trials, 0.0, false};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, "avgpool", static_cast<uint64_t>(t)));
        const int64_t C = 1 + rng.below(5), d_f = 1 + rng.below(7);
        const int64_t N = 1 + rng.below(3);
        Tensor x = seeded_uniform({N, C, d_f, d_f}, -2, 2, rng.next_u64());
        Tensor got = ops::global_avg_pool(x);
        // valid-padding depth-wise correlation with every weight 1/d_f^2
        Tensor want = Tensor::zeros({N, C, 1, 1});
        const double kv = 1.0 / static_cast<double>(d_f * d_f);
        for (int64_t b = 0; b < N; ++b)
            for (int64_t c0 = 0; c0 < C; ++c0) {
                double s = 0.0;
                for (int64_t i = 0; i < d_f; ++i)
                    for (int64_t j = 0; j < d_f; ++j) s += kv * x.at4(b, c0, i, j);
                want.at4(b, c0, 0, 0) = s;
            }
        rep.max_abs_diff = std::max(rep.max_abs_diff, max_abs_diff(got, want));
    }
    rep.passed = rep.max_abs_diff < kOracleTol;
    return rep;
}

inline OracleReport oracle_ccl_factorization(int trials, uint64_t seed) {
    OracleReport rep{"rank-1 ccl == avg-pool + valid channel-wise", trials, 0.0, false};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, "cclrank1", static_cast<uint64_t>(t)));
        const int64_t classes = 2 + rng.below(4);
        const int64_t m = classes + rng.below(5);
        const int64_t d_c = m - classes + 1;
        const int64_t d_f = 1 + rng.below(5);
        const int64_t N = 1 + rng.below(2);
        Tensor x = seeded_uniform({N, m, d_f, d_f}, -1, 1, rng.next_u64());
        Tensor v = seeded_uniform({d_c}, -1, 1, rng.next_u64());
        Tensor w = Tensor::zeros({d_f, d_f, d_c});
        const double inv = 1.0 / static_cast<double>(d_f * d_f);
        for (int64_t p = 0; p < d_f * d_f; ++p)
            for (int64_t c0 = 0; c0 < d_c; ++c0) w.data[p * d_c + c0] = v.data[c0] * inv;
        Tensor got = ops::conv_classification(x, w);
        Tensor pooled = ops::global_avg_pool(x);
        Tensor cw = ops::channelwise_conv(pooled, v, 1, ops::Padding::Valid, classes);
        Tensor want = reshape(cw, {N, classes});
        rep.max_abs_diff = std::max(rep.max_abs_diff, max_abs_diff(got, want));
    }
    rep.passed = rep.max_abs_diff < kOracleTol;
    return rep;
}

/// Runs the whole suite. inject_fault perturbs one comparison and exists so
/// the failure path of callers can be exercised end to end.
inline std::vector<OracleReport> run_oracle_suite(int trials, uint64_t seed,
                                                  bool inject_fault = false) {
    if (trials < 1) throw std::invalid_argument("oracle suite: trials must be >= 1");
    std::vector<OracleReport> reports{
        oracle_banded_toeplitz(trials, seed),
        oracle_block_diagonal(trials, seed),
        oracle_avg_pool_fixed_kernel(trials, seed),
        oracle_ccl_factorization(trials, seed),
    };
    if (inject_fault) {
        reports.back().max_abs_diff += 1e-6;
        reports.back().passed = reports.back().max_abs_diff < kOracleTol;
    }
    return reports;
}

inline bool all_passed(const std::vector<OracleReport>& reports) {
    for (const auto& r : reports)
        if (!r.passed) return false;
    return true;
}

}  // namespace channelkit
