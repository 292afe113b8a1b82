// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file aux_ops.hpp
 * @brief Non-convolutional operators: relu, batch normalization, dropout,
 *        residual addition and the softmax cross-entropy loss.
 *
 * Batch normalization is split into pure functions: the training-mode
 * forward computes batch statistics and returns them to the caller; running
 * statistics live with the layer that owns them and are folded in by an
 * explicit update, never as a side effect of the forward pass.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "channelkit/random.hpp"
#include "channelkit/tensor.hpp"

namespace channelkit {
namespace ops {

inline Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data)
        if (v < 0.0) v = 0.0;
    return out;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& gout) {
    Tensor gx = gout;
    for (int64_t i = 0; i < x.numel(); ++i)
        if (x.data[i] <= 0.0) gx.data[i] = 0.0;
    return gx;
}

inline Tensor residual_add(const Tensor& a, const Tensor& b) { return add(a, b); }

// ---------------------------------------------------------------------------
// Batch normalization (per channel over N, H, W; epsilon 1e-5).
// ---------------------------------------------------------------------------

struct BnBatchStats {
    std::vector<double> mean, var, inv_std;  // one entry per channel
};

struct BnGrads {
    Tensor gx, ggamma, gbeta;
};

inline constexpr double kBnEps = 1e-5;

inline Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              BnBatchStats& stats) {
    if (x.rank() != 4) throw std::invalid_argument("batchnorm: input must be rank-4 NCHW");
    const int64_t N = x.n(), C = x.c(), plane = x.h() * x.w();
    if (gamma.numel() != C || beta.numel() != C)
        throw std::invalid_argument("batchnorm: gamma/beta must have one entry per channel");
    const int64_t M = N * plane;
    stats.mean.assign(C, 0.0);
    stats.var.assign(C, 0.0);
    stats.inv_std.assign(C, 0.0);
    for (int64_t c0 = 0; c0 < C; ++c0) {
        double s = 0.0;
        for (int64_t b = 0; b < N; ++b) {
            const double* xr = &x.data[(b * C + c0) * plane];
            for (int64_t p = 0; p < plane; ++p) s += xr[p];
        }
        const double mu = s / static_cast<double>(M);
        double v = 0.0;
        for (int64_t b = 0; b < N; ++b) {
            const double* xr = &x.data[(b * C + c0) * plane];
            for (int64_t p = 0; p < plane; ++p) v += (xr[p] - mu) * (xr[p] - mu);
        }
        stats.mean[c0] = mu;
        stats.var[c0] = v / static_cast<double>(M);  // biased variance
        stats.inv_std[c0] = 1.0 / std::sqrt(stats.var[c0] + kBnEps);
    }
    Tensor out = Tensor::zeros(x.shape);
    for (int64_t b = 0; b < N; ++b)
        for (int64_t c0 = 0; c0 < C; ++c0) {
            const double g = gamma.data[c0], be = beta.data[c0];
            const double mu = stats.mean[c0], r = stats.inv_std[c0];
            const double* xr = &x.data[(b * C + c0) * plane];
            double* orow = &out.data[(b * C + c0) * plane];
            for (int64_t p = 0; p < plane; ++p) orow[p] = g * (xr[p] - mu) * r + be;
        }
    return out;
}

inline BnGrads batchnorm_train_backward(const Tensor& x, const Tensor& gamma,
                                        const BnBatchStats& stats, const Tensor& gout) {
    const int64_t N = x.n(), C = x.c(), plane = x.h() * x.w();
    const double M = static_cast<double>(N * plane);
    BnGrads g{Tensor::zeros(x.shape), Tensor::zeros(gamma.shape), Tensor::zeros(gamma.shape)};
    for (int64_t c0 = 0; c0 < C; ++c0) {
        const double mu = stats.mean[c0], r = stats.inv_std[c0];
        double sum_go = 0.0, sum_go_xhat = 0.0;
        for (int64_t b = 0; b < N; ++b) {
            const double* xr = &x.data[(b * C + c0) * plane];
            const double* gr = &gout.data[(b * C + c0) * plane];
            for (int64_t p = 0; p < plane; ++p) {
                sum_go += gr[p];
                sum_go_xhat += gr[p] * (xr[p] - mu) * r;
            }
        }
        g.ggamma.data[c0] = sum_go_xhat;
        g.gbeta.data[c0] = sum_go;
        const double k = gamma.data[c0] * r / M;
        for (int64_t b = 0; b < N; ++b) {
            const double* xr = &x.data[(b * C + c0) * plane];
            const double* gr = &gout.data[(b * C + c0) * plane];
            double* gxr = &g.gx.data[(b * C + c0) * plane];
            for (int64_t p = 0; p < plane; ++p) {
                const double xhat = (xr[p] - mu) * r;
                gxr[p] = k * (M * gr[p] - sum_go - xhat * sum_go_xhat);
            }
        }
    }
    return g;
}

inline Tensor batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              const std::vector<double>& run_mean,
                              const std::vector<double>& run_var) {
    if (x.rank() != 4) throw std::invalid_argument("batchnorm: input must be rank-4 NCHW");
    const int64_t N = x.n(), C = x.c(), plane = x.h() * x.w();
    Tensor out = Tensor::zeros(x.shape);
    for (int64_t b = 0; b < N; ++b)
        for (int64_t c0 = 0; c0 < C; ++c0) {
            const double r = 1.0 / std::sqrt(run_var[c0] + kBnEps);
            const double g = gamma.data[c0], be = beta.data[c0], mu = run_mean[c0];
            const double* xr = &x.data[(b * C + c0) * plane];
            double* orow = &out.data[(b * C + c0) * plane];
            for (int64_t p = 0; p < plane; ++p) orow[p] = g * (xr[p] - mu) * r + be;
        }
    return out;
}

inline BnGrads batchnorm_infer_backward(const Tensor& x, const Tensor& gamma,
                                        const std::vector<double>& run_mean,
                                        const std::vector<double>& run_var, const Tensor& gout) {
    const int64_t N = x.n(), C = x.c(), plane = x.h() * x.w();
    BnGrads g{Tensor::zeros(x.shape), Tensor::zeros(gamma.shape), Tensor::zeros(gamma.shape)};
    for (int64_t c0 = 0; c0 < C; ++c0) {
        const double r = 1.0 / std::sqrt(run_var[c0] + kBnEps);
        const double k = gamma.data[c0] * r, mu = run_mean[c0];
        double sg = 0.0, sb = 0.0;
        for (int64_t b = 0; b < N; ++b) {
            const double* xr = &x.data[(b * C + c0) * plane];
            const double* gr = &gout.data[(b * C + c0) * plane];
            double* gxr = &g.gx.data[(b * C + c0) * plane];
            for (int64_t p = 0; p < plane; ++p) {
                sg += gr[p] * (xr[p] - mu) * r;
                sb += gr[p];
                gxr[p] = k * gr[p];
            }
        }
        g.ggamma.data[c0] = sg;
        g.gbeta.data[c0] = sb;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Dropout. Training zeroes each unit with probability p and scales survivors
// by 1/(1-p); inference is the identity. The mask is drawn from a caller-
// provided seed so runs are reproducible.
// ---------------------------------------------------------------------------

inline Tensor dropout(const Tensor& x, double p, uint64_t seed, std::vector<uint8_t>& mask_out) {
    if (p < 0.0 || p >= 1.0)
        throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
    mask_out.assign(x.numel(), 1);
    if (p == 0.0) return x;
    Tensor out = x;
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - p);
    for (int64_t i = 0; i < x.numel(); ++i) {
        if (rng.next_unit() < p) {
            mask_out[i] = 0;
            out.data[i] = 0.0;
        } else {
            out.data[i] *= keep_scale;
        }
    }
    return out;
}

inline Tensor dropout_backward(const Tensor& gout, double p, const std::vector<uint8_t>& mask) {
    if (p == 0.0) return gout;
    Tensor gx = gout;
    const double keep_scale = 1.0 / (1.0 - p);
    for (int64_t i = 0; i < gx.numel(); ++i) gx.data[i] = mask[i] ? gx.data[i] * keep_scale : 0.0;
    return gx;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy: mean negative log-likelihood over the batch, plus
// the gradient with respect to the logits.
// ---------------------------------------------------------------------------

struct SceResult {
    double loss;
    Tensor glogits;
};

inline SceResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw std::invalid_argument("softmax_cross_entropy: logits must be rank-2 (N, classes)");
    const int64_t N = logits.shape[0], K = logits.shape[1];
    if (static_cast<int64_t>(labels.size()) != N)
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(N));
    SceResult res{0.0, Tensor::zeros(logits.shape)};
    for (int64_t b = 0; b < N; ++b) {
        const int y = labels[b];
        if (y < 0 || y >= K)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(K) + ")");
        const double* lr = &logits.data[b * K];
        double mx = lr[0];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, lr[k]);
        double z = 0.0;
        for (int64_t k = 0; k < K; ++k) z += std::exp(lr[k] - mx);
        res.loss += -(lr[y] - mx - std::log(z));
        for (int64_t k = 0; k < K; ++k) {
            const double pk = std::exp(lr[k] - mx) / z;
            res.glogits.data[b * K + k] = (pk - (k == y ? 1.0 : 0.0)) / static_cast<double>(N);
        }
    }
    res.loss /= static_cast<double>(N);
    return res;
}

}  // namespace ops
}  // namespace channelkit
