// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file nn_ops.hpp
 * @brief Forward and backward passes for the convolution family.
 *
 * All operators are pure functions of (input, weights): no hidden state, no
 * bias terms. Activations are NCHW. Backward functions take the upstream
 * cotangent and return gradients for the input and every weight tensor.
 *
 * Spatial convolutions use "same" zero padding: out = ceil(in / stride),
 * with the extra padding row/column (if total padding is odd) on the
 * bottom/right. The channel-wise family pads the channel axis instead:
 * p_left = floor((d_c - s) / 2), remainder to the right, which maps m
 * channels to m/s exactly.
 */

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "channelkit/parallel.hpp"
#include "channelkit/tensor.hpp"

namespace channelkit {
namespace ops {

enum class Padding { Same, Valid };

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

struct Pad2d {
    int64_t out, before;  // output extent and leading pad along one axis
};

inline Pad2d same_pad_1d(int64_t in, int64_t k, int64_t stride) {
    Pad2d p;
    p.out = (in + stride - 1) / stride;
    int64_t total = (p.out - 1) * stride + k - in;
    if (total < 0) total = 0;
    p.before = total / 2;
    return p;
}

inline void check_stride(int64_t stride, const char* op) {
    require(stride == 1 || stride == 2, std::string(op) + ": stride must be 1 or 2, got " +
                                            std::to_string(stride));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Regular 2-D convolution. x: (N, m, H, W); w: (n, m, dk, dk).
// Parameters dk*dk*m*n; every output channel mixes all m input channels.
// ---------------------------------------------------------------------------

inline Tensor conv2d(const Tensor& x, const Tensor& w, int64_t stride) {
    detail::require(x.rank() == 4, "conv2d: input must be rank-4 NCHW, got " + shape_str(x.shape));
    detail::require(w.rank() == 4 && w.shape[2] == w.shape[3],
                    "conv2d: weights must be [n, m, dk, dk], got " + shape_str(w.shape));
    detail::check_stride(stride, "conv2d");
    const int64_t N = x.n(), m = x.c(), H = x.h(), W = x.w();
    const int64_t n = w.shape[0], dk = w.shape[2];
    detail::require(w.shape[1] == m, "conv2d: input has " + std::to_string(m) +
                                         " channels but weights expect " +
                                         std::to_string(w.shape[1]));
    const auto ph = detail::same_pad_1d(H, dk, stride);
    const auto pw = detail::same_pad_1d(W, dk, stride);
    Tensor out = Tensor::zeros({N, n, ph.out, pw.out});
    parallel_for(N, [&](int64_t b0, int64_t b1, int) {
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t o = 0; o < n; ++o)
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t ky = 0; ky < dk; ++ky)
                        for (int64_t kx = 0; kx < dk; ++kx) {
                            const double wv = w.data[((o * m + i) * dk + ky) * dk + kx];
                            if (wv == 0.0) continue;
                            for (int64_t y = 0; y < ph.out; ++y) {
                                const int64_t iy = y * stride + ky - ph.before;
                                if (iy < 0 || iy >= H) continue;
                                const double* xr = &x.data[((b * m + i) * H + iy) * W];
                                double* orow = &out.data[((b * n + o) * ph.out + y) * pw.out];
                                for (int64_t xo = 0; xo < pw.out; ++xo) {
                                    const int64_t ix = xo * stride + kx - pw.before;
                                    if (ix < 0 || ix >= W) continue;
                                    orow[xo] += wv * xr[ix];
                                }
                            }
                        }
    });
    return out;
}

struct Conv2dGrads {
    Tensor gx, gw;
};

inline Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, int64_t stride,
                                   const Tensor& gout) {
    const int64_t N = x.n(), m = x.c(), H = x.h(), W = x.w();
    const int64_t n = w.shape[0], dk = w.shape[2];
    const auto ph = detail::same_pad_1d(H, dk, stride);
    const auto pw = detail::same_pad_1d(W, dk, stride);
    Conv2dGrads g{Tensor::zeros(x.shape), Tensor::zeros(w.shape)};
    const int chunks = ThreadPool::instance().workers();
    std::vector<Tensor> gw_parts(chunks, Tensor::zeros(w.shape));
    parallel_for(N, [&](int64_t b0, int64_t b1, int chunk) {
        Tensor& gw = gw_parts[chunk];
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t o = 0; o < n; ++o)
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t ky = 0; ky < dk; ++ky)
                        for (int64_t kx = 0; kx < dk; ++kx) {
                            const double wv = w.data[((o * m + i) * dk + ky) * dk + kx];
                            double acc = 0.0;
                            for (int64_t y = 0; y < ph.out; ++y) {
                                const int64_t iy = y * stride + ky - ph.before;
                                if (iy < 0 || iy >= H) continue;
                                const double* grow = &gout.data[((b * n + o) * ph.out + y) * pw.out];
                                const double* xr = &x.data[((b * m + i) * H + iy) * W];
                                double* gxr = &g.gx.data[((b * m + i) * H + iy) * W];
                                for (int64_t xo = 0; xo < pw.out; ++xo) {
                                    const int64_t ix = xo * stride + kx - pw.before;
                                    if (ix < 0 || ix >= W) continue;
                                    acc += grow[xo] * xr[ix];
                                    gxr[ix] += wv * grow[xo];
                                }
                            }
                            gw.data[((o * m + i) * dk + ky) * dk + kx] += acc;
                        }
    });
    for (const Tensor& part : gw_parts)
        for (int64_t i = 0; i < g.gw.numel(); ++i) g.gw.data[i] += part.data[i];
    return g;
}

// ---------------------------------------------------------------------------
// Depth-wise convolution. x: (N, m, H, W); w: (m, dk, dk).
// Output channel i depends only on input channel i.
// ---------------------------------------------------------------------------

inline Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int64_t stride) {
    detail::require(x.rank() == 4, "depthwise_conv2d: input must be rank-4 NCHW");
    detail::require(w.rank() == 3 && w.shape[1] == w.shape[2],
                    "depthwise_conv2d: weights must be [m, dk, dk], got " + shape_str(w.shape));
    detail::check_stride(stride, "depthwise_conv2d");
    const int64_t N = x.n(), m = x.c(), H = x.h(), W = x.w();
    const int64_t dk = w.shape[1];
    detail::require(w.shape[0] == m, "depthwise_conv2d: input has " + std::to_string(m) +
                                         " channels but weights expect " +
                                         std::to_string(w.shape[0]));
    const auto ph = detail::same_pad_1d(H, dk, stride);
    const auto pw = detail::same_pad_1d(W, dk, stride);
    Tensor out = Tensor::zeros({N, m, ph.out, pw.out});
    parallel_for(N * m, [&](int64_t p0, int64_t p1, int) {
        for (int64_t p = p0; p < p1; ++p) {
            const int64_t b = p / m, i = p % m;
            for (int64_t ky = 0; ky < dk; ++ky)
                for (int64_t kx = 0; kx < dk; ++kx) {
                    const double wv = w.data[(i * dk + ky) * dk + kx];
                    if (wv == 0.0) continue;
                    for (int64_t y = 0; y < ph.out; ++y) {
                        const int64_t iy = y * stride + ky - ph.before;
                        if (iy < 0 || iy >= H) continue;
                        const double* xr = &x.data[(p * H + iy) * W];
                        double* orow = &out.data[(p * ph.out + y) * pw.out];
                        for (int64_t xo = 0; xo < pw.out; ++xo) {
                            const int64_t ix = xo * stride + kx - pw.before;
                            if (ix < 0 || ix >= W) continue;
                            orow[xo] += wv * xr[ix];
                        }
                    }
                }
        }
    });
    return out;
}

struct DepthwiseGrads {
    Tensor gx, gw;
};

inline DepthwiseGrads depthwise_conv2d_backward(const Tensor& x, const Tensor& w, int64_t stride,
                                                const Tensor& gout) {
    const int64_t N = x.n(), m = x.c(), H = x.h(), W = x.w();
    const int64_t dk = w.shape[1];
    const auto ph = detail::same_pad_1d(H, dk, stride);
    const auto pw = detail::same_pad_1d(W, dk, stride);
    DepthwiseGrads g{Tensor::zeros(x.shape), Tensor::zeros(w.shape)};
    const int chunks = ThreadPool::instance().workers();
    std::vector<Tensor> gw_parts(chunks, Tensor::zeros(w.shape));
    parallel_for(N * m, [&](int64_t p0, int64_t p1, int chunk) {
        Tensor& gw = gw_parts[chunk];
        for (int64_t p = p0; p < p1; ++p) {
            const int64_t i = p % m;
            for (int64_t ky = 0; ky < dk; ++ky)
                for (int64_t kx = 0; kx < dk; ++kx) {
                    const double wv = w.data[(i * dk + ky) * dk + kx];
                    double acc = 0.0;
                    for (int64_t y = 0; y < ph.out; ++y) {
                        const int64_t iy = y * stride + ky - ph.before;
                        if (iy < 0 || iy >= H) continue;
                        const double* grow = &gout.data[(p * ph.out + y) * pw.out];
                        const double* xr = &x.data[(p * H + iy) * W];
                        double* gxr = &g.gx.data[(p * H + iy) * W];
                        for (int64_t xo = 0; xo < pw.out; ++xo) {
                            const int64_t ix = xo * stride + kx - pw.before;
                            if (ix < 0 || ix >= W) continue;
                            acc += grow[xo] * xr[ix];
                            gxr[ix] += wv * grow[xo];
                        }
                    }
                    gw.data[(i * dk + ky) * dk + kx] += acc;
                }
        }
    });
    for (const Tensor& part : gw_parts)
        for (int64_t i = 0; i < g.gw.numel(); ++i) g.gw.data[i] += part.data[i];
    return g;
}

// ---------------------------------------------------------------------------
// 1x1 convolution: a dense linear combination of channels, shared across
// every spatial position. x: (N, m, H, W); w: (n, m).
// ---------------------------------------------------------------------------

inline Tensor pointwise_conv(const Tensor& x, const Tensor& w) {
    detail::require(x.rank() == 4, "pointwise_conv: input must be rank-4 NCHW");
    detail::require(w.rank() == 2, "pointwise_conv: weights must be [n, m], got " +
                                       shape_str(w.shape));
    const int64_t N = x.n(), m = x.c(), plane = x.h() * x.w();
    const int64_t n = w.shape[0];
    detail::require(w.shape[1] == m, "pointwise_conv: input has " + std::to_string(m) +
                                         " channels but weights expect " +
                                         std::to_string(w.shape[1]));
    Tensor out = Tensor::zeros({N, n, x.h(), x.w()});
    parallel_for(N, [&](int64_t b0, int64_t b1, int) {
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t j = 0; j < n; ++j) {
                double* orow = &out.data[(b * n + j) * plane];
                for (int64_t i = 0; i < m; ++i) {
                    const double wv = w.data[j * m + i];
                    if (wv == 0.0) continue;
                    const double* xr = &x.data[(b * m + i) * plane];
                    for (int64_t p = 0; p < plane; ++p) orow[p] += wv * xr[p];
                }
            }
    });
    return out;
}

struct PointwiseGrads {
    Tensor gx, gw;
};

inline PointwiseGrads pointwise_conv_backward(const Tensor& x, const Tensor& w,
                                              const Tensor& gout) {
    const int64_t N = x.n(), m = x.c(), plane = x.h() * x.w();
    const int64_t n = w.shape[0];
    PointwiseGrads g{Tensor::zeros(x.shape), Tensor::zeros(w.shape)};
    const int chunks = ThreadPool::instance().workers();
    std::vector<Tensor> gw_parts(chunks, Tensor::zeros(w.shape));
    parallel_for(N, [&](int64_t b0, int64_t b1, int chunk) {
        Tensor& gw = gw_parts[chunk];
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t j = 0; j < n; ++j) {
                const double* grow = &gout.data[(b * n + j) * plane];
                for (int64_t i = 0; i < m; ++i) {
                    const double wv = w.data[j * m + i];
                    const double* xr = &x.data[(b * m + i) * plane];
                    double* gxr = &g.gx.data[(b * m + i) * plane];
                    double acc = 0.0;
                    for (int64_t p = 0; p < plane; ++p) {
                        acc += grow[p] * xr[p];
                        gxr[p] += wv * grow[p];
                    }
                    gw.data[j * m + i] += acc;
                }
            }
    });
    for (const Tensor& part : gw_parts)
        for (int64_t i = 0; i < g.gw.numel(); ++i) g.gw.data[i] += part.data[i];
    return g;
}

// ---------------------------------------------------------------------------
// 1x1 group convolution: channels split into g blocks, each block mixed
// independently. x: (N, m, H, W); w: (g, n/g, m/g). Equivalent to a
// pointwise convolution with a block-diagonal [n, m] matrix.
// ---------------------------------------------------------------------------

inline Tensor group_pointwise_conv(const Tensor& x, const Tensor& w, int64_t groups) {
    detail::require(x.rank() == 4, "group_pointwise_conv: input must be rank-4 NCHW");
    detail::require(w.rank() == 3, "group_pointwise_conv: weights must be [g, n/g, m/g], got " +
                                       shape_str(w.shape));
    detail::require(groups >= 1 && w.shape[0] == groups,
                    "group_pointwise_conv: weight group extent " + std::to_string(w.shape[0]) +
                        " does not match groups " + std::to_string(groups));
    const int64_t m = x.c(), mg = w.shape[2], ng = w.shape[1];
    detail::require(m == mg * groups, "group_pointwise_conv: " + std::to_string(m) +
                                          " channels not divisible into " +
                                          std::to_string(groups) + " groups of " +
                                          std::to_string(mg));
    const int64_t N = x.n(), plane = x.h() * x.w(), n = ng * groups;
    Tensor out = Tensor::zeros({N, n, x.h(), x.w()});
    parallel_for(N, [&](int64_t b0, int64_t b1, int) {
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t gq = 0; gq < groups; ++gq)
                for (int64_t j = 0; j < ng; ++j) {
                    double* orow = &out.data[((b * n) + gq * ng + j) * plane];
                    for (int64_t i = 0; i < mg; ++i) {
                        const double wv = w.data[(gq * ng + j) * mg + i];
                        if (wv == 0.0) continue;
                        const double* xr = &x.data[((b * m) + gq * mg + i) * plane];
                        for (int64_t p = 0; p < plane; ++p) orow[p] += wv * xr[p];
                    }
                }
    });
    return out;
}

struct GroupPointwiseGrads {
    Tensor gx, gw;
};

inline GroupPointwiseGrads group_pointwise_conv_backward(const Tensor& x, const Tensor& w,
                                                         int64_t groups, const Tensor& gout) {
    const int64_t N = x.n(), m = x.c(), plane = x.h() * x.w();
    const int64_t ng = w.shape[1], mg = w.shape[2], n = ng * groups;
    GroupPointwiseGrads g{Tensor::zeros(x.shape), Tensor::zeros(w.shape)};
    const int chunks = ThreadPool::instance().workers();
    std::vector<Tensor> gw_parts(chunks, Tensor::zeros(w.shape));
    parallel_for(N, [&](int64_t b0, int64_t b1, int chunk) {
        Tensor& gw = gw_parts[chunk];
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t gq = 0; gq < groups; ++gq)
                for (int64_t j = 0; j < ng; ++j) {
                    const double* grow = &gout.data[((b * n) + gq * ng + j) * plane];
                    for (int64_t i = 0; i < mg; ++i) {
                        const double wv = w.data[(gq * ng + j) * mg + i];
                        const double* xr = &x.data[((b * m) + gq * mg + i) * plane];
                        double* gxr = &g.gx.data[((b * m) + gq * mg + i) * plane];
                        double acc = 0.0;
                        for (int64_t p = 0; p < plane; ++p) {
                            acc += grow[p] * xr[p];
                            gxr[p] += wv * grow[p];
                        }
                        gw.data[(gq * ng + j) * mg + i] += acc;
                    }
                }
    });
    for (const Tensor& part : gw_parts)
        for (int64_t i = 0; i < g.gw.numel(); ++i) g.gw.data[i] += part.data[i];
    return g;
}

// ---------------------------------------------------------------------------
// Channel-wise convolution: a single shared 1-D kernel slides along the
// channel axis, the same at every spatial position. x: (N, m, H, W);
// w: (d_c,). Parameter count is exactly d_c.
//
// Same padding maps m channels to m/s (requires s | m); valid padding maps
// m channels to m - d_c + 1 with stride 1.
// ---------------------------------------------------------------------------

namespace detail {

inline int64_t channel_pad_left(int64_t d_c, int64_t stride, Padding pad, const char* op) {
    if (pad == Padding::Valid) return 0;
    require(d_c >= stride, std::string(op) + ": same padding needs d_c >= stride (got d_c=" +
                               std::to_string(d_c) + ", stride=" + std::to_string(stride) + ")");
    return (d_c - stride) / 2;
}

inline void check_channelwise(int64_t m, int64_t d_c, int64_t stride, Padding pad,
                              int64_t out_channels, const char* op) {
    require(stride >= 1, std::string(op) + ": stride must be >= 1");
    if (pad == Padding::Same) {
        require(out_channels * stride == m,
                std::string(op) + ": same padding requires out_channels * stride == in_channels (" +
                    std::to_string(out_channels) + " * " + std::to_string(stride) +
                    " != " + std::to_string(m) + ")");
    } else {
        require(stride == 1, std::string(op) + ": valid padding requires stride 1");
        require(m >= d_c, std::string(op) + ": valid padding needs at least d_c=" +
                              std::to_string(d_c) + " channels, got " + std::to_string(m));
        require(out_channels == m - d_c + 1,
                std::string(op) + ": valid padding requires out_channels == m - d_c + 1");
    }
}

}  // namespace detail

inline Tensor channelwise_conv(const Tensor& x, const Tensor& w, int64_t stride, Padding pad,
                               int64_t out_channels) {
    detail::require(x.rank() == 4, "channelwise_conv: input must be rank-4 NCHW");
    detail::require(w.rank() == 1, "channelwise_conv: kernel must be rank-1, got " +
                                       shape_str(w.shape));
    const int64_t N = x.n(), m = x.c(), plane = x.h() * x.w(), d_c = w.shape[0];
    detail::check_channelwise(m, d_c, stride, pad, out_channels, "channelwise_conv");
    const int64_t pl = detail::channel_pad_left(d_c, stride, pad, "channelwise_conv");
    Tensor out = Tensor::zeros({N, out_channels, x.h(), x.w()});
    parallel_for(N, [&](int64_t b0, int64_t b1, int) {
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t k = 0; k < out_channels; ++k) {
                double* orow = &out.data[(b * out_channels + k) * plane];
                for (int64_t j = 0; j < d_c; ++j) {
                    const int64_t ci = k * stride + j - pl;
                    if (ci < 0 || ci >= m) continue;
                    const double wv = w.data[j];
                    const double* xr = &x.data[(b * m + ci) * plane];
                    for (int64_t p = 0; p < plane; ++p) orow[p] += wv * xr[p];
                }
            }
    });
    return out;
}

struct ChannelwiseGrads {
    Tensor gx, gw;
};

inline ChannelwiseGrads channelwise_conv_backward(const Tensor& x, const Tensor& w, int64_t stride,
                                                  Padding pad, const Tensor& gout) {
    const int64_t N = x.n(), m = x.c(), plane = x.h() * x.w(), d_c = w.shape[0];
    const int64_t out_channels = gout.c();
    const int64_t pl = detail::channel_pad_left(d_c, stride, pad, "channelwise_conv");
    ChannelwiseGrads g{Tensor::zeros(x.shape), Tensor::zeros(w.shape)};
    const int chunks = ThreadPool::instance().workers();
    std::vector<Tensor> gw_parts(chunks, Tensor::zeros(w.shape));
    parallel_for(N, [&](int64_t b0, int64_t b1, int chunk) {
        Tensor& gw = gw_parts[chunk];
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t k = 0; k < out_channels; ++k) {
                const double* grow = &gout.data[(b * out_channels + k) * plane];
                for (int64_t j = 0; j < d_c; ++j) {
                    const int64_t ci = k * stride + j - pl;
                    if (ci < 0 || ci >= m) continue;
                    const double wv = w.data[j];
                    const double* xr = &x.data[(b * m + ci) * plane];
                    double* gxr = &g.gx.data[(b * m + ci) * plane];
                    double acc = 0.0;
                    for (int64_t p = 0; p < plane; ++p) {
                        acc += grow[p] * xr[p];
                        gxr[p] += wv * grow[p];
                    }
                    gw.data[j] += acc;
                }
            }
    });
    for (const Tensor& part : gw_parts)
        for (int64_t i = 0; i < g.gw.numel(); ++i) g.gw.data[i] += part.data[i];
    return g;
}

// ---------------------------------------------------------------------------
// Group channel-wise convolution: g independent channel-wise convolutions,
// each with stride g over the same padded input, outputs concatenated.
// Serves as the information-fusion layer after a 1x1 group convolution.
// x: (N, n, H, W); ws: (g, d_c). Requires d_c >= g so every output group
// sees all n input channels.
// ---------------------------------------------------------------------------

inline Tensor group_channelwise_conv(const Tensor& x, const Tensor& ws, int64_t groups) {
    detail::require(x.rank() == 4, "group_channelwise_conv: input must be rank-4 NCHW");
    detail::require(ws.rank() == 2 && ws.shape[0] == groups,
                    "group_channelwise_conv: kernels must be [g, d_c], got " +
                        shape_str(ws.shape));
    const int64_t n = x.c(), d_c = ws.shape[1];
    detail::require(n % groups == 0, "group_channelwise_conv: " + std::to_string(n) +
                                         " channels not divisible by g=" + std::to_string(groups));
    detail::require(d_c >= groups, "group_channelwise_conv: needs d_c >= g (got d_c=" +
                                       std::to_string(d_c) + ", g=" + std::to_string(groups) + ")");
    const int64_t N = x.n(), plane = x.h() * x.w(), ng = n / groups;
    const int64_t pl = (d_c - groups) / 2;
    Tensor out = Tensor::zeros({N, n, x.h(), x.w()});
    parallel_for(N, [&](int64_t b0, int64_t b1, int) {
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t gq = 0; gq < groups; ++gq)
                for (int64_t k = 0; k < ng; ++k) {
                    double* orow = &out.data[((b * n) + gq * ng + k) * plane];
                    for (int64_t j = 0; j < d_c; ++j) {
                        const int64_t ci = k * groups + j - pl;
                        if (ci < 0 || ci >= n) continue;
                        const double wv = ws.data[gq * d_c + j];
                        const double* xr = &x.data[(b * n + ci) * plane];
                        for (int64_t p = 0; p < plane; ++p) orow[p] += wv * xr[p];
                    }
                }
    });
    return out;
}

struct GroupChannelwiseGrads {
    Tensor gx, gw;
};

inline GroupChannelwiseGrads group_channelwise_conv_backward(const Tensor& x, const Tensor& ws,
                                                             int64_t groups, const Tensor& gout) {
    const int64_t N = x.n(), n = x.c(), plane = x.h() * x.w(), d_c = ws.shape[1];
    const int64_t ng = n / groups, pl = (d_c - groups) / 2;
    GroupChannelwiseGrads g{Tensor::zeros(x.shape), Tensor::zeros(ws.shape)};
    const int chunks = ThreadPool::instance().workers();
    std::vector<Tensor> gw_parts(chunks, Tensor::zeros(ws.shape));
    parallel_for(N, [&](int64_t b0, int64_t b1, int chunk) {
        Tensor& gw = gw_parts[chunk];
        for (int64_t b = b0; b < b1; ++b)
            for (int64_t gq = 0; gq < groups; ++gq)
                for (int64_t k = 0; k < ng; ++k) {
                    const double* grow = &gout.data[((b * n) + gq * ng + k) * plane];
                    for (int64_t j = 0; j < d_c; ++j) {
                        const int64_t ci = k * groups + j - pl;
                        if (ci < 0 || ci >= n) continue;
                        const double wv = ws.data[gq * d_c + j];
                        const double* xr = &x.data[(b * n + ci) * plane];
                        double* gxr = &g.gx.data[(b * n + ci) * plane];
                        double acc = 0.0;
                        for (int64_t p = 0; p < plane; ++p) {
                            acc += grow[p] * xr[p];
                            gxr[p] += wv * grow[p];
                        }
                        gw.data[gq * d_c + j] += acc;
                    }
                }
    });
    for (const Tensor& part : gw_parts)
        for (int64_t i = 0; i < g.gw.numel(); ++i) g.gw.data[i] += part.data[i];
    return g;
}

// ---------------------------------------------------------------------------
// Depth-wise separable channel-wise convolution: a depth-wise convolution
// followed directly by channel-wise convolution(s), replacing the 1x1
// convolution of a standard depth-wise separable layer. For n == q*m output
// channels, q independent kernels run over the depth-wise output and their
// results are concatenated. w_dw: (m, dk, dk); w_cw: (q, d_c).
// ---------------------------------------------------------------------------

inline Tensor dws_channelwise_conv(const Tensor& x, const Tensor& w_dw, const Tensor& w_cw,
                                   int64_t stride) {
    detail::require(w_cw.rank() == 2, "dws_channelwise_conv: channel kernels must be [q, d_c]");
    Tensor mid = depthwise_conv2d(x, w_dw, stride);
    const int64_t q = w_cw.shape[0], d_c = w_cw.shape[1], m = mid.c();
    detail::require(q >= 1, "dws_channelwise_conv: output channels must be a positive multiple of "
                            "input channels");
    Tensor out = Tensor::zeros({mid.n(), q * m, mid.h(), mid.w()});
    for (int64_t t = 0; t < q; ++t) {
        Tensor k({d_c}, std::vector<double>(w_cw.data.begin() + t * d_c,
                                            w_cw.data.begin() + (t + 1) * d_c));
        Tensor part = channelwise_conv(mid, k, 1, Padding::Same, m);
        const int64_t plane = mid.h() * mid.w();
        for (int64_t b = 0; b < mid.n(); ++b)
            std::copy(part.data.begin() + b * m * plane, part.data.begin() + (b + 1) * m * plane,
                      out.data.begin() + (b * q * m + t * m) * plane);
    }
    return out;
}

struct DwsChannelwiseGrads {
    Tensor gx, gw_dw, gw_cw;
};

inline DwsChannelwiseGrads dws_channelwise_conv_backward(const Tensor& x, const Tensor& w_dw,
                                                         const Tensor& w_cw, int64_t stride,
                                                         const Tensor& gout) {
    Tensor mid = depthwise_conv2d(x, w_dw, stride);
    const int64_t q = w_cw.shape[0], d_c = w_cw.shape[1], m = mid.c();
    const int64_t plane = mid.h() * mid.w();
    Tensor gmid = Tensor::zeros(mid.shape);
    Tensor gw_cw = Tensor::zeros(w_cw.shape);
    for (int64_t t = 0; t < q; ++t) {
        Tensor k({d_c}, std::vector<double>(w_cw.data.begin() + t * d_c,
                                            w_cw.data.begin() + (t + 1) * d_c));
        Tensor gpart = Tensor::zeros({mid.n(), m, mid.h(), mid.w()});
        for (int64_t b = 0; b < mid.n(); ++b)
            std::copy(gout.data.begin() + (b * q * m + t * m) * plane,
                      gout.data.begin() + (b * q * m + (t + 1) * m) * plane,
                      gpart.data.begin() + b * m * plane);
        ChannelwiseGrads cg = channelwise_conv_backward(mid, k, 1, Padding::Same, gpart);
        for (int64_t i = 0; i < gmid.numel(); ++i) gmid.data[i] += cg.gx.data[i];
        std::copy(cg.gw.data.begin(), cg.gw.data.end(), gw_cw.data.begin() + t * d_c);
    }
    DepthwiseGrads dg = depthwise_conv2d_backward(x, w_dw, stride, gmid);
    return {std::move(dg.gx), std::move(dg.gw), std::move(gw_cw)};
}

// ---------------------------------------------------------------------------
// Global average pooling: the spatial mean per channel. Equivalent to a
// depth-wise convolution with a fixed 1/(H*W) kernel and no padding.
// ---------------------------------------------------------------------------

inline Tensor global_avg_pool(const Tensor& x) {
    detail::require(x.rank() == 4, "global_avg_pool: input must be rank-4 NCHW");
    const int64_t N = x.n(), C = x.c(), plane = x.h() * x.w();
    Tensor out = Tensor::zeros({N, C, 1, 1});
    for (int64_t bc = 0; bc < N * C; ++bc) {
        double s = 0.0;
        const double* xr = &x.data[bc * plane];
        for (int64_t p = 0; p < plane; ++p) s += xr[p];
        out.data[bc] = s / static_cast<double>(plane);
    }
    return out;
}

inline Tensor global_avg_pool_backward(const Shape& x_shape, const Tensor& gout) {
    Tensor gx = Tensor::zeros(x_shape);
    const int64_t plane = x_shape[2] * x_shape[3];
    for (int64_t bc = 0; bc < x_shape[0] * x_shape[1]; ++bc) {
        const double gv = gout.data[bc] / static_cast<double>(plane);
        for (int64_t p = 0; p < plane; ++p) gx.data[bc * plane + p] = gv;
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Convolutional classification layer: one 3-D convolution with kernel
// (d_f, d_f, d_c), d_c = m - n_classes + 1, no padding, replacing global
// average pooling plus the fully-connected classifier.
// x: (N, m, d_f, d_f); w: (d_f, d_f, d_c); out: (N, n_classes).
// ---------------------------------------------------------------------------

inline Tensor conv_classification(const Tensor& x, const Tensor& w) {
    detail::require(x.rank() == 4, "conv_classification: input must be rank-4 NCHW");
    detail::require(w.rank() == 3, "conv_classification: kernel must be [d_f, d_f, d_c], got " +
                                       shape_str(w.shape));
    const int64_t N = x.n(), m = x.c(), d_f = w.shape[0], d_c = w.shape[2];
    detail::require(w.shape[1] == d_f, "conv_classification: kernel spatial extents differ");
    detail::require(x.h() == d_f && x.w() == d_f,
                    "conv_classification: input spatial size " + std::to_string(x.h()) + "x" +
                        std::to_string(x.w()) + " must equal kernel size " + std::to_string(d_f) +
                        "x" + std::to_string(d_f));
    detail::require(m >= d_c, "conv_classification: kernel depth " + std::to_string(d_c) +
                                  " exceeds " + std::to_string(m) + " input channels");
    const int64_t n_classes = m - d_c + 1;
    const int64_t plane = d_f * d_f;
    Tensor out = Tensor::zeros({N, n_classes});
    for (int64_t b = 0; b < N; ++b)
        for (int64_t k = 0; k < n_classes; ++k) {
            double s = 0.0;
            for (int64_t c0 = 0; c0 < d_c; ++c0) {
                const double* xr = &x.data[(b * m + k + c0) * plane];
                for (int64_t i = 0; i < d_f; ++i)
                    for (int64_t j = 0; j < d_f; ++j)
                        s += w.data[(i * d_f + j) * d_c + c0] * xr[i * d_f + j];
            }
            out.data[b * n_classes + k] = s;
        }
    return out;
}

struct CclGrads {
    Tensor gx, gw;
};

inline CclGrads conv_classification_backward(const Tensor& x, const Tensor& w,
                                             const Tensor& gout) {
    const int64_t N = x.n(), m = x.c(), d_f = w.shape[0], d_c = w.shape[2];
    const int64_t n_classes = m - d_c + 1, plane = d_f * d_f;
    CclGrads g{Tensor::zeros(x.shape), Tensor::zeros(w.shape)};
    for (int64_t b = 0; b < N; ++b)
        for (int64_t k = 0; k < n_classes; ++k) {
            const double gv = gout.data[b * n_classes + k];
            if (gv == 0.0) continue;
            for (int64_t c0 = 0; c0 < d_c; ++c0) {
                const double* xr = &x.data[(b * m + k + c0) * plane];
                double* gxr = &g.gx.data[(b * m + k + c0) * plane];
                for (int64_t p = 0; p < plane; ++p) {
                    g.gw.data[p * d_c + c0] += gv * xr[p];
                    gxr[p] += gv * w.data[p * d_c + c0];
                }
            }
        }
    return g;
}

// ---------------------------------------------------------------------------
// Fully-connected map (no bias). x: (N, m); w: (n, m); out: (N, n).
// Identical to a 1x1 convolution on (N, m, 1, 1) inputs.
// ---------------------------------------------------------------------------

inline Tensor fully_connected(const Tensor& x, const Tensor& w) {
    detail::require(x.rank() == 2, "fully_connected: input must be rank-2 (N, m), got " +
                                       shape_str(x.shape));
    detail::require(w.rank() == 2, "fully_connected: weights must be [n, m]");
    const int64_t N = x.shape[0], m = x.shape[1], n = w.shape[0];
    detail::require(w.shape[1] == m, "fully_connected: input features " + std::to_string(m) +
                                         " do not match weight columns " +
                                         std::to_string(w.shape[1]));
    Tensor out = Tensor::zeros({N, n});
    for (int64_t b = 0; b < N; ++b)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            const double* xr = &x.data[b * m];
            const double* wr = &w.data[j * m];
            for (int64_t i = 0; i < m; ++i) s += wr[i] * xr[i];
            out.data[b * n + j] = s;
        }
    return out;
}

struct FcGrads {
    Tensor gx, gw;
};

inline FcGrads fully_connected_backward(const Tensor& x, const Tensor& w, const Tensor& gout) {
    const int64_t N = x.shape[0], m = x.shape[1], n = w.shape[0];
    FcGrads g{Tensor::zeros(x.shape), Tensor::zeros(w.shape)};
    for (int64_t b = 0; b < N; ++b)
        for (int64_t j = 0; j < n; ++j) {
            const double gv = gout.data[b * n + j];
            if (gv == 0.0) continue;
            const double* xr = &x.data[b * m];
            double* gwr = &g.gw.data[j * m];
            double* gxr = &g.gx.data[b * m];
            const double* wr = &w.data[j * m];
            for (int64_t i = 0; i < m; ++i) {
                gwr[i] += gv * xr[i];
                gxr[i] += gv * wr[i];
            }
        }
    return g;
}

}  // namespace ops
}  // namespace channelkit
