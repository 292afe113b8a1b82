// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file tensor.hpp
 * @brief Dense N-dimensional tensor of 64-bit floats, row-major.
 *
 * Activations use NCHW order (batch, channels, height, width). Tensors are
 * value types: every operation returns a new tensor and leaves its inputs
 * untouched, so they can be shared across threads freely.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace channelkit {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

class Tensor {
public:
    Shape shape;
    std::vector<double> data;

    Tensor() : shape{1}, data(1, 0.0) {}

    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        validate();
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        Tensor t;
        t.shape = std::move(s);
        t.validate();
        t.data.assign(shape_numel(t.shape), 0.0);
        return t;
    }

    static Tensor full(Shape s, double v) {
        Tensor t = zeros(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor zeros_like(const Tensor& o) { return zeros(o.shape); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    // NCHW accessors; valid only for rank-4 tensors.
    int64_t n() const { return dim(0); }
    int64_t c() const { return dim(1); }
    int64_t h() const { return dim(2); }
    int64_t w() const { return dim(3); }

    int64_t dim(int i) const {
        if (i >= rank())
            throw std::invalid_argument("Tensor: dim " + std::to_string(i) + " out of rank " +
                                        std::to_string(rank()));
        return shape[i];
    }

    double& at4(int64_t b, int64_t ch, int64_t y, int64_t x) {
        return data[((b * shape[1] + ch) * shape[2] + y) * shape[3] + x];
    }
    double at4(int64_t b, int64_t ch, int64_t y, int64_t x) const {
        return data[((b * shape[1] + ch) * shape[2] + y) * shape[3] + x];
    }
    double& at2(int64_t i, int64_t j) { return data[i * shape[1] + j]; }
    double at2(int64_t i, int64_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

private:
    void validate() const {
        if (shape.empty() || shape.size() > 4)
            throw std::invalid_argument("Tensor: rank must be 1..4, got shape " + shape_str(shape));
        for (size_t i = 0; i < shape.size(); ++i)
            if (shape[i] < 1)
                throw std::invalid_argument("Tensor: extent " + std::to_string(shape[i]) +
                                            " on axis " + std::to_string(i) + " must be >= 1");
    }
};

/// Element-count-preserving relabel of the extents.
inline Tensor reshape(const Tensor& t, Shape s) {
    if (shape_numel(s) != t.numel())
        throw std::invalid_argument("reshape: cannot map " + shape_str(t.shape) + " (" +
                                    std::to_string(t.numel()) + " elements) to " + shape_str(s) +
                                    " (" + std::to_string(shape_numel(s)) + " elements)");
    return Tensor(std::move(s), t.data);
}

/// Channels [from, to) of an NCHW tensor.
inline Tensor slice_channels(const Tensor& t, int64_t from, int64_t to) {
    if (t.rank() != 4)
        throw std::invalid_argument("slice_channels: expected rank-4 NCHW tensor, got " +
                                    shape_str(t.shape));
    if (from < 0 || to > t.c() || from >= to)
        throw std::invalid_argument("slice_channels: range [" + std::to_string(from) + "," +
                                    std::to_string(to) + ") invalid for " + std::to_string(t.c()) +
                                    " channels");
    const int64_t plane = t.h() * t.w();
    Tensor out = Tensor::zeros({t.n(), to - from, t.h(), t.w()});
    for (int64_t b = 0; b < t.n(); ++b) {
        const double* src = t.data.data() + (b * t.c() + from) * plane;
        double* dst = out.data.data() + b * (to - from) * plane;
        std::copy(src, src + (to - from) * plane, dst);
    }
    return out;
}

/// Joins two NCHW tensors along the channel axis; inverts a matching slice pair.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 4 || b.rank() != 4)
        throw std::invalid_argument("concat_channels: expected rank-4 NCHW tensors");
    if (a.n() != b.n())
        throw std::invalid_argument("concat_channels: batch extents differ (" +
                                    std::to_string(a.n()) + " vs " + std::to_string(b.n()) + ")");
    if (a.h() != b.h() || a.w() != b.w())
        throw std::invalid_argument("concat_channels: spatial extents differ (" +
                                    std::to_string(a.h()) + "x" + std::to_string(a.w()) + " vs " +
                                    std::to_string(b.h()) + "x" + std::to_string(b.w()) + ")");
    const int64_t plane = a.h() * a.w();
    Tensor out = Tensor::zeros({a.n(), a.c() + b.c(), a.h(), a.w()});
    for (int64_t bi = 0; bi < a.n(); ++bi) {
        double* dst = out.data.data() + bi * (a.c() + b.c()) * plane;
        const double* pa = a.data.data() + bi * a.c() * plane;
        const double* pb = b.data.data() + bi * b.c() * plane;
        std::copy(pa, pa + a.c() * plane, dst);
        std::copy(pb, pb + b.c() * plane, dst + a.c() * plane);
    }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add: shapes differ, " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Tensor scale(const Tensor& a, double k) {
    Tensor out = a;
    for (double& v : out.data) v *= k;
    return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shapes differ, " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

}  // namespace channelkit
