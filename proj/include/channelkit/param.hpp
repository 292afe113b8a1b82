// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>

#include "channelkit/random.hpp"
#include "channelkit/tensor.hpp"

namespace channelkit {

/// A named learnable tensor paired with its gradient accumulator.
/// Every learnable scalar in a model belongs to exactly one ParamBlock.
struct ParamBlock {
    std::string name;
    Tensor value;
    Tensor grad;

    ParamBlock() = default;
    ParamBlock(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
    int64_t numel() const { return value.numel(); }
};

/// Uniform init in [-sqrt(1/fan_in), sqrt(1/fan_in)), seeded per name.
inline ParamBlock init_param(const std::string& name, Shape shape, int64_t fan_in,
                             uint64_t master_seed) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    return ParamBlock(name, seeded_uniform(std::move(shape), -bound, bound,
                                           derive_seed(master_seed, name)));
}

inline ParamBlock const_param(const std::string& name, Shape shape, double v) {
    return ParamBlock(name, Tensor::full(std::move(shape), v));
}

}  // namespace channelkit
