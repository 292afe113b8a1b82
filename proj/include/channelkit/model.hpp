// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file model.hpp
 * @brief Declarative architecture specs and builders for the ChannelNet
 *        family (v1, v2, v3, v1-minus) and the MobileNet baseline.
 *
 * A ModelSpec is the row-by-row architecture table; Model instantiates it
 * into layers with parameters. Row layout for v1 at width 1.0:
 *
 *   Conv/2/32, DWSConv/1/64, DWSConv/2/128, DWSConv/1/128, DWSConv/2/256,
 *   DWSConv/1/256, DWSConv/2/512, GCWM/1/512, GCWM/1/512, GM/1/512,
 *   DWSConv/2/1024, DWSConv/1/1024, AvgPool+FC
 *
 * v2 swaps the last DWSConv for a depth-wise separable channel-wise layer
 * (d_c = 16); v3 additionally swaps the classifier for the convolutional
 * classification layer; v1-minus replaces both GCWMs with plain GMs. The
 * MobileNet baseline replaces the GCWM/GCWM/GM rows with the five
 * DWSConv/1/512 layers of the original. For inputs smaller than 64 pixels
 * the first three stride-2 rows run at stride 1, so a 32x32 input still
 * reaches the classifier at 8x8.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "channelkit/layers.hpp"

namespace channelkit {

enum class LayerKind { Conv, DwsConv, Gm, Gcwm, DwsCwConv, AvgPoolFc, Ccl };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "Conv";
        case LayerKind::DwsConv: return "DWSConv";
        case LayerKind::Gm: return "GM";
        case LayerKind::Gcwm: return "GCWM";
        case LayerKind::DwsCwConv: return "DWSCWConv";
        case LayerKind::AvgPoolFc: return "AvgPool+FC";
        case LayerKind::Ccl: return "CCL";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind;
    int64_t out_channels = 0;  // classifier rows: number of classes
    int64_t stride = 1;
    int64_t groups = 1;
    int64_t d_c = 0;
};

struct ModelSpec {
    std::string name;
    std::string version;  // v1 | v2 | v3 | v1-minus | mobilenet
    double alpha = 1.0;
    int64_t n_classes = 1000;
    int64_t input_size = 224;
    std::vector<LayerSpec> layers;
};

inline constexpr int64_t kSpatialKernel = 3;
inline constexpr int64_t kGroups = 2;
inline constexpr int64_t kFusionKernel = 8;    // group channel-wise d_c
inline constexpr int64_t kDwsCwKernel = 16;    // channel-wise d_c in DWSCWConv
inline constexpr double kDropoutRate = 1e-4;   // after 1x1 convolutions

/// Width-multiplied channel count: nearest even integer, floor 2*g.
inline int64_t scaled_channels(int64_t base, double alpha, int64_t groups = kGroups) {
    int64_t c = 2 * static_cast<int64_t>(std::llround(alpha * static_cast<double>(base) / 2.0));
    return std::max<int64_t>(c, 2 * groups);
}

namespace detail_model {

inline void validate_spec(const ModelSpec& spec) {
    if (!(spec.alpha > 0.0 && spec.alpha <= 1.0))
        throw std::invalid_argument("ModelSpec: width multiplier must be in (0, 1], got " +
                                    std::to_string(spec.alpha));
    if (spec.input_size < 32)
        throw std::invalid_argument("ModelSpec: input size must be >= 32, got " +
                                    std::to_string(spec.input_size));
    if (spec.layers.empty() || spec.layers.front().kind != LayerKind::Conv)
        throw std::invalid_argument("ModelSpec: first layer must be a regular convolution");
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const bool classifier = spec.layers[i].kind == LayerKind::AvgPoolFc ||
                                spec.layers[i].kind == LayerKind::Ccl;
        if (classifier != (i + 1 == spec.layers.size()))
            throw std::invalid_argument(
                "ModelSpec: exactly one classifier layer allowed, and it must be last");
    }
}

}  // namespace detail_model

inline ModelSpec channelnet_spec(const std::string& version, double alpha, int64_t n_classes,
                                 int64_t input_size) {
    if (version != "v1" && version != "v2" && version != "v3" && version != "v1-minus")
        throw std::invalid_argument("channelnet_spec: unknown version '" + version + "'");
    ModelSpec spec;
    spec.version = version;
    spec.name = "channelnet-" + version;
    spec.alpha = alpha;
    spec.n_classes = n_classes;
    spec.input_size = input_size;
    const bool desk = input_size < 64;  // keep early resolution on small inputs
    const int64_t s2a = desk ? 1 : 2, s2b = desk ? 1 : 2, s2c = desk ? 1 : 2;
    auto ch = [alpha](int64_t c) { return scaled_channels(c, alpha); };
    spec.layers = {
        {LayerKind::Conv, ch(32), s2a},
        {LayerKind::DwsConv, ch(64), 1},
        {LayerKind::DwsConv, ch(128), s2b},
        {LayerKind::DwsConv, ch(128), 1},
        {LayerKind::DwsConv, ch(256), s2c},
        {LayerKind::DwsConv, ch(256), 1},
        {LayerKind::DwsConv, ch(512), 2},
    };
    const LayerKind fused = (version == "v1-minus") ? LayerKind::Gm : LayerKind::Gcwm;
    spec.layers.push_back({fused, ch(512), 1, kGroups, kFusionKernel});
    spec.layers.push_back({fused, ch(512), 1, kGroups, kFusionKernel});
    spec.layers.push_back({LayerKind::Gm, ch(512), 1, kGroups, 0});
    spec.layers.push_back({LayerKind::DwsConv, ch(1024), 2});
    if (version == "v2" || version == "v3")
        spec.layers.push_back({LayerKind::DwsCwConv, ch(1024), 1, 1, kDwsCwKernel});
    else
        spec.layers.push_back({LayerKind::DwsConv, ch(1024), 1});
    if (version == "v3")
        spec.layers.push_back({LayerKind::Ccl, n_classes, 1});
    else
        spec.layers.push_back({LayerKind::AvgPoolFc, n_classes, 1});
    detail_model::validate_spec(spec);
    return spec;
}

inline ModelSpec mobilenet_spec(double alpha, int64_t n_classes, int64_t input_size) {
    ModelSpec spec;
    spec.version = "mobilenet";
    spec.name = "mobilenet";
    spec.alpha = alpha;
    spec.n_classes = n_classes;
    spec.input_size = input_size;
    const bool desk = input_size < 64;
    auto ch = [alpha](int64_t c) { return scaled_channels(c, alpha); };
    spec.layers = {
        {LayerKind::Conv, ch(32), desk ? 1 : 2},
        {LayerKind::DwsConv, ch(64), 1},
        {LayerKind::DwsConv, ch(128), desk ? 1 : 2},
        {LayerKind::DwsConv, ch(128), 1},
        {LayerKind::DwsConv, ch(256), desk ? 1 : 2},
        {LayerKind::DwsConv, ch(256), 1},
        {LayerKind::DwsConv, ch(512), 2},
    };
    for (int i = 0; i < 5; ++i) spec.layers.push_back({LayerKind::DwsConv, ch(512), 1});
    spec.layers.push_back({LayerKind::DwsConv, ch(1024), 2});
    spec.layers.push_back({LayerKind::DwsConv, ch(1024), 1});
    spec.layers.push_back({LayerKind::AvgPoolFc, n_classes, 1});
    detail_model::validate_spec(spec);
    return spec;
}

/// Builds a spec by model name: v1, v2, v3, v1-minus, mobilenet.
inline ModelSpec make_model_spec(const std::string& model, double alpha, int64_t n_classes,
                                 int64_t input_size) {
    if (model == "mobilenet") return mobilenet_spec(alpha, n_classes, input_size);
    return channelnet_spec(model, alpha, n_classes, input_size);
}

// ---------------------------------------------------------------------------
// Composite module factories
// ---------------------------------------------------------------------------

/// Group module: two depth-wise + 1x1-group pairs with a skip connection
/// joining before the final relu. Batch norm + relu follow each group
/// convolution; nothing sits between a depth-wise conv and its 1x1.
inline LayerPtr build_gm(const std::string& prefix, int64_t channels, int64_t groups,
                         double dropout_p, uint64_t seed) {
    auto body = std::make_unique<Sequential>(prefix + ".body");
    body->push(std::make_unique<DepthwiseLayer>(prefix + ".l1.dw", channels, kSpatialKernel, 1,
                                                seed));
    body->push(std::make_unique<GroupPointwiseLayer>(prefix + ".l1.gpw", channels, channels,
                                                     groups, seed));
    body->push(std::make_unique<BatchNormLayer>(prefix + ".l1.bn", channels));
    body->push(std::make_unique<ReluLayer>(prefix + ".l1.relu"));
    body->push(std::make_unique<DropoutLayer>(prefix + ".l1.drop", dropout_p));
    body->push(std::make_unique<DepthwiseLayer>(prefix + ".l2.dw", channels, kSpatialKernel, 1,
                                                seed));
    body->push(std::make_unique<GroupPointwiseLayer>(prefix + ".l2.gpw", channels, channels,
                                                     groups, seed));
    body->push(std::make_unique<BatchNormLayer>(prefix + ".l2.bn", channels));
    auto block = std::make_unique<Sequential>(prefix);
    block->push(std::make_unique<ResidualReluBlock>(prefix + ".res", std::move(body)));
    block->push(std::make_unique<DropoutLayer>(prefix + ".l2.drop", dropout_p));
    return block;
}

/// Group channel-wise module: a GM whose second pair gains a group
/// channel-wise fusion between its batch norm and the skip join, letting
/// every output group read all input groups for d_c >= g.
inline LayerPtr build_gcwm(const std::string& prefix, int64_t channels, int64_t groups, int64_t d_c,
                           double dropout_p, uint64_t seed) {
    auto body = std::make_unique<Sequential>(prefix + ".body");
    body->push(std::make_unique<DepthwiseLayer>(prefix + ".l1.dw", channels, kSpatialKernel, 1,
                                                seed));
    body->push(std::make_unique<GroupPointwiseLayer>(prefix + ".l1.gpw", channels, channels,
                                                     groups, seed));
    body->push(std::make_unique<BatchNormLayer>(prefix + ".l1.bn", channels));
    body->push(std::make_unique<ReluLayer>(prefix + ".l1.relu"));
    body->push(std::make_unique<DropoutLayer>(prefix + ".l1.drop", dropout_p));
    body->push(std::make_unique<DepthwiseLayer>(prefix + ".l2.dw", channels, kSpatialKernel, 1,
                                                seed));
    body->push(std::make_unique<GroupPointwiseLayer>(prefix + ".l2.gpw", channels, channels,
                                                     groups, seed));
    body->push(std::make_unique<BatchNormLayer>(prefix + ".l2.bn", channels));
    body->push(std::make_unique<GroupChannelwiseLayer>(prefix + ".fuse", channels, groups, d_c,
                                                       seed));
    auto block = std::make_unique<Sequential>(prefix);
    block->push(std::make_unique<ResidualReluBlock>(prefix + ".res", std::move(body)));
    block->push(std::make_unique<DropoutLayer>(prefix + ".l2.drop", dropout_p));
    return block;
}

// ---------------------------------------------------------------------------
// Model: an instantiated spec.
// ---------------------------------------------------------------------------

class Model {
public:
    Model(ModelSpec spec, uint64_t seed, double dropout_p = kDropoutRate)
        : spec_(std::move(spec)), net_("net") {
        detail_model::validate_spec(spec_);
        int64_t in_ch = 3;
        int64_t d_f = spec_.input_size;
        for (size_t i = 0; i < spec_.layers.size(); ++i) {
            const LayerSpec& row = spec_.layers[i];
            const std::string idx = std::to_string(i + 1);
            switch (row.kind) {
                case LayerKind::Conv: {
                    auto s = std::make_unique<Sequential>("conv" + idx);
                    s->push(std::make_unique<Conv2dLayer>("conv" + idx, in_ch, row.out_channels,
                                                          kSpatialKernel, row.stride, seed));
                    s->push(std::make_unique<BatchNormLayer>("conv" + idx + ".bn",
                                                             row.out_channels));
                    s->push(std::make_unique<ReluLayer>("conv" + idx + ".relu"));
                    net_.push(std::move(s));
                    break;
                }
                case LayerKind::DwsConv: {
                    const std::string p = "dws" + idx;
                    auto s = std::make_unique<Sequential>(p);
                    s->push(std::make_unique<DepthwiseLayer>(p + ".dw", in_ch, kSpatialKernel,
                                                             row.stride, seed));
                    s->push(std::make_unique<PointwiseLayer>(p + ".pw", in_ch, row.out_channels,
                                                             seed));
                    s->push(std::make_unique<BatchNormLayer>(p + ".bn", row.out_channels));
                    s->push(std::make_unique<ReluLayer>(p + ".relu"));
                    s->push(std::make_unique<DropoutLayer>(p + ".drop", dropout_p));
                    net_.push(std::move(s));
                    break;
                }
                case LayerKind::Gm:
                    net_.push(build_gm("gm" + idx, row.out_channels, row.groups, dropout_p, seed));
                    break;
                case LayerKind::Gcwm:
                    net_.push(build_gcwm("gcwm" + idx, row.out_channels, row.groups, row.d_c,
                                         dropout_p, seed));
                    break;
                case LayerKind::DwsCwConv: {
                    const std::string p = "dwscw" + idx;
                    auto s = std::make_unique<Sequential>(p);
                    s->push(std::make_unique<DwsChannelwiseLayer>(p, in_ch, row.out_channels,
                                                                  kSpatialKernel, row.d_c,
                                                                  row.stride, seed));
                    s->push(std::make_unique<BatchNormLayer>(p + ".bn", row.out_channels));
                    s->push(std::make_unique<ReluLayer>(p + ".relu"));
                    net_.push(std::move(s));
                    break;
                }
                case LayerKind::AvgPoolFc: {
                    auto s = std::make_unique<Sequential>("fc");
                    s->push(std::make_unique<GlobalAvgPoolLayer>("fc.pool"));
                    s->push(std::make_unique<FlattenLayer>("fc.flatten"));
                    s->push(std::make_unique<FullyConnectedLayer>("fc", in_ch, spec_.n_classes,
                                                                  seed));
                    net_.push(std::move(s));
                    break;
                }
                case LayerKind::Ccl:
                    net_.push(std::make_unique<CclLayer>("ccl", in_ch, spec_.n_classes, d_f, seed));
                    break;
            }
            if (row.kind != LayerKind::AvgPoolFc && row.kind != LayerKind::Ccl) {
                in_ch = row.out_channels;
                d_f = (d_f + row.stride - 1) / row.stride;
            }
        }
    }

    const ModelSpec& spec() const { return spec_; }

    Tensor forward(const Tensor& x, Mode mode, OpCache& cache, uint64_t step_seed = 0) const {
        if (x.rank() != 4 || x.c() != 3 || x.h() != spec_.input_size || x.w() != spec_.input_size)
            throw std::invalid_argument("Model::forward: expected (N, 3, " +
                                        std::to_string(spec_.input_size) + ", " +
                                        std::to_string(spec_.input_size) + ") input, got " +
                                        shape_str(x.shape));
        return net_.forward(x, mode, cache, step_seed);
    }

    Tensor backward(const Tensor& glogits, const OpCache& cache) {
        return net_.backward(glogits, cache);
    }

    void commit_batch_stats(const OpCache& cache) { net_.commit_batch_stats(cache); }

    std::vector<ParamBlock*> params() {
        std::vector<ParamBlock*> out;
        net_.collect_params(out);
        return out;
    }

    std::vector<std::pair<std::string, Tensor*>> state_blocks() {
        std::vector<std::pair<std::string, Tensor*>> out;
        net_.collect_state(out);
        return out;
    }

    void zero_grads() {
        for (ParamBlock* p : params()) p->zero_grad();
    }

    int64_t param_count() {
        int64_t n = 0;
        for (ParamBlock* p : params()) n += p->numel();
        return n;
    }

    /// Output shape of every architecture row for a batch of one.
    std::vector<Shape> row_output_shapes() {
        std::vector<Shape> out;
        Shape s{1, 3, spec_.input_size, spec_.input_size};
        for (size_t i = 0; i < net_.size(); ++i) {
            s = net_.child(i).out_shape(s);
            out.push_back(s);
        }
        return out;
    }

    Sequential& net() { return net_; }

private:
    ModelSpec spec_;
    Sequential net_;
};

}  // namespace channelkit
