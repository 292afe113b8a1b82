// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file cost.hpp
 * @brief Exact learnable-parameter and FLOP accounting per layer and model.
 *
 * Conventions: one multiply-accumulate counts as one FLOP; strided layers
 * are charged at their output spatial size; batch-norm scale/bias pairs are
 * counted as parameters but contribute no FLOPs; pooling, relu, dropout and
 * residual additions are free except for the classifier's pooling term,
 * which is charged m * d_f^2 multiply-accumulates. Model totals must equal
 * the instantiated scalar count of the built model exactly.
 */

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "channelkit/model.hpp"

namespace channelkit {

struct OpCost {
    int64_t params = 0;
    int64_t flops = 0;
};

/// Regular convolution: dk^2 * m * n weights, charged at the output size.
inline OpCost cost_conv2d(int64_t m, int64_t n, int64_t dk, int64_t d_f_out) {
    OpCost c;
    c.params = dk * dk * m * n;
    c.flops = c.params * d_f_out * d_f_out;
    return c;
}

/// Depth-wise separable convolution: dk^2 * m + m * n.
inline OpCost cost_dws_conv(int64_t m, int64_t n, int64_t dk, int64_t d_f_out) {
    OpCost c;
    c.params = dk * dk * m + m * n;
    c.flops = (dk * dk * m + m * n) * d_f_out * d_f_out;
    return c;
}

/// 1x1 group convolution followed by its group channel-wise fusion:
/// (m/g)(n/g)g + d_c*g parameters. Pass d_c = 0 when no fusion is attached.
inline OpCost cost_group_cw(int64_t m, int64_t n, int64_t g, int64_t d_c, int64_t d_f) {
    OpCost c;
    c.params = (m / g) * (n / g) * g + d_c * g;
    c.flops = (m / g) * (n / g) * g * d_f * d_f + d_c * (n / g) * d_f * d_f * g;
    return c;
}

/// Depth-wise separable channel-wise convolution: dk^2 * m + d_c per kernel,
/// with n/m independent kernels when the layer widens.
inline OpCost cost_dws_cw(int64_t m, int64_t n, int64_t dk, int64_t d_c, int64_t d_f_out) {
    OpCost c;
    c.params = dk * dk * m + d_c * (n / m);
    c.flops = dk * dk * m * d_f_out * d_f_out + d_c * n * d_f_out * d_f_out;
    return c;
}

enum class ClassifierKind { Fc, Ccl };

/// Classifier head. Fc: global pool + dense map (m*n weights). Ccl: one 3-D
/// convolution with a d_f x d_f x (m-n+1) kernel.
inline OpCost cost_classifier(ClassifierKind kind, int64_t m, int64_t n_classes, int64_t d_f) {
    OpCost c;
    if (kind == ClassifierKind::Fc) {
        c.params = m * n_classes;
        c.flops = m * d_f * d_f + m * n_classes;
    } else {
        const int64_t d_c = m - n_classes + 1;
        c.params = d_f * d_f * d_c;
        c.flops = d_f * d_f * d_c * n_classes;
    }
    return c;
}

/// Group module: two depth-wise + 1x1-group pairs (no fusion, no batch norm).
inline OpCost cost_gm(int64_t c_ch, int64_t g, int64_t d_f) {
    OpCost dw, gpw = cost_group_cw(c_ch, c_ch, g, 0, d_f);
    dw.params = kSpatialKernel * kSpatialKernel * c_ch;
    dw.flops = dw.params * d_f * d_f;
    return {2 * (dw.params + gpw.params), 2 * (dw.flops + gpw.flops)};
}

/// Group channel-wise module: a GM plus one fusion layer of g kernels.
inline OpCost cost_gcwm(int64_t c_ch, int64_t g, int64_t d_c, int64_t d_f) {
    OpCost c = cost_gm(c_ch, g, d_f);
    c.params += d_c * g;
    c.flops += d_c * (c_ch / g) * d_f * d_f * g;
    return c;
}

struct LayerCost {
    std::string layer;
    int64_t params = 0;
    int64_t flops = 0;
    Shape out;  // (N, C, H, W) at batch 1
};

struct CostReport {
    std::vector<LayerCost> per_layer;
    int64_t total_params = 0;
    int64_t total_flops = 0;
};

/// Walks a spec row by row, threading spatial sizes through strides.
/// Batch-norm gamma/beta pairs are charged to the row that owns them.
inline CostReport cost_model_total(const ModelSpec& spec) {
    detail_model::validate_spec(spec);
    CostReport rep;
    int64_t in_ch = 3;
    int64_t d_f = spec.input_size;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& row = spec.layers[i];
        const int64_t d_out = (d_f + row.stride - 1) / row.stride;
        LayerCost lc;
        OpCost c;
        switch (row.kind) {
            case LayerKind::Conv:
                c = cost_conv2d(in_ch, row.out_channels, kSpatialKernel, d_out);
                c.params += 2 * row.out_channels;  // bn
                lc.layer = "conv" + std::to_string(i + 1);
                break;
            case LayerKind::DwsConv:
                c = cost_dws_conv(in_ch, row.out_channels, kSpatialKernel, d_out);
                c.params += 2 * row.out_channels;
                lc.layer = "dws" + std::to_string(i + 1);
                break;
            case LayerKind::Gm:
                c = cost_gm(row.out_channels, row.groups, d_out);
                c.params += 4 * row.out_channels;  // two bn sites
                lc.layer = "gm" + std::to_string(i + 1);
                break;
            case LayerKind::Gcwm:
                c = cost_gcwm(row.out_channels, row.groups, row.d_c, d_out);
                c.params += 4 * row.out_channels;
                lc.layer = "gcwm" + std::to_string(i + 1);
                break;
            case LayerKind::DwsCwConv:
                c = cost_dws_cw(in_ch, row.out_channels, kSpatialKernel, row.d_c, d_out);
                c.params += 2 * row.out_channels;
                lc.layer = "dwscw" + std::to_string(i + 1);
                break;
            case LayerKind::AvgPoolFc:
                c = cost_classifier(ClassifierKind::Fc, in_ch, spec.n_classes, d_f);
                lc.layer = "fc";
                break;
            case LayerKind::Ccl:
                c = cost_classifier(ClassifierKind::Ccl, in_ch, spec.n_classes, d_f);
                lc.layer = "ccl";
                break;
        }
        lc.params = c.params;
        lc.flops = c.flops;
        if (row.kind == LayerKind::AvgPoolFc || row.kind == LayerKind::Ccl) {
            lc.out = {1, spec.n_classes};
        } else {
            lc.out = {1, row.out_channels, d_out, d_out};
            in_ch = row.out_channels;
            d_f = d_out;
        }
        rep.total_params += lc.params;
        rep.total_flops += lc.flops;
        rep.per_layer.push_back(std::move(lc));
    }
    return rep;
}

/// CSV: layer,params,flops,out_n,out_c,out_h,out_w with a final TOTAL row.
inline void write_cost_csv(std::ostream& os, const CostReport& rep) {
    os << "layer,params,flops,out_n,out_c,out_h,out_w\n";
    for (const LayerCost& lc : rep.per_layer) {
        const int64_t oh = lc.out.size() > 2 ? lc.out[2] : 1;
        const int64_t ow = lc.out.size() > 3 ? lc.out[3] : 1;
        os << lc.layer << "," << lc.params << "," << lc.flops << "," << lc.out[0] << ","
           << lc.out[1] << "," << oh << "," << ow << "\n";
    }
    os << "TOTAL," << rep.total_params << "," << rep.total_flops << ",,,,\n";
}

}  // namespace channelkit
