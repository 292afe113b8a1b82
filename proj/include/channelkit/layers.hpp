// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file layers.hpp
 * @brief Stateful layer wrappers over the pure operators.
 *
 * A Layer owns its ParamBlocks and knows how to run forward and backward.
 * Forward is const and writes everything backward will need into a
 * caller-supplied cache, so concurrent inference over distinct inputs can
 * share one set of parameters. Backward accumulates into ParamBlock::grad.
 * Batch-norm running statistics change only through commit_batch_stats().
 */

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "channelkit/aux_ops.hpp"
#include "channelkit/nn_ops.hpp"
#include "channelkit/param.hpp"

namespace channelkit {

enum class Mode { Train, Infer };

struct OpCache {
    Tensor x;          // saved layer input
    Tensor pre_relu;   // residual blocks: pre-activation after the add
    ops::BnBatchStats bn;
    std::vector<uint8_t> mask;  // dropout mask
    std::vector<OpCache> children;
};

class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, Mode mode, OpCache& cache, uint64_t step_seed) const = 0;
    virtual Tensor backward(const Tensor& gout, const OpCache& cache) = 0;
    virtual Shape out_shape(const Shape& in) const = 0;

    virtual void collect_params(std::vector<ParamBlock*>& out) {}
    /// Checkpointable tensors: params plus non-learnable state (BN stats).
    virtual void collect_state(std::vector<std::pair<std::string, Tensor*>>& out) {
        std::vector<ParamBlock*> ps;
        collect_params(ps);
        for (ParamBlock* p : ps) out.emplace_back(p->name, &p->value);
    }
    virtual void commit_batch_stats(const OpCache& cache) {}

    const std::string& name() const { return name_; }

private:
    std::string name_;
};

using LayerPtr = std::unique_ptr<Layer>;

// ---------------------------------------------------------------------------

class Conv2dLayer : public Layer {
public:
    Conv2dLayer(std::string name, int64_t in_ch, int64_t out_ch, int64_t dk, int64_t stride,
                uint64_t seed)
        : Layer(std::move(name)),
          stride_(stride),
          w_(init_param(this->name() + ".weight", {out_ch, in_ch, dk, dk}, dk * dk * in_ch, seed)) {}

    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::conv2d(x, w_.value, stride_);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        auto g = ops::conv2d_backward(cache.x, w_.value, stride_, gout);
        for (int64_t i = 0; i < w_.grad.numel(); ++i) w_.grad.data[i] += g.gw.data[i];
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override {
        const int64_t o = (in[2] + stride_ - 1) / stride_;
        return {in[0], w_.value.shape[0], o, o};
    }
    void collect_params(std::vector<ParamBlock*>& out) override { out.push_back(&w_); }

private:
    int64_t stride_;
    ParamBlock w_;
};

class DepthwiseLayer : public Layer {
public:
    DepthwiseLayer(std::string name, int64_t channels, int64_t dk, int64_t stride, uint64_t seed)
        : Layer(std::move(name)),
          stride_(stride),
          w_(init_param(this->name() + ".weight", {channels, dk, dk}, dk * dk, seed)) {}

    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::depthwise_conv2d(x, w_.value, stride_);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        auto g = ops::depthwise_conv2d_backward(cache.x, w_.value, stride_, gout);
        for (int64_t i = 0; i < w_.grad.numel(); ++i) w_.grad.data[i] += g.gw.data[i];
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override {
        const int64_t o = (in[2] + stride_ - 1) / stride_;
        return {in[0], in[1], o, o};
    }
    void collect_params(std::vector<ParamBlock*>& out) override { out.push_back(&w_); }

private:
    int64_t stride_;
    ParamBlock w_;
};

class PointwiseLayer : public Layer {
public:
    PointwiseLayer(std::string name, int64_t in_ch, int64_t out_ch, uint64_t seed)
        : Layer(std::move(name)),
          w_(init_param(this->name() + ".weight", {out_ch, in_ch}, in_ch, seed)) {}

    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::pointwise_conv(x, w_.value);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        auto g = ops::pointwise_conv_backward(cache.x, w_.value, gout);
        for (int64_t i = 0; i < w_.grad.numel(); ++i) w_.grad.data[i] += g.gw.data[i];
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override {
        return {in[0], w_.value.shape[0], in[2], in[3]};
    }
    void collect_params(std::vector<ParamBlock*>& out) override { out.push_back(&w_); }

private:
    ParamBlock w_;
};

class GroupPointwiseLayer : public Layer {
public:
    GroupPointwiseLayer(std::string name, int64_t in_ch, int64_t out_ch, int64_t groups,
                        uint64_t seed)
        : Layer(std::move(name)),
          groups_(groups),
          w_(init_param(this->name() + ".weight", {groups, out_ch / groups, in_ch / groups},
                        in_ch / groups, seed)) {
        if (in_ch % groups || out_ch % groups)
            throw std::invalid_argument(this->name() + ": channels (" + std::to_string(in_ch) +
                                        "->" + std::to_string(out_ch) + ") not divisible by g=" +
                                        std::to_string(groups));
    }

    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::group_pointwise_conv(x, w_.value, groups_);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        auto g = ops::group_pointwise_conv_backward(cache.x, w_.value, groups_, gout);
        for (int64_t i = 0; i < w_.grad.numel(); ++i) w_.grad.data[i] += g.gw.data[i];
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override {
        return {in[0], w_.value.shape[0] * w_.value.shape[1], in[2], in[3]};
    }
    void collect_params(std::vector<ParamBlock*>& out) override { out.push_back(&w_); }

private:
    int64_t groups_;
    ParamBlock w_;
};

/// The fusion layer: g channel-wise kernels, each applied with stride g.
class GroupChannelwiseLayer : public Layer {
public:
    GroupChannelwiseLayer(std::string name, int64_t channels, int64_t groups, int64_t d_c,
                          uint64_t seed)
        : Layer(std::move(name)),
          groups_(groups),
          w_(init_param(this->name() + ".weight", {groups, d_c}, d_c, seed)) {
        if (channels % groups)
            throw std::invalid_argument(this->name() + ": " + std::to_string(channels) +
                                        " channels not divisible by g=" + std::to_string(groups));
        if (d_c < groups)
            throw std::invalid_argument(this->name() + ": needs d_c >= g (got d_c=" +
                                        std::to_string(d_c) + ", g=" + std::to_string(groups) +
                                        ")");
    }

    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::group_channelwise_conv(x, w_.value, groups_);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        auto g = ops::group_channelwise_conv_backward(cache.x, w_.value, groups_, gout);
        for (int64_t i = 0; i < w_.grad.numel(); ++i) w_.grad.data[i] += g.gw.data[i];
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override { return in; }
    void collect_params(std::vector<ParamBlock*>& out) override { out.push_back(&w_); }

private:
    int64_t groups_;
    ParamBlock w_;
};

/// Depth-wise conv followed by q stride-1 channel-wise kernels (n = q*m).
class DwsChannelwiseLayer : public Layer {
public:
    DwsChannelwiseLayer(std::string name, int64_t in_ch, int64_t out_ch, int64_t dk, int64_t d_c,
                        int64_t stride, uint64_t seed)
        : Layer(std::move(name)), stride_(stride) {
        if (out_ch % in_ch)
            throw std::invalid_argument(this->name() + ": output channels " +
                                        std::to_string(out_ch) +
                                        " must be a positive multiple of input channels " +
                                        std::to_string(in_ch));
        const int64_t q = out_ch / in_ch;
        w_dw_ = init_param(this->name() + ".dw.weight", {in_ch, dk, dk}, dk * dk, seed);
        w_cw_ = init_param(this->name() + ".cw.weight", {q, d_c}, d_c, seed);
    }

    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::dws_channelwise_conv(x, w_dw_.value, w_cw_.value, stride_);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        auto g = ops::dws_channelwise_conv_backward(cache.x, w_dw_.value, w_cw_.value, stride_,
                                                    gout);
        for (int64_t i = 0; i < w_dw_.grad.numel(); ++i) w_dw_.grad.data[i] += g.gw_dw.data[i];
        for (int64_t i = 0; i < w_cw_.grad.numel(); ++i) w_cw_.grad.data[i] += g.gw_cw.data[i];
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override {
        const int64_t o = (in[2] + stride_ - 1) / stride_;
        return {in[0], in[1] * w_cw_.value.shape[0], o, o};
    }
    void collect_params(std::vector<ParamBlock*>& out) override {
        out.push_back(&w_dw_);
        out.push_back(&w_cw_);
    }

private:
    int64_t stride_;
    ParamBlock w_dw_, w_cw_;
};

class BatchNormLayer : public Layer {
public:
    static constexpr double kMomentum = 0.9;

    BatchNormLayer(std::string name, int64_t channels)
        : Layer(std::move(name)),
          gamma_(const_param(this->name() + ".gamma", {channels}, 1.0)),
          beta_(const_param(this->name() + ".beta", {channels}, 0.0)),
          run_mean_(Tensor::zeros({channels})),
          run_var_(Tensor::full({channels}, 1.0)) {}

    Tensor forward(const Tensor& x, Mode mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        if (mode == Mode::Train) return ops::batchnorm_train(x, gamma_.value, beta_.value, cache.bn);
        return ops::batchnorm_infer(x, gamma_.value, beta_.value, run_mean_.data, run_var_.data);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        ops::BnGrads g = cache.bn.mean.empty()
                             ? ops::batchnorm_infer_backward(cache.x, gamma_.value, run_mean_.data,
                                                             run_var_.data, gout)
                             : ops::batchnorm_train_backward(cache.x, gamma_.value, cache.bn, gout);
        for (int64_t i = 0; i < gamma_.grad.numel(); ++i) {
            gamma_.grad.data[i] += g.ggamma.data[i];
            beta_.grad.data[i] += g.gbeta.data[i];
        }
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override { return in; }
    void collect_params(std::vector<ParamBlock*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }
    void collect_state(std::vector<std::pair<std::string, Tensor*>>& out) override {
        out.emplace_back(gamma_.name, &gamma_.value);
        out.emplace_back(beta_.name, &beta_.value);
        out.emplace_back(name() + ".running_mean", &run_mean_);
        out.emplace_back(name() + ".running_var", &run_var_);
    }
    void commit_batch_stats(const OpCache& cache) override {
        if (cache.bn.mean.empty()) return;
        for (int64_t i = 0; i < run_mean_.numel(); ++i) {
            run_mean_.data[i] = kMomentum * run_mean_.data[i] + (1.0 - kMomentum) * cache.bn.mean[i];
            run_var_.data[i] = kMomentum * run_var_.data[i] + (1.0 - kMomentum) * cache.bn.var[i];
        }
    }

    const Tensor& running_mean() const { return run_mean_; }
    const Tensor& running_var() const { return run_var_; }

private:
    ParamBlock gamma_, beta_;
    Tensor run_mean_, run_var_;
};

class ReluLayer : public Layer {
public:
    explicit ReluLayer(std::string name) : Layer(std::move(name)) {}
    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::relu(x);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        return ops::relu_backward(cache.x, gout);
    }
    Shape out_shape(const Shape& in) const override { return in; }
};

class DropoutLayer : public Layer {
public:
    DropoutLayer(std::string name, double p) : Layer(std::move(name)), p_(p) {
        if (p < 0.0 || p >= 1.0)
            throw std::invalid_argument(this->name() + ": p must be in [0, 1)");
    }
    Tensor forward(const Tensor& x, Mode mode, OpCache& cache, uint64_t step_seed) const override {
        if (mode == Mode::Infer || p_ == 0.0) {
            cache.mask.clear();
            return x;
        }
        return ops::dropout(x, p_, derive_seed(step_seed, name()), cache.mask);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        if (cache.mask.empty()) return gout;
        return ops::dropout_backward(gout, p_, cache.mask);
    }
    Shape out_shape(const Shape& in) const override { return in; }

private:
    double p_;
};

class GlobalAvgPoolLayer : public Layer {
public:
    explicit GlobalAvgPoolLayer(std::string name) : Layer(std::move(name)) {}
    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::global_avg_pool(x);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        return ops::global_avg_pool_backward(cache.x.shape, gout);
    }
    Shape out_shape(const Shape& in) const override { return {in[0], in[1], 1, 1}; }
};

/// (N, C, 1, 1) -> (N, C)
class FlattenLayer : public Layer {
public:
    explicit FlattenLayer(std::string name) : Layer(std::move(name)) {}
    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return reshape(x, {x.n(), x.c()});
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        return reshape(gout, cache.x.shape);
    }
    Shape out_shape(const Shape& in) const override { return {in[0], in[1]}; }
};

class FullyConnectedLayer : public Layer {
public:
    FullyConnectedLayer(std::string name, int64_t in_features, int64_t out_features, uint64_t seed)
        : Layer(std::move(name)),
          w_(init_param(this->name() + ".weight", {out_features, in_features}, in_features, seed)) {}

    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::fully_connected(x, w_.value);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        auto g = ops::fully_connected_backward(cache.x, w_.value, gout);
        for (int64_t i = 0; i < w_.grad.numel(); ++i) w_.grad.data[i] += g.gw.data[i];
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override { return {in[0], w_.value.shape[0]}; }
    void collect_params(std::vector<ParamBlock*>& out) override { out.push_back(&w_); }

private:
    ParamBlock w_;
};

class CclLayer : public Layer {
public:
    CclLayer(std::string name, int64_t in_ch, int64_t n_classes, int64_t d_f, uint64_t seed)
        : Layer(std::move(name)) {
        if (in_ch < n_classes)
            throw std::invalid_argument(this->name() + ": needs at least as many channels (" +
                                        std::to_string(in_ch) + ") as classes (" +
                                        std::to_string(n_classes) + ")");
        const int64_t d_c = in_ch - n_classes + 1;
        w_ = init_param(this->name() + ".weight", {d_f, d_f, d_c}, d_f * d_f * d_c, seed);
    }

    Tensor forward(const Tensor& x, Mode, OpCache& cache, uint64_t) const override {
        cache.x = x;
        return ops::conv_classification(x, w_.value);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        auto g = ops::conv_classification_backward(cache.x, w_.value, gout);
        for (int64_t i = 0; i < w_.grad.numel(); ++i) w_.grad.data[i] += g.gw.data[i];
        return std::move(g.gx);
    }
    Shape out_shape(const Shape& in) const override {
        return {in[0], in[1] - w_.value.shape[2] + 1};
    }
    void collect_params(std::vector<ParamBlock*>& out) override { out.push_back(&w_); }

private:
    ParamBlock w_;
};

// ---------------------------------------------------------------------------
// Composites
// ---------------------------------------------------------------------------

class Sequential : public Layer {
public:
    explicit Sequential(std::string name) : Layer(std::move(name)) {}

    void push(LayerPtr l) { children_.push_back(std::move(l)); }
    size_t size() const { return children_.size(); }
    Layer& child(size_t i) { return *children_[i]; }

    Tensor forward(const Tensor& x, Mode mode, OpCache& cache, uint64_t step_seed) const override {
        cache.children.resize(children_.size());
        Tensor h = x;
        for (size_t i = 0; i < children_.size(); ++i)
            h = children_[i]->forward(h, mode, cache.children[i], step_seed);
        return h;
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        Tensor g = gout;
        for (size_t i = children_.size(); i-- > 0;)
            g = children_[i]->backward(g, cache.children[i]);
        return g;
    }
    Shape out_shape(const Shape& in) const override {
        Shape s = in;
        for (const auto& c : children_) s = c->out_shape(s);
        return s;
    }
    void collect_params(std::vector<ParamBlock*>& out) override {
        for (auto& c : children_) c->collect_params(out);
    }
    void collect_state(std::vector<std::pair<std::string, Tensor*>>& out) override {
        for (auto& c : children_) c->collect_state(out);
    }
    void commit_batch_stats(const OpCache& cache) override {
        for (size_t i = 0; i < children_.size(); ++i)
            children_[i]->commit_batch_stats(cache.children[i]);
    }

private:
    std::vector<LayerPtr> children_;
};

/// out = relu(body(x) + x); the skip connection joins before the final relu.
class ResidualReluBlock : public Layer {
public:
    ResidualReluBlock(std::string name, std::unique_ptr<Sequential> body)
        : Layer(std::move(name)), body_(std::move(body)) {}

    Tensor forward(const Tensor& x, Mode mode, OpCache& cache, uint64_t step_seed) const override {
        cache.children.resize(1);
        Tensor h = body_->forward(x, mode, cache.children[0], step_seed);
        cache.pre_relu = add(h, x);
        return ops::relu(cache.pre_relu);
    }
    Tensor backward(const Tensor& gout, const OpCache& cache) override {
        Tensor gpre = ops::relu_backward(cache.pre_relu, gout);
        Tensor gx = body_->backward(gpre, cache.children[0]);
        return add(gx, gpre);
    }
    Shape out_shape(const Shape& in) const override {
        Shape s = body_->out_shape(in);
        if (s != in)
            throw std::invalid_argument(name() + ": residual body must preserve shape (" +
                                        shape_str(in) + " -> " + shape_str(s) + ")");
        return s;
    }
    void collect_params(std::vector<ParamBlock*>& out) override { body_->collect_params(out); }
    void collect_state(std::vector<std::pair<std::string, Tensor*>>& out) override {
        body_->collect_state(out);
    }
    void commit_batch_stats(const OpCache& cache) override {
        body_->commit_batch_stats(cache.children[0]);
    }

    Sequential& body() { return *body_; }

private:
    std::unique_ptr<Sequential> body_;
};

}  // namespace channelkit
