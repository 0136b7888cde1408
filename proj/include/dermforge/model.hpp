#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dermforge/nn_ops.hpp"
#include "dermforge/rng.hpp"
#include "dermforge/tensor.hpp"

namespace dermforge {

// One layer of a sequential model. A flat tagged struct keeps shape
// inference, parameter counting and serialization table-driven.
struct LayerSpec {
    enum class Kind { conv2d, maxpool, batchnorm, dropout, flatten, dense };

    Kind kind = Kind::flatten;
    std::string name;

    // conv2d
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    // maxpool
    int pool = 0;
    PoolPadding pool_pad = PoolPadding::valid;
    // batchnorm
    int channels = 0;
    double momentum = 0.99;
    double epsilon = 1e-3;
    // dropout
    double rate = 0.0;
    // dense
    int units = 0;
    // conv2d / dense
    Activation act = Activation::none;

    static LayerSpec conv2d(std::string name, int out_channels, int kernel, int stride, int pad,
                            Activation act) {
        if (out_channels < 1 || kernel < 1 || stride < 1 || pad < 0)
            throw ArgumentError("conv2d spec: filters/kernel/stride must be >= 1, pad >= 0");
        LayerSpec l;
        l.kind = Kind::conv2d;
        l.name = std::move(name);
        l.out_channels = out_channels;
        l.kernel = kernel;
        l.stride = stride;
        l.pad = pad;
        l.act = act;
        return l;
    }

    static LayerSpec maxpool(std::string name, int pool, int stride, PoolPadding pad = PoolPadding::valid) {
        if (pool < 1 || stride < 1) throw ArgumentError("maxpool spec: pool/stride must be >= 1");
        LayerSpec l;
        l.kind = Kind::maxpool;
        l.name = std::move(name);
        l.pool = pool;
        l.stride = stride;
        l.pool_pad = pad;
        return l;
    }

    static LayerSpec batchnorm(std::string name, int channels, double momentum = 0.99,
                               double epsilon = 1e-3) {
        if (channels < 1) throw ArgumentError("batchnorm spec: channels must be >= 1");
        LayerSpec l;
        l.kind = Kind::batchnorm;
        l.name = std::move(name);
        l.channels = channels;
        l.momentum = momentum;
        l.epsilon = epsilon;
        return l;
    }

    static LayerSpec dropout(std::string name, double rate) {
        if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout spec: rate must be in [0,1)");
        LayerSpec l;
        l.kind = Kind::dropout;
        l.name = std::move(name);
        l.rate = rate;
        return l;
    }

    static LayerSpec flatten(std::string name) {
        LayerSpec l;
        l.kind = Kind::flatten;
        l.name = std::move(name);
        return l;
    }

    static LayerSpec dense(std::string name, int units, Activation act) {
        if (units < 1) throw ArgumentError("dense spec: units must be >= 1");
        LayerSpec l;
        l.kind = Kind::dense;
        l.name = std::move(name);
        l.units = units;
        l.act = act;
        return l;
    }
};

struct ModelSpec {
    std::array<int, 3> input_shape{};  // (channels, height, width)
    std::vector<LayerSpec> layers;
};

// The classifier this project trains: 28x28 RGB in, 7-way softmax out.
ModelSpec build_paper_model();

// Per-layer output shapes for one sample: {c,h,w} through the conv stack,
// {features} after flatten. Throws ShapeError if any layer underflows.
std::vector<std::vector<int>> infer_shapes(const ModelSpec& model);

// Learnable + stored parameter count of one layer given its input shape.
int64_t layer_param_count(const LayerSpec& layer, const std::vector<int>& in_shape);
int64_t total_param_count(const ModelSpec& model);

// Canonical one-line-per-layer description; checkpoints store and compare it.
std::string describe(const ModelSpec& model);

template <typename T>
struct LayerParams {
    Tensor<T> w, b;                                   // conv2d, dense
    Tensor<T> gamma, beta, moving_mean, moving_var;   // batchnorm
};

template <typename T>
struct ParamStore {
    std::vector<LayerParams<T>> layers;

    // Trainable tensors in a fixed order; f(name, tensor).
    template <typename Store, typename F>
    static void for_each_trainable_impl(Store& s, const ModelSpec& model, F&& f) {
        for (size_t i = 0; i < model.layers.size(); ++i) {
            const auto& spec = model.layers[i];
            auto& p = s.layers[i];
            switch (spec.kind) {
                case LayerSpec::Kind::conv2d:
                case LayerSpec::Kind::dense:
                    f(spec.name + ".w", p.w);
                    f(spec.name + ".b", p.b);
                    break;
                case LayerSpec::Kind::batchnorm:
                    f(spec.name + ".gamma", p.gamma);
                    f(spec.name + ".beta", p.beta);
                    break;
                default:
                    break;
            }
        }
    }

    template <typename F>
    void for_each_trainable(const ModelSpec& model, F&& f) {
        for_each_trainable_impl(*this, model, std::forward<F>(f));
    }
    template <typename F>
    void for_each_trainable(const ModelSpec& model, F&& f) const {
        for_each_trainable_impl(*this, model, std::forward<F>(f));
    }

    // All stored tensors including batch-norm moving statistics.
    template <typename Store, typename F>
    static void for_each_tensor_impl(Store& s, const ModelSpec& model, F&& f) {
        for (size_t i = 0; i < model.layers.size(); ++i) {
            const auto& spec = model.layers[i];
            auto& p = s.layers[i];
            switch (spec.kind) {
                case LayerSpec::Kind::conv2d:
                case LayerSpec::Kind::dense:
                    f(spec.name + ".w", p.w);
                    f(spec.name + ".b", p.b);
                    break;
                case LayerSpec::Kind::batchnorm:
                    f(spec.name + ".gamma", p.gamma);
                    f(spec.name + ".beta", p.beta);
                    f(spec.name + ".moving_mean", p.moving_mean);
                    f(spec.name + ".moving_var", p.moving_var);
                    break;
                default:
                    break;
            }
        }
    }

    template <typename F>
    void for_each_tensor(const ModelSpec& model, F&& f) {
        for_each_tensor_impl(*this, model, std::forward<F>(f));
    }
    template <typename F>
    void for_each_tensor(const ModelSpec& model, F&& f) const {
        for_each_tensor_impl(*this, model, std::forward<F>(f));
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        out.layers.resize(layers.size());
        for (size_t i = 0; i < layers.size(); ++i) {
            const auto& src = layers[i];
            auto& dst = out.layers[i];
            auto conv = [](const Tensor<T>& t) {
                return t.empty() && t.rank() == 0 ? Tensor<U>() : t.template cast<U>();
            };
            dst.w = conv(src.w);
            dst.b = conv(src.b);
            dst.gamma = conv(src.gamma);
            dst.beta = conv(src.beta);
            dst.moving_mean = conv(src.moving_mean);
            dst.moving_var = conv(src.moving_var);
        }
        return out;
    }
};

// He-normal weights (std = sqrt(2/fan_in)), zero biases, identity batch-norm.
template <typename T>
ParamStore<T> init_params(const ModelSpec& model, Rng& rng) {
    auto shapes = infer_shapes(model);
    ParamStore<T> params;
    params.layers.resize(model.layers.size());
    std::vector<int> in_shape(model.input_shape.begin(), model.input_shape.end());
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const auto& spec = model.layers[i];
        auto& p = params.layers[i];
        if (spec.kind == LayerSpec::Kind::conv2d) {
            const int fan_in = in_shape[0] * spec.kernel * spec.kernel;
            const double std = std::sqrt(2.0 / fan_in);
            p.w = Tensor<T>({spec.out_channels, in_shape[0], spec.kernel, spec.kernel});
            for (size_t j = 0; j < p.w.size(); ++j) p.w[j] = static_cast<T>(rng.normal(0.0, std));
            p.b = Tensor<T>(std::vector<int>{spec.out_channels});
        } else if (spec.kind == LayerSpec::Kind::dense) {
            const int fan_in = in_shape[0];
            const double std = std::sqrt(2.0 / fan_in);
            p.w = Tensor<T>({fan_in, spec.units});
            for (size_t j = 0; j < p.w.size(); ++j) p.w[j] = static_cast<T>(rng.normal(0.0, std));
            p.b = Tensor<T>(std::vector<int>{spec.units});
        } else if (spec.kind == LayerSpec::Kind::batchnorm) {
            p.gamma = Tensor<T>::full({spec.channels}, T(1));
            p.beta = Tensor<T>(std::vector<int>{spec.channels});
            p.moving_mean = Tensor<T>(std::vector<int>{spec.channels});
            p.moving_var = Tensor<T>::full({spec.channels}, T(1));
        }
        in_shape = shapes[i];
    }
    return params;
}

template <typename T>
struct LayerTrace {
    Tensor<T> out;                    // post-activation output
    Tensor<T> x_col;                  // conv2d
    std::vector<int32_t> pool_argmax; // maxpool
    Tensor<T> dropout_mask;           // dropout
    BatchNormCache<T> bn;             // batchnorm
    Tensor<T> bn_new_moving_mean, bn_new_moving_var;
};

template <typename T>
struct ForwardTrace {
    bool training = false;
    Tensor<T> input;
    std::vector<LayerTrace<T>> layers;
};

// Runs the full layer chain. Training mode needs an rng for dropout masks and
// records everything the backward pass requires; inference uses moving
// batch-norm statistics and leaves dropout as the identity. The trace is
// optional in inference mode.
template <typename T>
Tensor<T> model_forward(const ModelSpec& model, const ParamStore<T>& params, const Tensor<T>& batch,
                        bool training, Rng* rng = nullptr, ForwardTrace<T>* trace = nullptr) {
    if (batch.rank() != 4 || batch.dim(1) != model.input_shape[0] || batch.dim(2) != model.input_shape[1] ||
        batch.dim(3) != model.input_shape[2])
        throw ShapeError("model_forward: batch " + shape_string(batch.shape()) + " does not match input " +
                         shape_string({model.input_shape[0], model.input_shape[1], model.input_shape[2]}));
    if (training && !rng) {
        for (const auto& l : model.layers)
            if (l.kind == LayerSpec::Kind::dropout && l.rate > 0.0)
                throw StateError("model_forward: training mode with dropout requires an rng");
    }
    if (trace) {
        trace->training = training;
        trace->input = batch;
        trace->layers.assign(model.layers.size(), LayerTrace<T>{});
    }

    Tensor<T> cur = batch;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const auto& spec = model.layers[i];
        const auto& p = params.layers[i];
        LayerTrace<T>* lt = trace ? &trace->layers[i] : nullptr;
        switch (spec.kind) {
            case LayerSpec::Kind::conv2d:
                cur = conv2d_forward(cur, p.w, p.b, spec.stride, spec.pad, spec.act,
                                     lt && training ? &lt->x_col : nullptr);
                break;
            case LayerSpec::Kind::maxpool:
                cur = maxpool_forward(cur, spec.pool, spec.stride, spec.pool_pad,
                                      lt && training ? &lt->pool_argmax : nullptr);
                break;
            case LayerSpec::Kind::batchnorm:
                cur = batchnorm_forward(cur, p.gamma, p.beta, p.moving_mean, p.moving_var, training,
                                        static_cast<T>(spec.momentum), static_cast<T>(spec.epsilon),
                                        lt && training ? &lt->bn : nullptr,
                                        lt && training ? &lt->bn_new_moving_mean : nullptr,
                                        lt && training ? &lt->bn_new_moving_var : nullptr);
                break;
            case LayerSpec::Kind::dropout:
                cur = dropout_forward(cur, spec.rate, rng, training,
                                      lt && training ? &lt->dropout_mask : nullptr);
                break;
            case LayerSpec::Kind::flatten: {
                int features = 1;
                for (size_t d = 1; d < cur.rank(); ++d) features *= cur.dim(d);
                cur = cur.reshape({cur.dim(0), features});
                break;
            }
            case LayerSpec::Kind::dense: {
                Tensor<T> z = dense_forward(cur, p.w, p.b,
                                            spec.act == Activation::softmax ? Activation::none : spec.act);
                cur = spec.act == Activation::softmax ? softmax(z) : std::move(z);
                break;
            }
        }
        if (lt) lt->out = cur;
    }
    return cur;
}

// Gradients of every trainable parameter. grad_out is the gradient with
// respect to the final dense layer's pre-activation logits when that layer's
// activation is softmax (the fused softmax/cross-entropy convention);
// otherwise it is the gradient at the model output.
template <typename T>
ParamStore<T> model_backward(const ModelSpec& model, const ParamStore<T>& params,
                             const ForwardTrace<T>& trace, const Tensor<T>& grad_out) {
    if (!trace.training) throw StateError("model_backward: trace was not recorded in training mode");
    if (trace.layers.size() != model.layers.size())
        throw StateError("model_backward: trace does not match model");

    ParamStore<T> grads;
    grads.layers.resize(model.layers.size());
    Tensor<T> dy = grad_out;

    for (int i = static_cast<int>(model.layers.size()) - 1; i >= 0; --i) {
        const auto& spec = model.layers[i];
        const auto& p = params.layers[i];
        const auto& lt = trace.layers[i];
        const Tensor<T>& layer_in = i == 0 ? trace.input : trace.layers[i - 1].out;
        const bool need_dx = i > 0;
        switch (spec.kind) {
            case LayerSpec::Kind::conv2d: {
                Tensor<T> dz = spec.act == Activation::relu ? relu_backward(dy, lt.out) : dy;
                auto g = conv2d_backward(dz, lt.x_col, layer_in.shape(), p.w, spec.stride, spec.pad, need_dx);
                grads.layers[i].w = std::move(g.dw);
                grads.layers[i].b = std::move(g.db);
                if (need_dx) dy = std::move(g.dx);
                break;
            }
            case LayerSpec::Kind::maxpool:
                dy = maxpool_backward(dy, lt.pool_argmax, layer_in.shape());
                break;
            case LayerSpec::Kind::batchnorm: {
                auto g = batchnorm_backward(dy, lt.bn, p.gamma);
                grads.layers[i].gamma = std::move(g.dgamma);
                grads.layers[i].beta = std::move(g.dbeta);
                dy = std::move(g.dx);
                break;
            }
            case LayerSpec::Kind::dropout:
                dy = dropout_backward(dy, lt.dropout_mask);
                break;
            case LayerSpec::Kind::flatten:
                dy = dy.reshape(layer_in.shape());
                break;
            case LayerSpec::Kind::dense: {
                Tensor<T> dz;
                if (spec.act == Activation::relu)
                    dz = relu_backward(dy, lt.out);
                else
                    dz = dy;  // softmax: dy is already the logits gradient
                auto g = dense_backward(dz, layer_in, p.w);
                grads.layers[i].w = std::move(g.dw);
                grads.layers[i].b = std::move(g.db);
                if (need_dx) dy = std::move(g.dx);
                break;
            }
        }
    }
    return grads;
}

// Applies the moving-average updates a training-mode forward proposed.
// Keeping this separate makes forward itself side-effect free.
template <typename T>
void commit_batchnorm_updates(const ModelSpec& model, ParamStore<T>& params, const ForwardTrace<T>& trace) {
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].kind != LayerSpec::Kind::batchnorm) continue;
        const auto& lt = trace.layers[i];
        if (lt.bn_new_moving_mean.empty()) continue;
        params.layers[i].moving_mean = lt.bn_new_moving_mean;
        params.layers[i].moving_var = lt.bn_new_moving_var;
    }
}

}  // namespace dermforge
