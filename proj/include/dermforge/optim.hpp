#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "dermforge/model.hpp"
#include "dermforge/tensor.hpp"

namespace dermforge {

// One Adam update on a single tensor. t is the already-incremented step
// counter (>= 1); bias correction uses it directly.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, int64_t t, double lr,
                 double beta1, double beta2, double eps) {
    if (!param.same_shape(grad))
        throw ShapeError("adam_update: gradient shape " + shape_string(grad.shape()) +
                         " != parameter shape " + shape_string(param.shape()));
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < param.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
        const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
}

template <typename T>
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    int64_t t = 0;
    ParamStore<T> m, v;

    static AdamState init(const ParamStore<T>& params, double lr) {
        AdamState st;
        st.learning_rate = lr;
        st.m.layers.resize(params.layers.size());
        st.v.layers.resize(params.layers.size());
        for (size_t i = 0; i < params.layers.size(); ++i) {
            auto zero_like = [](const Tensor<T>& t) {
                return t.size() ? Tensor<T>(t.shape()) : Tensor<T>();
            };
            st.m.layers[i].w = zero_like(params.layers[i].w);
            st.m.layers[i].b = zero_like(params.layers[i].b);
            st.m.layers[i].gamma = zero_like(params.layers[i].gamma);
            st.m.layers[i].beta = zero_like(params.layers[i].beta);
            st.v.layers[i].w = zero_like(params.layers[i].w);
            st.v.layers[i].b = zero_like(params.layers[i].b);
            st.v.layers[i].gamma = zero_like(params.layers[i].gamma);
            st.v.layers[i].beta = zero_like(params.layers[i].beta);
        }
        return st;
    }
};

// Updates every trainable tensor in place.
template <typename T>
void adam_step(const ModelSpec& model, ParamStore<T>& params, const ParamStore<T>& grads,
               AdamState<T>& st) {
    ++st.t;
    for (size_t i = 0; i < params.layers.size(); ++i) {
        const auto& spec = model.layers[i];
        auto& p = params.layers[i];
        const auto& g = grads.layers[i];
        auto& m = st.m.layers[i];
        auto& v = st.v.layers[i];
        switch (spec.kind) {
            case LayerSpec::Kind::conv2d:
            case LayerSpec::Kind::dense:
                adam_update(p.w, g.w, m.w, v.w, st.t, st.learning_rate, st.beta1, st.beta2, st.epsilon);
                adam_update(p.b, g.b, m.b, v.b, st.t, st.learning_rate, st.beta1, st.beta2, st.epsilon);
                break;
            case LayerSpec::Kind::batchnorm:
                adam_update(p.gamma, g.gamma, m.gamma, v.gamma, st.t, st.learning_rate, st.beta1, st.beta2,
                            st.epsilon);
                adam_update(p.beta, g.beta, m.beta, v.beta, st.t, st.learning_rate, st.beta1, st.beta2,
                            st.epsilon);
                break;
            default:
                break;
        }
    }
}

// Reduce-on-plateau schedule: an epoch improves when it beats the best seen
// validation loss by more than min_delta; `patience` non-improving epochs in
// a row divide the rate by decay_factor, never below min_lr.
struct PlateauScheduler {
    double current_lr = 1e-3;
    double decay_factor = 10.0;
    int patience = 3;
    double min_delta = 1e-4;
    double min_lr = 1e-5;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_improvement = 0;
    bool bottomed_out = false;  // set when a decay was requested at min_lr

    double update(double val_loss) {
        if (best_val_loss - val_loss > min_delta) {
            best_val_loss = val_loss;
            epochs_since_improvement = 0;
            return current_lr;
        }
        ++epochs_since_improvement;
        if (epochs_since_improvement >= patience) {
            epochs_since_improvement = 0;
            if (current_lr / decay_factor >= min_lr) {
                current_lr /= decay_factor;
            } else if (current_lr > min_lr) {
                current_lr = min_lr;
            } else {
                bottomed_out = true;
            }
        }
        return current_lr;
    }
};

}  // namespace dermforge
