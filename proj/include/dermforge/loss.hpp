#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "dermforge/errors.hpp"
#include "dermforge/tensor.hpp"

namespace dermforge {

constexpr int kNumClasses = 7;

// Floor applied inside the log so a confidently wrong prediction yields a
// large finite loss instead of -inf.
constexpr double kProbFloor = 1e-7;

struct ClassWeights {
    std::array<double, kNumClasses> w{};

    static ClassWeights uniform() {
        ClassWeights cw;
        cw.w.fill(1.0);
        return cw;
    }

    // Melanocytic-nevus down-weighting used by the trained configuration.
    static ClassWeights paper(int nv_index) {
        ClassWeights cw = uniform();
        cw.w[nv_index] = 0.5;
        return cw;
    }
};

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad_logits;  // fused softmax/cross-entropy gradient
    double weight_sum = 0.0;
};

// Class-weighted categorical cross entropy over softmax outputs:
//   loss = -(1/sum_i w_i) * sum_i w_i * log(max(p_i[y_i], floor))
// The returned gradient is taken with respect to the logits feeding the
// softmax, i.e. (w_i / sum w) * (p - y) per row.
template <typename T>
LossResult<T> weighted_cce(const Tensor<T>& probs, const Tensor<T>& onehot, const ClassWeights& weights) {
    if (probs.rank() != 2 || probs.dim(1) != kNumClasses)
        throw ShapeError("weighted_cce: probs must be (N," + std::to_string(kNumClasses) + ")");
    if (!probs.same_shape(onehot)) throw ShapeError("weighted_cce: probs/targets shape mismatch");
    const int n = probs.dim(0);

    LossResult<T> res;
    res.grad_logits = Tensor<T>(probs.shape());

    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        int hot = -1;
        for (int j = 0; j < kNumClasses; ++j) {
            const T v = onehot.at2(i, j);
            if (v == T(1)) {
                if (hot >= 0) hot = -2;
                else if (hot == -1) hot = j;
            } else if (v != T(0)) {
                hot = -2;
            }
            if (hot == -2) break;
        }
        if (hot < 0) throw ArgumentError("weighted_cce: row " + std::to_string(i) + " is not one-hot");
        labels[i] = hot;
    }

    double weight_sum = 0.0;
    for (int i = 0; i < n; ++i) weight_sum += weights.w[labels[i]];
    if (weight_sum <= 0.0) throw ArgumentError("weighted_cce: weights sum to zero");

    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double wi = weights.w[labels[i]];
        const double p = std::max(static_cast<double>(probs.at2(i, labels[i])), kProbFloor);
        acc += wi * -std::log(p);
        const T row_scale = static_cast<T>(wi / weight_sum);
        for (int j = 0; j < kNumClasses; ++j) {
            const T y = j == labels[i] ? T(1) : T(0);
            res.grad_logits.at2(i, j) = row_scale * (probs.at2(i, j) - y);
        }
    }
    res.loss = acc / weight_sum;
    res.weight_sum = weight_sum;
    return res;
}

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels) {
    Tensor<T> t({static_cast<int>(labels.size()), kNumClasses});
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= kNumClasses)
            throw ArgumentError("one_hot: label " + std::to_string(labels[i]) + " out of range");
        t.at2(static_cast<int>(i), labels[i]) = T(1);
    }
    return t;
}

}  // namespace dermforge
