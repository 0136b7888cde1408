#include "dermforge/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "dermforge/loss.hpp"
#include "dermforge/model.hpp"
#include "dermforge/nn_ops.hpp"
#include "dermforge/rng.hpp"

namespace dermforge {

namespace {

using DTensor = Tensor<double>;

double rel_err(double analytic, double numeric) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-10) return 0.0;
    return std::abs(analytic - numeric) / std::max(scale, 1e-6);
}

DTensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    DTensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Compares an analytic gradient tensor against central differences of a
// scalar-valued forward, coordinate by coordinate.
void check_tensor_grad(GradCheckCase& c, DTensor& target, const DTensor& analytic,
                       const std::function<double()>& forward, double step) {
    for (size_t i = 0; i < target.size(); ++i) {
        const double saved = target[i];
        target[i] = saved + step;
        const double lp = forward();
        target[i] = saved - step;
        const double lm = forward();
        target[i] = saved;
        const double numeric = (lp - lm) / (2.0 * step);
        c.max_rel_err = std::max(c.max_rel_err, rel_err(analytic[i], numeric));
        ++c.checked_values;
    }
}

// Same, but only at a deterministic sample of coordinates.
void check_tensor_grad_sampled(GradCheckCase& c, DTensor& target, const DTensor& analytic,
                               const std::function<double()>& forward, double step, int samples,
                               Rng& pick) {
    for (int s = 0; s < samples; ++s) {
        const size_t i = pick.bounded(static_cast<uint32_t>(target.size()));
        const double saved = target[i];
        target[i] = saved + step;
        const double lp = forward();
        target[i] = saved - step;
        const double lm = forward();
        target[i] = saved;
        const double numeric = (lp - lm) / (2.0 * step);
        c.max_rel_err = std::max(c.max_rel_err, rel_err(analytic[i], numeric));
        ++c.checked_values;
    }
}

// Projection vector making a scalar loss out of a layer output: L = sum r*y.
double projected(const DTensor& y, const DTensor& r) {
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
}

GradCheckCase check_conv2d(const char* name, std::vector<int> x_shape, int filters, int kernel, int stride,
                           int pad, Activation act, double step) {
    GradCheckCase c{name};
    Rng rng(2024);
    DTensor x = random_tensor(x_shape, rng);
    DTensor w = random_tensor({filters, x_shape[1], kernel, kernel}, rng, -0.5, 0.5);
    DTensor b = random_tensor({filters}, rng, -0.2, 0.2);

    DTensor x_col;
    DTensor y = conv2d_forward(x, w, b, stride, pad, act, &x_col);
    DTensor r = random_tensor(y.shape(), rng);

    DTensor dy = act == Activation::relu ? relu_backward(r, y) : r;
    auto grads = conv2d_backward(dy, x_col, x.shape(), w, stride, pad, /*need_dx=*/true);

    auto forward = [&] { return projected(conv2d_forward(x, w, b, stride, pad, act), r); };
    check_tensor_grad(c, w, grads.dw, forward, step);
    check_tensor_grad(c, b, grads.db, forward, step);
    check_tensor_grad(c, x, grads.dx, forward, step);
    return c;
}

GradCheckCase check_maxpool(const char* name, std::vector<int> x_shape, int pool, int stride,
                            PoolPadding pad, double step) {
    GradCheckCase c{name};
    Rng rng(77);
    DTensor x = random_tensor(x_shape, rng);

    std::vector<int32_t> argmax;
    DTensor y = maxpool_forward(x, pool, stride, pad, &argmax);
    DTensor r = random_tensor(y.shape(), rng);
    DTensor dx = maxpool_backward(r, argmax, x.shape());

    auto forward = [&] { return projected(maxpool_forward(x, pool, stride, pad), r); };
    check_tensor_grad(c, x, dx, forward, step);
    return c;
}

GradCheckCase check_batchnorm(double step) {
    GradCheckCase c{"batchnorm"};
    Rng rng(31337);
    DTensor x = random_tensor({2, 4, 5, 5}, rng);
    DTensor gamma = random_tensor({4}, rng, 0.5, 1.5);
    DTensor beta = random_tensor({4}, rng, -0.5, 0.5);
    DTensor mm({4}), mv = DTensor::full({4}, 1.0);
    const double momentum = 0.99, eps = 1e-3;

    BatchNormCache<double> cache;
    DTensor y = batchnorm_forward(x, gamma, beta, mm, mv, /*training=*/true, momentum, eps, &cache);
    DTensor r = random_tensor(y.shape(), rng);
    auto grads = batchnorm_backward(r, cache, gamma);

    auto forward = [&] {
        return projected(batchnorm_forward(x, gamma, beta, mm, mv, true, momentum, eps), r);
    };
    check_tensor_grad(c, gamma, grads.dgamma, forward, step);
    check_tensor_grad(c, beta, grads.dbeta, forward, step);
    check_tensor_grad(c, x, grads.dx, forward, step);
    return c;
}

GradCheckCase check_dropout(double step) {
    GradCheckCase c{"dropout"};
    Rng rng(99);
    DTensor x = random_tensor({2, 3, 4, 4}, rng);
    const double rate = 0.4;
    const uint64_t mask_seed = 555;

    Rng mask_rng(mask_seed);
    DTensor mask;
    DTensor y = dropout_forward(x, rate, &mask_rng, /*training=*/true, &mask);
    DTensor r = random_tensor(y.shape(), rng);
    DTensor dx = dropout_backward(r, mask);

    // identical mask on every evaluation
    auto forward = [&] {
        Rng f(mask_seed);
        return projected(dropout_forward(x, rate, &f, true), r);
    };
    check_tensor_grad(c, x, dx, forward, step);
    return c;
}

GradCheckCase check_dense(const char* name, Activation act, double step) {
    GradCheckCase c{name};
    Rng rng(4242);
    DTensor x = random_tensor({3, 10}, rng);
    DTensor w = random_tensor({10, 5}, rng, -0.5, 0.5);
    DTensor b = random_tensor({5}, rng, -0.2, 0.2);

    DTensor y = dense_forward(x, w, b, act);
    DTensor r = random_tensor(y.shape(), rng);
    DTensor dy = act == Activation::relu ? relu_backward(r, y) : r;
    auto grads = dense_backward(dy, x, w);

    auto forward = [&] { return projected(dense_forward(x, w, b, act), r); };
    check_tensor_grad(c, w, grads.dw, forward, step);
    check_tensor_grad(c, b, grads.db, forward, step);
    check_tensor_grad(c, x, grads.dx, forward, step);
    return c;
}

GradCheckCase check_softmax(double step) {
    GradCheckCase c{"softmax"};
    Rng rng(808);
    DTensor x = random_tensor({3, kNumClasses}, rng, -2.0, 2.0);
    DTensor y = softmax(x);
    DTensor r = random_tensor(y.shape(), rng);
    DTensor dx = softmax_backward(r, y);

    auto forward = [&] { return projected(softmax(x), r); };
    check_tensor_grad(c, x, dx, forward, step);
    return c;
}

GradCheckCase check_loss(double step) {
    GradCheckCase c{"loss"};
    Rng rng(616);
    DTensor logits = random_tensor({4, kNumClasses}, rng, -2.0, 2.0);
    std::vector<int> labels = {5, 4, 0, 5};  // mixed, includes the down-weighted class
    DTensor targets = one_hot<double>(labels);
    ClassWeights weights = ClassWeights::paper(5);

    auto analytic = weighted_cce(softmax(logits), targets, weights).grad_logits;
    auto forward = [&] { return weighted_cce(softmax(logits), targets, weights).loss; };
    check_tensor_grad(c, logits, analytic, forward, step);
    return c;
}

GradCheckCase check_model(double step) {
    GradCheckCase c{"model"};
    ModelSpec model = build_paper_model();
    Rng init_rng(7);
    ParamStore<double> params = init_params<double>(model, init_rng);

    Rng data_rng(8);
    DTensor batch = random_tensor({2, 3, 28, 28}, data_rng, -1.5, 1.5);
    std::vector<int> labels = {5, 2};
    DTensor targets = one_hot<double>(labels);
    ClassWeights weights = ClassWeights::paper(5);
    const uint64_t dropout_seed = 90210;

    auto forward_loss = [&] {
        Rng drop(dropout_seed);
        DTensor probs = model_forward(model, params, batch, /*training=*/true, &drop);
        return weighted_cce(probs, targets, weights).loss;
    };

    Rng drop(dropout_seed);
    ForwardTrace<double> trace;
    DTensor probs = model_forward(model, params, batch, true, &drop, &trace);
    auto loss = weighted_cce(probs, targets, weights);
    ParamStore<double> grads = model_backward(model, params, trace, loss.grad_logits);

    Rng pick(13);
    params.for_each_trainable(model, [&](const std::string& name, DTensor& t) {
        DTensor* g = nullptr;
        grads.for_each_trainable(model, [&](const std::string& gname, DTensor& gt) {
            if (gname == name) g = &gt;
        });
        check_tensor_grad_sampled(c, t, *g, forward_loss, step, 3, pick);
    });
    return c;
}

}  // namespace

std::vector<GradCheckCase> run_gradient_checks(const std::string& filter, double tolerance, double step) {
    std::vector<GradCheckCase> cases;
    auto want = [&](const char* family) { return filter == "all" || filter == family; };

    if (want("conv2d")) {
        cases.push_back(check_conv2d("conv2d k2 valid", {2, 3, 6, 6}, 4, 2, 1, 0, Activation::none, step));
        cases.push_back(check_conv2d("conv2d k3 pad1 stride2", {2, 2, 7, 7}, 3, 3, 2, 1, Activation::none, step));
        cases.push_back(check_conv2d("conv2d k2 relu", {2, 3, 6, 6}, 4, 2, 1, 0, Activation::relu, step));
    }
    if (want("maxpool")) {
        cases.push_back(check_maxpool("maxpool 2/2 valid", {2, 3, 7, 7}, 2, 2, PoolPadding::valid, step));
        cases.push_back(check_maxpool("maxpool 2/1 same", {2, 3, 4, 4}, 2, 1, PoolPadding::same, step));
    }
    if (want("batchnorm")) cases.push_back(check_batchnorm(step));
    if (want("dropout")) cases.push_back(check_dropout(step));
    if (want("dense")) {
        cases.push_back(check_dense("dense linear", Activation::none, step));
        cases.push_back(check_dense("dense relu", Activation::relu, step));
    }
    if (want("softmax")) cases.push_back(check_softmax(step));
    if (want("loss")) cases.push_back(check_loss(step));
    if (want("model")) cases.push_back(check_model(step));

    if (cases.empty())
        throw ArgumentError("gradcheck: no cases match filter \"" + filter +
                            "\" (expected all|conv2d|maxpool|batchnorm|dropout|dense|softmax|loss|model)");
    for (auto& c : cases) c.pass = c.max_rel_err <= tolerance;
    return cases;
}

}  // namespace dermforge
