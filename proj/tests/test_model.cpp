#include <doctest.h>

#include <cmath>

#include "dermforge/model.hpp"

using namespace dermforge;

namespace {

struct ExpectedRow {
    const char* name;
    std::vector<int> shape;  // per-sample output, channels first
    int64_t params;
};

// The layer table the architecture must reproduce exactly.
const ExpectedRow kExpected[] = {
    {"conv1", {64, 27, 27}, 832},
    {"pool1", {64, 13, 13}, 0},
    {"bn1", {64, 13, 13}, 256},
    {"conv2", {512, 12, 12}, 131584},
    {"pool2", {512, 6, 6}, 0},
    {"bn2", {512, 6, 6}, 2048},
    {"drop1", {512, 6, 6}, 0},
    {"conv3", {1024, 5, 5}, 2098176},
    {"pool3", {1024, 2, 2}, 0},
    {"bn3", {1024, 2, 2}, 4096},
    {"drop2", {1024, 2, 2}, 0},
    {"conv4", {1024, 2, 2}, 1049600},
    {"pool4", {1024, 2, 2}, 0},
    {"bn4", {1024, 2, 2}, 4096},
    {"drop3", {1024, 2, 2}, 0},
    {"flatten", {4096}, 0},
    {"dense1", {256}, 1048832},
    {"drop4", {256}, 0},
    {"dense2", {7}, 1799},
};

}  // namespace

TEST_CASE("model reproduces the layer table row by row") {
    ModelSpec model = build_paper_model();
    const size_t rows = sizeof(kExpected) / sizeof(kExpected[0]);
    REQUIRE(model.layers.size() == rows);
    CHECK(model.input_shape == std::array<int, 3>{3, 28, 28});

    auto shapes = infer_shapes(model);
    std::vector<int> in(model.input_shape.begin(), model.input_shape.end());
    int64_t total = 0;
    for (size_t i = 0; i < rows; ++i) {
        INFO("row ", i, " (", kExpected[i].name, ")");
        CHECK(model.layers[i].name == kExpected[i].name);
        CHECK(shapes[i] == kExpected[i].shape);
        CHECK(layer_param_count(model.layers[i], in) == kExpected[i].params);
        total += kExpected[i].params;
        in = shapes[i];
    }
    CHECK(total == 4341319);
    CHECK(total_param_count(model) == 4341319);
}

TEST_CASE("parameter store tensors hold exactly the counted parameters") {
    ModelSpec model = build_paper_model();
    Rng rng(1);
    ParamStore<float> params = init_params<float>(model, rng);

    auto shapes = infer_shapes(model);
    std::vector<int> in(model.input_shape.begin(), model.input_shape.end());
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const auto& p = params.layers[i];
        const size_t stored = p.w.size() + p.b.size() + p.gamma.size() + p.beta.size() +
                              p.moving_mean.size() + p.moving_var.size();
        CHECK(static_cast<int64_t>(stored) == layer_param_count(model.layers[i], in));
        in = shapes[i];
    }
}

TEST_CASE("shape inference rejects impossible stacks") {
    ModelSpec bad;
    bad.input_shape = {3, 4, 4};
    bad.layers = {
        LayerSpec::conv2d("c1", 8, 3, 1, 0, Activation::relu),
        LayerSpec::maxpool("p1", 2, 2),
        LayerSpec::conv2d("c2", 8, 3, 1, 0, Activation::relu),  // 1x1 input, 3x3 kernel
    };
    CHECK_THROWS_AS(infer_shapes(bad), ShapeError);
}

TEST_CASE("forward produces softmax rows over a batch") {
    ModelSpec model = build_paper_model();
    Rng rng(2);
    ParamStore<float> params = init_params<float>(model, rng);

    Tensor<float> batch({5, 3, 28, 28});
    Rng data(3);
    for (size_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<float>(data.uniform(-1, 1));

    Rng drop(4);
    ForwardTrace<float> trace;
    Tensor<float> probs = model_forward(model, params, batch, true, &drop, &trace);
    CHECK(probs.shape() == std::vector<int>{5, 7});
    CHECK(trace.layers.size() == model.layers.size());
    for (int i = 0; i < 5; ++i) {
        double row = 0.0;
        for (int j = 0; j < 7; ++j) row += probs.at2(i, j);
        CHECK(std::abs(row - 1.0) < 1e-5);
    }
}

TEST_CASE("zeroed network reduces to softmax of the output bias") {
    ModelSpec model = build_paper_model();
    Rng rng(5);
    ParamStore<float> params = init_params<float>(model, rng);
    params.for_each_trainable(model, [](const std::string&, Tensor<float>& t) { t.fill(0.0f); });
    // keep batch-norm in its identity configuration
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].kind == LayerSpec::Kind::batchnorm) params.layers[i].gamma.fill(1.0f);
    }
    Tensor<float>& bias = params.layers.back().b;
    bias = Tensor<float>({7}, {0.0f, 1.0f, 2.0f, 0.0f, 0.0f, 0.0f, 0.0f});

    Tensor<float> zero_batch({1, 3, 28, 28});
    Tensor<float> probs = model_forward(model, params, zero_batch, false);

    Tensor<float> expected = softmax(bias.reshape({1, 7}));
    for (int j = 0; j < 7; ++j) CHECK(probs[j] == doctest::Approx(expected[j]).epsilon(1e-6));
}

TEST_CASE("inference is deterministic") {
    ModelSpec model = build_paper_model();
    Rng rng(6);
    ParamStore<float> params = init_params<float>(model, rng);
    Tensor<float> batch({2, 3, 28, 28});
    Rng data(7);
    for (size_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<float>(data.uniform(0, 1));

    Tensor<float> a = model_forward(model, params, batch, false);
    Tensor<float> b = model_forward(model, params, batch, false);
    CHECK(a.vec() == b.vec());
}

TEST_CASE("double and single precision forwards agree elementwise") {
    ModelSpec model = build_paper_model();
    Rng rng(8);
    ParamStore<float> params = init_params<float>(model, rng);
    ParamStore<double> dparams = params.cast<double>();

    Tensor<float> batch({2, 3, 28, 28});
    Rng data(9);
    for (size_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<float>(data.uniform(-1, 1));
    Tensor<double> dbatch = batch.cast<double>();

    Tensor<float> pf = model_forward(model, params, batch, false);
    Tensor<double> pd = model_forward(model, dparams, dbatch, false);
    for (size_t i = 0; i < pf.size(); ++i)
        CHECK(std::abs(static_cast<double>(pf[i]) - pd[i]) < 1e-3);
}

TEST_CASE("training forward requires an rng when dropout is active") {
    ModelSpec model = build_paper_model();
    Rng rng(10);
    ParamStore<float> params = init_params<float>(model, rng);
    Tensor<float> batch({1, 3, 28, 28});
    CHECK_THROWS_AS(model_forward(model, params, batch, true, nullptr), StateError);
}

TEST_CASE("backward rejects an inference trace") {
    ModelSpec model = build_paper_model();
    Rng rng(11);
    ParamStore<float> params = init_params<float>(model, rng);
    Tensor<float> batch({1, 3, 28, 28});
    ForwardTrace<float> trace;
    model_forward(model, params, batch, false, nullptr, &trace);
    Tensor<float> grad({1, 7});
    CHECK_THROWS_AS(model_backward(model, params, trace, grad), StateError);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
    ModelSpec model = build_paper_model();
    Rng rng(12);
    ParamStore<float> params = init_params<float>(model, rng);
    Tensor<float> batch({2, 3, 28, 28});
    Rng data(13);
    for (size_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<float>(data.uniform(-1, 1));

    Rng drop(14);
    ForwardTrace<float> trace;
    model_forward(model, params, batch, true, &drop, &trace);
    Tensor<float> zero_grad({2, 7});
    ParamStore<float> grads = model_backward(model, params, trace, zero_grad);
    grads.for_each_trainable(model, [](const std::string& name, Tensor<float>& g) {
        for (size_t i = 0; i < g.size(); ++i) {
            if (g[i] != 0.0f) FAIL("non-zero gradient in ", name);
        }
    });
}

TEST_CASE("describe round-trips through the checkpoint comparison") {
    ModelSpec model = build_paper_model();
    const std::string text = describe(model);
    CHECK(text == describe(build_paper_model()));
    CHECK(text.find("conv2d conv1 filters=64 kernel=2") != std::string::npos);
    CHECK(text.find("dense dense2 units=7 act=softmax") != std::string::npos);
}
