#include "dermforge/model.hpp"

#include <sstream>

namespace dermforge {

// 28x28 RGB -> 7-way softmax. Kernel sizes and paddings are pinned by the
// output shapes and parameter counts this stack must produce; see the
// shape-fidelity tests. The fourth pool is stride-1 same-padded, which keeps
// its 2x2 input unchanged.
ModelSpec build_paper_model() {
    ModelSpec m;
    m.input_shape = {3, 28, 28};
    m.layers = {
        LayerSpec::conv2d("conv1", 64, 2, 1, 0, Activation::relu),
        LayerSpec::maxpool("pool1", 2, 2),
        LayerSpec::batchnorm("bn1", 64),
        LayerSpec::conv2d("conv2", 512, 2, 1, 0, Activation::relu),
        LayerSpec::maxpool("pool2", 2, 2),
        LayerSpec::batchnorm("bn2", 512),
        LayerSpec::dropout("drop1", 0.25),
        LayerSpec::conv2d("conv3", 1024, 2, 1, 0, Activation::relu),
        LayerSpec::maxpool("pool3", 2, 2),
        LayerSpec::batchnorm("bn3", 1024),
        LayerSpec::dropout("drop2", 0.25),
        LayerSpec::conv2d("conv4", 1024, 1, 1, 0, Activation::relu),
        LayerSpec::maxpool("pool4", 2, 1, PoolPadding::same),
        LayerSpec::batchnorm("bn4", 1024),
        LayerSpec::dropout("drop3", 0.25),
        LayerSpec::flatten("flatten"),
        LayerSpec::dense("dense1", 256, Activation::relu),
        LayerSpec::dropout("drop4", 0.5),
        LayerSpec::dense("dense2", 7, Activation::softmax),
    };
    return m;
}

std::vector<std::vector<int>> infer_shapes(const ModelSpec& model) {
    std::vector<std::vector<int>> shapes;
    shapes.reserve(model.layers.size());
    std::vector<int> cur(model.input_shape.begin(), model.input_shape.end());
    for (const auto& l : model.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::conv2d: {
                if (cur.size() != 3) throw ShapeError(l.name + ": conv2d needs a (c,h,w) input");
                int oh = conv_out_dim(cur[1], l.kernel, l.stride, l.pad);
                int ow = conv_out_dim(cur[2], l.kernel, l.stride, l.pad);
                if (oh <= 0 || ow <= 0)
                    throw ShapeError(l.name + ": output collapses to " + std::to_string(oh) + "x" +
                                     std::to_string(ow));
                cur = {l.out_channels, oh, ow};
                break;
            }
            case LayerSpec::Kind::maxpool: {
                if (cur.size() != 3) throw ShapeError(l.name + ": maxpool needs a (c,h,w) input");
                int oh = pool_out_dim(cur[1], l.pool, l.stride, l.pool_pad);
                int ow = pool_out_dim(cur[2], l.pool, l.stride, l.pool_pad);
                if (oh <= 0 || ow <= 0) throw ShapeError(l.name + ": pooled output collapses");
                cur = {cur[0], oh, ow};
                break;
            }
            case LayerSpec::Kind::batchnorm:
                if (cur.size() != 3 || cur[0] != l.channels)
                    throw ShapeError(l.name + ": expects " + std::to_string(l.channels) + " channels");
                break;
            case LayerSpec::Kind::dropout:
                break;
            case LayerSpec::Kind::flatten: {
                int f = 1;
                for (int d : cur) f *= d;
                cur = {f};
                break;
            }
            case LayerSpec::Kind::dense:
                if (cur.size() != 1) throw ShapeError(l.name + ": dense needs a flattened input");
                cur = {l.units};
                break;
        }
        shapes.push_back(cur);
    }
    return shapes;
}

int64_t layer_param_count(const LayerSpec& layer, const std::vector<int>& in_shape) {
    switch (layer.kind) {
        case LayerSpec::Kind::conv2d:
            return static_cast<int64_t>(layer.out_channels) * in_shape[0] * layer.kernel * layer.kernel +
                   layer.out_channels;
        case LayerSpec::Kind::batchnorm:
            return 4LL * layer.channels;
        case LayerSpec::Kind::dense:
            return static_cast<int64_t>(in_shape[0]) * layer.units + layer.units;
        default:
            return 0;
    }
}

int64_t total_param_count(const ModelSpec& model) {
    auto shapes = infer_shapes(model);
    int64_t total = 0;
    std::vector<int> in(model.input_shape.begin(), model.input_shape.end());
    for (size_t i = 0; i < model.layers.size(); ++i) {
        total += layer_param_count(model.layers[i], in);
        in = shapes[i];
    }
    return total;
}

std::string describe(const ModelSpec& model) {
    std::ostringstream os;
    os << "input " << model.input_shape[0] << "x" << model.input_shape[1] << "x" << model.input_shape[2]
       << "\n";
    auto act_name = [](Activation a) {
        switch (a) {
            case Activation::relu: return "relu";
            case Activation::softmax: return "softmax";
            default: return "none";
        }
    };
    for (const auto& l : model.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::conv2d:
                os << "conv2d " << l.name << " filters=" << l.out_channels << " kernel=" << l.kernel
                   << " stride=" << l.stride << " pad=" << l.pad << " act=" << act_name(l.act) << "\n";
                break;
            case LayerSpec::Kind::maxpool:
                os << "maxpool " << l.name << " pool=" << l.pool << " stride=" << l.stride
                   << " pad=" << (l.pool_pad == PoolPadding::same ? "same" : "valid") << "\n";
                break;
            case LayerSpec::Kind::batchnorm:
                os << "batchnorm " << l.name << " channels=" << l.channels << " momentum=" << l.momentum
                   << " eps=" << l.epsilon << "\n";
                break;
            case LayerSpec::Kind::dropout:
                os << "dropout " << l.name << " rate=" << l.rate << "\n";
                break;
            case LayerSpec::Kind::flatten:
                os << "flatten " << l.name << "\n";
                break;
            case LayerSpec::Kind::dense:
                os << "dense " << l.name << " units=" << l.units << " act=" << act_name(l.act) << "\n";
                break;
        }
    }
    return os.str();
}

}  // namespace dermforge
