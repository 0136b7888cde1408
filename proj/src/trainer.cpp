#include "dermforge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

#include "dermforge/errors.hpp"
#include "dermforge/image.hpp"
#include "dermforge/io_util.hpp"
#include "dermforge/loss.hpp"
#include "dermforge/threading.hpp"

namespace dermforge {

namespace {

// rng stream tags; children are keyed child(tag, payload)
constexpr uint64_t kStreamInit = 1;
constexpr uint64_t kStreamShuffle = 2;
constexpr uint64_t kStreamDropout = 3;
constexpr uint64_t kStreamAugment = 4;

uint64_t pack(uint64_t hi, uint64_t lo) { return (hi << 32) | (lo & 0xffffffffULL); }

std::string class_mapping_string() {
    std::string s;
    for (int c = 0; c < kNumClasses; ++c) {
        if (c) s += ",";
        s += std::string(kClassCodes[c]);
    }
    return s;
}

// Assembles (and optionally augments) a standardized batch from dataset
// sample indices. Augmentation randomness is keyed by (epoch, sample index),
// so the result does not depend on iteration order or thread count.
Tensor<float> make_batch(const Dataset& ds, const std::vector<int>& indices, size_t begin, size_t end,
                         const TrainConfig* aug_cfg, int epoch, const Rng& base) {
    const int n = static_cast<int>(end - begin);
    Tensor<float> batch({n, 3, 28, 28});
    const size_t sample_size = 3 * 28 * 28;
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int i = 0; i < n; ++i) {
        const int idx = indices[begin + i];
        Tensor<float> img = ds.samples[idx].image;
        if (aug_cfg && aug_cfg->augment_enabled) {
            Rng r = base.child(kStreamAugment, pack(static_cast<uint64_t>(epoch), static_cast<uint64_t>(idx)));
            img = augment(img, aug_cfg->augment, r);
        }
        standardize(img, ds.norm);
        std::memcpy(batch.data() + static_cast<size_t>(i) * sample_size, img.data(),
                    sample_size * sizeof(float));
    }
    return batch;
}

struct InferenceResult {
    double loss = 0.0;  // mean -log p(true class)
    std::vector<int> pred;
    std::vector<int> truth;
    Tensor<float> probs;
};

InferenceResult run_inference(const ModelSpec& model, const ParamStore<float>& params, const Dataset& ds,
                              const std::vector<int>& indices, int batch_size) {
    InferenceResult res;
    const int n = static_cast<int>(indices.size());
    res.probs = Tensor<float>({n, kNumClasses});
    res.pred.resize(n);
    res.truth.resize(n);
    double loss_acc = 0.0;
    for (size_t begin = 0; begin < indices.size(); begin += batch_size) {
        const size_t end = std::min(indices.size(), begin + batch_size);
        Tensor<float> batch = make_batch(ds, indices, begin, end, nullptr, 0, Rng(0));
        Tensor<float> probs = model_forward(model, params, batch, /*training=*/false);
        for (size_t i = begin; i < end; ++i) {
            const int row = static_cast<int>(i - begin);
            const int truth = ds.samples[indices[i]].label;
            res.truth[i] = truth;
            int arg = 0;
            float best = probs.at2(row, 0);
            for (int j = 0; j < kNumClasses; ++j) {
                res.probs.at2(static_cast<int>(i), j) = probs.at2(row, j);
                if (probs.at2(row, j) > best) {
                    best = probs.at2(row, j);
                    arg = j;
                }
            }
            res.pred[i] = arg;
            loss_acc += -std::log(std::max(static_cast<double>(probs.at2(row, truth)), kProbFloor));
        }
    }
    res.loss = loss_acc / std::max(n, 1);
    return res;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
    if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ArgumentError("train: val_fraction must be in (0,1)");
    if (!(initial_lr > 0.0) && initial_lr != 0.0) throw ArgumentError("train: initial_lr must be >= 0");
    augment.validate();
}

std::string snapshot_config(const TrainConfig& c) {
    std::ostringstream os;
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    os << "seed=" << c.seed << "\n";
    os << "epochs=" << c.epochs << "\n";
    os << "batch_size=" << c.batch_size << "\n";
    os << "initial_lr=" << num(c.initial_lr) << "\n";
    os << "val_fraction=" << num(c.val_fraction) << "\n";
    os << "class_weights=" << (c.paper_class_weights ? "paper" : "uniform") << "\n";
    os << "augment=" << (c.augment_enabled ? 1 : 0) << "\n";
    os << "augment.flip_horizontal=" << num(c.augment.flip_horizontal) << "\n";
    os << "augment.flip_vertical=" << num(c.augment.flip_vertical) << "\n";
    os << "augment.max_rotation_deg=" << num(c.augment.max_rotation_deg) << "\n";
    os << "augment.brightness_delta=" << num(c.augment.brightness_delta) << "\n";
    os << "augment.zoom_max=" << num(c.augment.zoom_max) << "\n";
    os << "scheduler.patience=" << c.scheduler.patience << "\n";
    os << "scheduler.min_delta=" << num(c.scheduler.min_delta) << "\n";
    os << "scheduler.min_lr=" << num(c.scheduler.min_lr) << "\n";
    os << "scheduler.decay_factor=" << num(c.scheduler.decay_factor) << "\n";
    return os.str();
}

namespace {

std::string snapshot_value(const std::string& snapshot, const std::string& key) {
    std::istringstream is(snapshot);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
    }
    throw CheckpointError("config snapshot is missing key \"" + key + "\"");
}

}  // namespace

uint64_t snapshot_seed(const std::string& snapshot) {
    return std::stoull(snapshot_value(snapshot, "seed"));
}

double snapshot_val_fraction(const std::string& snapshot) {
    return std::stod(snapshot_value(snapshot, "val_fraction"));
}

TrainResult train(const TrainConfig& config, const Dataset& dataset) {
    config.validate();
    if (dataset.samples.empty() || dataset.train_idx.empty() || dataset.val_idx.empty())
        throw ArgumentError("train: dataset has no samples or an empty split");

    const Rng base(config.seed);
    ModelSpec model = build_paper_model();
    Rng init_rng = base.child(kStreamInit, 0);
    ParamStore<float> params = init_params<float>(model, init_rng);

    const ClassWeights weights =
        config.paper_class_weights ? ClassWeights::paper(kNvIndex) : ClassWeights::uniform();
    AdamState<float> adam = AdamState<float>::init(params, config.initial_lr);
    PlateauScheduler sched;
    sched.current_lr = config.initial_lr;
    sched.patience = config.scheduler.patience;
    sched.min_delta = config.scheduler.min_delta;
    sched.min_lr = config.scheduler.min_lr;
    sched.decay_factor = config.scheduler.decay_factor;

    TrainResult result;
    double best_val_loss = std::numeric_limits<double>::infinity();

    std::vector<int> order = dataset.train_idx;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double epoch_lr = sched.current_lr;
        adam.learning_rate = epoch_lr;

        Rng shuffle_rng = base.child(kStreamShuffle, static_cast<uint64_t>(epoch));
        order = dataset.train_idx;
        shuffle_rng.shuffle(order);

        double loss_num = 0.0, loss_den = 0.0;
        int64_t correct = 0;
        int batch_no = 0;
        for (size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_no) {
            const size_t end = std::min(order.size(), begin + config.batch_size);
            Tensor<float> batch = make_batch(dataset, order, begin, end, &config, epoch, base);

            std::vector<int> labels;
            labels.reserve(end - begin);
            for (size_t i = begin; i < end; ++i) labels.push_back(dataset.samples[order[i]].label);

            Rng drop_rng =
                base.child(kStreamDropout, pack(static_cast<uint64_t>(epoch), static_cast<uint64_t>(batch_no)));
            ForwardTrace<float> trace;
            Tensor<float> probs = model_forward(model, params, batch, /*training=*/true, &drop_rng, &trace);

            auto loss = weighted_cce(probs, one_hot<float>(labels), weights);
            if (!std::isfinite(loss.loss))
                throw StateError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_no));
            loss_num += loss.loss * loss.weight_sum;
            loss_den += loss.weight_sum;
            for (size_t i = 0; i < labels.size(); ++i) {
                int arg = 0;
                for (int j = 1; j < kNumClasses; ++j)
                    if (probs.at2(static_cast<int>(i), j) > probs.at2(static_cast<int>(i), arg)) arg = j;
                if (arg == labels[i]) ++correct;
            }

            ParamStore<float> grads = model_backward(model, params, trace, loss.grad_logits);
            adam_step(model, params, grads, adam);
            commit_batchnorm_updates(model, params, trace);

            if (config.batch_observer) {
                std::vector<std::string> ids;
                ids.reserve(end - begin);
                for (size_t i = begin; i < end; ++i) ids.push_back(dataset.samples[order[i]].image_id);
                config.batch_observer(epoch, ids);
            }
        }

        InferenceResult val = run_inference(model, params, dataset, dataset.val_idx, config.batch_size);
        int64_t val_correct = 0;
        for (size_t i = 0; i < val.pred.size(); ++i)
            if (val.pred[i] == val.truth[i]) ++val_correct;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_num / loss_den;
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        rec.val_loss = val.loss;
        rec.val_accuracy = static_cast<double>(val_correct) / static_cast<double>(val.pred.size());
        rec.learning_rate = epoch_lr;
        rec.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        if (config.epoch_observer) config.epoch_observer(rec);

        if (val.loss < best_val_loss) {
            best_val_loss = val.loss;
            result.best.version = 1;
            result.best.model = model;
            result.best.arch = describe(model);
            result.best.params = params;
            result.best.norm = dataset.norm;
            result.best.config_snapshot = snapshot_config(config);
            result.best.best_val_loss = val.loss;
            result.best.class_mapping = class_mapping_string();
            if (!config.checkpoint_path.empty()) save_checkpoint(result.best, config.checkpoint_path);
        }

        sched.update(val.loss);
        if (sched.bottomed_out) break;
        if (config.early_stop_train_acc > 0.0 && rec.train_accuracy >= config.early_stop_train_acc) break;
    }
    return result;
}

EvalResult evaluate(const Checkpoint& cp, const Dataset& dataset, Split split) {
    const std::vector<int>& indices = split == Split::val ? dataset.val_idx : dataset.train_idx;
    if (indices.empty()) throw ArgumentError("evaluate: selected split is empty");

    // evaluation uses the checkpoint's normalization, not the dataset's
    Dataset view;
    view.samples = dataset.samples;
    view.train_idx = dataset.train_idx;
    view.val_idx = dataset.val_idx;
    view.norm = cp.norm;

    InferenceResult inf = run_inference(cp.model, cp.params, view, indices, 90);
    EvalResult res;
    res.loss = inf.loss;
    res.report = report(confusion(inf.pred, inf.truth));
    res.roc = roc_ovr(inf.probs, inf.truth);
    return res;
}

Prediction predict(const Checkpoint& cp, const std::string& image_path) {
    Tensor<float> img = decode_and_resize(image_path);
    standardize(img, cp.norm);
    Tensor<float> batch({1, 3, 28, 28});
    std::memcpy(batch.data(), img.data(), img.size() * sizeof(float));
    Tensor<float> probs = model_forward(cp.model, cp.params, batch, /*training=*/false);
    Prediction pred;
    pred.label = 0;
    for (int j = 0; j < kNumClasses; ++j) {
        pred.probs[j] = probs.at2(0, j);
        if (probs.at2(0, j) > probs.at2(0, pred.label)) pred.label = j;
    }
    return pred;
}

// ---------------------------------------------------------------------------
// checkpoint serialization: magic "DFN1", then version, three length-prefixed
// text blocks (architecture, config snapshot, class mapping), best validation
// loss, normalization statistics, and named float32 tensor records. All
// multi-byte values little-endian.

namespace {

constexpr char kMagic[4] = {'D', 'F', 'N', '1'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

void put_f64(std::string& out, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_text(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out += s;
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw IoError("checkpoint file truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    double f64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string text() {
        uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kFormatVersion);
    put_text(out, cp.arch);
    put_text(out, cp.config_snapshot);
    put_text(out, cp.class_mapping);
    put_f64(out, cp.best_val_loss);
    for (int c = 0; c < 3; ++c) put_f32(out, cp.norm.mean[c]);
    for (int c = 0; c < 3; ++c) put_f32(out, cp.norm.stddev[c]);

    uint32_t tensor_count = 0;
    cp.params.for_each_tensor(cp.model, [&](const std::string&, const Tensor<float>&) { ++tensor_count; });
    put_u32(out, tensor_count);
    cp.params.for_each_tensor(cp.model, [&](const std::string& name, const Tensor<float>& t) {
        put_text(out, name);
        put_u32(out, static_cast<uint32_t>(t.rank()));
        for (size_t d = 0; d < t.rank(); ++d) put_u32(out, static_cast<uint32_t>(t.dim(d)));
        for (size_t i = 0; i < t.size(); ++i) put_f32(out, t[i]);
    });

    atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{buf};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw CheckpointError(path + ": bad magic bytes, not a checkpoint file");
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version > kFormatVersion)
        throw CheckpointError(path + ": format version " + std::to_string(version) +
                              " is newer than supported version " + std::to_string(kFormatVersion));

    Checkpoint cp;
    cp.version = version;
    cp.arch = r.text();
    cp.config_snapshot = r.text();
    cp.class_mapping = r.text();
    cp.best_val_loss = r.f64();
    for (int c = 0; c < 3; ++c) cp.norm.mean[c] = r.f32();
    for (int c = 0; c < 3; ++c) cp.norm.stddev[c] = r.f32();

    cp.model = build_paper_model();
    if (cp.arch != describe(cp.model))
        throw CheckpointError(path + ": architecture does not match this build");
    if (cp.class_mapping != class_mapping_string())
        throw CheckpointError(path + ": class mapping does not match this build");

    Rng dummy(0);
    cp.params = init_params<float>(cp.model, dummy);
    const uint32_t tensor_count = r.u32();
    for (uint32_t i = 0; i < tensor_count; ++i) {
        const std::string name = r.text();
        const uint32_t rank = r.u32();
        std::vector<int> dims(rank);
        for (auto& d : dims) d = static_cast<int>(r.u32());
        size_t count = 1;
        for (int d : dims) count *= static_cast<size_t>(d);
        bool found = false;
        cp.params.for_each_tensor(cp.model, [&](const std::string& tname, Tensor<float>& t) {
            if (tname != name) return;
            if (t.shape() != dims)
                throw CheckpointError(path + ": tensor " + name + " has shape " + shape_string(dims) +
                                      ", expected " + shape_string(t.shape()));
            for (size_t j = 0; j < count; ++j) t[j] = r.f32();
            found = true;
        });
        if (!found) throw CheckpointError(path + ": unknown tensor \"" + name + "\"");
    }
    return cp;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream os;
    os << "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
    for (const auto& r : history) {
        char line[256];
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss,
                      r.train_accuracy, r.val_loss, r.val_accuracy, r.learning_rate);
        os << line;
    }
    return os.str();
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
    atomic_write_file(path, history_csv(history));
}

void write_history_svg(const std::vector<EpochRecord>& history, const std::string& path) {
    const int w = 640, h = 260, pad = 40;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << (2 * h)
       << "\">\n";

    auto panel = [&](int top, const char* title, auto value_of, double vmax) {
        os << "<text x=\"" << pad << "\" y=\"" << (top + 16) << "\" font-size=\"13\">" << title
           << " (solid: train, dashed: validation)</text>\n";
        os << "<rect x=\"" << pad << "\" y=\"" << (top + 24) << "\" width=\"" << (w - 2 * pad)
           << "\" height=\"" << (h - 2 * pad) << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int series = 0; series < 2; ++series) {
            os << "<polyline fill=\"none\" stroke=\"" << (series == 0 ? "#1f6fb2" : "#c23c3c") << "\""
               << (series == 0 ? "" : " stroke-dasharray=\"5,3\"") << " points=\"";
            for (size_t i = 0; i < history.size(); ++i) {
                const double x =
                    pad + (w - 2.0 * pad) * (history.size() == 1 ? 0.5 : static_cast<double>(i) / (history.size() - 1));
                const double v = value_of(history[i], series);
                const double y = top + 24 + (h - 2.0 * pad) * (1.0 - std::clamp(v / vmax, 0.0, 1.0));
                os << x << "," << y << " ";
            }
            os << "\"/>\n";
        }
    };

    double max_loss = 1e-9;
    for (const auto& r : history) max_loss = std::max({max_loss, r.train_loss, r.val_loss});
    panel(0, "accuracy", [](const EpochRecord& r, int s) { return s == 0 ? r.train_accuracy : r.val_accuracy; },
          1.0);
    panel(h, "loss", [](const EpochRecord& r, int s) { return s == 0 ? r.train_loss : r.val_loss; },
          max_loss);
    os << "</svg>\n";
    atomic_write_file(path, os.str());
}

}  // namespace dermforge
