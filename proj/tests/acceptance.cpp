// Acceptance suite: one pass/fail line per criterion. Exit code is nonzero if
// any criterion fails. The training-scale criteria run on the procedural blob
// dataset; set HAM10000_METADATA to point criterion 8 at the real metadata
// file instead of the generated stand-in.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dermforge/dataset.hpp"
#include "dermforge/gradcheck.hpp"
#include "dermforge/io_util.hpp"
#include "dermforge/loss.hpp"
#include "dermforge/metrics.hpp"
#include "dermforge/model.hpp"
#include "dermforge/optim.hpp"
#include "dermforge/synthetic.hpp"
#include "dermforge/trainer.hpp"

using namespace dermforge;
namespace fs = std::filesystem;

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

void require_near(double got, double want, double tol, const std::string& what) {
    if (std::abs(got - want) > tol)
        throw std::runtime_error(what + ": got " + std::to_string(got) + ", want " +
                                 std::to_string(want) + " +- " + std::to_string(tol));
}

// --- criterion 1: architecture fidelity -----------------------------------

void criterion_architecture() {
    struct Row {
        std::vector<int> shape;
        int64_t params;
    };
    const Row expected[] = {
        {{64, 27, 27}, 832},    {{64, 13, 13}, 0},      {{64, 13, 13}, 256},
        {{512, 12, 12}, 131584}, {{512, 6, 6}, 0},       {{512, 6, 6}, 2048},
        {{512, 6, 6}, 0},        {{1024, 5, 5}, 2098176}, {{1024, 2, 2}, 0},
        {{1024, 2, 2}, 4096},    {{1024, 2, 2}, 0},       {{1024, 2, 2}, 1049600},
        {{1024, 2, 2}, 0},       {{1024, 2, 2}, 4096},    {{1024, 2, 2}, 0},
        {{4096}, 0},             {{256}, 1048832},        {{256}, 0},
        {{7}, 1799},
    };
    ModelSpec model = build_paper_model();
    const size_t rows = sizeof(expected) / sizeof(expected[0]);
    require(model.layers.size() == rows, "layer count != table rows");
    auto shapes = infer_shapes(model);
    std::vector<int> in(model.input_shape.begin(), model.input_shape.end());
    int64_t total = 0;
    for (size_t i = 0; i < rows; ++i) {
        require(shapes[i] == expected[i].shape, "output shape mismatch at row " + std::to_string(i));
        const int64_t params = layer_param_count(model.layers[i], in);
        require(params == expected[i].params, "param count mismatch at row " + std::to_string(i) +
                                                  ": got " + std::to_string(params));
        total += params;
        in = shapes[i];
    }
    require(total == 4341319, "total parameter count != 4341319");
}

// --- criterion 2: gradient correctness -------------------------------------

void criterion_gradients() {
    auto cases = run_gradient_checks("all", 1e-4, 1e-5);
    bool model_case = false;
    for (const auto& c : cases) {
        std::printf("    %-26s max rel err %.3e (%d values)\n", c.name.c_str(), c.max_rel_err,
                    c.checked_values);
        require(c.pass, c.name + " exceeded tolerance 1e-4 with " + std::to_string(c.max_rel_err));
        model_case |= c.name == "model";
    }
    require(model_case, "full-model case missing from the suite");
}

// --- criterion 3: loss and optimizer oracles --------------------------------

void criterion_loss_optimizer() {
    // perfect prediction -> 0
    Tensor<float> perfect({2, 7});
    perfect.at2(0, 3) = 1.0f;
    perfect.at2(1, 5) = 1.0f;
    auto r0 = weighted_cce(perfect, one_hot<float>({3, 5}), ClassWeights::uniform());
    require_near(r0.loss, 0.0, 1e-6, "perfect-prediction loss");

    // uniform probabilities, unit weights -> ln 7
    Tensor<float> uniform = Tensor<float>::full({4, 7}, 1.0f / 7.0f);
    auto r1 = weighted_cce(uniform, one_hot<float>({0, 1, 2, 3}), ClassWeights::uniform());
    require_near(r1.loss, std::log(7.0), 1e-6, "uniform loss vs ln 7");

    // class 5 weighted at exactly half of an otherwise identical sample
    const double p = 0.2;
    Tensor<float> probs({2, 7});
    probs.at2(0, kNvIndex) = static_cast<float>(p);
    probs.at2(0, 0) = static_cast<float>(1 - p);
    probs.at2(1, kMelIndex) = static_cast<float>(p);
    probs.at2(1, 0) = static_cast<float>(1 - p);
    auto r2 = weighted_cce(probs, one_hot<float>({kNvIndex, kMelIndex}), ClassWeights::paper(kNvIndex));
    require_near(r2.loss, 1.5 * -std::log(p) / 1.5, 1e-6, "nv half-weighted loss");
    require_near(r2.weight_sum, 1.5, 1e-9, "weight sum");

    // adam first step magnitude ~ lr
    Tensor<double> x({1}, {2.0});
    Tensor<double> g({1}, {0.7});
    Tensor<double> m({1}), v({1});
    adam_update(x, g, m, v, 1, 0.001, 0.9, 0.999, 1e-7);
    require_near(std::abs(2.0 - x[0]), 0.001, 1e-6, "adam first-step magnitude");

    // plateau: stagnation for patience epochs decays 0.001 -> 0.0001
    PlateauScheduler sched;
    sched.update(1.0);
    sched.update(1.0);
    sched.update(1.0);
    const double lr = sched.update(1.0);
    require_near(lr, 1e-4, 1e-12, "plateau decay to 1e-4");
}

// --- criterion 4: metrics oracle equivalence --------------------------------

void criterion_metrics() {
    std::vector<int> pred, truth;
    for (int i = 0; i < 8; ++i) { pred.push_back(0); truth.push_back(0); }
    for (int i = 0; i < 2; ++i) { pred.push_back(1); truth.push_back(0); }
    for (int i = 0; i < 1; ++i) { pred.push_back(0); truth.push_back(1); }
    for (int i = 0; i < 9; ++i) { pred.push_back(1); truth.push_back(1); }
    ClassificationReport r = report(confusion(pred, truth));
    require_near(r.per_class[0].precision, 8.0 / 9.0, 1e-12, "precision");
    require_near(r.per_class[0].recall, 0.8, 1e-12, "recall");
    require_near(r.per_class[0].f1, 2 * (8.0 / 9.0) * 0.8 / (8.0 / 9.0 + 0.8), 1e-12, "f1");
    require_near(r.accuracy, 0.85, 1e-12, "accuracy");

    // trapezoidal auc == brute-force pairwise statistic on 100 random sets
    Rng rng(333);
    int compared = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 5 + static_cast<int>(rng.bounded(25));
        Tensor<float> probs({n, kNumClasses});
        std::vector<int> labels(n);
        std::vector<double> scores(n);
        std::vector<char> positive(n);
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            scores[i] = rng.bounded(10) / 10.0;
            positive[i] = rng.next_double() < 0.5;
            labels[i] = positive[i] ? 0 : 1;
            probs.at2(i, 0) = static_cast<float>(scores[i]);
            probs.at2(i, 1) = static_cast<float>(1 - scores[i]);
            pos += positive[i];
        }
        if (pos == 0 || pos == n) continue;
        auto curves = roc_ovr(probs, labels);
        require(curves[0].auc.has_value(), "auc undefined on a mixed set");

        double wins = 0.0;
        int64_t pairs = 0;
        for (int i = 0; i < n; ++i) {
            if (!positive[i]) continue;
            for (int j = 0; j < n; ++j) {
                if (positive[j]) continue;
                ++pairs;
                wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
            }
        }
        require_near(*curves[0].auc, wins / pairs, 1e-9, "auc vs pairwise statistic");
        ++compared;
    }
    require(compared >= 90, "too few comparable score sets");
}

// --- criterion 5: learning sanity (overfit a tiny set) ----------------------

void criterion_overfit() {
    // 40 nearly balanced blob images
    std::vector<Sample> samples;
    {
        auto pool = make_blob_samples(120, 21, /*imbalanced=*/false);
        int per_class[kNumClasses] = {6, 6, 6, 6, 6, 5, 5};
        for (auto& s : pool) {
            if (per_class[s.label] > 0) {
                --per_class[s.label];
                samples.push_back(std::move(s));
            }
        }
    }
    require(samples.size() == 40, "fixture should hold 40 samples");
    Dataset ds = assemble_dataset(std::move(samples), 0.1, 21);

    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.batch_size = 40;
    cfg.seed = 21;
    cfg.augment_enabled = false;  // pure memorization check
    cfg.early_stop_train_acc = 0.95;
    TrainResult res = train(cfg, ds);

    double best_train_acc = 0.0;
    for (const auto& r : res.history) best_train_acc = std::max(best_train_acc, r.train_accuracy);
    std::printf("    reached train accuracy %.3f in %zu epochs\n", best_train_acc,
                res.history.size());
    require(best_train_acc >= 0.95,
            "train accuracy " + std::to_string(best_train_acc) + " < 0.95 within 150 epochs");
}

// --- criterion 6: scaled training beats the majority baseline ---------------

void criterion_scaled_training() {
    Dataset ds = make_blob_dataset(1500, 33, /*imbalanced=*/true, 0.1);

    // majority baseline on the validation split
    int64_t counts[kNumClasses] = {0};
    for (int idx : ds.val_idx) ++counts[ds.samples[idx].label];
    int64_t majority = 0;
    for (int64_t c : counts) majority = std::max(majority, c);
    const double baseline = static_cast<double>(majority) / ds.val_idx.size();

    TrainConfig cfg;  // paper defaults: batch 90, lr 0.001, weighted loss, augmented
    cfg.epochs = 15;
    cfg.seed = 33;
    cfg.epoch_observer = [](const EpochRecord& r) {
        std::printf("    epoch %2d: train %.3f/%.3f val %.3f/%.3f lr %g (%.0fs)\n", r.epoch,
                    r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.learning_rate,
                    r.wall_time_sec);
        std::fflush(stdout);
    };
    TrainResult res = train(cfg, ds);

    EvalResult eval = evaluate(res.best, ds, Split::val);
    std::printf("    validation accuracy %.3f, majority baseline %.3f\n", eval.report.accuracy,
                baseline);
    require(eval.report.accuracy >= 0.72,
            "validation accuracy " + std::to_string(eval.report.accuracy) + " < 0.72");
    require(eval.report.accuracy >= baseline + 0.05,
            "validation accuracy does not beat the majority baseline by 5 points");
}

// --- criterion 7: determinism ------------------------------------------------

void criterion_determinism() {
    const fs::path dir = fs::temp_directory_path() / "dermforge_acceptance_det";
    fs::create_directories(dir);

    auto run_once = [&](const std::string& tag) {
        Dataset ds = make_blob_dataset(300, 55, /*imbalanced=*/true, 0.1);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.seed = 55;
        TrainResult res = train(cfg, ds);
        const std::string path = (dir / ("history_" + tag + ".csv")).string();
        write_history_csv(res.history, path);
        return path;
    };
    const std::string a = run_once("a");
    const std::string b = run_once("b");
    const std::string ca = read_file(a), cb = read_file(b);
    fs::remove_all(dir);
    require(!ca.empty() && ca == cb, "history files differ between identical runs");
}

// --- criterion 8: dataset analysis -------------------------------------------

void criterion_analysis() {
    std::string metadata_path;
    const char* real = std::getenv("HAM10000_METADATA");
    const fs::path dir = fs::temp_directory_path() / "dermforge_acceptance_meta";
    if (real && fs::exists(real)) {
        metadata_path = real;
        std::printf("    using real metadata at %s\n", real);
    } else {
        fs::create_directories(dir);
        metadata_path = (dir / "metadata.csv").string();
        atomic_write_file(metadata_path, synthetic_metadata_csv(88));
        std::printf("    using generated metadata stand-in (set HAM10000_METADATA to override)\n");
    }

    auto records = load_metadata(metadata_path);
    CountTable table = tabulate(records, Facet::dx);
    require(table.total() == 10015, "expected 10015 records, got " + std::to_string(table.total()));
    int64_t nv = 0;
    for (const auto& [key, count] : table.rows)
        if (key == "nv") nv = count;
    const double frac = static_cast<double>(nv) / table.total();
    std::printf("    nv fraction %.4f of %lld records\n", frac, static_cast<long long>(table.total()));
    require(frac > 0.65, "nv fraction " + std::to_string(frac) + " <= 0.65");
    fs::remove_all(dir);
}

}  // namespace

int main() {
    struct Criterion {
        int number;
        const char* name;
        std::function<void()> fn;
    };
    const std::vector<Criterion> criteria = {
        {1, "architecture fidelity", criterion_architecture},
        {2, "gradient correctness", criterion_gradients},
        {3, "loss/optimizer oracles", criterion_loss_optimizer},
        {4, "metrics oracle equivalence", criterion_metrics},
        {5, "learning sanity (overfit 40 images)", criterion_overfit},
        {6, "scaled training beats majority baseline", criterion_scaled_training},
        {7, "seeded determinism of history files", criterion_determinism},
        {8, "dataset analysis class skew", criterion_analysis},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::printf("criterion %d: %s\n", c.number, c.name);
        std::fflush(stdout);
        std::string error;
        try {
            c.fn();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (error.empty()) {
            std::printf("[PASS] criterion %d: %s (%.1fs)\n", c.number, c.name, secs);
        } else {
            std::printf("[FAIL] criterion %d: %s (%.1fs): %s\n", c.number, c.name, secs, error.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    else std::printf("all criteria passed\n");
    return failures == 0 ? 0 : 1;
}
