#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dermforge/augment.hpp"
#include "dermforge/dataset.hpp"
#include "dermforge/metrics.hpp"
#include "dermforge/model.hpp"
#include "dermforge/optim.hpp"

namespace dermforge {

struct SchedulerConfig {
    int patience = 3;
    double min_delta = 1e-4;
    double min_lr = 1e-5;
    double decay_factor = 10.0;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 90;
    double initial_lr = 1e-3;
    double val_fraction = 0.1;
    uint64_t seed = 42;
    bool paper_class_weights = true;  // nv down-weighted vs uniform
    bool augment_enabled = true;
    AugmentConfig augment;
    SchedulerConfig scheduler;

    // When set, the best checkpoint is persisted (atomically) every time the
    // validation loss improves.
    std::string checkpoint_path;

    // Stop once training accuracy reaches this level; <= 0 disables.
    double early_stop_train_acc = -1.0;

    // Observers for progress reporting and tests. batch_observer sees the
    // image ids of every gradient-contributing batch.
    std::function<void(const struct EpochRecord&)> epoch_observer;
    std::function<void(int epoch, const std::vector<std::string>& batch_ids)> batch_observer;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0;
    double wall_time_sec = 0.0;
};

struct Checkpoint {
    uint32_t version = 1;
    std::string arch;             // canonical describe() text
    ModelSpec model;
    ParamStore<float> params;     // includes batch-norm moving statistics
    NormStats norm;
    std::string config_snapshot;  // key=value lines
    double best_val_loss = 0.0;
    std::string class_mapping;    // comma-separated dx codes in index order
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
};

TrainResult train(const TrainConfig& config, const Dataset& dataset);

enum class Split { train, val };

struct EvalResult {
    ClassificationReport report;
    std::vector<RocCurve> roc;
    double loss = 0.0;  // unweighted cross entropy
};

EvalResult evaluate(const Checkpoint& cp, const Dataset& dataset, Split split);

struct Prediction {
    int label = -1;
    std::array<float, kNumClasses> probs{};
};

Prediction predict(const Checkpoint& cp, const std::string& image_path);

void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string history_csv(const std::vector<EpochRecord>& history);
void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

// Small two-panel SVG of the accuracy and loss curves.
void write_history_svg(const std::vector<EpochRecord>& history, const std::string& path);

// key=value snapshot of the fields needed to rebuild the dataset split.
std::string snapshot_config(const TrainConfig& config);
uint64_t snapshot_seed(const std::string& snapshot);
double snapshot_val_fraction(const std::string& snapshot);

}  // namespace dermforge
