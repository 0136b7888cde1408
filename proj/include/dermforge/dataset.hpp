#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dermforge/loss.hpp"
#include "dermforge/tensor.hpp"

namespace dermforge {

// Diagnosis codes in fixed alphabetical order; the class index used
// everywhere (labels, reports, checkpoints) is the position in this list.
inline constexpr std::array<std::string_view, kNumClasses> kClassCodes = {
    "akiec", "bcc", "bkl", "df", "mel", "nv", "vasc",
};
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Actinic keratosis", "Basal cell carcinoma", "Benign keratosis",    "Dermatofibroma",
    "Melanoma",          "Melanocytic nevus",    "Vascular lesion",
};
inline constexpr int kNvIndex = 5;
inline constexpr int kMelIndex = 4;

// -1 when the code is unknown.
int class_index(std::string_view dx_code);

struct MetadataRecord {
    std::string lesion_id;
    std::string image_id;
    int dx = -1;  // class index
    std::string dx_type;
    std::optional<double> age;
    std::string sex;
    std::string localization;
};

// Comma-separated file with header
// lesion_id,image_id,dx,dx_type,age,sex,localization. Unknown dx codes,
// duplicate image ids and malformed rows raise ParseError naming the line.
std::vector<MetadataRecord> load_metadata(const std::string& path);

struct SplitResult {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

// Deterministic image-level split: ids are sorted, shuffled by the seed, and
// cut at floor(N*(1-val_fraction)). Input order does not matter.
SplitResult split(const std::vector<MetadataRecord>& records, double val_fraction, uint64_t seed);

// Fixed training configuration weighting: nv = 0.5, everything else 1.
ClassWeights class_weights_for(const std::vector<MetadataRecord>& records);

enum class Facet { dx, dx_type, localization, age_by_dx };

Facet facet_from_string(const std::string& name);

struct CountTable {
    // (key, count), sorted by count descending, ties lexical ascending.
    std::vector<std::pair<std::string, int64_t>> rows;

    int64_t total() const;
    std::string to_csv() const;
};

// dx            -> one row per diagnosis code
// dx_type       -> one row per (confirmation procedure, diagnosis) pair,
//                  keyed "<dx_type>/<dx>"
// localization  -> one row per body site
// age_by_dx     -> per-diagnosis 5-year age bins keyed "<dx>/<lo>-<hi>";
//                  records without an age are excluded
CountTable tabulate(const std::vector<MetadataRecord>& records, Facet facet);

struct Sample {
    Tensor<float> image;  // (3,28,28) in [0,1]
    int label = -1;
    std::string image_id;
};

// Per-channel statistics of the training split, in [0,1] pixel units.
// Model inputs are standardized as (x - mean) / std.
struct NormStats {
    std::array<float, 3> mean{};
    std::array<float, 3> stddev{};
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<int> train_idx;
    std::vector<int> val_idx;
    uint64_t split_seed = 0;
    double val_fraction = 0.1;
    NormStats norm;
};

NormStats compute_norm_stats(const std::vector<Sample>& samples, const std::vector<int>& indices);

// (x - mean) / std per channel, in place.
void standardize(Tensor<float>& image, const NormStats& norm);

// Loads metadata, decodes every listed image from the given directories
// (<image_id> plus a raster extension), splits, and computes the training
// normalization statistics. Decoding runs in parallel across files.
Dataset build_dataset(const std::string& metadata_path, const std::vector<std::string>& image_dirs,
                      double val_fraction, uint64_t seed);

// Assembles split bookkeeping for samples produced in memory (synthetic data
// and tests): same split and normalization path as build_dataset.
Dataset assemble_dataset(std::vector<Sample> samples, double val_fraction, uint64_t seed);

}  // namespace dermforge
