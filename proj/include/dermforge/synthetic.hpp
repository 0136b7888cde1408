#pragma once

#include <vector>

#include "dermforge/dataset.hpp"

namespace dermforge {

// Procedurally generated 7-class 28x28 RGB blob images for exercising the
// training pipeline when the real corpus is not on disk. Classes are encoded
// by centered color/shape patterns, so they survive flips, small rotations,
// brightness jitter and center zoom.
//
// imbalanced=true draws labels from the skewed class mix the real data has
// (class 5 dominant at ~2/3); otherwise labels round-robin.
std::vector<Sample> make_blob_samples(int count, uint64_t seed, bool imbalanced);

Dataset make_blob_dataset(int count, uint64_t seed, bool imbalanced, double val_fraction);

// A metadata file shaped like the real corpus: exact published per-class
// counts (10015 rows, class nv dominant) with plausible auxiliary columns.
// Used by the analysis tests as a stand-in when the real file is absent.
std::string synthetic_metadata_csv(uint64_t seed);

}  // namespace dermforge
