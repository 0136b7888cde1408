#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dermforge/loss.hpp"
#include "dermforge/tensor.hpp"

namespace dermforge {

struct ConfusionMatrix {
    // rows = true class, columns = predicted class
    std::array<std::array<int64_t, kNumClasses>, kNumClasses> count{};

    int64_t total() const;
    int64_t row_sum(int cls) const;
    int64_t col_sum(int cls) const;
    int64_t trace() const;
};

ConfusionMatrix confusion(const std::vector<int>& pred_labels, const std::vector<int>& true_labels);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int64_t support = 0;
    bool degenerate = false;  // a zero denominator was coerced to 0
};

struct ClassificationReport {
    std::array<ClassMetrics, kNumClasses> per_class{};
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
    double accuracy = 0.0;
    int64_t total = 0;
};

ClassificationReport report(const ConfusionMatrix& cm);

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

struct RocCurve {
    std::string cls;  // class code, or "macro"
    std::vector<RocPoint> points;
    std::optional<double> auc;  // absent when the class has no positives or no negatives
};

// One-vs-rest curves per class plus a macro-average curve (mean tpr over a
// common fpr grid; auc = mean of the defined per-class aucs).
std::vector<RocCurve> roc_ovr(const Tensor<float>& probs, const std::vector<int>& true_labels);

// Human-readable table; values rounded to 4 decimals.
std::string render_report(const ClassificationReport& r);

// Stable key=value lines at full precision.
std::string report_keyvalues(const ClassificationReport& r);

// class,threshold,fpr,tpr rows followed by auc summary lines.
std::string roc_csv(const std::vector<RocCurve>& curves);

}  // namespace dermforge
