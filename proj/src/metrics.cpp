#include "dermforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "dermforge/dataset.hpp"
#include "dermforge/errors.hpp"

namespace dermforge {

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (const auto& row : count)
        for (int64_t v : row) t += v;
    return t;
}

int64_t ConfusionMatrix::row_sum(int cls) const {
    return std::accumulate(count[cls].begin(), count[cls].end(), int64_t{0});
}

int64_t ConfusionMatrix::col_sum(int cls) const {
    int64_t t = 0;
    for (const auto& row : count) t += row[cls];
    return t;
}

int64_t ConfusionMatrix::trace() const {
    int64_t t = 0;
    for (int i = 0; i < kNumClasses; ++i) t += count[i][i];
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& pred_labels, const std::vector<int>& true_labels) {
    if (pred_labels.size() != true_labels.size())
        throw ArgumentError("confusion: prediction/truth lengths differ");
    ConfusionMatrix cm;
    for (size_t i = 0; i < pred_labels.size(); ++i) {
        const int p = pred_labels[i], t = true_labels[i];
        if (p < 0 || p >= kNumClasses || t < 0 || t >= kNumClasses)
            throw ArgumentError("confusion: label out of range at sample " + std::to_string(i));
        ++cm.count[t][p];
    }
    return cm;
}

ClassificationReport report(const ConfusionMatrix& cm) {
    ClassificationReport r;
    r.total = cm.total();
    if (r.total == 0) throw ArgumentError("report: empty confusion matrix");

    for (int c = 0; c < kNumClasses; ++c) {
        ClassMetrics& m = r.per_class[c];
        const int64_t tp = cm.count[c][c];
        const int64_t col = cm.col_sum(c);
        const int64_t row = cm.row_sum(c);
        m.support = row;
        if (col > 0) m.precision = static_cast<double>(tp) / col;
        else m.degenerate = true;
        if (row > 0) m.recall = static_cast<double>(tp) / row;
        else m.degenerate = true;
        if (m.precision + m.recall > 0.0)
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);

        r.macro_precision += m.precision / kNumClasses;
        r.macro_recall += m.recall / kNumClasses;
        r.macro_f1 += m.f1 / kNumClasses;
        r.weighted_precision += m.precision * row;
        r.weighted_recall += m.recall * row;
        r.weighted_f1 += m.f1 * row;
    }
    r.weighted_precision /= r.total;
    r.weighted_recall /= r.total;
    r.weighted_f1 /= r.total;
    r.accuracy = static_cast<double>(cm.trace()) / r.total;
    return r;
}

namespace {

// Threshold sweep over descending scores; tied scores collapse into one step
// so the trapezoid matches the pairwise ranking statistic exactly.
RocCurve roc_one_class(const std::vector<double>& scores, const std::vector<char>& positive,
                       const std::string& cls) {
    RocCurve curve;
    curve.cls = cls;

    int64_t pos = 0, neg = 0;
    for (char p : positive) p ? ++pos : ++neg;
    if (pos == 0 || neg == 0) {
        curve.auc = std::nullopt;
        return curve;
    }

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    int64_t tp = 0, fp = 0;
    double auc = 0.0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        const double thr = scores[order[i]];
        while (i < order.size() && scores[order[i]] == thr) {
            positive[order[i]] ? ++tp : ++fp;
            ++i;
        }
        const double fpr = static_cast<double>(fp) / neg;
        const double tpr = static_cast<double>(tp) / pos;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        curve.points.push_back({thr, fpr, tpr});
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    curve.auc = auc;
    return curve;
}

}  // namespace

std::vector<RocCurve> roc_ovr(const Tensor<float>& probs, const std::vector<int>& true_labels) {
    if (probs.rank() != 2 || probs.dim(1) != kNumClasses)
        throw ShapeError("roc_ovr: probs must be (N," + std::to_string(kNumClasses) + ")");
    if (static_cast<size_t>(probs.dim(0)) != true_labels.size())
        throw ArgumentError("roc_ovr: probs/labels lengths differ");

    const int n = probs.dim(0);
    std::vector<RocCurve> curves;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<double> scores(n);
        std::vector<char> positive(n);
        for (int i = 0; i < n; ++i) {
            scores[i] = probs.at2(i, c);
            positive[i] = true_labels[i] == c ? 1 : 0;
        }
        curves.push_back(roc_one_class(scores, positive, std::string(kClassCodes[c])));
    }

    // macro average over a 0..1 fpr grid, classes with undefined auc excluded
    RocCurve macro;
    macro.cls = "macro";
    double auc_sum = 0.0;
    int defined = 0;
    for (const auto& c : curves)
        if (c.auc) {
            auc_sum += *c.auc;
            ++defined;
        }
    if (defined > 0) {
        const int grid = 101;
        for (int g = 0; g < grid; ++g) {
            const double fpr = static_cast<double>(g) / (grid - 1);
            double tpr_sum = 0.0;
            for (const auto& c : curves) {
                if (!c.auc) continue;
                // interpolate tpr at this fpr
                double tpr = 1.0;
                for (size_t i = 1; i < c.points.size(); ++i) {
                    if (c.points[i].fpr >= fpr) {
                        const auto& a = c.points[i - 1];
                        const auto& b = c.points[i];
                        tpr = b.fpr > a.fpr
                                  ? a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr)
                                  : b.tpr;
                        break;
                    }
                }
                tpr_sum += tpr;
            }
            macro.points.push_back({std::nan(""), fpr, tpr_sum / defined});
        }
        macro.auc = auc_sum / defined;
    }
    curves.push_back(std::move(macro));
    return curves;
}

namespace {

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string render_report(const ClassificationReport& r) {
    std::ostringstream os;
    os << "class  code   precision  recall  f1      support\n";
    for (int c = 0; c < kNumClasses; ++c) {
        const auto& m = r.per_class[c];
        char line[128];
        std::snprintf(line, sizeof(line), "%-6d %-6s %-10s %-7s %-7s %lld%s\n", c,
                      std::string(kClassCodes[c]).c_str(), fmt4(m.precision).c_str(),
                      fmt4(m.recall).c_str(), fmt4(m.f1).c_str(), static_cast<long long>(m.support),
                      m.degenerate ? "  (degenerate)" : "");
        os << line;
    }
    os << "\n";
    os << "macro avg     " << fmt4(r.macro_precision) << "     " << fmt4(r.macro_recall) << "  "
       << fmt4(r.macro_f1) << "\n";
    os << "weighted avg  " << fmt4(r.weighted_precision) << "     " << fmt4(r.weighted_recall) << "  "
       << fmt4(r.weighted_f1) << "\n";
    os << "accuracy      " << fmt4(r.accuracy) << "  (" << r.total << " samples)\n";
    return os.str();
}

std::string report_keyvalues(const ClassificationReport& r) {
    std::ostringstream os;
    for (int c = 0; c < kNumClasses; ++c) {
        const auto& m = r.per_class[c];
        const std::string key = "class." + std::string(kClassCodes[c]);
        os << key << ".index=" << c << "\n";
        os << key << ".precision=" << fmt_full(m.precision) << "\n";
        os << key << ".recall=" << fmt_full(m.recall) << "\n";
        os << key << ".f1=" << fmt_full(m.f1) << "\n";
        os << key << ".support=" << m.support << "\n";
        os << key << ".degenerate=" << (m.degenerate ? 1 : 0) << "\n";
    }
    os << "macro.precision=" << fmt_full(r.macro_precision) << "\n";
    os << "macro.recall=" << fmt_full(r.macro_recall) << "\n";
    os << "macro.f1=" << fmt_full(r.macro_f1) << "\n";
    os << "weighted.precision=" << fmt_full(r.weighted_precision) << "\n";
    os << "weighted.recall=" << fmt_full(r.weighted_recall) << "\n";
    os << "weighted.f1=" << fmt_full(r.weighted_f1) << "\n";
    os << "accuracy=" << fmt_full(r.accuracy) << "\n";
    os << "total=" << r.total << "\n";
    return os.str();
}

std::string roc_csv(const std::vector<RocCurve>& curves) {
    std::ostringstream os;
    os << "class,threshold,fpr,tpr\n";
    for (const auto& c : curves) {
        for (const auto& p : c.points) {
            os << c.cls << ",";
            if (std::isnan(p.threshold)) os << "";
            else if (std::isinf(p.threshold)) os << "inf";
            else os << fmt_full(p.threshold);
            os << "," << fmt_full(p.fpr) << "," << fmt_full(p.tpr) << "\n";
        }
    }
    for (const auto& c : curves) {
        os << "auc," << c.cls << ",";
        if (c.auc) os << fmt_full(*c.auc);
        else os << "undefined";
        os << ",\n";
    }
    return os.str();
}

}  // namespace dermforge
