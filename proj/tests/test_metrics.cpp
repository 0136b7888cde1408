#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dermforge/metrics.hpp"
#include "dermforge/rng.hpp"

using namespace dermforge;

TEST_CASE("confusion counting") {
    SUBCASE("all correct is diagonal") {
        std::vector<int> labels = {0, 1, 2, 3, 4, 5, 6, 3, 3};
        ConfusionMatrix cm = confusion(labels, labels);
        CHECK(cm.total() == 9);
        CHECK(cm.trace() == 9);
    }
    SUBCASE("empty input is a zero matrix") {
        ConfusionMatrix cm = confusion({}, {});
        CHECK(cm.total() == 0);
    }
    SUBCASE("hand-counted cells") {
        ConfusionMatrix cm = confusion({0, 1, 1}, {0, 0, 1});
        CHECK(cm.count[0][0] == 1);
        CHECK(cm.count[0][1] == 1);
        CHECK(cm.count[1][1] == 1);
        CHECK(cm.total() == 3);
    }
    SUBCASE("out-of-range labels are rejected") {
        CHECK_THROWS_AS(confusion({7}, {0}), ArgumentError);
        CHECK_THROWS_AS(confusion({0}, {-1}), ArgumentError);
        CHECK_THROWS_AS(confusion({0, 1}, {0}), ArgumentError);
    }
}

TEST_CASE("perfect classifier scores ones") {
    std::vector<int> labels;
    for (int c = 0; c < kNumClasses; ++c)
        for (int i = 0; i <= c; ++i) labels.push_back(c);
    ClassificationReport r = report(confusion(labels, labels));
    for (int c = 0; c < kNumClasses; ++c) {
        CHECK(r.per_class[c].precision == doctest::Approx(1.0));
        CHECK(r.per_class[c].recall == doctest::Approx(1.0));
        CHECK(r.per_class[c].f1 == doctest::Approx(1.0));
    }
    CHECK(r.accuracy == doctest::Approx(1.0));
    CHECK(r.macro_f1 == doctest::Approx(1.0));
}

TEST_CASE("binary confusion embedded in classes 0 and 1") {
    // truth 0: 8 correct, 2 predicted as 1; truth 1: 1 predicted as 0, 9 correct
    std::vector<int> pred, truth;
    for (int i = 0; i < 8; ++i) { pred.push_back(0); truth.push_back(0); }
    for (int i = 0; i < 2; ++i) { pred.push_back(1); truth.push_back(0); }
    for (int i = 0; i < 1; ++i) { pred.push_back(0); truth.push_back(1); }
    for (int i = 0; i < 9; ++i) { pred.push_back(1); truth.push_back(1); }

    ClassificationReport r = report(confusion(pred, truth));
    CHECK(r.per_class[0].precision == doctest::Approx(8.0 / 9.0));
    CHECK(r.per_class[0].recall == doctest::Approx(0.8));
    CHECK(r.per_class[0].f1 == doctest::Approx(0.8421).epsilon(1e-3));
    CHECK(r.accuracy == doctest::Approx(17.0 / 20.0));
}

TEST_CASE("zero-denominator classes flag as degenerate with zero metrics") {
    // only classes 0 and 1 appear
    ClassificationReport r = report(confusion({0, 1}, {0, 1}));
    CHECK(r.per_class[4].precision == 0.0);
    CHECK(r.per_class[4].recall == 0.0);
    CHECK(r.per_class[4].f1 == 0.0);
    CHECK(r.per_class[4].degenerate);
    CHECK_FALSE(r.per_class[0].degenerate);
}

TEST_CASE("report rejects an empty matrix") {
    ConfusionMatrix cm;
    CHECK_THROWS_AS(report(cm), ArgumentError);
}

TEST_CASE("weighted recall equals accuracy and permutation changes nothing") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 40 + static_cast<int>(rng.bounded(60));
        std::vector<int> pred(n), truth(n);
        for (int i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.bounded(kNumClasses));
            truth[i] = static_cast<int>(rng.bounded(kNumClasses));
        }
        ClassificationReport r = report(confusion(pred, truth));
        CHECK(r.weighted_recall == doctest::Approx(r.accuracy).epsilon(1e-12));

        double direct = 0.0;
        for (int i = 0; i < n; ++i) direct += pred[i] == truth[i] ? 1.0 : 0.0;
        CHECK(r.accuracy == doctest::Approx(direct / n).epsilon(1e-12));

        // permute the sample order
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        std::vector<int> pred2(n), truth2(n);
        for (int i = 0; i < n; ++i) {
            pred2[i] = pred[perm[i]];
            truth2[i] = truth[perm[i]];
        }
        ClassificationReport r2 = report(confusion(pred2, truth2));
        CHECK(r2.accuracy == doctest::Approx(r.accuracy).epsilon(1e-15));
        CHECK(r2.macro_f1 == doctest::Approx(r.macro_f1).epsilon(1e-15));
    }
}

namespace {

// auc as the pairwise ranking statistic: fraction of (positive, negative)
// pairs ranked correctly, ties worth half
double pairwise_auc(const std::vector<double>& scores, const std::vector<char>& positive) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

// build a 7-class prob tensor whose class-0 column carries the scores
Tensor<float> scores_to_probs(const std::vector<double>& scores) {
    Tensor<float> probs({static_cast<int>(scores.size()), kNumClasses});
    for (size_t i = 0; i < scores.size(); ++i) {
        probs.at2(static_cast<int>(i), 0) = static_cast<float>(scores[i]);
        probs.at2(static_cast<int>(i), 1) = static_cast<float>(1.0 - scores[i]);
    }
    return probs;
}

std::vector<int> positives_to_labels(const std::vector<char>& positive) {
    std::vector<int> labels(positive.size());
    for (size_t i = 0; i < positive.size(); ++i) labels[i] = positive[i] ? 0 : 1;
    return labels;
}

}  // namespace

TEST_CASE("roc handles the canonical score sets") {
    SUBCASE("perfectly separated scores give auc 1") {
        auto curves = roc_ovr(scores_to_probs({0.9, 0.8, 0.2, 0.1}), positives_to_labels({1, 1, 0, 0}));
        REQUIRE(curves[0].auc.has_value());
        CHECK(*curves[0].auc == doctest::Approx(1.0));
    }
    SUBCASE("identical scores give auc 0.5") {
        auto curves = roc_ovr(scores_to_probs({0.4, 0.4, 0.4, 0.4}), positives_to_labels({1, 1, 0, 0}));
        REQUIRE(curves[0].auc.has_value());
        CHECK(*curves[0].auc == doctest::Approx(0.5));
        // one step from (0,0) straight to (1,1)
        CHECK(curves[0].points.front().fpr == doctest::Approx(0.0));
        CHECK(curves[0].points.back().fpr == doctest::Approx(1.0));
        CHECK(curves[0].points.back().tpr == doctest::Approx(1.0));
    }
    SUBCASE("hand-evaluated mixed rankings") {
        auto c1 = roc_ovr(scores_to_probs({0.9, 0.8, 0.7, 0.1}), positives_to_labels({1, 1, 0, 0}));
        CHECK(*c1[0].auc == doctest::Approx(1.0));
        auto c2 = roc_ovr(scores_to_probs({0.9, 0.4, 0.7, 0.1}), positives_to_labels({1, 1, 0, 0}));
        CHECK(*c2[0].auc == doctest::Approx(0.75));
    }
    SUBCASE("single-class truth leaves auc undefined") {
        // labels {0,0}: class 0 has no negatives, every other class no positives
        auto all_pos = roc_ovr(scores_to_probs({0.9, 0.8}), positives_to_labels({1, 1}));
        for (int c = 0; c < kNumClasses; ++c) CHECK_FALSE(all_pos[c].auc.has_value());

        // mixed labels define exactly the populated classes
        auto mixed = roc_ovr(scores_to_probs({0.9, 0.8, 0.3}), positives_to_labels({1, 1, 0}));
        CHECK(mixed[0].auc.has_value());
        CHECK(mixed[1].auc.has_value());
        for (int c = 2; c < kNumClasses; ++c) CHECK_FALSE(mixed[c].auc.has_value());
    }
}

TEST_CASE("roc curves are monotone and anchored") {
    Rng rng(22);
    std::vector<double> scores(30);
    std::vector<char> positive(30);
    for (int i = 0; i < 30; ++i) {
        scores[i] = rng.uniform(0, 1);
        positive[i] = rng.next_double() < 0.4 ? 1 : 0;
    }
    auto curves = roc_ovr(scores_to_probs(scores), positives_to_labels(positive));
    const auto& pts = curves[0].points;
    REQUIRE(pts.size() >= 2);
    CHECK(pts.front().fpr == 0.0);
    CHECK(pts.front().tpr == 0.0);
    CHECK(pts.back().fpr == doctest::Approx(1.0));
    CHECK(pts.back().tpr == doctest::Approx(1.0));
    for (size_t i = 1; i < pts.size(); ++i) {
        CHECK(pts[i].fpr >= pts[i - 1].fpr);
        CHECK(pts[i].tpr >= pts[i - 1].tpr);
    }
}

TEST_CASE("trapezoidal auc equals the brute-force pair statistic") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 5 + static_cast<int>(rng.bounded(20));
        std::vector<double> scores(n);
        std::vector<char> positive(n);
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            // quantized scores so ties actually occur
            scores[i] = rng.bounded(8) / 8.0;
            positive[i] = rng.next_double() < 0.5 ? 1 : 0;
            pos += positive[i];
        }
        if (pos == 0 || pos == n) continue;
        auto curves = roc_ovr(scores_to_probs(scores), positives_to_labels(positive));
        REQUIRE(curves[0].auc.has_value());
        CHECK(std::abs(*curves[0].auc - pairwise_auc(scores, positive)) < 1e-9);
    }
}

TEST_CASE("report serialization carries indices, codes, and full precision") {
    ClassificationReport r = report(confusion({0, 1, 5, 5}, {0, 1, 5, 4}));
    const std::string table = render_report(r);
    CHECK(table.find("nv") != std::string::npos);
    CHECK(table.find("akiec") != std::string::npos);
    CHECK(table.find("accuracy") != std::string::npos);

    const std::string kv = report_keyvalues(r);
    CHECK(kv.find("class.nv.index=5") != std::string::npos);
    CHECK(kv.find("accuracy=0.75") != std::string::npos);
    CHECK(kv.find("total=4") != std::string::npos);

    auto curves = roc_ovr(scores_to_probs({0.9, 0.1}), positives_to_labels({1, 0}));
    const std::string csv = roc_csv(curves);
    CHECK(csv.find("class,threshold,fpr,tpr") == 0);
    CHECK(csv.find("auc,akiec,") != std::string::npos);
    CHECK(csv.find("auc,macro,") != std::string::npos);
}
