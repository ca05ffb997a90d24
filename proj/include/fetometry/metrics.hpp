/**
 * @file metrics.hpp
 * @brief Segmentation overlap scores, classification report and evaluation losses
 */
#pragma once

#include "fetometry/error.hpp"
#include "fetometry/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace fetometry {

namespace detail {

struct OverlapCounts {
    std::size_t a = 0, b = 0, both = 0, either = 0;
};

inline OverlapCounts overlap(const BinaryMask& a, const BinaryMask& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::BadSize, "mask sizes differ");
    OverlapCounts n;
    auto va = a.values();
    auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
        const bool ia = va[i] != 0, ib = vb[i] != 0;
        n.a += ia;
        n.b += ib;
        n.both += ia && ib;
        n.either += ia || ib;
    }
    return n;
}

}  // namespace detail

/// Jaccard index; two empty masks agree perfectly (1.0).
inline double iou(const BinaryMask& a, const BinaryMask& b) {
    const auto n = detail::overlap(a, b);
    if (n.either == 0) return 1.0;
    return static_cast<double>(n.both) / static_cast<double>(n.either);
}

inline double dice(const BinaryMask& a, const BinaryMask& b) {
    const auto n = detail::overlap(a, b);
    if (n.a + n.b == 0) return 1.0;
    return 2.0 * static_cast<double>(n.both) / static_cast<double>(n.a + n.b);
}

inline double dice_loss(const ProbGrid& pred, const BinaryMask& gt, double eps = 1e-6) {
    if (pred.size() != gt.size()) throw Error(ErrorCode::BadSize, "prediction and ground truth sizes differ");
    if (!(eps > 0.0)) throw Error(ErrorCode::BadConfig, "dice epsilon must be positive");
    double pg = 0.0, pp = 0.0, gg = 0.0;
    auto vp = pred.values();
    auto vg = gt.values();
    for (std::size_t i = 0; i < vp.size(); ++i) {
        const double g = vg[i] != 0 ? 1.0 : 0.0;
        pg += vp[i] * g;
        pp += vp[i] * vp[i];
        gg += g * g;
    }
    return 1.0 - (2.0 * pg + eps) / (pp + gg + eps);
}

/// Cross-entropy against a one-hot target.
inline double ce_loss(std::span<const double> probs, std::size_t true_class) {
    if (true_class >= probs.size()) throw Error(ErrorCode::BadInput, "true class out of range");
    const double p = probs[true_class];
    if (!(p > 0.0)) throw Error(ErrorCode::InfiniteLoss, "true-class probability is zero");
    return -std::log(p);
}

struct ConfusionTally {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    [[nodiscard]] std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct ClassScores {
    ConfusionTally tally;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct ClassificationReport {
    std::vector<ClassScores> per_class;
    ClassScores macro;  ///< unweighted mean over classes; tally unused
};

inline double safe_ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline double harmonic_f1(double precision, double recall) {
    return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

/// One-vs-rest scores per class. Precision or recall with a zero denominator is 0.
inline ClassificationReport classification_report(std::span<const int> preds, std::span<const int> labels,
                                                  int num_classes = 4) {
    if (preds.size() != labels.size()) throw Error(ErrorCode::BadSize, "prediction and label counts differ");
    for (auto v : preds) {
        if (v < 0 || v >= num_classes) throw Error(ErrorCode::BadInput, "prediction outside class range");
    }
    for (auto v : labels) {
        if (v < 0 || v >= num_classes) throw Error(ErrorCode::BadInput, "label outside class range");
    }
    ClassificationReport report;
    report.per_class.resize(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (int c = 0; c < num_classes; ++c) {
            auto& t = report.per_class[static_cast<std::size_t>(c)].tally;
            const bool p = preds[i] == c, l = labels[i] == c;
            if (p && l) ++t.tp;
            else if (p) ++t.fp;
            else if (l) ++t.fn;
            else ++t.tn;
        }
    }
    for (auto& s : report.per_class) {
        s.accuracy = safe_ratio(s.tally.tp + s.tally.tn, s.tally.total());
        s.precision = safe_ratio(s.tally.tp, s.tally.tp + s.tally.fp);
        s.recall = safe_ratio(s.tally.tp, s.tally.tp + s.tally.fn);
        s.f1 = harmonic_f1(s.precision, s.recall);
        report.macro.accuracy += s.accuracy / num_classes;
        report.macro.precision += s.precision / num_classes;
        report.macro.recall += s.recall / num_classes;
        report.macro.f1 += s.f1 / num_classes;
    }
    return report;
}

}  // namespace fetometry
