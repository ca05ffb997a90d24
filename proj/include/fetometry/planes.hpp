/**
 * @file planes.hpp
 * @brief Standard-plane gating and best-frame selection per body part
 *
 * A frame is a candidate for a part when that part's class probability
 * exceeds the gate (strictly). Candidates are ranked by a weighted average of
 * class score, measurement normalized by the per-video maximum for the part,
 * and (head, abdomen) the IoU between the fitted ellipse and the segmentation.
 * Ties go to the lowest frame index.
 */
#pragma once

#include "fetometry/biometry.hpp"
#include "fetometry/error.hpp"
#include "fetometry/geometry.hpp"
#include "fetometry/grid.hpp"
#include "fetometry/morphology.hpp"
#include "fetometry/parallel.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fetometry {

struct FrameScore {
    int frame_index = 0;
    std::array<double, 4> probs{0.0, 0.0, 0.0, 1.0};  ///< head, abdomen, femur, background

    /// Argmax class; the first maximum wins.
    [[nodiscard]] BodyPart part() const noexcept {
        std::size_t best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i) {
            if (probs[i] > probs[best]) best = i;
        }
        return static_cast<BodyPart>(best);
    }
    [[nodiscard]] double prob(BodyPart p) const noexcept { return probs[static_cast<std::size_t>(p)]; }
};

inline constexpr double kDefaultGateThreshold = 0.9;

inline std::optional<BodyPart> gate_frame(const FrameScore& score, double gate_threshold = kDefaultGateThreshold) {
    for (auto part : kMeasuredParts) {
        if (score.prob(part) > gate_threshold) return part;
    }
    return std::nullopt;
}

/// IoU between the filled ellipse (millimeter space) and the mask's pixels.
inline double ellipse_similarity(const BinaryMask& mask, const EllipseParams& ellipse_mm,
                                 const PixelSpacing& spacing = {}) {
    const Conic q = to_conic(ellipse_mm);
    std::size_t both = 0, either = 0, mask_count = 0;
    for (int r = 0; r < mask.rows(); ++r) {
        const double y = r * spacing.row_mm;
        for (int c = 0; c < mask.cols(); ++c) {
            const bool in_mask = mask(r, c) != 0;
            const bool in_ellipse = q({c * spacing.col_mm, y}) <= 0.0;
            mask_count += in_mask;
            both += in_mask && in_ellipse;
            either += in_mask || in_ellipse;
        }
    }
    if (mask_count == 0 || either == 0) return 0.0;
    return static_cast<double>(both) / static_cast<double>(either);
}

struct CompositeWeights {
    std::array<double, 2> femur{0.5, 0.5};               ///< class score, measurement
    std::array<double, 3> ellipse_parts{0.4, 0.3, 0.3};  ///< class score, measurement, similarity

    void validate() const {
        auto check = [](std::span<const double> w, const char* name) {
            double sum = 0.0;
            for (double v : w) {
                if (!(v >= 0.0)) throw Error(ErrorCode::BadConfig, std::string(name) + " weights must be non-negative");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::BadConfig, std::string(name) + " weights must sum to 1");
        };
        check(femur, "weights.femur");
        check(ellipse_parts, "weights.ellipse_parts");
    }
};

inline double composite_score(double norm_measurement, double class_score, std::optional<double> similarity,
                              BodyPart part, const CompositeWeights& weights = {}) {
    weights.validate();
    if (part == BodyPart::Femur) {
        return weights.femur[0] * class_score + weights.femur[1] * norm_measurement;
    }
    if (part == BodyPart::Head || part == BodyPart::Abdomen) {
        if (!similarity) throw Error(ErrorCode::BadInput, "head and abdomen composites need an ellipse similarity");
        const auto& w = weights.ellipse_parts;
        return w[0] * class_score + w[1] * norm_measurement + w[2] * *similarity;
    }
    throw Error(ErrorCode::BadInput, "background frames are never scored");
}

struct CandidateFrame {
    int frame_index = 0;
    BodyPart part = BodyPart::Head;
    double class_score = 0.0;
    Measurement measurement;               ///< HC, AC or FL: the value that is ranked
    std::optional<Measurement> secondary;  ///< BPD for head frames
    std::optional<double> ellipse_similarity;
    double normalized_measurement = 0.0;
    double composite = 0.0;
};

struct PlaneSelection {
    std::optional<CandidateFrame> head;
    std::optional<CandidateFrame> abdomen;
    std::optional<CandidateFrame> femur;

    [[nodiscard]] const std::optional<CandidateFrame>& get(BodyPart part) const {
        switch (part) {
            case BodyPart::Head: return head;
            case BodyPart::Abdomen: return abdomen;
            case BodyPart::Femur: return femur;
            case BodyPart::Background: break;
        }
        throw Error(ErrorCode::BadInput, "background has no selection");
    }
    std::optional<CandidateFrame>& get(BodyPart part) {
        return const_cast<std::optional<CandidateFrame>&>(std::as_const(*this).get(part));
    }
    [[nodiscard]] bool empty() const noexcept { return !head && !abdomen && !femur; }
};

struct SelectionConfig {
    double gate_threshold = kDefaultGateThreshold;
    double mask_threshold = 0.6;
    MeasureParams measure;
    CompositeWeights weights;
    unsigned threads = 1;
};

/// Measures one gated frame. `prob` is the scorer's segmentation grid at any
/// size; it is upsampled to `native` before thresholding. Returns nullopt for
/// frames that are not gated; throws Unmeasurable when the mask cannot be fit.
inline std::optional<CandidateFrame> evaluate_candidate(const FrameScore& score, const ProbGrid& prob, Size native,
                                                        const PixelSpacing& spacing, const SelectionConfig& cfg) {
    const auto part = gate_frame(score, cfg.gate_threshold);
    if (!part) return std::nullopt;
    const BinaryMask raw = threshold(upsample_mask(prob, native), cfg.mask_threshold);
    const BinaryMask clean = median_smooth13(open_cross5(raw));

    CandidateFrame cand;
    cand.frame_index = score.frame_index;
    cand.part = *part;
    cand.class_score = score.prob(*part);
    switch (*part) {
        case BodyPart::Head: {
            auto head = measure_head(clean, spacing, cfg.measure, score.frame_index);
            cand.ellipse_similarity = ellipse_similarity(raw, *head.hc.ellipse, spacing);
            cand.measurement = std::move(head.hc);
            cand.secondary = std::move(head.bpd);
            break;
        }
        case BodyPart::Abdomen:
            cand.measurement = measure_abdomen(clean, spacing, cfg.measure, score.frame_index);
            cand.ellipse_similarity = ellipse_similarity(raw, *cand.measurement.ellipse, spacing);
            break;
        case BodyPart::Femur:
            cand.measurement = measure_femur(clean, spacing, score.frame_index);
            break;
        case BodyPart::Background:
            return std::nullopt;
    }
    return cand;
}

/// Normalizes each candidate's measurement by the per-video maximum for its
/// part and fills in the composite score.
inline void score_candidates(std::vector<CandidateFrame>& candidates, const CompositeWeights& weights = {}) {
    weights.validate();
    std::array<double, 3> max_value{0.0, 0.0, 0.0};
    for (const auto& c : candidates) {
        auto& m = max_value[static_cast<std::size_t>(c.part)];
        m = std::max(m, c.measurement.value_cm);
    }
    for (auto& c : candidates) {
        const double max_v = max_value[static_cast<std::size_t>(c.part)];
        c.normalized_measurement = max_v > 0.0 ? c.measurement.value_cm / max_v : 0.0;
        c.composite = composite_score(c.normalized_measurement, c.class_score, c.ellipse_similarity, c.part, weights);
    }
}

/// Highest composite per part, ties to the lowest frame index; independent of candidate order.
inline PlaneSelection pick_winners(const std::vector<CandidateFrame>& scored) {
    PlaneSelection sel;
    for (const auto& c : scored) {
        auto& slot = sel.get(c.part);
        if (!slot || c.composite > slot->composite ||
            (c.composite == slot->composite && c.frame_index < slot->frame_index)) {
            slot = c;
        }
    }
    return sel;
}

inline PlaneSelection select_winners(std::vector<CandidateFrame> candidates, const CompositeWeights& weights = {}) {
    score_candidates(candidates, weights);
    return pick_winners(candidates);
}

struct ScoredMask {
    FrameScore score;
    ProbGrid mask;
};

/// Gate, measure and select over a whole video. Frames whose masks cannot be
/// measured are dropped from candidacy.
inline PlaneSelection select_best(std::span<const ScoredMask> frames, Size native, const PixelSpacing& spacing,
                                  const SelectionConfig& cfg = {}) {
    std::vector<std::optional<CandidateFrame>> slots(frames.size());
    parallel_for(frames.size(), cfg.threads, [&](std::size_t i) {
        try {
            slots[i] = evaluate_candidate(frames[i].score, frames[i].mask, native, spacing, cfg);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Unmeasurable) throw;
        }
    });
    std::vector<CandidateFrame> candidates;
    for (auto& s : slots) {
        if (s) candidates.push_back(std::move(*s));
    }
    return select_winners(std::move(candidates), cfg.weights);
}

}  // namespace fetometry
