/**
 * @file pipeline.hpp
 * @brief Study analysis (score, gate, measure, select, estimate, report) and
 *        backend evaluation against ground-truth fixtures
 */
#pragma once

#include "fetometry/backend.hpp"
#include "fetometry/biometry.hpp"
#include "fetometry/config.hpp"
#include "fetometry/error.hpp"
#include "fetometry/estimation.hpp"
#include "fetometry/ingest.hpp"
#include "fetometry/metrics.hpp"
#include "fetometry/morphology.hpp"
#include "fetometry/parallel.hpp"
#include "fetometry/planes.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fetometry {

inline constexpr int kReportSchema = 1;

enum class FrameStatus { Ok, ScorerFailed, Unmeasurable };

/// Per-frame trace of the analysis, used for the optional CSV dump.
struct FrameRecord {
    int frame_index = 0;
    FrameStatus status = FrameStatus::Ok;
    std::array<double, 4> probs{};
    BodyPart argmax = BodyPart::Background;
    std::optional<BodyPart> gated;
    std::optional<double> measurement_cm;
    std::optional<double> composite;
};

struct Winner {
    int frame_index = 0;
    double class_score = 0.0;
    std::optional<double> ellipse_similarity;
    double normalized_measurement = 0.0;
    double composite = 0.0;
    std::map<std::string, double> measurements_cm;  ///< keyed by HC, BPD, AC, FL

    friend bool operator==(const Winner&, const Winner&) = default;
};

struct StudyReport {
    int schema = kReportSchema;
    std::string study_id;
    std::map<std::string, std::optional<Winner>> selection;  ///< head, abdomen, femur
    BiometrySet biometry;
    std::vector<std::string> warnings;
    double timing_ms = 0.0;
    nlohmann::json config;
    std::vector<FrameRecord> frames;  ///< not serialized in the report

    /// Equality over the serialized content, timing excluded.
    [[nodiscard]] bool same_content(const StudyReport& o) const {
        return schema == o.schema && study_id == o.study_id && selection == o.selection && biometry == o.biometry &&
               warnings == o.warnings && config == o.config;
    }
};

namespace detail {

inline Winner to_winner(const CandidateFrame& c) {
    Winner w{c.frame_index, c.class_score, c.ellipse_similarity, c.normalized_measurement, c.composite, {}};
    w.measurements_cm[std::string(to_string(c.measurement.kind))] = c.measurement.value_cm;
    if (c.secondary) w.measurements_cm[std::string(to_string(c.secondary->kind))] = c.secondary->value_cm;
    return w;
}

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline std::optional<double> optional_double(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace detail

/// Scores every frame, measures gated frames and selects one winner per part.
/// Frame failures are recorded as warnings; only a study where every frame
/// fails to score raises AllFramesFailed.
inline StudyReport analyze_study(const FrameSequence& seq, const FrameScorer& scorer, const PipelineConfig& config) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const auto caps = scorer.capabilities();
    if (scorer.frame_count() != seq.frames.size()) {
        throw Error(ErrorCode::BadFixture, "scorer provides " + std::to_string(scorer.frame_count()) +
                                               " frames but the study has " + std::to_string(seq.frames.size()));
    }
    const SelectionConfig sel_cfg = config.selection();
    const std::size_t n = seq.frames.size();

    std::vector<FrameRecord> records(n);
    std::vector<std::optional<CandidateFrame>> slots(n);
    std::vector<std::string> frame_warnings(n);
    parallel_for(n, caps.thread_safe ? config.threads : 1u, [&](std::size_t i) {
        auto& rec = records[i];
        rec.frame_index = static_cast<int>(i);
        ScoredFrame out;
        try {
            out = checked_output(scorer.score(rec.frame_index, seq.frames[i]), caps);
        } catch (const std::exception& e) {
            rec.status = FrameStatus::ScorerFailed;
            frame_warnings[i] = "frame " + std::to_string(i) + ": scorer failed: " + e.what();
            return;
        }
        const FrameScore score{rec.frame_index, out.probs};
        rec.probs = out.probs;
        rec.argmax = score.part();
        rec.gated = gate_frame(score, config.gate_threshold);
        try {
            slots[i] = evaluate_candidate(score, out.mask, seq.meta.native_size, seq.meta.spacing, sel_cfg);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Unmeasurable) throw;
            rec.status = FrameStatus::Unmeasurable;
            frame_warnings[i] = "frame " + std::to_string(i) + ": gated as " + std::string(to_string(*rec.gated)) +
                                " but unmeasurable: " + e.what();
        }
    });

    StudyReport report;
    report.study_id = seq.meta.study_id;
    report.config = to_json(config);
    bool any_scored = n == 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (records[i].status != FrameStatus::ScorerFailed) any_scored = true;
        if (!frame_warnings[i].empty()) report.warnings.push_back(frame_warnings[i]);
    }
    if (!any_scored) throw Error(ErrorCode::AllFramesFailed, "every frame failed to score");

    std::vector<CandidateFrame> candidates;
    for (auto& s : slots) {
        if (s) candidates.push_back(std::move(*s));
    }
    score_candidates(candidates, config.weights);
    for (const auto& c : candidates) {
        auto& rec = records[static_cast<std::size_t>(c.frame_index)];
        rec.measurement_cm = c.measurement.value_cm;
        rec.composite = c.composite;
    }
    const PlaneSelection selection = pick_winners(candidates);

    BiometrySet bio;
    for (auto part : kMeasuredParts) {
        const auto& win = selection.get(part);
        report.selection[std::string(to_string(part))] = win ? std::optional<Winner>(detail::to_winner(*win)) : std::nullopt;
        if (!win) {
            report.warnings.push_back("no standard plane found for " + std::string(to_string(part)));
            continue;
        }
        switch (part) {
            case BodyPart::Head:
                bio.hc_cm = win->measurement.value_cm;
                if (win->secondary) bio.bpd_cm = win->secondary->value_cm;
                break;
            case BodyPart::Abdomen: bio.ac_cm = win->measurement.value_cm; break;
            case BodyPart::Femur: bio.fl_cm = win->measurement.value_cm; break;
            case BodyPart::Background: break;
        }
    }
    report.biometry = complete_or_skip(bio);
    if (!report.biometry.complete()) {
        report.warnings.emplace_back("biometry incomplete; gestational age and fetal weight not estimated");
    }
    for (auto& w : estimation_warnings(report.biometry)) report.warnings.push_back(std::move(w));
    report.frames = std::move(records);
    report.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const BiometrySet& b) {
    return {
        {"hc_cm", detail::optional_json(b.hc_cm)},       {"bpd_cm", detail::optional_json(b.bpd_cm)},
        {"ac_cm", detail::optional_json(b.ac_cm)},       {"fl_cm", detail::optional_json(b.fl_cm)},
        {"ga_weeks", detail::optional_json(b.ga_weeks)}, {"efw_g", detail::optional_json(b.efw_g)},
        {"growth_percentile", nullptr},
    };
}

inline nlohmann::json to_json(const StudyReport& r) {
    nlohmann::json selection = nlohmann::json::object();
    for (const auto& [part, win] : r.selection) {
        if (!win) {
            selection[part] = nullptr;
            continue;
        }
        selection[part] = {
            {"frame_index", win->frame_index},
            {"class_score", win->class_score},
            {"ellipse_similarity", detail::optional_json(win->ellipse_similarity)},
            {"normalized_measurement", win->normalized_measurement},
            {"composite", win->composite},
            {"measurements_cm", win->measurements_cm},
        };
    }
    return {
        {"schema", r.schema},         {"study_id", r.study_id}, {"selection", selection},
        {"biometry", to_json(r.biometry)}, {"warnings", r.warnings}, {"timing_ms", r.timing_ms},
        {"config", r.config},
    };
}

inline StudyReport study_report_from_json(const nlohmann::json& j) {
    StudyReport r;
    try {
        r.schema = j.at("schema").get<int>();
        if (r.schema != kReportSchema) throw Error(ErrorCode::BadInput, "unsupported report schema");
        r.study_id = j.at("study_id").get<std::string>();
        for (const auto& [part, win] : j.at("selection").items()) {
            if (win.is_null()) {
                r.selection[part] = std::nullopt;
                continue;
            }
            Winner w;
            w.frame_index = win.at("frame_index").get<int>();
            w.class_score = win.at("class_score").get<double>();
            w.ellipse_similarity = detail::optional_double(win, "ellipse_similarity");
            w.normalized_measurement = win.at("normalized_measurement").get<double>();
            w.composite = win.at("composite").get<double>();
            w.measurements_cm = win.at("measurements_cm").get<std::map<std::string, double>>();
            r.selection[part] = w;
        }
        const auto& b = j.at("biometry");
        r.biometry.hc_cm = detail::optional_double(b, "hc_cm");
        r.biometry.bpd_cm = detail::optional_double(b, "bpd_cm");
        r.biometry.ac_cm = detail::optional_double(b, "ac_cm");
        r.biometry.fl_cm = detail::optional_double(b, "fl_cm");
        r.biometry.ga_weeks = detail::optional_double(b, "ga_weeks");
        r.biometry.efw_g = detail::optional_double(b, "efw_g");
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        r.timing_ms = j.at("timing_ms").get<double>();
        r.config = j.at("config");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadInput, e.what());
    }
    return r;
}

inline constexpr std::string_view kFramesCsvHeader = "frame,part,p_head,p_abd,p_fem,p_bg,gated,measurement_cm,composite";

inline void write_frames_csv(const std::filesystem::path& path, const StudyReport& r) {
    std::ofstream out(path);
    out << kFramesCsvHeader << '\n';
    for (const auto& f : r.frames) {
        out << f.frame_index << ',' << (f.status == FrameStatus::ScorerFailed ? "failed" : to_string(f.argmax));
        for (double p : f.probs) out << ',' << format_double(p);
        out << ',' << (f.gated ? 1 : 0) << ',';
        if (f.measurement_cm) out << format_double(*f.measurement_cm);
        out << ',';
        if (f.composite) out << format_double(*f.composite);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Backend evaluation
// ---------------------------------------------------------------------------

/// Ground-truth fixture: study.json, scores.csv with the true class as the
/// argmax, and mask_%06d.png binary masks (>= 128 is foreground).
struct TruthSet {
    StudyMeta meta;
    std::vector<int> labels;
    std::vector<BinaryMask> masks;
    std::vector<ProbGrid> frames;  ///< empty grids when the fixture has no frame images
};

inline TruthSet load_truth(const std::filesystem::path& dir) {
    TruthSet t;
    try {
        t.meta = read_study_meta(dir);
    } catch (const Error& e) {
        throw Error(ErrorCode::BadFixture, e.what());
    }
    const auto rows = read_scores_csv(dir / "scores.csv");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].frame_index != static_cast<int>(i)) throw Error(ErrorCode::BadFixture, "truth frame indices must be 0..N-1");
        t.labels.push_back(static_cast<int>(FrameScore{rows[i].frame_index, rows[i].probs}.part()));
        BinaryMask mask;
        try {
            mask = threshold(png::normalize(png::read_gray8(dir / mask_file_name(static_cast<int>(i)))), 0.5);
        } catch (const Error& e) {
            throw Error(ErrorCode::BadFixture, e.what());
        }
        t.masks.push_back(std::move(mask));
    }
    if (std::filesystem::exists(dir / frame_file_name(0))) {
        t.frames = load_study(dir).frames;
    } else {
        t.frames.assign(rows.size(), ProbGrid{});
    }
    if (t.frames.size() != rows.size()) throw Error(ErrorCode::BadFixture, "truth frames and score rows differ in count");
    return t;
}

struct OverlapSummary {
    double iou = 0.0;
    double dice = 0.0;
    std::size_t frames = 0;
};

struct MeasurementError {
    double mean_mm = 0.0;
    std::size_t frames = 0;
    std::size_t unmeasurable = 0;
};

struct EvaluationBundle {
    std::size_t frame_count = 0;
    std::array<OverlapSummary, 4> per_class{};  ///< indexed by BodyPart
    OverlapSummary foreground;                  ///< all head/abdomen/femur frames
    ClassificationReport classification;
    std::map<std::string, MeasurementError> measurement_error;  ///< HC, BPD, AC, FL
    double dice_loss_mean = 0.0;
    std::optional<double> ce_loss_mean;
    std::size_t ce_infinite = 0;
};

namespace detail {

struct FrameEval {
    int pred = 3;
    double iou = 0.0, dice = 0.0, dice_loss = 0.0;
    std::optional<double> ce;
    std::map<std::string, std::optional<double>> error_mm;  ///< nullopt when unmeasurable
};

inline std::map<std::string, double> measure_part(BodyPart part, const BinaryMask& clean, const PixelSpacing& spacing,
                                                  const MeasureParams& params) {
    std::map<std::string, double> out;
    switch (part) {
        case BodyPart::Head: {
            const auto h = measure_head(clean, spacing, params);
            out["HC"] = h.hc.value_cm;
            out["BPD"] = h.bpd.value_cm;
            break;
        }
        case BodyPart::Abdomen: out["AC"] = measure_abdomen(clean, spacing, params).value_cm; break;
        case BodyPart::Femur: out["FL"] = measure_femur(clean, spacing).value_cm; break;
        case BodyPart::Background: break;
    }
    return out;
}

inline std::vector<std::string> kinds_for(BodyPart part) {
    switch (part) {
        case BodyPart::Head: return {"HC", "BPD"};
        case BodyPart::Abdomen: return {"AC"};
        case BodyPart::Femur: return {"FL"};
        case BodyPart::Background: break;
    }
    return {};
}

}  // namespace detail

/// Segmentation overlap per true class, classification report over argmax
/// labels, and mean absolute measurement error between the measurement on
/// the predicted mask and on the truth mask (same postprocessing, true part).
inline EvaluationBundle evaluate_backend(const FrameScorer& scorer, const TruthSet& truth, const PipelineConfig& config) {
    config.validate();
    const std::size_t n = truth.labels.size();
    if (scorer.frame_count() != n) {
        throw Error(ErrorCode::BadFixture, "backend has " + std::to_string(scorer.frame_count()) +
                                               " frames but the truth set has " + std::to_string(n));
    }
    const auto caps = scorer.capabilities();
    const MeasureParams mparams{config.rdp_eps_rel, config.rdp_eps_max_px};
    std::vector<detail::FrameEval> evals(n);
    parallel_for(n, caps.thread_safe ? config.threads : 1u, [&](std::size_t i) {
        const auto out = checked_output(scorer.score(static_cast<int>(i), truth.frames[i]), caps, ErrorCode::BadFixture);
        const auto& gt = truth.masks[i];
        auto& ev = evals[i];
        ev.pred = static_cast<int>(FrameScore{static_cast<int>(i), out.probs}.part());
        const ProbGrid prob = upsample_mask(out.mask, gt.size());
        const BinaryMask pred = threshold(prob, config.mask_threshold);
        ev.iou = iou(pred, gt);
        ev.dice = dice(pred, gt);
        ev.dice_loss = dice_loss(prob, gt, config.dice_eps);
        try {
            ev.ce = ce_loss(out.probs, static_cast<std::size_t>(truth.labels[i]));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::InfiniteLoss) throw;
        }
        const auto part = static_cast<BodyPart>(truth.labels[i]);
        if (part == BodyPart::Background) return;
        const auto native = truth.meta.native_size;
        std::map<std::string, double> want, got;
        try {
            want = detail::measure_part(part, postprocess(to_prob(gt), native, {0.5}), truth.meta.spacing, mparams);
            got = detail::measure_part(part, postprocess(out.mask, native, {config.mask_threshold}), truth.meta.spacing, mparams);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Unmeasurable) throw;
        }
        for (const auto& kind : detail::kinds_for(part)) {
            if (want.contains(kind) && got.contains(kind)) {
                ev.error_mm[kind] = std::abs(got[kind] - want[kind]) * 10.0;
            } else {
                ev.error_mm[kind] = std::nullopt;
            }
        }
    });

    EvaluationBundle b;
    b.frame_count = n;
    std::vector<int> preds;
    double ce_sum = 0.0;
    std::size_t ce_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ev = evals[i];
        preds.push_back(ev.pred);
        auto& cls = b.per_class[static_cast<std::size_t>(truth.labels[i])];
        cls.iou += ev.iou;
        cls.dice += ev.dice;
        ++cls.frames;
        if (truth.labels[i] != static_cast<int>(BodyPart::Background)) {
            b.foreground.iou += ev.iou;
            b.foreground.dice += ev.dice;
            ++b.foreground.frames;
        }
        b.dice_loss_mean += ev.dice_loss;
        if (ev.ce) {
            ce_sum += *ev.ce;
            ++ce_count;
        } else {
            ++b.ce_infinite;
        }
        for (const auto& [kind, err] : ev.error_mm) {
            auto& me = b.measurement_error[kind];
            if (err) {
                me.mean_mm += *err;
                ++me.frames;
            } else {
                ++me.unmeasurable;
            }
        }
    }
    for (auto* s : {&b.per_class[0], &b.per_class[1], &b.per_class[2], &b.per_class[3], &b.foreground}) {
        if (s->frames > 0) {
            s->iou /= static_cast<double>(s->frames);
            s->dice /= static_cast<double>(s->frames);
        }
    }
    for (auto& [kind, me] : b.measurement_error) {
        if (me.frames > 0) me.mean_mm /= static_cast<double>(me.frames);
    }
    if (n > 0) b.dice_loss_mean /= static_cast<double>(n);
    if (ce_count > 0) b.ce_loss_mean = ce_sum / static_cast<double>(ce_count);
    b.classification = classification_report(preds, truth.labels, 4);
    return b;
}

inline nlohmann::json to_json(const EvaluationBundle& b) {
    auto overlap = [](const OverlapSummary& s) {
        return nlohmann::json{{"iou", s.iou}, {"dice", s.dice}, {"frames", s.frames}};
    };
    auto scores = [](const ClassScores& s) {
        return nlohmann::json{{"accuracy", s.accuracy}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
    };
    nlohmann::json seg = nlohmann::json::object();
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < 4; ++c) {
        const auto name = std::string(to_string(static_cast<BodyPart>(c)));
        seg[name] = overlap(b.per_class[c]);
        auto j = scores(b.classification.per_class[c]);
        const auto& t = b.classification.per_class[c].tally;
        j["tp"] = t.tp;
        j["fp"] = t.fp;
        j["tn"] = t.tn;
        j["fn"] = t.fn;
        per_class[name] = j;
    }
    seg["foreground"] = overlap(b.foreground);
    nlohmann::json errors = nlohmann::json::object();
    for (const auto& [kind, me] : b.measurement_error) {
        errors[kind] = {{"mean_mm", me.frames > 0 ? nlohmann::json(me.mean_mm) : nlohmann::json()},
                        {"frames", me.frames},
                        {"unmeasurable", me.unmeasurable}};
    }
    return {
        {"schema", kReportSchema},
        {"frames", b.frame_count},
        {"segmentation", seg},
        {"classification", {{"per_class", per_class}, {"macro", scores(b.classification.macro)}}},
        {"measurement_error_mm", errors},
        {"losses", {{"dice_loss_mean", b.dice_loss_mean}, {"ce_loss_mean", detail::optional_json(b.ce_loss_mean)}, {"ce_infinite", b.ce_infinite}}},
    };
}

}  // namespace fetometry
