/**
 * @file phantom.hpp
 * @brief Synthetic studies with analytically known biometry
 *
 * A PhantomSpec describes one shape per frame in native pixel coordinates.
 * The phantom scorer rasterizes each shape into a probability grid (interior
 * 1, exterior 0, optional additive Gaussian noise, clipped and quantized to
 * 8 bits) and the ground truth is computed from the shape parameters alone.
 */
#pragma once

#include "fetometry/backend.hpp"
#include "fetometry/biometry.hpp"
#include "fetometry/error.hpp"
#include "fetometry/geometry.hpp"
#include "fetometry/ingest.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fetometry {

struct PhantomEllipse {
    double cx = 0, cy = 0, a = 0, b = 0, theta_deg = 0;
};

struct PhantomBar {
    double cx = 0, cy = 0, length = 0, width = 0, theta_deg = 0;
};

struct PhantomFrame {
    BodyPart part = BodyPart::Background;
    std::optional<PhantomEllipse> ellipse;  ///< head, abdomen
    std::optional<PhantomBar> bar;          ///< femur
    std::array<double, 4> probs{0, 0, 0, 1};
};

struct PhantomSpec {
    std::string study_id = "phantom";
    Size native_size{742, 975};
    PixelSpacing spacing{0.3, 0.3};
    std::optional<Size> mask_size;  ///< scorer output resolution, native when absent
    double noise_sigma = 0.0;
    std::vector<PhantomFrame> frames;

    [[nodiscard]] Size output_size() const { return mask_size.value_or(native_size); }
};

struct GroundTruth {
    int frame_index = 0;
    BodyPart part = BodyPart::Background;
    std::optional<double> hc_cm, bpd_cm, ac_cm, fl_cm;
};

inline std::array<double, 4> default_probs(BodyPart part) {
    if (part == BodyPart::Background) return {0.0, 0.0, 0.0, 1.0};
    std::array<double, 4> p{0.01, 0.01, 0.01, 0.01};
    p[static_cast<std::size_t>(part)] = 0.97;
    return p;
}

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

inline EllipseParams to_params(const PhantomEllipse& e) {
    return {{e.cx, e.cy}, std::max(e.a, e.b), std::min(e.a, e.b),
            normalize_half_turn(deg_to_rad(e.theta_deg) + (e.a >= e.b ? 0.0 : std::numbers::pi / 2))};
}

/// Pixel-space ellipse mapped into millimeter space.
inline EllipseParams ellipse_in_mm(const EllipseParams& px, const PixelSpacing& spacing) {
    if (spacing.isotropic()) {
        const double s = spacing.row_mm;
        return {{px.center.x * s, px.center.y * s}, px.a * s, px.b * s, px.theta};
    }
    Conic q = to_conic(px);
    const double sx = spacing.col_mm, sy = spacing.row_mm;
    q = {q.A / (sx * sx), q.B / (sx * sy), q.C / (sy * sy), q.D / sx, q.E / sy, q.F};
    return to_ellipse(q);
}

namespace detail {

inline bool inside_bar(const PhantomBar& bar, double x, double y) {
    const double t = deg_to_rad(bar.theta_deg);
    const double dx = x - bar.cx, dy = y - bar.cy;
    const double u = std::cos(t) * dx + std::sin(t) * dy;
    const double v = -std::sin(t) * dx + std::cos(t) * dy;
    return std::abs(u) <= 0.5 * bar.length && std::abs(v) <= 0.5 * bar.width;
}

inline void check_extent(double lo_x, double hi_x, double lo_y, double hi_y, Size native, int frame) {
    if (lo_x < 0.0 || lo_y < 0.0 || hi_x > native.cols - 1 || hi_y > native.rows - 1) {
        throw Error(ErrorCode::BadSpec, "shape in frame " + std::to_string(frame) + " leaves the frame bounds");
    }
}

}  // namespace detail

inline void validate(const PhantomSpec& spec) {
    if (spec.native_size.empty()) throw Error(ErrorCode::BadSpec, "native_size must be positive");
    if (!(spec.spacing.row_mm > 0.0) || !(spec.spacing.col_mm > 0.0)) throw Error(ErrorCode::BadSpec, "spacing must be positive");
    if (spec.mask_size && spec.mask_size->empty()) throw Error(ErrorCode::BadSpec, "mask_size must be positive");
    if (!(spec.noise_sigma >= 0.0 && spec.noise_sigma < 0.5)) throw Error(ErrorCode::BadSpec, "noise_sigma must lie in [0, 0.5)");
    if (spec.frames.empty()) throw Error(ErrorCode::BadSpec, "phantom needs at least one frame");
    for (std::size_t i = 0; i < spec.frames.size(); ++i) {
        const auto& f = spec.frames[i];
        const int idx = static_cast<int>(i);
        try {
            checked_simplex(f.probs, ErrorCode::BadSpec);
        } catch (const Error& e) {
            throw Error(ErrorCode::BadSpec, "frame " + std::to_string(idx) + ": " + e.what());
        }
        switch (f.part) {
            case BodyPart::Head:
            case BodyPart::Abdomen: {
                if (!f.ellipse || f.bar) throw Error(ErrorCode::BadSpec, "head/abdomen frames need exactly an ellipse");
                const auto& e = *f.ellipse;
                if (!(e.a > 0.0 && e.b > 0.0)) throw Error(ErrorCode::BadSpec, "ellipse axes must be positive");
                const double t = deg_to_rad(e.theta_deg);
                const double hx = std::hypot(e.a * std::cos(t), e.b * std::sin(t));
                const double hy = std::hypot(e.a * std::sin(t), e.b * std::cos(t));
                detail::check_extent(e.cx - hx, e.cx + hx, e.cy - hy, e.cy + hy, spec.native_size, idx);
                break;
            }
            case BodyPart::Femur: {
                if (!f.bar || f.ellipse) throw Error(ErrorCode::BadSpec, "femur frames need exactly a bar");
                const auto& b = *f.bar;
                if (!(b.length > 0.0 && b.width > 0.0)) throw Error(ErrorCode::BadSpec, "bar dimensions must be positive");
                const double t = deg_to_rad(b.theta_deg);
                const double hx = 0.5 * (std::abs(b.length * std::cos(t)) + std::abs(b.width * std::sin(t)));
                const double hy = 0.5 * (std::abs(b.length * std::sin(t)) + std::abs(b.width * std::cos(t)));
                detail::check_extent(b.cx - hx, b.cx + hx, b.cy - hy, b.cy + hy, spec.native_size, idx);
                break;
            }
            case BodyPart::Background:
                if (f.ellipse || f.bar) throw Error(ErrorCode::BadSpec, "background frames carry no shape");
                break;
        }
    }
}

/// Analytic measurements of a frame's shape; independent of rasterization.
inline GroundTruth ground_truth(const PhantomSpec& spec, int frame_index) {
    const auto& f = spec.frames.at(static_cast<std::size_t>(frame_index));
    GroundTruth gt{frame_index, f.part, {}, {}, {}, {}};
    if (f.ellipse) {
        const auto mm = ellipse_in_mm(to_params(*f.ellipse), spec.spacing);
        if (f.part == BodyPart::Head) {
            gt.hc_cm = ellipse_perimeter(mm) / 10.0;
            gt.bpd_cm = 2.0 * mm.b / 10.0;
        } else {
            gt.ac_cm = ellipse_perimeter(mm) / 10.0;
        }
    }
    if (f.bar) gt.fl_cm = px_to_cm(f.bar->length, spec.spacing, deg_to_rad(f.bar->theta_deg));
    return gt;
}

/// Noiseless 0/1 raster of a frame's shape at the given grid size; pixel
/// centers are mapped back to native coordinates with half-pixel alignment.
inline ProbGrid rasterize_shape(const PhantomSpec& spec, int frame_index, Size grid) {
    const auto& f = spec.frames.at(static_cast<std::size_t>(frame_index));
    ProbGrid out(grid, 0.0);
    if (!f.ellipse && !f.bar) return out;
    const double sy = static_cast<double>(spec.native_size.rows) / grid.rows;
    const double sx = static_cast<double>(spec.native_size.cols) / grid.cols;
    std::optional<EllipseParams> ellipse;
    if (f.ellipse) ellipse = to_params(*f.ellipse);
    for (int r = 0; r < grid.rows; ++r) {
        const double y = (r + 0.5) * sy - 0.5;
        for (int c = 0; c < grid.cols; ++c) {
            const double x = (c + 0.5) * sx - 0.5;
            const bool inside = ellipse ? ellipse_contains(*ellipse, {x, y}) : detail::inside_bar(*f.bar, x, y);
            out(r, c) = inside ? 1.0 : 0.0;
        }
    }
    return out;
}

inline std::mt19937_64 frame_rng(std::uint64_t seed, int frame_index, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(frame_index), static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

/// Scorer output for one phantom frame: noisy, clipped, 8-bit quantized probabilities.
inline ProbGrid phantom_mask(const PhantomSpec& spec, int frame_index, std::uint64_t seed) {
    ProbGrid grid = rasterize_shape(spec, frame_index, spec.output_size());
    if (spec.noise_sigma > 0.0) {
        auto rng = frame_rng(seed, frame_index, 1);
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (double& v : grid.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
    return png::normalize(png::quantize(grid));
}

/// Grayscale frame: dim speckled background with a brighter structure.
inline ProbGrid phantom_frame(const PhantomSpec& spec, int frame_index, std::uint64_t seed) {
    ProbGrid grid = rasterize_shape(spec, frame_index, spec.native_size);
    auto rng = frame_rng(seed, frame_index, 2);
    std::normal_distribution<double> speckle(0.0, 0.05);
    for (double& v : grid.values()) v = std::clamp(0.15 + 0.6 * v + speckle(rng), 0.0, 1.0);
    return png::normalize(png::quantize(grid));
}

class PhantomScorer final : public FrameScorer {
public:
    PhantomScorer(PhantomSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) { validate(spec_); }

    [[nodiscard]] ScorerCapabilities capabilities() const override { return {4, spec_.output_size(), true}; }
    [[nodiscard]] std::size_t frame_count() const override { return spec_.frames.size(); }

    [[nodiscard]] ScoredFrame score(int frame_index, const ProbGrid& /*frame*/) const override {
        if (frame_index < 0 || static_cast<std::size_t>(frame_index) >= spec_.frames.size()) {
            throw Error(ErrorCode::BadInput, "phantom has no frame " + std::to_string(frame_index));
        }
        return {spec_.frames[static_cast<std::size_t>(frame_index)].probs, phantom_mask(spec_, frame_index, seed_)};
    }

    [[nodiscard]] const PhantomSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::vector<GroundTruth> truth() const {
        std::vector<GroundTruth> out;
        for (std::size_t i = 0; i < spec_.frames.size(); ++i) out.push_back(ground_truth(spec_, static_cast<int>(i)));
        return out;
    }

    [[nodiscard]] StudyMeta meta() const {
        return {spec_.study_id, spec_.spacing, spec_.native_size, static_cast<int>(spec_.frames.size()), {}};
    }

    [[nodiscard]] FrameSequence sequence() const {
        FrameSequence seq{meta(), {}};
        for (std::size_t i = 0; i < spec_.frames.size(); ++i) seq.frames.push_back(phantom_frame(spec_, static_cast<int>(i), seed_));
        return seq;
    }

private:
    PhantomSpec spec_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// phantom.json
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const PhantomSpec& spec) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : spec.frames) {
        nlohmann::json jf{{"part", to_string(f.part)}, {"probs", f.probs}};
        if (f.ellipse) {
            const auto& e = *f.ellipse;
            jf["ellipse"] = {{"cx", e.cx}, {"cy", e.cy}, {"a", e.a}, {"b", e.b}, {"theta_deg", e.theta_deg}};
        }
        if (f.bar) {
            const auto& b = *f.bar;
            jf["bar"] = {{"cx", b.cx}, {"cy", b.cy}, {"length", b.length}, {"width", b.width}, {"theta_deg", b.theta_deg}};
        }
        frames.push_back(std::move(jf));
    }
    nlohmann::json j{
        {"study_id", spec.study_id},
        {"native_size", {spec.native_size.rows, spec.native_size.cols}},
        {"pixel_spacing_mm", {spec.spacing.row_mm, spec.spacing.col_mm}},
        {"noise_sigma", spec.noise_sigma},
        {"frames", frames},
    };
    j["mask_size"] = spec.mask_size ? nlohmann::json{spec.mask_size->rows, spec.mask_size->cols} : nlohmann::json();
    return j;
}

inline PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
    PhantomSpec spec;
    try {
        spec.study_id = j.value("study_id", std::string("phantom"));
        const auto& ns = j.at("native_size");
        spec.native_size = {ns.at(0).get<int>(), ns.at(1).get<int>()};
        const auto& sp = j.at("pixel_spacing_mm");
        spec.spacing = {sp.at(0).get<double>(), sp.at(1).get<double>()};
        if (j.contains("mask_size") && !j["mask_size"].is_null()) {
            spec.mask_size = Size{j["mask_size"].at(0).get<int>(), j["mask_size"].at(1).get<int>()};
        }
        spec.noise_sigma = j.value("noise_sigma", 0.0);
        for (const auto& jf : j.at("frames")) {
            PhantomFrame f;
            f.part = body_part_from_string(jf.at("part").get<std::string>());
            if (jf.contains("ellipse")) {
                const auto& e = jf["ellipse"];
                f.ellipse = PhantomEllipse{e.at("cx").get<double>(), e.at("cy").get<double>(), e.at("a").get<double>(),
                                           e.at("b").get<double>(), e.value("theta_deg", 0.0)};
            }
            if (jf.contains("bar")) {
                const auto& b = jf["bar"];
                f.bar = PhantomBar{b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("length").get<double>(),
                                   b.at("width").get<double>(), b.value("theta_deg", 0.0)};
            }
            if (jf.contains("probs")) {
                const auto& p = jf["probs"];
                if (!p.is_array() || p.size() != 4) throw Error(ErrorCode::BadSpec, "probs must have 4 entries");
                for (std::size_t k = 0; k < 4; ++k) f.probs[k] = p[k].get<double>();
            } else {
                f.probs = default_probs(f.part);
            }
            spec.frames.push_back(f);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadSpec, e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BadSpec) throw;
        throw Error(ErrorCode::BadSpec, e.what());
    }
    validate(spec);
    return spec;
}

/// 30-frame study on a 742 x 975 grid at 0.3 mm/px with one ideal frame per
/// part (frames 7, 15, 23), weaker gated frames around them, and background.
/// Sizes correspond to biometry of roughly 28 weeks.
inline PhantomSpec default_phantom_spec() {
    PhantomSpec spec;
    spec.study_id = "phantom-default";
    spec.frames.resize(30);
    auto head = [](double scale, double theta) { return PhantomEllipse{480.0, 370.0, 160.0 * scale, 120.0 * scale, theta}; };
    auto abdomen = [](double scale, double theta) { return PhantomEllipse{500.0, 360.0, 145.0 * scale, 115.0 * scale, theta}; };
    auto femur = [](double scale, double theta) { return PhantomBar{490.0, 380.0, 170.0 * scale, 16.0, theta}; };
    for (int i = 0; i < 30; ++i) {
        auto& f = spec.frames[static_cast<std::size_t>(i)];
        if (i >= 4 && i <= 10) {
            f.part = BodyPart::Head;
            f.ellipse = head(i == 7 ? 1.0 : 0.8 + 0.02 * (i - 4), 20.0 + i);
            f.probs = i == 7       ? std::array<double, 4>{0.98, 0.01, 0.005, 0.005}
                      : i % 2 == 0 ? std::array<double, 4>{0.93, 0.02, 0.02, 0.03}
                                   : std::array<double, 4>{0.80, 0.05, 0.05, 0.10};
        } else if (i >= 12 && i <= 18) {
            f.part = BodyPart::Abdomen;
            f.ellipse = abdomen(i == 15 ? 1.0 : 0.8 + 0.01 * i, 5.0 * i);
            f.probs = i == 15 ? std::array<double, 4>{0.01, 0.97, 0.01, 0.01}
                              : std::array<double, 4>{0.02, 0.92, 0.03, 0.03};
        } else if (i >= 20 && i <= 26) {
            f.part = BodyPart::Femur;
            f.bar = femur(i == 23 ? 1.0 : 0.7 + 0.01 * i, 20.0);
            f.probs = i == 23 ? std::array<double, 4>{0.005, 0.005, 0.98, 0.01}
                              : std::array<double, 4>{0.02, 0.02, 0.91, 0.05};
        } else {
            f.part = BodyPart::Background;
            f.probs = {0.05, 0.05, 0.05, 0.85};
        }
    }
    return spec;
}

}  // namespace fetometry
