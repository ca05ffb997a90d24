/**
 * @file biometry.hpp
 * @brief Physical measurements (HC, BPD, AC, FL) from clean body-part masks
 *
 * All fits happen in millimeter space: contour point (x, y) in pixels maps to
 * (x * col_mm, y * row_mm). Fitted ellipses and rectangles are therefore
 * reported in millimeters, and lengths divide by 10 for centimeters.
 */
#pragma once

#include "fetometry/error.hpp"
#include "fetometry/geometry.hpp"
#include "fetometry/grid.hpp"
#include "fetometry/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fetometry {

enum class BodyPart { Head = 0, Abdomen = 1, Femur = 2, Background = 3 };

inline constexpr std::array<BodyPart, 3> kMeasuredParts{BodyPart::Head, BodyPart::Abdomen, BodyPart::Femur};

constexpr std::string_view to_string(BodyPart part) noexcept {
    switch (part) {
        case BodyPart::Head: return "head";
        case BodyPart::Abdomen: return "abdomen";
        case BodyPart::Femur: return "femur";
        case BodyPart::Background: return "background";
    }
    return "background";
}

inline BodyPart body_part_from_string(std::string_view name) {
    for (auto part : {BodyPart::Head, BodyPart::Abdomen, BodyPart::Femur, BodyPart::Background}) {
        if (to_string(part) == name) return part;
    }
    throw Error(ErrorCode::BadInput, "unknown body part '" + std::string(name) + "'");
}

enum class MeasureKind { HC, BPD, AC, FL };

constexpr std::string_view to_string(MeasureKind kind) noexcept {
    switch (kind) {
        case MeasureKind::HC: return "HC";
        case MeasureKind::BPD: return "BPD";
        case MeasureKind::AC: return "AC";
        case MeasureKind::FL: return "FL";
    }
    return "HC";
}

struct Measurement {
    BodyPart part = BodyPart::Head;
    MeasureKind kind = MeasureKind::HC;
    double value_cm = 0.0;
    int frame_index = -1;
    std::optional<EllipseParams> ellipse;  ///< millimeter space
    std::optional<RotRect> rect;           ///< millimeter space
};

struct HeadMeasurements {
    Measurement hc;
    Measurement bpd;
};

struct BiometrySet {
    std::optional<double> hc_cm;
    std::optional<double> bpd_cm;
    std::optional<double> ac_cm;
    std::optional<double> fl_cm;
    std::optional<double> ga_weeks;
    std::optional<double> efw_g;

    [[nodiscard]] bool complete() const noexcept { return hc_cm && bpd_cm && ac_cm && fl_cm; }
    friend bool operator==(const BiometrySet&, const BiometrySet&) = default;
};

struct MeasureParams {
    /// RDP tolerance as a fraction of the contour perimeter; 0 disables simplification.
    double rdp_eps_rel = 0.01;
    /// Upper bound on the RDP tolerance in pixels. RDP keeps the vertices
    /// farthest from each chord, so a tolerance above the half-pixel staircase
    /// amplitude of a traced contour biases the fitted ellipse outward.
    double rdp_eps_max_px = 0.5;

    [[nodiscard]] double tolerance_mm(double perimeter_mm, const PixelSpacing& spacing) const {
        return std::min(rdp_eps_rel * perimeter_mm, rdp_eps_max_px * std::min(spacing.row_mm, spacing.col_mm));
    }
};

/// Millimeters per pixel along a segment with direction `direction_rad`
/// (0 = along columns / x axis).
inline double effective_spacing_mm(const PixelSpacing& spacing, double direction_rad) {
    if (spacing.isotropic()) return spacing.row_mm;
    return std::hypot(std::cos(direction_rad) * spacing.col_mm, std::sin(direction_rad) * spacing.row_mm);
}

inline double px_to_cm(double px, const PixelSpacing& spacing, double direction_rad = 0.0) {
    if (!(px >= 0.0)) throw Error(ErrorCode::BadInput, "pixel length must be non-negative");
    return px * effective_spacing_mm(spacing, direction_rad) / 10.0;
}

inline Point2 to_mm(Point2 p, const PixelSpacing& spacing) { return {p.x * spacing.col_mm, p.y * spacing.row_mm}; }

inline std::vector<Point2> to_mm(std::span<const Point2> pts, const PixelSpacing& spacing) {
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(to_mm(p, spacing));
    return out;
}

namespace detail {

inline std::vector<Point2> largest_contour_mm(const BinaryMask& mask, const PixelSpacing& spacing) {
    const auto contours = extract_contours(mask);
    if (contours.empty()) throw Error(ErrorCode::Unmeasurable, "mask has no foreground");
    return to_mm(contours.front().points, spacing);
}

inline EllipseParams fit_contour_ellipse(const BinaryMask& mask, const PixelSpacing& spacing,
                                         const MeasureParams& params) {
    Contour contour;
    contour.points = largest_contour_mm(mask, spacing);
    const double eps = params.tolerance_mm(closed_perimeter(contour.points), spacing);
    if (eps > 0.0) {
        auto simplified = rdp_simplify(contour, eps);
        // small blobs can simplify below the six points a conic needs
        if (simplified.points.size() >= 6) contour = std::move(simplified);
    }
    try {
        return fit_ellipse_lsq(contour.points);
    } catch (const Error& e) {
        throw Error(ErrorCode::Unmeasurable, e.what());
    }
}

}  // namespace detail

/// HC from the fitted ellipse perimeter; BPD as the outer-outer short axis 2b.
inline HeadMeasurements measure_head(const BinaryMask& mask, const PixelSpacing& spacing,
                                     const MeasureParams& params = {}, int frame_index = -1) {
    const auto ellipse = detail::fit_contour_ellipse(mask, spacing, params);
    HeadMeasurements out;
    out.hc = {BodyPart::Head, MeasureKind::HC, ellipse_perimeter(ellipse) / 10.0, frame_index, ellipse, std::nullopt};
    out.bpd = {BodyPart::Head, MeasureKind::BPD, 2.0 * ellipse.b / 10.0, frame_index, ellipse, std::nullopt};
    return out;
}

inline Measurement measure_abdomen(const BinaryMask& mask, const PixelSpacing& spacing,
                                   const MeasureParams& params = {}, int frame_index = -1) {
    const auto ellipse = detail::fit_contour_ellipse(mask, spacing, params);
    return {BodyPart::Abdomen, MeasureKind::AC, ellipse_perimeter(ellipse) / 10.0, frame_index, ellipse, std::nullopt};
}

/// FL is the long side of the minimum-area rectangle around the raw largest contour.
inline Measurement measure_femur(const BinaryMask& mask, const PixelSpacing& spacing, int frame_index = -1) {
    const auto points = detail::largest_contour_mm(mask, spacing);
    RotRect rect;
    try {
        rect = min_area_rect(points);
    } catch (const Error& e) {
        throw Error(ErrorCode::Unmeasurable, e.what());
    }
    return {BodyPart::Femur, MeasureKind::FL, rect.length / 10.0, frame_index, std::nullopt, rect};
}

}  // namespace fetometry
