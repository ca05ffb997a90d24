/**
 * @file geometry.hpp
 * @brief Contours, polyline simplification and the geometric fits measurements are read from
 *
 * Coordinates are continuous (x, y) with pixel (row, col) centered at (col, row).
 */
#pragma once

#include "fetometry/error.hpp"
#include "fetometry/grid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace fetometry {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
    friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }

/// Closed polygon; the closing edge from last to first point is implied.
struct Contour {
    std::vector<Point2> points;
    double area_px = 0.0;  ///< signed shoelace area, positive for outer boundaries
};

struct EllipseParams {
    Point2 center;
    double a = 0.0;      ///< semi-major axis
    double b = 0.0;      ///< semi-minor axis
    double theta = 0.0;  ///< direction of the major axis, radians in [0, pi)
};

struct RotRect {
    Point2 center;
    double length = 0.0;    ///< longer side
    double width = 0.0;
    double rotation = 0.0;  ///< direction of the long side, radians in [0, pi)

    [[nodiscard]] double area() const noexcept { return length * width; }
};

inline double signed_area(std::span<const Point2> pts) {
    double twice = 0.0;
    for (std::size_t i = 0, n = pts.size(); i < n; ++i) twice += cross(pts[i], pts[(i + 1) % n]);
    return 0.5 * twice;
}

inline double closed_perimeter(std::span<const Point2> pts) {
    double total = 0.0;
    for (std::size_t i = 0, n = pts.size(); i < n; ++i) total += norm(pts[(i + 1) % n] - pts[i]);
    return total;
}

inline double normalize_half_turn(double angle) {
    angle = std::fmod(angle, std::numbers::pi);
    if (angle < 0.0) angle += std::numbers::pi;
    if (angle >= std::numbers::pi) angle = 0.0;
    return angle;
}

// ---------------------------------------------------------------------------
// Contour extraction
// ---------------------------------------------------------------------------

namespace detail {

// Traces the outer crack boundary of the component labelled `label`, starting
// at its first pixel in raster order. Emits the midpoint of every boundary
// crack, which coincides with the 0.5 iso-line of marching squares.
inline std::vector<Point2> trace_outer(const Grid<int>& labels, int label, int row0, int col0) {
    static constexpr std::array<int, 4> dx{1, 0, -1, 0};  // E S W N
    static constexpr std::array<int, 4> dy{0, 1, 0, -1};
    auto fg = [&](int r, int c) { return labels.contains(r, c) && labels(r, c) == label; };
    // Pixels ahead-left and ahead-right of a corner, per heading, as (row, col) offsets
    // relative to the corner (corner (x, y) is the top-left corner of pixel (y, x)).
    static constexpr std::array<std::array<int, 4>, 4> ahead{{
        {-1, 0, 0, 0},    // E: left NE, right SE
        {0, 0, 0, -1},    // S: left SE, right SW
        {0, -1, -1, -1},  // W: left SW, right NW
        {-1, -1, -1, 0},  // N: left NW, right NE
    }};

    std::vector<Point2> out;
    int x = col0, y = row0, d = 0;
    const int sx = x, sy = y;
    do {
        out.push_back({x + 0.5 * dx[d] - 0.5, y + 0.5 * dy[d] - 0.5});
        x += dx[d];
        y += dy[d];
        const auto& a = ahead[d];
        const bool left = fg(y + a[0], x + a[1]);
        const bool right = fg(y + a[2], x + a[3]);
        if (!right) {
            d = (d + 1) % 4;
        } else if (left) {
            d = (d + 3) % 4;
        }
    } while (!(x == sx && y == sy && d == 0));
    return out;
}

}  // namespace detail

/// One outer contour per 4-connected foreground component, largest enclosed
/// area first (ties keep raster order of the components' first pixels).
inline std::vector<Contour> extract_contours(const BinaryMask& mask) {
    Grid<int> labels(mask.size(), 0);
    std::vector<std::array<int, 2>> seeds;
    std::vector<std::array<int, 2>> stack;
    int next = 0;
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (mask(r, c) == 0 || labels(r, c) != 0) continue;
            labels(r, c) = ++next;
            seeds.push_back({r, c});
            stack.push_back({r, c});
            while (!stack.empty()) {
                const auto [pr, pc] = stack.back();
                stack.pop_back();
                const std::array<std::array<int, 2>, 4> nbrs{{{pr - 1, pc}, {pr + 1, pc}, {pr, pc - 1}, {pr, pc + 1}}};
                for (const auto& [nr, nc] : nbrs) {
                    if (mask.contains(nr, nc) && mask(nr, nc) != 0 && labels(nr, nc) == 0) {
                        labels(nr, nc) = next;
                        stack.push_back({nr, nc});
                    }
                }
            }
        }
    }

    std::vector<Contour> contours;
    contours.reserve(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        Contour contour;
        contour.points = detail::trace_outer(labels, static_cast<int>(i) + 1, seeds[i][0], seeds[i][1]);
        contour.area_px = signed_area(contour.points);
        contours.push_back(std::move(contour));
    }
    std::stable_sort(contours.begin(), contours.end(), [](const Contour& a, const Contour& b) {
        return std::abs(a.area_px) > std::abs(b.area_px);
    });
    return contours;
}

// ---------------------------------------------------------------------------
// Ramer-Douglas-Peucker
// ---------------------------------------------------------------------------

inline double segment_distance(Point2 p, Point2 a, Point2 b) {
    const Point2 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0) return norm(p - a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

namespace detail {

// Marks kept vertices of the open chain pts[first..last] (indices modulo n).
inline void rdp_mark(std::span<const Point2> pts, std::size_t first, std::size_t last, double eps,
                     std::vector<std::uint8_t>& keep) {
    const std::size_t n = pts.size();
    std::vector<std::array<std::size_t, 2>> work{{first, last}};
    while (!work.empty()) {
        const auto [lo, hi] = work.back();
        work.pop_back();
        const std::size_t span_len = (hi + n - lo) % n;
        if (span_len < 2) continue;
        double worst = -1.0;
        std::size_t split = lo;
        for (std::size_t k = 1; k < span_len; ++k) {
            const std::size_t idx = (lo + k) % n;
            const double d = segment_distance(pts[idx], pts[lo], pts[hi]);
            if (d > worst) {
                worst = d;
                split = idx;
            }
        }
        if (worst >= eps) {
            keep[split] = 1;
            work.push_back({lo, split});
            work.push_back({split, hi});
        }
    }
}

}  // namespace detail

/// Open-polyline RDP: endpoints always kept; a point survives when some
/// recursive chord leaves it at distance >= eps.
inline std::vector<Point2> rdp_polyline(std::span<const Point2> pts, double eps) {
    if (pts.size() < 3) return {pts.begin(), pts.end()};
    std::vector<std::uint8_t> keep(pts.size(), 0);
    keep.front() = keep.back() = 1;
    detail::rdp_mark(pts, 0, pts.size() - 1, eps, keep);
    std::vector<Point2> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (keep[i]) out.push_back(pts[i]);
    }
    return out;
}

/// Closed-contour RDP. The contour is split at its first point and the point
/// farthest from it; each half is simplified as an open chain.
inline Contour rdp_simplify(const Contour& contour, double eps) {
    if (eps < 0.0) throw Error(ErrorCode::BadInput, "RDP tolerance must be non-negative");
    const auto& pts = contour.points;
    if (pts.size() < 3) return contour;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double d = norm(pts[i] - pts[0]);
        if (d > far_d) {
            far_d = d;
            far = i;
        }
    }
    std::vector<std::uint8_t> keep(pts.size(), 0);
    keep[0] = keep[far] = 1;
    detail::rdp_mark(pts, 0, far, eps, keep);
    detail::rdp_mark(pts, far, 0, eps, keep);
    Contour out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (keep[i]) out.points.push_back(pts[i]);
    }
    out.area_px = signed_area(out.points);
    return out;
}

// ---------------------------------------------------------------------------
// Ellipses
// ---------------------------------------------------------------------------

/// General conic A x^2 + B xy + C y^2 + D x + E y + F = 0.
struct Conic {
    double A = 0, B = 0, C = 0, D = 0, E = 0, F = 0;

    [[nodiscard]] double operator()(Point2 p) const {
        return A * p.x * p.x + B * p.x * p.y + C * p.y * p.y + D * p.x + E * p.y + F;
    }
};

/// Implicit form with the interior negative: ((u/a)^2 + (v/b)^2 - 1) in the ellipse frame.
inline Conic to_conic(const EllipseParams& e) {
    const double c = std::cos(e.theta), s = std::sin(e.theta);
    const double ia = 1.0 / (e.a * e.a), ib = 1.0 / (e.b * e.b);
    Conic q;
    q.A = c * c * ia + s * s * ib;
    q.B = 2.0 * c * s * (ia - ib);
    q.C = s * s * ia + c * c * ib;
    q.D = -(2.0 * q.A * e.center.x + q.B * e.center.y);
    q.E = -(q.B * e.center.x + 2.0 * q.C * e.center.y);
    q.F = q.A * e.center.x * e.center.x + q.B * e.center.x * e.center.y +
          q.C * e.center.y * e.center.y - 1.0;
    return q;
}

/// Geometric parameters of an ellipse conic; throws DegenerateFit for
/// hyperbolas, parabolas and empty or imaginary ellipses.
inline EllipseParams to_ellipse(Conic q) {
    if (!(4.0 * q.A * q.C - q.B * q.B > 0.0)) throw Error(ErrorCode::DegenerateFit, "conic is not an ellipse");
    if (q.A + q.C < 0.0) q = {-q.A, -q.B, -q.C, -q.D, -q.E, -q.F};
    const double det = 4.0 * q.A * q.C - q.B * q.B;
    EllipseParams e;
    e.center.x = (q.B * q.E - 2.0 * q.C * q.D) / det;
    e.center.y = (q.B * q.D - 2.0 * q.A * q.E) / det;
    const double f0 = q.F + 0.5 * (q.D * e.center.x + q.E * e.center.y);
    if (!(f0 < 0.0)) throw Error(ErrorCode::DegenerateFit, "conic has no real points");
    const double mean = 0.5 * (q.A + q.C);
    const double radius = std::hypot(0.5 * (q.A - q.C), 0.5 * q.B);
    const double lambda_min = mean - radius;
    const double lambda_max = mean + radius;
    if (!(lambda_min > 0.0)) throw Error(ErrorCode::DegenerateFit, "conic is not an ellipse");
    e.a = std::sqrt(-f0 / lambda_min);
    e.b = std::sqrt(-f0 / lambda_max);
    // lambda_max lies along 0.5 * atan2(B, A - C); the major axis is perpendicular
    e.theta = radius == 0.0 ? 0.0
                            : normalize_half_turn(0.5 * std::atan2(q.B, q.A - q.C) + 0.5 * std::numbers::pi);
    if (!std::isfinite(e.a) || !std::isfinite(e.b)) throw Error(ErrorCode::DegenerateFit, "non-finite ellipse");
    return e;
}

inline bool ellipse_contains(const EllipseParams& e, Point2 p) {
    const Point2 d = p - e.center;
    const double c = std::cos(e.theta), s = std::sin(e.theta);
    const double u = (c * d.x + s * d.y) / e.a;
    const double v = (-s * d.x + c * d.y) / e.b;
    return u * u + v * v <= 1.0;
}

inline Point2 ellipse_point(const EllipseParams& e, double t) {
    const double c = std::cos(e.theta), s = std::sin(e.theta);
    const double u = e.a * std::cos(t), v = e.b * std::sin(t);
    return {e.center.x + c * u - s * v, e.center.y + s * u + c * v};
}

/// Direct least-squares ellipse fit with the partitioned scatter matrix
/// (Halir-Flusser form of Fitzgibbon's method). Points are centered and
/// scaled to unit RMS radius before fitting.
inline EllipseParams fit_ellipse_lsq(std::span<const Point2> points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < 6) throw Error(ErrorCode::DegenerateFit, "ellipse fit needs at least 6 points");

    Point2 mean{};
    for (const auto& p : points) mean = mean + p;
    mean = (1.0 / static_cast<double>(n)) * mean;
    double spread = 0.0;
    for (const auto& p : points) spread += dot(p - mean, p - mean);
    const double scale = std::sqrt(spread / (2.0 * static_cast<double>(n)));
    if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::DegenerateFit, "coincident points");

    Eigen::MatrixXd quad(n, 3), lin(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = (points[static_cast<std::size_t>(i)].x - mean.x) / scale;
        const double y = (points[static_cast<std::size_t>(i)].y - mean.y) / scale;
        quad.row(i) << x * x, x * y, y * y;
        lin.row(i) << x, y, 1.0;
    }
    const Eigen::Matrix3d s1 = quad.transpose() * quad;
    const Eigen::Matrix3d s2 = quad.transpose() * lin;
    const Eigen::Matrix3d s3 = lin.transpose() * lin;
    const Eigen::FullPivLU<Eigen::Matrix3d> s3_lu(s3);
    if (!s3_lu.isInvertible()) throw Error(ErrorCode::DegenerateFit, "collinear points");
    const Eigen::Matrix3d t = -s3_lu.solve(s2.transpose());
    const Eigen::Matrix3d m = s1 + s2 * t;
    Eigen::Matrix3d reduced;
    reduced.row(0) = 0.5 * m.row(2);
    reduced.row(1) = -m.row(1);
    reduced.row(2) = 0.5 * m.row(0);

    const Eigen::EigenSolver<Eigen::Matrix3d> solver(reduced);
    if (solver.info() != Eigen::Success) throw Error(ErrorCode::DegenerateFit, "eigen decomposition failed");
    int best = -1;
    double best_lambda = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3cd vc = solver.eigenvectors().col(k);
        if (vc.imag().norm() > 1e-12 * vc.norm()) continue;
        const Eigen::Vector3d v = vc.real();
        const double constraint = 4.0 * v(0) * v(2) - v(1) * v(1);
        const double lambda = std::abs(solver.eigenvalues()(k).real());
        if (constraint > 0.0 && (best < 0 || lambda < best_lambda)) {
            best = k;
            best_lambda = lambda;
        }
    }
    if (best < 0) throw Error(ErrorCode::DegenerateFit, "no elliptical solution");

    const Eigen::Vector3d a1 = solver.eigenvectors().col(best).real();
    const Eigen::Vector3d a2 = t * a1;
    EllipseParams unit = to_ellipse({a1(0), a1(1), a1(2), a2(0), a2(1), a2(2)});
    EllipseParams e;
    e.center = mean + scale * unit.center;
    e.a = unit.a * scale;
    e.b = unit.b * scale;
    e.theta = unit.theta;
    return e;
}

/// Ramanujan's second approximation.
inline double ellipse_perimeter(const EllipseParams& e) {
    const double sum = e.a + e.b;
    if (sum == 0.0) return 0.0;
    const double r = (e.a - e.b) / sum;
    const double h = r * r;
    return std::numbers::pi * sum * (1.0 + 3.0 * h / (10.0 + std::sqrt(4.0 - 3.0 * h)));
}

// ---------------------------------------------------------------------------
// Convex hull and minimum-area rectangle
// ---------------------------------------------------------------------------

/// Andrew's monotone chain; counter-clockwise (in x-right, y-up terms), no collinear vertices.
inline std::vector<Point2> convex_hull(std::span<const Point2> points) {
    std::vector<Point2> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Point2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

namespace detail {

// Smaller area wins; near-equal areas fall back to the smaller rotation.
inline bool better_rect(const RotRect& cand, const RotRect& best) {
    const double ca = cand.area(), ba = best.area();
    const double tol = 1e-9 * std::max(ca, ba);
    if (ca < ba - tol) return true;
    if (ca > ba + tol) return false;
    return cand.rotation < best.rotation;
}

}  // namespace detail

/// Minimum-area enclosing rectangle by rotating calipers over the convex hull.
inline RotRect min_area_rect(std::span<const Point2> points) {
    const auto hull = convex_hull(points);
    if (hull.size() < 3 || std::abs(signed_area(hull)) <= 1e-12 * std::max(1.0, closed_perimeter(hull))) {
        throw Error(ErrorCode::DegenerateFit, "rectangle fit needs non-collinear points");
    }
    const std::size_t n = hull.size();
    auto next = [n](std::size_t i) { return (i + 1) % n; };
    auto edge_dir = [&](std::size_t i) {
        const Point2 e = hull[next(i)] - hull[i];
        return (1.0 / norm(e)) * e;
    };

    // calipers: far = max along edge direction, top = max along inward normal,
    // back = min along edge direction
    std::size_t far = 1, top = 1, back = 1;
    RotRect best{};
    bool have = false;
    for (std::size_t i = 0; i < n; ++i) {
        const Point2 u = edge_dir(i);
        const Point2 v{-u.y, u.x};
        if (i == 0) far = next(i);
        while (dot(hull[next(far)] - hull[far], u) > 0.0) far = next(far);
        if (i == 0) top = far;
        while (dot(hull[next(top)] - hull[top], v) > 0.0) top = next(top);
        if (i == 0) back = top;
        while (dot(hull[next(back)] - hull[back], u) < 0.0) back = next(back);

        const double umin = dot(hull[back], u), umax = dot(hull[far], u);
        const double vmin = dot(hull[i], v), vmax = dot(hull[top], v);
        RotRect r;
        const double cu = 0.5 * (umin + umax), cv = 0.5 * (vmin + vmax);
        r.center = {cu * u.x + cv * v.x, cu * u.y + cv * v.y};
        const double du = umax - umin, dv = vmax - vmin;
        if (du >= dv) {
            r.length = du;
            r.width = dv;
            r.rotation = normalize_half_turn(std::atan2(u.y, u.x));
        } else {
            r.length = dv;
            r.width = du;
            r.rotation = normalize_half_turn(std::atan2(v.y, v.x));
        }
        if (!have || detail::better_rect(r, best)) {
            best = r;
            have = true;
        }
    }
    return best;
}

}  // namespace fetometry
