/**
 * @file grid.hpp
 * @brief Dense row-major 2D grids and bilinear resampling
 *
 * Pixel (row, col) has its center at continuous coordinate (x = col, y = row).
 * Resampling uses half-pixel-centered coordinates (align-corners = false):
 * destination pixel i maps to source coordinate (i + 0.5) * src / dst - 0.5,
 * clamped to the valid sample range.
 */
#pragma once

#include "fetometry/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fetometry {

struct Size {
    int rows = 0;
    int cols = 0;

    friend bool operator==(const Size&, const Size&) = default;
    [[nodiscard]] std::size_t area() const noexcept {
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }
    [[nodiscard]] bool empty() const noexcept { return rows <= 0 || cols <= 0; }
};

template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : size_{rows, cols}, data_(checked_area(rows, cols), fill) {}
    explicit Grid(Size size, T fill = T{}) : Grid(size.rows, size.cols, fill) {}
    Grid(int rows, int cols, std::vector<T> data) : size_{rows, cols}, data_(std::move(data)) {
        if (data_.size() != checked_area(rows, cols)) {
            throw Error(ErrorCode::BadSize, "grid data does not match dimensions");
        }
    }

    [[nodiscard]] int rows() const noexcept { return size_.rows; }
    [[nodiscard]] int cols() const noexcept { return size_.cols; }
    [[nodiscard]] Size size() const noexcept { return size_; }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    T& operator()(int r, int c) noexcept { return data_[index(r, c)]; }
    const T& operator()(int r, int c) const noexcept { return data_[index(r, c)]; }

    [[nodiscard]] bool contains(int r, int c) const noexcept {
        return r >= 0 && c >= 0 && r < size_.rows && c < size_.cols;
    }

    [[nodiscard]] std::span<T> values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    static std::size_t checked_area(int rows, int cols) {
        if (rows < 0 || cols < 0) throw Error(ErrorCode::BadSize, "negative grid dimension");
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }
    [[nodiscard]] std::size_t index(int r, int c) const noexcept {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(size_.cols) +
               static_cast<std::size_t>(c);
    }

    Size size_{};
    std::vector<T> data_;
};

/// Per-pixel probabilities in [0,1]; also used for normalized grayscale frames.
using ProbGrid = Grid<double>;
/// Values are 0 or 1.
using BinaryMask = Grid<std::uint8_t>;

namespace detail {

struct AxisSample {
    int lo;
    int hi;
    double frac;
};

inline std::vector<AxisSample> axis_samples(int src, int dst) {
    std::vector<AxisSample> out(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (int i = 0; i < dst; ++i) {
        double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src - 1));
        const int lo = static_cast<int>(std::floor(s));
        const int hi = std::min(lo + 1, src - 1);
        out[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
    }
    return out;
}

}  // namespace detail

/// Bilinear resample with half-pixel centers. std::lerp keeps every sample
/// inside the input's [min, max].
inline ProbGrid resize_bilinear(const ProbGrid& src, Size target) {
    if (src.empty()) throw Error(ErrorCode::BadImage, "cannot resample an empty grid");
    if (target.empty()) throw Error(ErrorCode::BadSize, "target dimensions must be positive");
    if (target == src.size()) return src;

    const auto ys = detail::axis_samples(src.rows(), target.rows);
    const auto xs = detail::axis_samples(src.cols(), target.cols);
    ProbGrid out(target);
    for (int r = 0; r < target.rows; ++r) {
        const auto& y = ys[static_cast<std::size_t>(r)];
        for (int c = 0; c < target.cols; ++c) {
            const auto& x = xs[static_cast<std::size_t>(c)];
            const double top = std::lerp(src(y.lo, x.lo), src(y.lo, x.hi), x.frac);
            const double bot = std::lerp(src(y.hi, x.lo), src(y.hi, x.hi), x.frac);
            out(r, c) = std::lerp(top, bot, y.frac);
        }
    }
    return out;
}

}  // namespace fetometry
