/**
 * @file morphology.hpp
 * @brief Probability-grid to clean binary mask: upsample, threshold, open, median
 *
 * Border policy: pixels outside the grid are 0 for erosion and dilation; the
 * median filter replicates edge pixels.
 */
#pragma once

#include "fetometry/error.hpp"
#include "fetometry/grid.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace fetometry {

inline ProbGrid upsample_mask(const ProbGrid& prob, Size target) {
    if (target.empty()) throw Error(ErrorCode::BadSize, "zero target dimension");
    return resize_bilinear(prob, target);
}

/// out = 1 iff prob >= p (inclusive).
inline BinaryMask threshold(const ProbGrid& prob, double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::BadThreshold, "threshold must lie in (0,1)");
    BinaryMask out(prob.size());
    auto dst = out.values();
    auto src = prob.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= p ? 1 : 0;
    return out;
}

namespace detail {

// Inclusive prefix sums along rows and columns, padded by one leading zero.
struct RunSums {
    int rows, cols;
    std::vector<int> row_sum;  // rows x (cols + 1)
    std::vector<int> col_sum;  // (rows + 1) x cols

    explicit RunSums(const BinaryMask& m)
        : rows(m.rows()), cols(m.cols()),
          row_sum(static_cast<std::size_t>(rows) * (cols + 1), 0),
          col_sum(static_cast<std::size_t>(rows + 1) * cols, 0) {
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                row_sum[r * (cols + 1) + c + 1] = row_sum[r * (cols + 1) + c] + m(r, c);
                col_sum[(r + 1) * cols + c] = col_sum[r * cols + c] + m(r, c);
            }
        }
    }

    // Count of ones in row r, columns [c - k, c + k] clipped to the grid.
    [[nodiscard]] int horizontal(int r, int c, int k) const {
        const int lo = std::max(c - k, 0);
        const int hi = std::min(c + k, cols - 1);
        return row_sum[r * (cols + 1) + hi + 1] - row_sum[r * (cols + 1) + lo];
    }
    [[nodiscard]] int vertical(int r, int c, int k) const {
        const int lo = std::max(r - k, 0);
        const int hi = std::min(r + k, rows - 1);
        return col_sum[(hi + 1) * cols + c] - col_sum[lo * cols + c];
    }
};

}  // namespace detail

/// Erosion by the cross of arm length `arm` (5x5 cross: arm = 2).
inline BinaryMask erode_cross(const BinaryMask& mask, int arm = 2) {
    BinaryMask out(mask.size());
    if (mask.empty()) return out;
    const detail::RunSums sums(mask);
    const int full = 2 * arm + 1;
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            // out-of-grid samples are 0, so a clipped window can never be full
            out(r, c) = sums.horizontal(r, c, arm) == full && sums.vertical(r, c, arm) == full;
        }
    }
    return out;
}

inline BinaryMask dilate_cross(const BinaryMask& mask, int arm = 2) {
    BinaryMask out(mask.size());
    if (mask.empty()) return out;
    const detail::RunSums sums(mask);
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            out(r, c) = sums.horizontal(r, c, arm) > 0 || sums.vertical(r, c, arm) > 0;
        }
    }
    return out;
}

/// Morphological opening with the 5x5 cross structuring element.
inline BinaryMask open_cross5(const BinaryMask& mask) { return dilate_cross(erode_cross(mask)); }

/// Median of a k x k window (k odd) with edge replication. On binary input
/// the median is a majority vote, evaluated with a 2D prefix sum over the
/// replicated image.
inline BinaryMask median_smooth(const BinaryMask& mask, int kernel) {
    BinaryMask out(mask.size());
    if (mask.empty()) return out;
    const int half = kernel / 2;
    const int rows = mask.rows();
    const int cols = mask.cols();
    const int prow = rows + 2 * half;
    const int pcol = cols + 2 * half;
    std::vector<int> integral(static_cast<std::size_t>(prow + 1) * (pcol + 1), 0);
    auto at = [&](int r, int c) -> int& { return integral[static_cast<std::size_t>(r) * (pcol + 1) + c]; };
    for (int r = 0; r < prow; ++r) {
        const int sr = std::clamp(r - half, 0, rows - 1);
        int run = 0;
        for (int c = 0; c < pcol; ++c) {
            run += mask(sr, std::clamp(c - half, 0, cols - 1));
            at(r + 1, c + 1) = at(r, c + 1) + run;
        }
    }
    const int majority = kernel * kernel / 2 + 1;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            // window in padded coordinates is [r, r + kernel) x [c, c + kernel)
            const int ones = at(r + kernel, c + kernel) - at(r, c + kernel) - at(r + kernel, c) + at(r, c);
            out(r, c) = ones >= majority;
        }
    }
    return out;
}

inline BinaryMask median_smooth13(const BinaryMask& mask) { return median_smooth(mask, 13); }

inline ProbGrid to_prob(const BinaryMask& mask) {
    ProbGrid out(mask.size());
    auto dst = out.values();
    auto src = mask.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] != 0 ? 1.0 : 0.0;
    return out;
}

struct PostprocessParams {
    double mask_threshold = 0.6;
};

/// Full chain in prose order: upsample, threshold, open, median.
inline BinaryMask postprocess(const ProbGrid& prob, Size native, const PostprocessParams& params = {}) {
    return median_smooth13(open_cross5(threshold(upsample_mask(prob, native), params.mask_threshold)));
}

}  // namespace fetometry
