/**
 * @file png_io.hpp
 * @brief 8-bit single-channel PNG reading and writing (libpng simplified API)
 */
#pragma once

#include "fetometry/error.hpp"
#include "fetometry/grid.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fetometry::png {

using Gray8 = Grid<std::uint8_t>;

inline Gray8 read_gray8(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    const std::string name = path.string();
    if (png_image_begin_read_from_file(&image, name.c_str()) == 0) {
        throw Error(ErrorCode::BadImage, name + ": " + image.message);
    }
    constexpr png_uint_32 rejected =
        PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA | PNG_FORMAT_FLAG_LINEAR;
    if ((image.format & rejected) != 0) {
        png_image_free(&image);
        throw Error(ErrorCode::BadImage, name + ": expected 8-bit single-channel PNG");
    }
    image.format = PNG_FORMAT_GRAY;
    const int rows = static_cast<int>(image.height);
    const int cols = static_cast<int>(image.width);
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
        const std::string message = image.message;
        png_image_free(&image);
        throw Error(ErrorCode::BadImage, name + ": " + message);
    }
    return Gray8(rows, cols, std::move(buffer));
}

inline void write_gray8(const std::filesystem::path& path, const Gray8& pixels) {
    if (pixels.empty()) throw Error(ErrorCode::BadImage, "refusing to write an empty image");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(pixels.cols());
    image.height = static_cast<png_uint_32>(pixels.rows());
    image.format = PNG_FORMAT_GRAY;
    const std::string name = path.string();
    if (png_image_write_to_file(&image, name.c_str(), 0, pixels.values().data(), 0, nullptr) == 0) {
        throw Error(ErrorCode::BadImage, name + ": " + image.message);
    }
}

/// Values in [0,1] to 8-bit, rounding to nearest.
inline Gray8 quantize(const ProbGrid& grid) {
    Gray8 out(grid.size());
    auto dst = out.values();
    auto src = grid.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = std::clamp(src[i], 0.0, 1.0);
        dst[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

inline ProbGrid normalize(const Gray8& pixels) {
    ProbGrid out(pixels.size());
    auto dst = out.values();
    auto src = pixels.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] / 255.0;
    return out;
}

}  // namespace fetometry::png
