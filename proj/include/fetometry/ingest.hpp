/**
 * @file ingest.hpp
 * @brief Study loading: sidecar metadata, PNG frame sequence, privacy masking
 *
 * A study directory holds `study.json` and frames `frame_%06d.png` numbered
 * 0..N-1. Frames are 8-bit grayscale and are normalized to [0,1] on load.
 */
#pragma once

#include "fetometry/error.hpp"
#include "fetometry/grid.hpp"
#include "fetometry/png_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace fetometry {

/// Millimeters per pixel along each image axis.
struct PixelSpacing {
    double row_mm = 1.0;
    double col_mm = 1.0;

    friend bool operator==(const PixelSpacing&, const PixelSpacing&) = default;
    [[nodiscard]] bool isotropic() const noexcept { return row_mm == col_mm; }
};

/// Axis-aligned pixel rectangle, x/y are the column/row of the top-left pixel.
struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct StudyMeta {
    std::string study_id;
    PixelSpacing spacing;
    Size native_size;
    int frame_count = 0;
    std::vector<PixelRect> mask_regions;

    friend bool operator==(const StudyMeta&, const StudyMeta&) = default;
};

struct FrameSequence {
    StudyMeta meta;
    std::vector<ProbGrid> frames;
};

inline constexpr Size kModelInputSize{224, 224};

inline std::string frame_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06d.png", index);
    return buf;
}

inline void validate(const StudyMeta& meta) {
    if (meta.study_id.empty()) throw Error(ErrorCode::BadMetadata, "study_id must be non-empty");
    if (!(meta.spacing.row_mm > 0.0) || !(meta.spacing.col_mm > 0.0) ||
        !std::isfinite(meta.spacing.row_mm) || !std::isfinite(meta.spacing.col_mm)) {
        throw Error(ErrorCode::BadMetadata, "pixel_spacing_mm components must be positive");
    }
    if (meta.native_size.rows <= 0 || meta.native_size.cols <= 0) {
        throw Error(ErrorCode::BadMetadata, "native_size components must be positive");
    }
    if (meta.frame_count <= 0) throw Error(ErrorCode::BadMetadata, "frame_count must be positive");
    for (const auto& r : meta.mask_regions) {
        if (r.x < 0 || r.y < 0 || r.width < 0 || r.height < 0 ||
            r.x + r.width > meta.native_size.cols || r.y + r.height > meta.native_size.rows) {
            throw Error(ErrorCode::BadMetadata, "mask region lies outside the native frame");
        }
    }
}

inline nlohmann::json to_json(const StudyMeta& meta) {
    nlohmann::json regions = nlohmann::json::array();
    for (const auto& r : meta.mask_regions) regions.push_back({r.x, r.y, r.width, r.height});
    return {
        {"study_id", meta.study_id},
        {"pixel_spacing_mm", {meta.spacing.row_mm, meta.spacing.col_mm}},
        {"native_size", {meta.native_size.rows, meta.native_size.cols}},
        {"frame_count", meta.frame_count},
        {"mask_regions", regions},
    };
}

inline StudyMeta study_meta_from_json(const nlohmann::json& j) {
    StudyMeta meta;
    try {
        meta.study_id = j.at("study_id").get<std::string>();
        const auto& sp = j.at("pixel_spacing_mm");
        if (!sp.is_array() || sp.size() != 2) throw Error(ErrorCode::BadMetadata, "pixel_spacing_mm must be [row, col]");
        meta.spacing = {sp[0].get<double>(), sp[1].get<double>()};
        const auto& ns = j.at("native_size");
        if (!ns.is_array() || ns.size() != 2) throw Error(ErrorCode::BadMetadata, "native_size must be [h, w]");
        meta.native_size = {ns[0].get<int>(), ns[1].get<int>()};
        meta.frame_count = j.at("frame_count").get<int>();
        if (j.contains("mask_regions")) {
            for (const auto& r : j.at("mask_regions")) {
                if (!r.is_array() || r.size() != 4) throw Error(ErrorCode::BadMetadata, "mask region must be [x, y, w, h]");
                meta.mask_regions.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<int>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadMetadata, e.what());
    }
    validate(meta);
    return meta;
}

inline StudyMeta read_study_meta(const std::filesystem::path& dir) {
    const auto path = dir / "study.json";
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::BadMetadata, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadMetadata, path.string() + ": " + e.what());
    }
    return study_meta_from_json(j);
}

inline void apply_mask_regions(ProbGrid& frame, const std::vector<PixelRect>& regions) {
    for (const auto& r : regions) {
        for (int y = r.y; y < r.y + r.height; ++y) {
            for (int x = r.x; x < r.x + r.width; ++x) frame(y, x) = 0.0;
        }
    }
}

/// Loads `study.json` and every frame; frame indices must be exactly 0..frame_count-1.
inline FrameSequence load_study(const std::filesystem::path& dir) {
    FrameSequence seq;
    seq.meta = read_study_meta(dir);

    static const std::regex pattern(R"(frame_(\d{6})\.png)");
    std::set<int> found;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern)) found.insert(std::stoi(m[1].str()));
    }
    for (int i = 0; i < seq.meta.frame_count; ++i) {
        if (!found.contains(i)) throw Error(ErrorCode::MissingFrame, "missing " + frame_file_name(i));
    }
    if (static_cast<int>(found.size()) != seq.meta.frame_count) {
        throw Error(ErrorCode::MissingFrame, "frame files beyond frame_count " +
                                                 std::to_string(seq.meta.frame_count));
    }

    seq.frames.reserve(static_cast<std::size_t>(seq.meta.frame_count));
    for (int i = 0; i < seq.meta.frame_count; ++i) {
        auto pixels = png::read_gray8(dir / frame_file_name(i));
        if (pixels.size() != seq.meta.native_size) {
            throw Error(ErrorCode::BadImage, frame_file_name(i) + " does not match native_size");
        }
        auto frame = png::normalize(pixels);
        apply_mask_regions(frame, seq.meta.mask_regions);
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

inline void write_study(const std::filesystem::path& dir, const FrameSequence& seq) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "study.json") << to_json(seq.meta).dump(2) << '\n';
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        png::write_gray8(dir / frame_file_name(static_cast<int>(i)), png::quantize(seq.frames[i]));
    }
}

/// Geometric normalization for model input; aspect ratio is not preserved.
inline ProbGrid resize_to_model(const ProbGrid& frame) {
    if (frame.empty()) throw Error(ErrorCode::BadImage, "empty frame");
    return resize_bilinear(frame, kModelInputSize);
}

}  // namespace fetometry
