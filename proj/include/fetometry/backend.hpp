/**
 * @file backend.hpp
 * @brief The scorer boundary: frames in, class probabilities and a
 *        segmentation probability grid out
 *
 * Fixture directories replay stored scorer output:
 *   scores.csv        frame_index,p_head,p_abdomen,p_femur,p_background
 *   mask_%06d.png     8-bit, probability = value / 255
 */
#pragma once

#include "fetometry/error.hpp"
#include "fetometry/grid.hpp"
#include "fetometry/png_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace fetometry {

struct ScorerCapabilities {
    int classes = 4;
    Size mask_size;
    bool thread_safe = true;
};

struct ScoredFrame {
    std::array<double, 4> probs{};  ///< head, abdomen, femur, background
    ProbGrid mask;
};

class FrameScorer {
public:
    virtual ~FrameScorer() = default;
    [[nodiscard]] virtual ScorerCapabilities capabilities() const = 0;
    [[nodiscard]] virtual std::size_t frame_count() const = 0;
    [[nodiscard]] virtual ScoredFrame score(int frame_index, const ProbGrid& frame) const = 0;
};

inline constexpr double kSimplexTolerance = 1e-3;

/// Checks a probability vector and renormalizes it; `code` is raised on violation.
inline std::array<double, 4> checked_simplex(std::array<double, 4> probs, ErrorCode code) {
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0 + kSimplexTolerance) {
            throw Error(code, "class probability outside [0,1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) throw Error(code, "class probabilities do not sum to 1");
    for (double& p : probs) p = std::min(p / sum, 1.0);
    return probs;
}

/// Boundary check applied to every scorer output before the pipeline trusts it.
inline ScoredFrame checked_output(ScoredFrame out, const ScorerCapabilities& caps, ErrorCode code = ErrorCode::BadInput) {
    out.probs = checked_simplex(out.probs, code);
    if (out.mask.size() != caps.mask_size) throw Error(code, "segmentation grid does not match declared size");
    for (double v : out.mask.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(code, "segmentation probability outside [0,1]");
    }
    return out;
}

inline std::string mask_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "mask_%06d.png", index);
    return buf;
}

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, ErrorCode code, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw Error(code, "bad number '" + std::string(text) + "'" + where);
    }
    return v;
}

struct ScoreRow {
    int frame_index = 0;
    std::array<double, 4> probs{};
};

inline constexpr std::string_view kScoresHeader = "frame_index,p_head,p_abdomen,p_femur,p_background";

inline std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::BadFixture, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kScoresHeader) throw Error(ErrorCode::BadFixture, path.string() + ": unexpected header");
    std::vector<ScoreRow> rows;
    std::set<int> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = " (" + path.filename().string() + " line " + std::to_string(line_no) + ")";
        std::vector<std::string> fields;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
        if (fields.size() != 5) throw Error(ErrorCode::BadFixture, "expected 5 fields" + where);
        ScoreRow row;
        const auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), row.frame_index);
        if (res.ec != std::errc{} || res.ptr != fields[0].data() + fields[0].size() || row.frame_index < 0) {
            throw Error(ErrorCode::BadFixture, "bad frame index" + where);
        }
        if (!seen.insert(row.frame_index).second) throw Error(ErrorCode::BadFixture, "duplicate frame index" + where);
        for (std::size_t k = 0; k < 4; ++k) row.probs[k] = parse_double(fields[k + 1], ErrorCode::BadFixture, where);
        row.probs = checked_simplex(row.probs, ErrorCode::BadFixture);
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const ScoreRow& a, const ScoreRow& b) { return a.frame_index < b.frame_index; });
    return rows;
}

inline void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
    std::ofstream out(path);
    out << kScoresHeader << '\n';
    for (const auto& r : rows) {
        out << r.frame_index;
        for (double p : r.probs) out << ',' << format_double(p);
        out << '\n';
    }
}

/// Replays stored scorer outputs from a fixture directory. Masks are read on
/// demand, so concurrent queries are safe.
class FixtureScorer final : public FrameScorer {
public:
    explicit FixtureScorer(std::filesystem::path dir) : dir_(std::move(dir)) {
        const auto rows = read_scores_csv(dir_ / "scores.csv");
        static const std::regex pattern(R"(mask_(\d{6})\.png)");
        std::set<int> masks;
        if (std::filesystem::is_directory(dir_)) {
            for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
                std::smatch m;
                const std::string name = entry.path().filename().string();
                if (std::regex_match(name, m, pattern)) masks.insert(std::stoi(m[1].str()));
            }
        }
        for (const auto& r : rows) {
            if (!masks.contains(r.frame_index)) {
                throw Error(ErrorCode::BadFixture, "missing " + mask_file_name(r.frame_index));
            }
            probs_[r.frame_index] = r.probs;
        }
        if (masks.size() != rows.size()) throw Error(ErrorCode::BadFixture, "score rows and mask files differ in count");
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].frame_index != static_cast<int>(i)) {
                throw Error(ErrorCode::BadFixture, "frame indices must be 0..N-1");
            }
        }
        if (!rows.empty()) {
            try {
                caps_.mask_size = png::read_gray8(dir_ / mask_file_name(0)).size();
            } catch (const Error& e) {
                throw Error(ErrorCode::BadFixture, e.what());
            }
        }
    }

    [[nodiscard]] ScorerCapabilities capabilities() const override { return caps_; }
    [[nodiscard]] std::size_t frame_count() const override { return probs_.size(); }

    [[nodiscard]] std::array<double, 4> probs(int frame_index) const {
        const auto it = probs_.find(frame_index);
        if (it == probs_.end()) throw Error(ErrorCode::BadFixture, "no scores for frame " + std::to_string(frame_index));
        return it->second;
    }

    [[nodiscard]] ScoredFrame score(int frame_index, const ProbGrid& /*frame*/) const override {
        ScoredFrame out;
        out.probs = probs(frame_index);
        out.mask = png::normalize(png::read_gray8(dir_ / mask_file_name(frame_index)));
        return out;
    }

private:
    std::filesystem::path dir_;
    std::map<int, std::array<double, 4>> probs_;
    ScorerCapabilities caps_;
};

inline void write_fixture_mask(const std::filesystem::path& dir, int frame_index, const ProbGrid& mask) {
    png::write_gray8(dir / mask_file_name(frame_index), png::quantize(mask));
}

}  // namespace fetometry
