/**
 * @file agreement.hpp
 * @brief Observer-agreement statistics: MAE against a reference reader,
 *        intraclass correlation, one-way ANOVA and intra-observer differences
 *
 * Ratings CSV: header `reader,case,reading,kind,value_cm`, reading is 1 or 2,
 * kind is one of HC, BPD, AC, FL, GA, EFW. An empty value_cm marks a missing cell.
 */
#pragma once

#include "fetometry/error.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fetometry {

inline constexpr std::array<std::string_view, 6> kRatingKinds{"HC", "BPD", "AC", "FL", "GA", "EFW"};

/// Readings of one measurement kind: values[reader][case][reading - 1].
class RatingsTable {
public:
    using Cell = std::optional<double>;

    RatingsTable() = default;
    RatingsTable(std::vector<std::string> readers, std::vector<std::string> cases)
        : readers_(std::move(readers)), cases_(std::move(cases)),
          values_(readers_.size(), std::vector<std::array<Cell, 2>>(cases_.size())) {}

    [[nodiscard]] const std::vector<std::string>& readers() const noexcept { return readers_; }
    [[nodiscard]] const std::vector<std::string>& cases() const noexcept { return cases_; }

    [[nodiscard]] std::size_t reader_index(std::string_view id) const {
        const auto it = std::find(readers_.begin(), readers_.end(), id);
        if (it == readers_.end()) throw Error(ErrorCode::BadInput, "unknown reader '" + std::string(id) + "'");
        return static_cast<std::size_t>(it - readers_.begin());
    }

    [[nodiscard]] const Cell& at(std::size_t reader, std::size_t case_idx, int reading) const {
        return values_.at(reader).at(case_idx).at(checked_reading(reading));
    }

    void set(std::size_t reader, std::size_t case_idx, int reading, double value) {
        values_.at(reader).at(case_idx).at(checked_reading(reading)) = value;
    }

    /// Registers reader and case ids on first sight; returns their indices.
    std::pair<std::size_t, std::size_t> ensure(const std::string& reader, const std::string& case_id) {
        const std::size_t r = add_id(readers_, reader);
        const std::size_t c = add_id(cases_, case_id);
        values_.resize(readers_.size());
        for (auto& row : values_) row.resize(cases_.size());
        return {r, c};
    }

    void set(const std::string& reader, const std::string& case_id, int reading, double value) {
        const auto [r, c] = ensure(reader, case_id);
        auto& cell = values_[r][c][checked_reading(reading)];
        if (cell) throw Error(ErrorCode::BadInput, "duplicate rating for " + reader + "/" + case_id);
        cell = value;
    }

private:
    static std::size_t checked_reading(int reading) {
        if (reading != 1 && reading != 2) throw Error(ErrorCode::BadInput, "reading must be 1 or 2");
        return static_cast<std::size_t>(reading - 1);
    }
    static std::size_t add_id(std::vector<std::string>& ids, const std::string& id) {
        const auto it = std::find(ids.begin(), ids.end(), id);
        if (it != ids.end()) return static_cast<std::size_t>(it - ids.begin());
        ids.push_back(id);
        return ids.size() - 1;
    }

    std::vector<std::string> readers_;
    std::vector<std::string> cases_;
    std::vector<std::vector<std::array<Cell, 2>>> values_;
};

/// Parses a ratings CSV into one table per kind (kinds with no rows are absent).
inline std::map<std::string, RatingsTable> read_ratings_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::BadInput, "ratings CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "reader,case,reading,kind,value_cm") {
        throw Error(ErrorCode::BadInput, "ratings CSV header must be reader,case,reading,kind,value_cm");
    }
    std::map<std::string, RatingsTable> tables;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        const auto where = " (line " + std::to_string(line_no) + ")";
        if (fields.size() != 5) throw Error(ErrorCode::BadInput, "expected 5 fields" + where);
        const auto& kind = fields[3];
        if (std::find(kRatingKinds.begin(), kRatingKinds.end(), kind) == kRatingKinds.end()) {
            throw Error(ErrorCode::BadInput, "unknown kind '" + kind + "'" + where);
        }
        int reading = 0;
        const auto rres = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), reading);
        if (rres.ec != std::errc{} || rres.ptr != fields[2].data() + fields[2].size()) {
            throw Error(ErrorCode::BadInput, "bad reading index" + where);
        }
        auto& table = tables[kind];
        if (fields[4].empty()) {
            if (reading != 1 && reading != 2) throw Error(ErrorCode::BadInput, "reading must be 1 or 2" + where);
            table.ensure(fields[0], fields[1]);
            continue;
        }
        double value = 0.0;
        const auto vres = std::from_chars(fields[4].data(), fields[4].data() + fields[4].size(), value);
        if (vres.ec != std::errc{} || vres.ptr != fields[4].data() + fields[4].size() || !std::isfinite(value)) {
            throw Error(ErrorCode::BadInput, "bad value_cm" + where);
        }
        table.set(fields[0], fields[1], reading, value);
    }
    return tables;
}

inline std::map<std::string, RatingsTable> read_ratings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::BadInput, "cannot open " + path);
    return read_ratings_csv(in);
}

// ---------------------------------------------------------------------------

struct ReaderMae {
    std::string reader;
    double mae = 0.0;
    std::size_t pairs = 0;
};

/// Mean |x_ref - x_reader| over every (case, reading) cell present for both.
inline std::vector<ReaderMae> mae_matrix(const RatingsTable& t, std::string_view reference) {
    const std::size_t ref = t.reader_index(reference);
    std::vector<ReaderMae> out;
    for (std::size_t r = 0; r < t.readers().size(); ++r) {
        ReaderMae row{t.readers()[r], 0.0, 0};
        double sum = 0.0;
        for (std::size_t c = 0; c < t.cases().size(); ++c) {
            for (int reading : {1, 2}) {
                const auto& a = t.at(ref, c, reading);
                const auto& b = t.at(r, c, reading);
                if (a && b) {
                    sum += std::abs(*a - *b);
                    ++row.pairs;
                }
            }
        }
        if (row.pairs == 0) {
            throw Error(ErrorCode::EmptyOverlap, "reader '" + row.reader + "' shares no cells with the reference");
        }
        row.mae = sum / static_cast<double>(row.pairs);
        out.push_back(row);
    }
    return out;
}

enum class IccModel { OneWay, TwoWayRandom, TwoWayMixed };

struct MeanSquares {
    double rows = 0.0;     ///< between cases
    double cols = 0.0;     ///< between readers
    double error = 0.0;    ///< residual
    double within = 0.0;   ///< within cases (one-way)
    std::size_t n = 0;     ///< cases
    std::size_t k = 0;     ///< readers
};

/// Two-way mean-squares decomposition of a complete cases x readers matrix.
inline MeanSquares mean_squares(const std::vector<std::vector<double>>& x) {
    MeanSquares ms;
    ms.n = x.size();
    ms.k = ms.n == 0 ? 0 : x.front().size();
    const auto n = static_cast<double>(ms.n), k = static_cast<double>(ms.k);
    double grand = 0.0;
    std::vector<double> row_mean(ms.n, 0.0), col_mean(ms.k, 0.0);
    for (std::size_t i = 0; i < ms.n; ++i) {
        for (std::size_t j = 0; j < ms.k; ++j) {
            row_mean[i] += x[i][j] / k;
            col_mean[j] += x[i][j] / n;
            grand += x[i][j];
        }
    }
    grand /= n * k;
    double ssr = 0.0, ssc = 0.0, sst = 0.0;
    for (double m : row_mean) ssr += (m - grand) * (m - grand);
    for (double m : col_mean) ssc += (m - grand) * (m - grand);
    ssr *= k;
    ssc *= n;
    for (const auto& row : x) {
        for (double v : row) sst += (v - grand) * (v - grand);
    }
    const double sse = std::max(0.0, sst - ssr - ssc);
    ms.rows = ssr / (n - 1.0);
    ms.cols = ssc / (k - 1.0);
    ms.error = sse / ((n - 1.0) * (k - 1.0));
    ms.within = (ssc + sse) / (n * (k - 1.0));
    return ms;
}

/// Cases x readers matrix for one reading, dropping cases with any missing cell.
inline std::vector<std::vector<double>> complete_matrix(const RatingsTable& t, int reading) {
    std::vector<std::vector<double>> x;
    for (std::size_t c = 0; c < t.cases().size(); ++c) {
        std::vector<double> row;
        for (std::size_t r = 0; r < t.readers().size(); ++r) {
            const auto& v = t.at(r, c, reading);
            if (!v) break;
            row.push_back(*v);
        }
        if (row.size() == t.readers().size()) x.push_back(std::move(row));
    }
    return x;
}

inline double icc_from_matrix(const std::vector<std::vector<double>>& x, IccModel model = IccModel::TwoWayRandom) {
    if (x.size() < 2 || x.front().size() < 2) {
        throw Error(ErrorCode::Insufficient, "ICC needs at least 2 readers and 2 complete cases");
    }
    const auto ms = mean_squares(x);
    const auto k = static_cast<double>(ms.k), n = static_cast<double>(ms.n);
    double num = 0.0, den = 0.0;
    switch (model) {
        case IccModel::OneWay:
            num = ms.rows - ms.within;
            den = ms.rows + (k - 1.0) * ms.within;
            break;
        case IccModel::TwoWayRandom:
            num = ms.rows - ms.error;
            den = ms.rows + (k - 1.0) * ms.error + k * (ms.cols - ms.error) / n;
            break;
        case IccModel::TwoWayMixed:
            num = ms.rows - ms.error;
            den = ms.rows + (k - 1.0) * ms.error;
            break;
    }
    // every cell identical: no variance to apportion, readers agree perfectly
    if (den == 0.0) return num == 0.0 ? 1.0 : 0.0;
    return num / den;
}

/// ICC for the chosen reading; ICC(2,1) (two-way random, absolute agreement, single rater) by default.
inline double icc(const RatingsTable& t, int reading, IccModel model = IccModel::TwoWayRandom) {
    if (t.readers().size() < 2 || t.cases().size() < 2) {
        throw Error(ErrorCode::Insufficient, "ICC needs at least 2 readers and 2 cases");
    }
    return icc_from_matrix(complete_matrix(t, reading), model);
}

struct AnovaResult {
    double f = 0.0;
    int df_between = 0;
    int df_within = 0;
    double p = 1.0;
};

/// Upper tail of the F distribution.
inline double f_upper_tail(double f, int df1, int df2) {
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    const boost::math::fisher_f_distribution<double> dist(df1, df2);
    return boost::math::cdf(boost::math::complement(dist, f));
}

inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw Error(ErrorCode::Insufficient, "ANOVA needs at least 2 groups");
    std::size_t total = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw Error(ErrorCode::Insufficient, "each ANOVA group needs at least 2 values");
        total += g.size();
        for (double v : g) grand += v;
    }
    grand /= static_cast<double>(total);
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        double mean = 0.0;
        for (double v : g) mean += v;
        mean /= static_cast<double>(g.size());
        ssb += static_cast<double>(g.size()) * (mean - grand) * (mean - grand);
        for (double v : g) ssw += (v - mean) * (v - mean);
    }
    AnovaResult res;
    res.df_between = static_cast<int>(groups.size()) - 1;
    res.df_within = static_cast<int>(total - groups.size());
    const double msb = ssb / res.df_between;
    const double msw = ssw / res.df_within;
    if (msw == 0.0) {
        res.f = msb == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
        res.f = msb / msw;
    }
    res.p = f_upper_tail(res.f, res.df_between, res.df_within);
    return res;
}

/// One group per reader holding that reader's values for the given reading.
inline AnovaResult anova_readers(const RatingsTable& t, int reading) {
    std::vector<std::vector<double>> groups;
    for (std::size_t r = 0; r < t.readers().size(); ++r) {
        std::vector<double> g;
        for (std::size_t c = 0; c < t.cases().size(); ++c) {
            if (const auto& v = t.at(r, c, reading)) g.push_back(*v);
        }
        groups.push_back(std::move(g));
    }
    return anova_oneway(groups);
}

struct IntraObserver {
    double mean_abs_diff = 0.0;
    double sd = 0.0;  ///< sample standard deviation (n - 1)
    std::size_t cases = 0;
};

/// |reading1 - reading2| across cases where both readings exist.
inline IntraObserver intra_observer(const RatingsTable& t, std::string_view reader) {
    const std::size_t r = t.reader_index(reader);
    std::vector<double> diffs;
    for (std::size_t c = 0; c < t.cases().size(); ++c) {
        const auto& a = t.at(r, c, 1);
        const auto& b = t.at(r, c, 2);
        if (a && b) diffs.push_back(std::abs(*a - *b));
    }
    if (diffs.empty()) throw Error(ErrorCode::EmptyOverlap, "reader '" + std::string(reader) + "' has no repeated readings");
    IntraObserver out;
    out.cases = diffs.size();
    for (double d : diffs) out.mean_abs_diff += d;
    out.mean_abs_diff /= static_cast<double>(diffs.size());
    if (diffs.size() > 1) {
        double ss = 0.0;
        for (double d : diffs) ss += (d - out.mean_abs_diff) * (d - out.mean_abs_diff);
        out.sd = std::sqrt(ss / static_cast<double>(diffs.size() - 1));
    }
    return out;
}

/// p-values are reported to 4 decimals.
inline double round_p(double p) { return std::round(p * 1e4) / 1e4; }

}  // namespace fetometry
