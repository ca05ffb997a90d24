/**
 * @file acceptance_main.cpp
 * @brief Acceptance checks 1-9: one PASS/FAIL line each, nonzero exit on any failure
 */
#include "fetometry/fetometry.hpp"

#include "../oracles.hpp"
#include "../test_support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace fetometry;
using std::numbers::pi;

namespace {

/// Collects failure reasons for one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        if (!ok) ++count_;
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
    [[nodiscard]] bool ok() const { return count_ == 0; }
    [[nodiscard]] std::string summary() const {
        std::string s = notes_;
        for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + f;
        if (count_ > failures_.size()) s += "; +" + std::to_string(count_ - failures_.size()) + " more";
        return s;
    }

private:
    std::vector<std::string> failures_;
    std::size_t count_ = 0;
    std::string notes_;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::optional<double> truth_value(const GroundTruth& gt, const std::string& kind) {
    if (kind == "HC") return gt.hc_cm;
    if (kind == "BPD") return gt.bpd_cm;
    if (kind == "AC") return gt.ac_cm;
    return gt.fl_cm;
}

struct KindError {
    std::string kind;
    double error_px;
};

/// Runs one phantom study; returns per-kind errors in pixel-equivalents.
std::vector<KindError> phantom_errors(const PhantomSpec& spec, std::uint64_t seed, Check& c, double* seconds = nullptr) {
    const PhantomScorer scorer(spec, seed);
    const auto seq = scorer.sequence();
    PipelineConfig cfg;
    cfg.threads = 1;
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = analyze_study(seq, scorer, cfg);
    if (seconds) *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double px_cm = std::max(spec.spacing.row_mm, spec.spacing.col_mm) / 10.0;
    std::vector<KindError> out;
    const std::vector<std::pair<std::string, std::vector<std::string>>> parts{
        {"head", {"HC", "BPD"}}, {"abdomen", {"AC"}}, {"femur", {"FL"}}};
    for (const auto& [part, kinds] : parts) {
        const auto& w = report.selection.at(part);
        if (!w) {
            c.expect(false, "seed " + std::to_string(seed) + ": no " + part + " winner");
            continue;
        }
        const auto& gt = scorer.truth().at(static_cast<std::size_t>(w->frame_index));
        for (const auto& kind : kinds) {
            const auto want = truth_value(gt, kind);
            const auto got = w->measurements_cm.find(kind);
            if (!want || got == w->measurements_cm.end()) {
                c.expect(false, "seed " + std::to_string(seed) + ": " + kind + " missing");
                continue;
            }
            out.push_back({kind, std::abs(got->second - *want) / px_cm});
        }
    }
    return out;
}

// 1 ------------------------------------------------------------------------
Check phantom_end_to_end() {
    Check c;
    auto spec = default_phantom_spec();
    spec.noise_sigma = 0.0;
    double seconds = 0;
    const auto errs = phantom_errors(spec, 0, c, &seconds);
    for (const auto& e : errs) {
        const double tol = e.kind == "FL" ? 2.0 : 1.0;
        c.expect(e.error_px <= tol, e.kind + " error " + fmt(e.error_px) + " px > " + fmt(tol));
        c.note(e.kind + " " + fmt(e.error_px) + " px");
    }
    c.expect(errs.size() == 4, "expected 4 measurements");
    c.expect(seconds < 5.0, "runtime " + fmt(seconds) + " s");
    c.note("runtime " + fmt(seconds) + " s");
    return c;
}

// 2 ------------------------------------------------------------------------
Check noise_robustness() {
    Check c;
    auto spec = default_phantom_spec();
    spec.noise_sigma = 0.2;
    std::vector<double> errs;
    int crashes = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        try {
            for (const auto& e : phantom_errors(spec, seed, c)) errs.push_back(e.error_px);
        } catch (const std::exception& ex) {
            ++crashes;
            c.expect(false, "seed " + std::to_string(seed) + " threw: " + ex.what());
        }
    }
    c.expect(crashes == 0, std::to_string(crashes) + " crashes");
    c.expect(!errs.empty(), "no measurements");
    if (!errs.empty()) {
        std::sort(errs.begin(), errs.end());
        const double p95 = errs[static_cast<std::size_t>(std::ceil(0.95 * errs.size())) - 1];
        c.expect(p95 < 5.0, "p95 " + fmt(p95) + " px");
        c.note("p95 " + fmt(p95) + " px over " + std::to_string(errs.size()) + " measurements");
    }
    return c;
}

// 3 ------------------------------------------------------------------------
Check ellipse_fit() {
    Check c;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ua(2.0, 200.0), ur(0.2, 1.0), uc(-300.0, 300.0), ut(0.0, pi), un(8, 64);
    double worst = 0, worst_perim = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const double a = ua(rng), ratio = ur(rng);
        const EllipseParams truth{{uc(rng), uc(rng)}, a, a * ratio, ut(rng)};
        const int n = static_cast<int>(un(rng));
        std::vector<Point2> pts;
        const double phase = ut(rng);
        for (int i = 0; i < n; ++i) pts.push_back(ellipse_point(truth, phase + 2.0 * pi * i / n));
        const auto e = fit_ellipse_lsq(pts);
        const double scale = std::max(a, std::hypot(truth.center.x, truth.center.y));
        double err = std::max({std::abs(e.a - truth.a) / truth.a, std::abs(e.b - truth.b) / truth.b,
                               std::hypot(e.center.x - truth.center.x, e.center.y - truth.center.y) / scale});
        if (ratio < 0.999) {
            double d = std::fmod(std::abs(e.theta - truth.theta), pi);
            err = std::max(err, std::min(d, pi - d));
        }
        worst = std::max(worst, err);
        c.expect(err <= 1e-6, "trial " + std::to_string(trial) + " rel error " + fmt(err));
        const double q = oracle::ellipse_perimeter(truth.a, truth.b);
        const double perr = std::abs(ellipse_perimeter(truth) - q) / q;
        worst_perim = std::max(worst_perim, perr);
        c.expect(perr <= 1e-4, "perimeter rel error " + fmt(perr));
    }
    c.note("worst fit " + fmt(worst) + ", worst perimeter " + fmt(worst_perim));
    return c;
}

// 4 ------------------------------------------------------------------------
Check morphology() {
    Check c;
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = oracle::random_mask(64, 64, 0.1 + 0.8 * (trial % 20) / 19.0, rng);
        c.expect(open_cross5(m) == oracle::open(m), "opening differs on mask " + std::to_string(trial));
        c.expect(median_smooth13(m) == oracle::median(m, 13), "median differs on mask " + std::to_string(trial));
    }
    return c;
}

// 5 ------------------------------------------------------------------------
Check formulas() {
    Check c;
    const double golden = static_cast<double>(oracle::ga(26.0L, 7.0L, 24.0L, 5.0L));
    c.expect(std::abs(golden - 11.7002) < 5e-5, "oracle GA golden " + fmt(golden));
    c.expect(std::abs(estimate_ga(26.0, 7.0, 24.0, 5.0).weeks - 11.7002) < 5e-5, "GA golden");
    const double efw_golden = static_cast<double>(oracle::efw(26.0L, 24.0L, 5.0L));
    c.expect(std::abs(efw_golden - 1132.9) < 0.05, "oracle EFW golden " + fmt(efw_golden));
    c.expect(std::abs(estimate_efw(26.0, 24.0, 5.0).grams - 1132.9) < 0.05, "EFW golden");
    c.note("GA " + fmt(golden) + " wk, EFW " + fmt(efw_golden) + " g");

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> hc(8, 36), bpd(2, 10), ac(7, 38), fl(1, 8);
    for (int i = 0; i < 100; ++i) {
        const double h = hc(rng), b = bpd(rng), a = ac(rng), f = fl(rng);
        const double ga = estimate_ga(h, b, a, f).weeks;
        const double ga_o = static_cast<double>(oracle::ga(h, b, a, f));
        c.expect(std::abs(ga - ga_o) <= 1e-12 * std::max(1.0, std::abs(ga_o)), "GA grid point " + std::to_string(i));
        const double w = estimate_efw(h, a, f).grams;
        const double w_o = static_cast<double>(oracle::efw(h, a, f));
        c.expect(std::abs(w - w_o) <= 1e-12 * w_o, "EFW grid point " + std::to_string(i));
    }
    for (double h = 10; h <= 34; h += 4) {
        for (double a = 10; a <= 34; a += 4) {
            for (double f = 2; f <= 7; f += 1) {
                const double w = estimate_efw(h, a, f).grams;
                c.expect(estimate_efw(h + 0.5, a, f).grams > w && estimate_efw(h, a + 0.5, f).grams > w &&
                             estimate_efw(h, a, f + 0.25).grams > w,
                         "EFW not monotone");
            }
        }
    }
    return c;
}

// 6 ------------------------------------------------------------------------
Check metric_identities() {
    Check c;
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> dens(0.02, 0.98);
    for (int i = 0; i < 1000; ++i) {
        const auto a = oracle::random_mask(24, 24, dens(rng), rng);
        const auto b = oracle::random_mask(24, 24, dens(rng), rng);
        const double j = iou(a, b);
        c.expect(std::abs(dice(a, b) - 2 * j / (1 + j)) <= 1e-12, "dice/iou identity on pair " + std::to_string(i));
        c.expect(std::abs(dice_loss(to_prob(a), b, 1e-12) - (1.0 - dice(a, b))) <= 1e-9, "dice_loss limit");
    }
    std::uniform_int_distribution<int> cls(0, 3), len(1, 60);
    for (int s = 0; s < 100; ++s) {
        std::vector<int> p(static_cast<std::size_t>(len(rng))), l(p.size());
        for (auto& v : p) v = cls(rng);
        for (auto& v : l) v = cls(rng);
        const auto r = classification_report(p, l);
        const auto t = oracle::tallies(p, l, 4);
        for (int k = 0; k < 4; ++k) {
            const auto& got = r.per_class[static_cast<std::size_t>(k)].tally;
            c.expect(static_cast<int>(got.tp) == t[k].tp && static_cast<int>(got.fp) == t[k].fp &&
                         static_cast<int>(got.tn) == t[k].tn && static_cast<int>(got.fn) == t[k].fn,
                     "tally mismatch in sequence " + std::to_string(s));
        }
    }
    return c;
}

// 7 ------------------------------------------------------------------------
RatingsTable table_from(const std::vector<std::vector<double>>& x, bool duplicate_reading) {
    std::vector<std::string> readers{"REF", "R1", "R2", "R3"}, cases;
    for (std::size_t i = 0; i < x.size(); ++i) cases.push_back("c" + std::to_string(i + 1));
    RatingsTable t(readers, cases);
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            t.set(j, i, 1, x[i][j]);
            if (duplicate_reading) t.set(j, i, 2, x[i][j]);
        }
    }
    return t;
}

Check agreement() {
    Check c;
    const std::vector<std::vector<std::vector<double>>> tables{
        {{24.1, 24.3, 23.8, 24.6}, {26.0, 26.4, 25.7, 26.1}, {21.5, 21.2, 21.9, 21.6},
         {28.3, 28.9, 28.0, 28.4}, {25.2, 25.0, 25.6, 25.9}, {23.0, 23.4, 22.7, 23.3}},
        {{5.1, 5.4, 4.8, 6.0}, {7.7, 7.2, 8.1, 7.9}, {3.3, 3.9, 3.0, 3.5},
         {6.6, 6.1, 6.9, 7.4}, {4.4, 4.0, 4.9, 4.2}, {8.8, 8.1, 9.3, 8.6}},
    };
    for (std::size_t k = 0; k < tables.size(); ++k) {
        const auto& x = tables[k];
        const auto t = table_from(x, false);
        const double got = icc(t, 1);
        c.expect(std::abs(got - oracle::icc21(x)) <= 1e-9, "ICC table " + std::to_string(k));
        std::vector<std::vector<double>> groups(4);
        for (const auto& row : x) {
            for (std::size_t j = 0; j < 4; ++j) groups[j].push_back(row[j]);
        }
        const auto a = anova_readers(t, 1);
        const auto o = oracle::anova(groups);
        c.expect(std::abs(a.f - o.f) <= 1e-9 * std::max(1.0, o.f), "ANOVA F table " + std::to_string(k));
        c.expect(a.df_between == o.df1 && a.df_within == o.df2, "ANOVA df table " + std::to_string(k));
        c.expect(std::abs(a.p - oracle::f_upper_tail(a.f, a.df_between, a.df_within)) <= 1e-8,
                 "ANOVA p table " + std::to_string(k));
        c.note("table " + std::to_string(k) + ": ICC " + fmt(got) + ", F " + fmt(a.f) + ", p " + fmt(a.p));
    }
    // identical readers: F = 0, p = 1, ICC = 1
    std::vector<std::vector<double>> same;
    for (int i = 0; i < 6; ++i) same.push_back(std::vector<double>(4, 20.0 + i));
    const auto s = table_from(same, true);
    const auto a = anova_readers(s, 1);
    c.expect(a.f == 0.0 && a.p == 1.0, "degenerate ANOVA");
    c.expect(icc(s, 1) == 1.0, "perfect-agreement ICC");
    for (const auto& reader : s.readers()) {
        const auto io = intra_observer(s, reader);
        c.expect(io.mean_abs_diff == 0.0 && io.sd == 0.0, "duplicate reading intra-observer for " + reader);
    }
    return c;
}

// 8 ------------------------------------------------------------------------
Check selection_contract() {
    Check c;
    testsupport::TempDir dir;
    const int rows = 120, cols = 140;
    const PixelSpacing sp{0.4, 0.4};
    std::vector<ScoreRow> scores;
    std::vector<BinaryMask> masks;
    std::mt19937_64 rng(808);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 24; ++i) {
        std::array<double, 4> p{0.05, 0.05, 0.05, 0.85};
        BinaryMask m(rows, cols, 0);
        const double angle = u(rng) * pi;
        if (i % 4 == 0) {  // head frames of varying size and confidence
            const double a = 30 + 20 * u(rng);
            p = {0.91 + 0.08 * u(rng), 0, 0, 0};
            m = testsupport::ellipse_mask(rows, cols, 70, 60, a, 0.75 * a, angle);
        } else if (i % 4 == 1) {
            const double a = 30 + 20 * u(rng);
            p = {0, 0.91 + 0.08 * u(rng), 0, 0};
            m = testsupport::ellipse_mask(rows, cols, 70, 60, a, 0.85 * a, angle);
        } else if (i % 4 == 2) {
            p = {0, 0, 0.91 + 0.08 * u(rng), 0};
            m = testsupport::bar_mask(rows, cols, 70, 60, 60 + 40 * u(rng), 8, angle);
        }
        const double rest = 1.0 - p[0] - p[1] - p[2] - p[3];
        if (i % 4 != 3) p[3] = rest;
        scores.push_back({i, p});
        masks.push_back(m);
    }
    // exactly at the gate: the largest, cleanest head of the video, must be excluded
    scores.push_back({24, {0.9, 0.1, 0.0, 0.0}});
    masks.push_back(testsupport::ellipse_mask(rows, cols, 70, 60, 55, 45, 0.0));

    FrameSequence seq;
    seq.meta = StudyMeta{"selection", sp, {rows, cols}, static_cast<int>(masks.size()), {}};
    for (const auto& m : masks) {
        write_fixture_mask(dir.path(), static_cast<int>(&m - masks.data()), to_prob(m));
        seq.frames.push_back(ProbGrid(rows, cols, 0.0));
    }
    write_scores_csv(dir / "scores.csv", scores);
    const FixtureScorer scorer(dir.path());

    // brute force over the same inputs
    const SelectionConfig sel_cfg = PipelineConfig{}.selection();
    std::vector<CandidateFrame> cands;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const auto out = scorer.score(static_cast<int>(i), {});
        if (auto cand = evaluate_candidate({static_cast<int>(i), out.probs}, out.mask, {rows, cols}, sp, sel_cfg)) {
            cands.push_back(*cand);
        }
    }
    c.expect(std::none_of(cands.begin(), cands.end(), [](const CandidateFrame& f) { return f.frame_index == 24; }),
             "frame at exactly 0.9 passed the gate");
    std::map<BodyPart, int> want;
    for (auto part : kMeasuredParts) {
        double max_m = 0;
        for (const auto& f : cands) {
            if (f.part == part) max_m = std::max(max_m, f.measurement.value_cm);
        }
        double best = -1;
        for (const auto& f : cands) {
            if (f.part != part) continue;
            const double norm = f.measurement.value_cm / max_m;
            const double s = part == BodyPart::Femur ? 0.5 * f.class_score + 0.5 * norm
                                                     : 0.4 * f.class_score + 0.3 * norm + 0.3 * *f.ellipse_similarity;
            if (s > best) {
                best = s;
                want[part] = f.frame_index;
            }
        }
    }
    std::optional<StudyReport> first;
    for (unsigned threads : {1u, 4u, 16u}) {
        PipelineConfig cfg;
        cfg.threads = threads;
        const auto r = analyze_study(seq, scorer, cfg);
        for (auto part : kMeasuredParts) {
            const auto& w = r.selection.at(std::string(to_string(part)));
            c.expect(w && want.contains(part) && w->frame_index == want[part],
                     std::string(to_string(part)) + " winner differs from brute force at threads=" + std::to_string(threads));
        }
        if (!first) {
            first = r;
            c.note("winners head " + std::to_string(want[BodyPart::Head]) + ", abdomen " +
                   std::to_string(want[BodyPart::Abdomen]) + ", femur " + std::to_string(want[BodyPart::Femur]));
        } else {
            c.expect(first->same_content(r), "report differs at threads=" + std::to_string(threads));
        }
    }
    return c;
}

// 9 ------------------------------------------------------------------------
int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + FETOMETRY_CLI_PATH + "\" --quiet " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string strip_timing(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    j.erase("timing_ms");
    return j.dump();
}

Check determinism() {
    Check c;
    testsupport::TempDir dir;
    const auto p = [&](const std::string& name) { return (dir / name).string(); };
    auto spec = default_phantom_spec();
    spec.frames.resize(12);
    testsupport::write_file(dir / "spec.json", to_json(spec).dump());
    std::string ratings = "reader,case,reading,kind,value_cm\n";
    std::mt19937_64 rng(9);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (const std::string reader : {"REF", "A", "B", "C"}) {
        for (int k = 1; k <= 6; ++k) {
            for (int reading : {1, 2}) {
                ratings += reader + ",case" + std::to_string(k) + "," + std::to_string(reading) + ",HC," +
                           std::to_string(20.0 + k + noise(rng)) + "\n";
            }
        }
    }
    testsupport::write_file(dir / "ratings.csv", ratings);

    for (const char* run : {"1", "2"}) {
        const std::string r = run;
        c.expect(run_cli("phantom --spec " + p("spec.json") + " --seed 3 --noise-sigma 0.2 --out " + p("study" + r)) == 0,
                 "phantom run " + r);
        c.expect(run_cli("analyze --input " + p("study1") + " --backend fixture:" + p("study1") + " --output " +
                         p("report" + r + ".json") + " --frames-csv " + p("frames" + r + ".csv")) == 0,
                 "analyze run " + r);
        c.expect(run_cli("analyze --input " + p("study1") + " --backend phantom:" + p("spec.json") +
                         " --seed 3 --threads 4 --output " + p("preport" + r + ".json")) == 0,
                 "analyze phantom run " + r);
        c.expect(run_cli("agree --ratings " + p("ratings.csv") + " --reference REF --out " + p("agree" + r + ".json")) == 0,
                 "agree run " + r);
        c.expect(run_cli("evaluate --backend fixture:" + p("study1") + " --truth " + p("study1") + "/truth --out " +
                         p("eval" + r + ".json")) == 0,
                 "evaluate run " + r);
    }
    const auto same = [&](const std::filesystem::path& a, const std::filesystem::path& b) {
        return testsupport::read_file(a) == testsupport::read_file(b);
    };
    std::size_t files = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "study1")) {
        if (!e.is_regular_file()) continue;
        ++files;
        const auto rel = std::filesystem::relative(e.path(), dir / "study1");
        c.expect(same(e.path(), dir / "study2" / rel), "phantom output differs: " + rel.string());
    }
    c.expect(files > 0, "phantom wrote nothing");
    try {
        c.expect(strip_timing(testsupport::read_file(dir / "report1.json")) ==
                     strip_timing(testsupport::read_file(dir / "report2.json")),
                 "analyze reports differ");
        c.expect(strip_timing(testsupport::read_file(dir / "preport1.json")) ==
                     strip_timing(testsupport::read_file(dir / "preport2.json")),
                 "phantom-backend reports differ");
        c.expect(same(dir / "frames1.csv", dir / "frames2.csv"), "frames CSV differs");
        c.expect(same(dir / "agree1.json", dir / "agree2.json"), "agree outputs differ");
        c.expect(same(dir / "eval1.json", dir / "eval2.json"), "evaluate outputs differ");

        const auto j = nlohmann::json::parse(testsupport::read_file(dir / "report1.json"));
        const auto back = study_report_from_json(j);
        c.expect(to_json(back) == j, "report JSON round trip");
    } catch (const std::exception& e) {
        c.expect(false, std::string("reading outputs: ") + e.what());
    }
    return c;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
        {"phantom end-to-end", phantom_end_to_end},
        {"noise robustness", noise_robustness},
        {"ellipse fit", ellipse_fit},
        {"morphology equivalence", morphology},
        {"formula pinning", formulas},
        {"metric identities", metric_identities},
        {"agreement statistics", agreement},
        {"selection contract", selection_contract},
        {"determinism and round trip", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check c;
        try {
            c = criteria[i].second();
        } catch (const std::exception& e) {
            c.expect(false, std::string("threw: ") + e.what());
        }
        if (!c.ok()) ++failed;
        std::cout << (c.ok() ? "PASS" : "FAIL") << ' ' << (i + 1) << ' ' << criteria[i].first;
        const auto s = c.summary();
        if (!s.empty()) std::cout << " (" << s << ')';
        std::cout << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
