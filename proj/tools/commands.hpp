/**
 * @file commands.hpp
 * @brief fetometry command-line surface: analyze, phantom, agree, evaluate
 *
 * Exit codes: 0 success, 2 input error, 3 empty result (every frame failed),
 * 64 usage error.
 */
#pragma once

#include "fetometry/fetometry.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fetometry::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitEmpty = 3;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInternal = 1;

inline int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::AllFramesFailed: return kExitEmpty;
        case ErrorCode::BadConfig:
        case ErrorCode::BadThreshold: return kExitUsage;
        default: return kExitInput;
    }
}

struct Streams {
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;

    void progress(const std::string& line) const {
        if (!quiet) out << line << '\n';
    }
};

/// Config flags shared by analyze and evaluate; unset flags leave the config alone.
struct ConfigFlags {
    std::string config_file;
    std::optional<double> gate_threshold, mask_threshold, rdp_eps_rel, rdp_eps_max_px, dice_eps;
    std::vector<double> weights_femur, weights_ellipse;
    std::optional<unsigned> threads;

    void add_to(CLI::App& app) {
        app.add_option("--config", config_file, "JSON config file (flags take precedence)");
        app.add_option("--gate-threshold", gate_threshold, "class probability gate (default 0.9)");
        app.add_option("--mask-threshold", mask_threshold, "segmentation threshold (default 0.6)");
        app.add_option("--rdp-eps-rel", rdp_eps_rel, "RDP tolerance as a fraction of contour perimeter (default 0.01)");
        app.add_option("--rdp-eps-max-px", rdp_eps_max_px, "upper bound on the RDP tolerance in pixels (default 0.5)");
        app.add_option("--dice-eps", dice_eps, "dice loss epsilon (default 1e-6)");
        app.add_option("--weights-femur", weights_femur, "femur composite weights: class,measurement")
            ->expected(2)->delimiter(',');
        app.add_option("--weights-ellipse", weights_ellipse, "head/abdomen composite weights: class,measurement,similarity")
            ->expected(3)->delimiter(',');
        app.add_option("--threads", threads, "frame-parallel workers (default: logical cores)");
    }

    [[nodiscard]] PipelineConfig resolve() const {
        PipelineConfig cfg;
        cfg.threads = default_thread_count();
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw Error(ErrorCode::BadConfig, "cannot open config " + config_file);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::BadConfig, config_file + ": " + e.what());
            }
            apply_json(cfg, j);
        }
        if (gate_threshold) cfg.gate_threshold = *gate_threshold;
        if (mask_threshold) cfg.mask_threshold = *mask_threshold;
        if (rdp_eps_rel) cfg.rdp_eps_rel = *rdp_eps_rel;
        if (rdp_eps_max_px) cfg.rdp_eps_max_px = *rdp_eps_max_px;
        if (dice_eps) cfg.dice_eps = *dice_eps;
        if (!weights_femur.empty()) cfg.weights.femur = {weights_femur[0], weights_femur[1]};
        if (!weights_ellipse.empty()) cfg.weights.ellipse_parts = {weights_ellipse[0], weights_ellipse[1], weights_ellipse[2]};
        if (threads) cfg.threads = *threads;
        cfg.validate();
        return cfg;
    }
};

inline PhantomSpec load_phantom_spec(const std::string& path) {
    if (path.empty() || path == "default") return default_phantom_spec();
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::BadSpec, "cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadSpec, path + ": " + e.what());
    }
    return phantom_spec_from_json(j);
}

/// `fixture:DIR` or `phantom:SPEC` (SPEC may be `default`).
inline std::unique_ptr<FrameScorer> make_backend(const std::string& backend, std::uint64_t seed) {
    const auto colon = backend.find(':');
    const std::string kind = backend.substr(0, colon);
    const std::string arg = colon == std::string::npos ? std::string() : backend.substr(colon + 1);
    if (kind == "fixture" && !arg.empty()) return std::make_unique<FixtureScorer>(arg);
    if (kind == "phantom") return std::make_unique<PhantomScorer>(load_phantom_spec(arg), seed);
    throw Error(ErrorCode::BadConfig, "backend must be fixture:DIR or phantom:SPEC");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::BadInput, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string input, backend, output, frames_csv;
    std::uint64_t seed = 0;
    ConfigFlags flags;
};

inline int cmd_analyze(const AnalyzeArgs& args, const Streams& io) {
    const PipelineConfig cfg = args.flags.resolve();
    const FrameSequence seq = load_study(args.input);
    const auto scorer = make_backend(args.backend, args.seed);
    const StudyReport report = analyze_study(seq, *scorer, cfg);
    write_json(args.output, to_json(report));
    if (!args.frames_csv.empty()) write_frames_csv(args.frames_csv, report);
    for (const auto& w : report.warnings) io.err << "warning: " << w << '\n';
    io.progress("analyzed " + std::to_string(seq.frames.size()) + " frames of " + report.study_id + " -> " + args.output);
    return kExitOk;
}

struct PhantomArgs {
    std::string spec, out;
    std::uint64_t seed = 0;
    std::optional<double> noise_sigma;
};

inline nlohmann::json to_json(const std::vector<GroundTruth>& truth, const PhantomSpec& spec, std::uint64_t seed) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& gt : truth) {
        nlohmann::json f{{"frame_index", gt.frame_index}, {"part", to_string(gt.part)}};
        if (gt.hc_cm) f["HC"] = *gt.hc_cm;
        if (gt.bpd_cm) f["BPD"] = *gt.bpd_cm;
        if (gt.ac_cm) f["AC"] = *gt.ac_cm;
        if (gt.fl_cm) f["FL"] = *gt.fl_cm;
        frames.push_back(std::move(f));
    }
    return {{"schema", kReportSchema}, {"study_id", spec.study_id}, {"seed", seed}, {"frames", frames}};
}

/// Writes a complete study: frames, study.json, fixture scorer output,
/// ground_truth.json, the spec itself, and a truth/ fixture with noiseless
/// masks and one-hot labels for evaluation.
inline void write_phantom_study(const std::filesystem::path& dir, const PhantomSpec& spec, std::uint64_t seed) {
    const PhantomScorer scorer(spec, seed);
    write_study(dir, scorer.sequence());
    std::vector<ScoreRow> rows, truth_rows;
    const auto truth_dir = dir / "truth";
    std::filesystem::create_directories(truth_dir);
    for (std::size_t i = 0; i < spec.frames.size(); ++i) {
        const int idx = static_cast<int>(i);
        rows.push_back({idx, spec.frames[i].probs});
        write_fixture_mask(dir, idx, phantom_mask(spec, idx, seed));
        std::array<double, 4> one_hot{0, 0, 0, 0};
        one_hot[static_cast<std::size_t>(spec.frames[i].part)] = 1.0;
        truth_rows.push_back({idx, one_hot});
        write_fixture_mask(truth_dir, idx, rasterize_shape(spec, idx, spec.output_size()));
    }
    write_scores_csv(dir / "scores.csv", rows);
    write_scores_csv(truth_dir / "scores.csv", truth_rows);
    write_json(truth_dir / "study.json", to_json(scorer.meta()));
    write_json(dir / "ground_truth.json", to_json(scorer.truth(), spec, seed));
    write_json(dir / "phantom.json", to_json(spec));
}

inline int cmd_phantom(const PhantomArgs& args, const Streams& io) {
    PhantomSpec spec = load_phantom_spec(args.spec);
    if (args.noise_sigma) spec.noise_sigma = *args.noise_sigma;
    validate(spec);
    write_phantom_study(args.out, spec, args.seed);
    io.progress("wrote " + std::to_string(spec.frames.size()) + "-frame phantom study to " + args.out);
    return kExitOk;
}

struct AgreeArgs {
    std::string ratings, reference = "FUVAI", out, icc_model = "icc2";
};

inline IccModel parse_icc_model(const std::string& name) {
    if (name == "icc1") return IccModel::OneWay;
    if (name == "icc2") return IccModel::TwoWayRandom;
    if (name == "icc3") return IccModel::TwoWayMixed;
    throw Error(ErrorCode::BadConfig, "icc model must be icc1, icc2 or icc3");
}

inline nlohmann::json agreement_stats(const std::map<std::string, RatingsTable>& tables, const std::string& reference,
                                      IccModel model) {
    // statistics that lack data for one reading are reported as null
    auto guarded = [](auto&& fn) -> nlohmann::json {
        try {
            return fn();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Insufficient || e.code() == ErrorCode::EmptyOverlap) return nullptr;
            throw;
        }
    };
    static const std::map<IccModel, const char*> model_names{
        {IccModel::OneWay, "ICC(1,1)"}, {IccModel::TwoWayRandom, "ICC(2,1)"}, {IccModel::TwoWayMixed, "ICC(3,1)"}};
    nlohmann::json kinds = nlohmann::json::object();
    for (const auto& kind : kRatingKinds) {
        const auto it = tables.find(std::string(kind));
        if (it == tables.end()) continue;
        const RatingsTable& t = it->second;
        if (t.readers().size() < 2) throw Error(ErrorCode::Insufficient, std::string(kind) + ": need at least 2 readers");
        nlohmann::json mae = nlohmann::json::object();
        for (const auto& row : mae_matrix(t, reference)) mae[row.reader] = {{"mae_cm", row.mae}, {"pairs", row.pairs}};
        nlohmann::json icc_j = nlohmann::json::object();
        nlohmann::json anova_j = nlohmann::json::object();
        for (int reading : {1, 2}) {
            const std::string key = "reading_" + std::to_string(reading);
            icc_j[key] = guarded([&] { return nlohmann::json(icc(t, reading, model)); });
            anova_j[key] = guarded([&] {
                const auto a = anova_readers(t, reading);
                return nlohmann::json{{"F", a.f}, {"df", {a.df_between, a.df_within}}, {"p", round_p(a.p)}, {"p_raw", a.p}};
            });
        }
        nlohmann::json intra = nlohmann::json::object();
        for (const auto& reader : t.readers()) {
            intra[reader] = guarded([&] {
                const auto s = intra_observer(t, reader);
                return nlohmann::json{{"mean_abs_diff_cm", s.mean_abs_diff}, {"sd_cm", s.sd}, {"cases", s.cases}};
            });
        }
        kinds[std::string(kind)] = {
            {"readers", t.readers()},
            {"cases", t.cases().size()},
            {"mae", mae},
            {"icc", icc_j},
            {"intra_observer", intra},
            {"anova", anova_j},
        };
    }
    return {{"schema", kReportSchema}, {"reference", reference}, {"icc_model", model_names.at(model)}, {"kinds", kinds}};
}

inline int cmd_agree(const AgreeArgs& args, const Streams& io) {
    const IccModel model = parse_icc_model(args.icc_model);
    const auto tables = read_ratings_csv(args.ratings);
    if (tables.empty()) throw Error(ErrorCode::Insufficient, "ratings CSV has no rows");
    write_json(args.out, agreement_stats(tables, args.reference, model));
    io.progress("agreement statistics for " + std::to_string(tables.size()) + " kinds -> " + args.out);
    return kExitOk;
}

struct EvaluateArgs {
    std::string backend, truth, out;
    std::uint64_t seed = 0;
    ConfigFlags flags;
};

inline int cmd_evaluate(const EvaluateArgs& args, const Streams& io) {
    const PipelineConfig cfg = args.flags.resolve();
    const auto scorer = make_backend(args.backend, args.seed);
    const TruthSet truth = load_truth(args.truth);
    const auto bundle = evaluate_backend(*scorer, truth, cfg);
    write_json(args.out, to_json(bundle));
    io.progress("evaluated " + std::to_string(bundle.frame_count) + " frames -> " + args.out);
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Fetal ultrasound biometry: plane selection, measurements and agreement statistics", "fetometry"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    bool quiet = false;
    app.add_flag("--quiet,-q", quiet, "suppress progress output");
    app.set_version_flag("--version", std::string("fetometry ") + kVersion + " (report schema " +
                                          std::to_string(kReportSchema) + ")");

    AnalyzeArgs analyze;
    auto* a = app.add_subcommand("analyze", "analyze one study and write a report");
    a->add_option("--input", analyze.input, "study directory")->required();
    a->add_option("--backend", analyze.backend, "fixture:DIR or phantom:SPEC")->required();
    a->add_option("--output", analyze.output, "report JSON path")->required();
    a->add_option("--frames-csv", analyze.frames_csv, "optional per-frame CSV dump");
    a->add_option("--seed", analyze.seed, "phantom backend seed");
    analyze.flags.add_to(*a);

    PhantomArgs phantom;
    auto* p = app.add_subcommand("phantom", "generate a synthetic study with ground truth");
    p->add_option("--spec", phantom.spec, "phantom.json (built-in default when omitted)");
    p->add_option("--out", phantom.out, "output directory")->required();
    p->add_option("--seed", phantom.seed, "noise seed");
    p->add_option("--noise-sigma", phantom.noise_sigma, "override the spec's mask noise level");

    AgreeArgs agree;
    auto* g = app.add_subcommand("agree", "observer-agreement statistics from a ratings CSV");
    g->add_option("--ratings", agree.ratings, "ratings CSV")->required();
    g->add_option("--reference", agree.reference, "reference reader id")->capture_default_str();
    g->add_option("--out", agree.out, "statistics JSON path")->required();
    g->add_option("--icc-model", agree.icc_model, "icc1, icc2 (default) or icc3");

    EvaluateArgs evaluate;
    auto* e = app.add_subcommand("evaluate", "score a backend against a ground-truth fixture");
    e->add_option("--backend", evaluate.backend, "fixture:DIR or phantom:SPEC")->required();
    e->add_option("--truth", evaluate.truth, "ground-truth fixture directory")->required();
    e->add_option("--out", evaluate.out, "metrics JSON path")->required();
    e->add_option("--seed", evaluate.seed, "phantom backend seed");
    evaluate.flags.add_to(*e);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& s) {
        return app.exit(s, out, err);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex, out, err);
        return kExitUsage;
    }

    const Streams io{out, err, quiet};
    try {
        if (a->parsed()) return cmd_analyze(analyze, io);
        if (p->parsed()) return cmd_phantom(phantom, io);
        if (g->parsed()) return cmd_agree(agree, io);
        if (e->parsed()) return cmd_evaluate(evaluate, io);
    } catch (const Error& ex) {
        err << "fetometry: " << ex.what() << '\n';
        return exit_code_for(ex.code());
    } catch (const std::exception& ex) {
        err << "fetometry: internal error: " << ex.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}

}  // namespace fetometry::cli
