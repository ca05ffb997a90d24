#include "commands.hpp"

#include "../oracles.hpp"
#include "../test_support.hpp"

#include <gtest/gtest.h>

using namespace fetometry;
using testsupport::TempDir;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "fetometry");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

PhantomSpec small_spec() {
    PhantomSpec spec;
    spec.study_id = "cli";
    spec.native_size = {120, 160};
    spec.spacing = {0.5, 0.5};
    spec.mask_size = Size{60, 80};
    auto frame = [](BodyPart part, std::array<double, 4> probs) {
        PhantomFrame f;
        f.part = part;
        f.probs = probs;
        return f;
    };
    auto head = frame(BodyPart::Head, {0.96, 0.02, 0.01, 0.01});
    head.ellipse = PhantomEllipse{80, 60, 40, 30, 10};
    auto abdomen = frame(BodyPart::Abdomen, {0.02, 0.95, 0.02, 0.01});
    abdomen.ellipse = PhantomEllipse{80, 60, 45, 38, 30};
    auto femur = frame(BodyPart::Femur, {0.01, 0.02, 0.96, 0.01});
    femur.bar = PhantomBar{80, 60, 60, 8, 20};
    spec.frames = {frame(BodyPart::Background, {0.1, 0.1, 0.1, 0.7}), head, abdomen, femur};
    return spec;
}

std::string write_spec(const TempDir& dir, const PhantomSpec& spec) {
    const auto path = dir / "spec.json";
    testsupport::write_file(path, to_json(spec).dump(2));
    return path.string();
}

nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(testsupport::read_file(p)); }

/// Generates a phantom study and returns its directory.
std::string make_study(const TempDir& dir, double sigma = 0.0, std::uint64_t seed = 0) {
    const auto study = (dir / "study").string();
    const auto r = run_cli({"phantom", "--spec", write_spec(dir, small_spec()), "--out", study, "--seed",
                        std::to_string(seed), "--noise-sigma", std::to_string(sigma), "--quiet"});
    EXPECT_EQ(r.code, 0) << r.err;
    return study;
}

}  // namespace

TEST(Cli, PhantomThenAnalyze) {
    TempDir dir;
    const auto study = make_study(dir);
    const auto report = (dir / "report.json").string();
    const auto r = run_cli({"analyze", "--input", study, "--backend", "fixture:" + study, "--output", report, "--frames-csv",
                        (dir / "frames.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read_json(report);
    EXPECT_EQ(j.at("selection").at("head").at("frame_index"), 1);
    EXPECT_EQ(j.at("selection").at("abdomen").at("frame_index"), 2);
    EXPECT_EQ(j.at("selection").at("femur").at("frame_index"), 3);
    EXPECT_FALSE(j.at("biometry").at("ga_weeks").is_null());
    const auto truth = read_json(std::filesystem::path(study) / "ground_truth.json");
    // masks are rasterized at half resolution: one mask pixel is 1 mm
    EXPECT_NEAR(j.at("biometry").at("hc_cm").get<double>(), truth.at("frames").at(1).at("HC").get<double>(), 2 * 0.1);
    EXPECT_NE(r.out.find("analyzed 4 frames"), std::string::npos);
}

TEST(Cli, FixtureAndPhantomBackendsAgree) {
    TempDir dir;
    const auto study = make_study(dir);
    const auto spec = write_spec(dir, small_spec());
    ASSERT_EQ(run_cli({"analyze", "--input", study, "--backend", "fixture:" + study, "--output", (dir / "a.json").string(), "-q"}).code, 0);
    ASSERT_EQ(run_cli({"analyze", "--input", study, "--backend", "phantom:" + spec, "--output", (dir / "b.json").string(), "-q"}).code, 0);
    auto a = read_json(dir / "a.json"), b = read_json(dir / "b.json");
    EXPECT_EQ(a.at("biometry"), b.at("biometry"));
}

TEST(Cli, MissingStudyIsInputError) {
    TempDir dir;
    const auto r = run_cli({"analyze", "--input", (dir / "nope").string(), "--backend", "phantom:default", "--output",
                        (dir / "r.json").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("fetometry:"), std::string::npos);
}

TEST(Cli, BadGateThresholdIsUsageError) {
    TempDir dir;
    const auto study = make_study(dir);
    const auto r = run_cli({"analyze", "--input", study, "--backend", "fixture:" + study, "--output",
                        (dir / "r.json").string(), "--gate-threshold", "1.5"});
    EXPECT_EQ(r.code, 64);
    EXPECT_FALSE(std::filesystem::exists(dir / "r.json"));
}

TEST(Cli, UnknownFlagAndMissingSubcommand) {
    EXPECT_EQ(run_cli({"analyze", "--bogus"}).code, 64);
    EXPECT_EQ(run_cli({}).code, 64);
}

TEST(Cli, UnknownBackendIsUsageError) {
    TempDir dir;
    const auto study = make_study(dir);
    EXPECT_EQ(run_cli({"analyze", "--input", study, "--backend", "carrier-pigeon", "--output", (dir / "r.json").string()}).code,
              64);
}

TEST(Cli, ExitCodeMapping) {
    EXPECT_EQ(cli::exit_code_for(ErrorCode::AllFramesFailed), 3);
    EXPECT_EQ(cli::exit_code_for(ErrorCode::BadFixture), 2);
    EXPECT_EQ(cli::exit_code_for(ErrorCode::MissingFrame), 2);
    EXPECT_EQ(cli::exit_code_for(ErrorCode::BadConfig), 64);
}

TEST(Cli, FixtureFrameCountMismatch) {
    TempDir dir;
    const auto study = make_study(dir);
    std::filesystem::remove(std::filesystem::path(study) / mask_file_name(3));
    auto rows = testsupport::read_file(std::filesystem::path(study) / "scores.csv");
    rows.erase(rows.rfind('\n', rows.size() - 2) + 1);
    testsupport::write_file(std::filesystem::path(study) / "scores.csv", rows);
    const auto r = run_cli({"analyze", "--input", study, "--backend", "fixture:" + study, "--output",
                        (dir / "r.json").string()});
    EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, PhantomOutputsAreByteIdenticalPerSeed) {
    TempDir a, b, c;
    make_study(a, 0.2, 11);
    make_study(b, 0.2, 11);
    make_study(c, 0.2, 12);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a / "study")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(entry.path(), a / "study");
        EXPECT_EQ(testsupport::read_file(entry.path()), testsupport::read_file(b / "study" / rel)) << rel;
    }
    EXPECT_NE(testsupport::read_file(a / "study" / mask_file_name(1)),
              testsupport::read_file(c / "study" / mask_file_name(1)));
}

TEST(Cli, PhantomRejectsOutOfBoundsSpec) {
    TempDir dir;
    auto spec = small_spec();
    spec.frames[1].ellipse->cx = 5;
    testsupport::write_file(dir / "bad.json", to_json(spec).dump());
    const auto r = run_cli({"phantom", "--spec", (dir / "bad.json").string(), "--out", (dir / "s").string()});
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, AgreeIdenticalReaders) {
    TempDir dir;
    std::string csv = "reader,case,reading,kind,value_cm\n";
    for (const std::string reader : {"REF", "A", "B"}) {
        for (int c = 1; c <= 5; ++c) csv += reader + ",c" + std::to_string(c) + ",1,HC," + std::to_string(20 + c) + "\n";
    }
    testsupport::write_file(dir / "r.csv", csv);
    const auto r = run_cli({"agree", "--ratings", (dir / "r.csv").string(), "--reference", "REF", "--out",
                        (dir / "s.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read_json(dir / "s.json");
    const auto& hc = j.at("kinds").at("HC");
    EXPECT_EQ(hc.at("icc").at("reading_1"), 1.0);
    EXPECT_TRUE(hc.at("icc").at("reading_2").is_null());
    EXPECT_EQ(hc.at("anova").at("reading_1").at("F"), 0.0);
    EXPECT_EQ(hc.at("anova").at("reading_1").at("p"), 1.0);
    EXPECT_EQ(hc.at("mae").at("A").at("mae_cm"), 0.0);
    EXPECT_EQ(j.at("icc_model"), "ICC(2,1)");
}

TEST(Cli, AgreeHandTable) {
    TempDir dir;
    // 4 readers x 4 cases, rows are cases
    const std::vector<std::vector<double>> x{{9, 2, 5, 8}, {6, 1, 3, 2}, {8, 4, 6, 8}, {7, 1, 2, 6}};
    std::string csv = "reader,case,reading,kind,value_cm\n";
    const char* readers[] = {"REF", "R1", "R2", "R3"};
    for (std::size_t c = 0; c < x.size(); ++c) {
        for (std::size_t r = 0; r < 4; ++r) csv += std::string(readers[r]) + ",k" + std::to_string(c) + ",1,AC," + std::to_string(x[c][r]) + "\n";
    }
    testsupport::write_file(dir / "r.csv", csv);
    ASSERT_EQ(run_cli({"agree", "--ratings", (dir / "r.csv").string(), "--reference", "REF", "--out", (dir / "s.json").string(),
                   "--icc-model", "icc3"}).code, 0);
    const auto j = read_json(dir / "s.json");
    EXPECT_NEAR(j.at("kinds").at("AC").at("icc").at("reading_1").get<double>(), oracle::icc31(x), 1e-12);
    // MAE of R1 against REF: |2-9|,|1-6|,|4-8|,|1-7| -> (7+5+4+6)/4
    EXPECT_DOUBLE_EQ(j.at("kinds").at("AC").at("mae").at("R1").at("mae_cm").get<double>(), 5.5);
}

TEST(Cli, AgreeSingleReaderIsInputError) {
    TempDir dir;
    testsupport::write_file(dir / "r.csv", "reader,case,reading,kind,value_cm\nA,1,1,HC,20\nA,2,1,HC,21\n");
    EXPECT_EQ(run_cli({"agree", "--ratings", (dir / "r.csv").string(), "--out", (dir / "s.json").string()}).code, 2);
    EXPECT_EQ(run_cli({"agree", "--ratings", (dir / "r.csv").string(), "--out", (dir / "s.json").string(), "--icc-model",
                   "icc9"}).code, 64);
}

TEST(Cli, EvaluatePerfectAndNoisy) {
    TempDir dir;
    const auto study = make_study(dir);
    const auto truth = study + "/truth";
    ASSERT_EQ(run_cli({"evaluate", "--backend", "fixture:" + truth, "--truth", truth, "--out", (dir / "p.json").string(), "-q"}).code, 0);
    const auto p = read_json(dir / "p.json");
    EXPECT_EQ(p.at("segmentation").at("foreground").at("iou"), 1.0);
    EXPECT_EQ(p.at("classification").at("macro").at("f1"), 1.0);

    auto noisy = small_spec();
    noisy.noise_sigma = 0.25;
    testsupport::write_file(dir / "noisy.json", to_json(noisy).dump());
    ASSERT_EQ(run_cli({"evaluate", "--backend", "phantom:" + (dir / "noisy.json").string(), "--seed", "4", "--truth", truth,
                   "--out", (dir / "n.json").string(), "-q"}).code, 0);
    const auto n = read_json(dir / "n.json");
    EXPECT_LT(n.at("segmentation").at("foreground").at("iou").get<double>(), 1.0);
}

TEST(Cli, EvaluateCountMismatch) {
    TempDir dir;
    const auto study = make_study(dir);
    auto fewer = small_spec();
    fewer.frames.pop_back();
    testsupport::write_file(dir / "fewer.json", to_json(fewer).dump());
    const auto r = run_cli({"evaluate", "--backend", "phantom:" + (dir / "fewer.json").string(), "--truth", study + "/truth",
                        "--out", (dir / "e.json").string()});
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, Version) {
    const auto r = run_cli({"--version"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find(kVersion), std::string::npos);
}

TEST(Cli, FlagsOverrideConfigFile) {
    TempDir dir;
    testsupport::write_file(dir / "cfg.json", R"({"gate_threshold": 0.99, "mask_threshold": 0.4})");
    cli::ConfigFlags flags;
    flags.config_file = (dir / "cfg.json").string();
    auto cfg = flags.resolve();
    EXPECT_EQ(cfg.gate_threshold, 0.99);
    EXPECT_EQ(cfg.mask_threshold, 0.4);
    flags.gate_threshold = 0.8;
    cfg = flags.resolve();
    EXPECT_EQ(cfg.gate_threshold, 0.8);
    EXPECT_EQ(cfg.mask_threshold, 0.4);

    // with gate 0.99 every frame of the small study is rejected
    const auto study = make_study(dir);
    ASSERT_EQ(run_cli({"analyze", "--input", study, "--backend", "fixture:" + study, "--output", (dir / "r.json").string(),
                   "--config", (dir / "cfg.json").string(), "-q"}).code, 0);
    EXPECT_TRUE(read_json(dir / "r.json").at("selection").at("head").is_null());
}
