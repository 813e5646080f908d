// Drives the fimap executable end to end on a small synthetic scene.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fimap/report.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int status = 0;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(FIMAP_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return {-1, {}};
    char buf[512];
    while (fgets(buf, sizeof buf, p)) r.out += buf;
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// Each test owns a directory so tests can run as parallel processes.
class CliPipeline : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / "fimap_test_cli" /
               ::testing::UnitTest::GetInstance()->current_test_info()->name();
        fs::remove_all(dir_);
        const std::string r = dir_.string();
        ASSERT_EQ(run("synth --class-count 3 --per-class 2 --width 160 --height 120 -o " + r + "/syn").status, 0);
    }

    fs::path root() const { return dir_; }

private:
    fs::path dir_;
};

} // namespace

TEST_F(CliPipeline, SyntheticRoundTripScoresPerfectly) {
    const std::string r = root().string();
    ASSERT_EQ(run("segment " + r + "/syn/manifest.json -o " + r + "/seg").status, 0);
    const auto regions = fimap::read_csv(root() / "seg/regions.csv");
    const auto truth = fimap::read_csv(root() / "syn/truth.csv");
    EXPECT_EQ(regions.rows.size(), truth.rows.size());

    ASSERT_EQ(run("extract " + r + "/syn/manifest.json --labels " + r + "/seg/labels.png -o " + r + "/ext").status, 0);
    ASSERT_EQ(run("build-library --fingerprints " + r + "/ext/fingerprints.json --regions " + r +
                  "/seg/regions.csv --truth " + r + "/syn/truth.csv -o " + r + "/lib")
                  .status,
              0);
    ASSERT_EQ(run("classify --library " + r + "/lib/library.json --fingerprints " + r +
                  "/ext/fingerprints.json --labels " + r + "/seg/labels.png -o " + r + "/cls")
                  .status,
              0);
    const auto ev = run("evaluate --predicted " + r + "/cls/classifications.csv --truth " + r +
                        "/syn/truth.csv -o " + r + "/ev");
    ASSERT_EQ(ev.status, 0) << ev.out;
    const auto metrics = fimap::read_csv(root() / "ev/metrics.csv");
    for (const auto& row : metrics.rows) {
        if (row[0] == "precision" || row[0] == "recall") EXPECT_EQ(row[1], "1") << row[0];
    }

    ASSERT_EQ(run("distance-matrix --library " + r + "/lib/library.json -o " + r + "/dm").status, 0);
    const auto dm = fimap::read_csv(root() / "dm/distance_matrix.csv");
    ASSERT_EQ(dm.rows.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(dm.rows[i][i + 1], "0");
    for (const char* d : {"seg", "ext", "lib", "cls", "ev", "dm"}) {
        EXPECT_TRUE(fs::exists(root() / d / "run_log.json")) << d;
    }
}

TEST_F(CliPipeline, SegmentIsIdempotent) {
    const std::string r = root().string();
    ASSERT_EQ(run("segment " + r + "/syn/manifest.json -o " + r + "/seg_a").status, 0);
    ASSERT_EQ(run("segment " + r + "/syn/manifest.json -o " + r + "/seg_b").status, 0);
    for (const char* f : {"mask.png", "labels.png", "regions.csv", "registration.csv", "run_log.json"}) {
        EXPECT_EQ(slurp(root() / "seg_a" / f), slurp(root() / "seg_b" / f)) << f;
    }
}

TEST_F(CliPipeline, KFlagReachesRunLog) {
    const std::string r = root().string();
    ASSERT_EQ(run("--k 4 segment " + r + "/syn/manifest.json -o " + r + "/seg_k4").status, 0);
    std::ifstream in(root() / "seg_k4/run_log.json");
    const auto log = nlohmann::json::parse(in);
    EXPECT_EQ(log["config"]["segmentation"]["k"], 4);
    EXPECT_EQ(log["command"], "segment");
}

TEST_F(CliPipeline, MissingManifestFailsWithoutOutputs) {
    const std::string r = root().string();
    const auto res = run("segment " + r + "/nowhere/manifest.json -o " + r + "/seg_missing");
    EXPECT_NE(res.status, 0);
    EXPECT_NE(res.out.find("cannot open manifest"), std::string::npos) << res.out;
    EXPECT_FALSE(fs::exists(root() / "seg_missing"));
}

TEST_F(CliPipeline, ClassifyRequiresLibrary) {
    const std::string r = root().string();
    EXPECT_NE(run("classify --fingerprints x.json --labels y.png -o " + r + "/c").status, 0);
    EXPECT_NE(run("evaluate -o " + r + "/e").status, 0);
    EXPECT_FALSE(fs::exists(root() / "e"));
}

TEST(Cli, CalibrateEv) {
    const auto res = run("calibrate-ev --lux 70.3 --shutter 2");
    EXPECT_EQ(res.status, 0);
    EXPECT_NE(res.out.find("140.6 lx*s"), std::string::npos) << res.out;
    const auto uv = run("calibrate-ev --lux 1.0 --shutter 4");
    EXPECT_NE(uv.out.find("4.0 lx*s"), std::string::npos) << uv.out;
}

TEST(Cli, DistanceMatrixFromTable) {
    const auto dir = fs::temp_directory_path() / "fimap_test_cli_matrix";
    fs::create_directories(dir);
    std::ofstream(dir / "m.csv") << "class,PS,EPS,PET\nPS,0,0.45,3\nEPS,,0,2\nPET,,,0\n";
    const auto res = run("distance-matrix --matrix " + (dir / "m.csv").string() + " -o " + (dir / "out").string());
    EXPECT_EQ(res.status, 0) << res.out;
    EXPECT_NE(res.out.find("PS,EPS,0.45"), std::string::npos) << res.out;
}
