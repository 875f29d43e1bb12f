#include "cli_harness.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

using namespace activereg;
using namespace activereg::testing;

namespace {

const fs::path kScenarios = ACTIVEREG_SCENARIO_DIR;

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "scenario.cfg";
    std::ofstream(p) << text;
    return p;
}

}  // namespace

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
        cfg = write_config(dir, small_config());
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string out(const std::string& name) const { return (dir / name).string(); }

    fs::path dir;
    fs::path cfg;
};

TEST_F(Cli, EverySubcommandIsByteReproducible) {
    const std::vector<std::string> commands = {"batch", "iterative", "fit", "report", "validate -b L1_pen1,T3"};
    for (const std::string& c : commands) {
        const std::string tail = " -c " + cfg.string();
        ASSERT_EQ(run_cli(c + tail + " -w 1 -o " + out("one")), 0) << c;
        ASSERT_EQ(run_cli(c + tail + " -w 1 -o " + out("again")), 0) << c;
        ASSERT_EQ(run_cli(c + tail + " -w 4 -o " + out("four")), 0) << c;
        const auto a = snapshot(dir / "one");
        EXPECT_FALSE(a.empty()) << c;
        EXPECT_EQ(a, snapshot(dir / "again")) << c;
        EXPECT_EQ(a, snapshot(dir / "four")) << c;
        for (const char* d : {"one", "again", "four"}) fs::remove_all(dir / d);
    }
}

TEST_F(Cli, SeedOverrideChangesTheDraws) {
    ASSERT_EQ(run_cli("batch -c " + cfg.string() + " -o " + out("a")), 0);
    ASSERT_EQ(run_cli("batch -c " + cfg.string() + " -o " + out("b")), 0);
    ::setenv("ACTIVEREG_SEED", "777", 1);
    const int rc = run_cli("batch -c " + cfg.string() + " -o " + out("c"));
    ::unsetenv("ACTIVEREG_SEED");
    ASSERT_EQ(rc, 0);
    EXPECT_EQ(snapshot(dir / "a"), snapshot(dir / "b"));
    EXPECT_NE(snapshot(dir / "a"), snapshot(dir / "c"));
}

TEST_F(Cli, InputsAreNotModified) {
    const std::string before = read_text(cfg);
    const auto stamp = fs::last_write_time(cfg);
    ASSERT_EQ(run_cli("report -c " + cfg.string() + " -o " + dir.string()), 0);
    EXPECT_EQ(read_text(cfg), before);
    EXPECT_EQ(fs::last_write_time(cfg), stamp);
}

TEST_F(Cli, RunReportRecordsTheDigest) {
    ASSERT_EQ(run_cli("batch -c " + cfg.string() + " -o " + out("r")), 0);
    const auto j = nlohmann::json::parse(read_text(dir / "r" / "run_report.json"));
    EXPECT_EQ(j["command"], "batch");
    EXPECT_EQ(j["config_digest"], config_digest(parse_config(small_config())));
    EXPECT_TRUE(j.contains("wall_seconds"));
}

TEST_F(Cli, ValidationOutputHasOneEntryPerCheck) {
    ASSERT_EQ(run_cli("validate -b L1_pen1 --per-rep -r 150 -c " + cfg.string() + " -o " + out("v")), 0);
    const auto j = nlohmann::json::parse(read_text(dir / "v" / "validation.json"));
    ASSERT_EQ(j["entries"].size(), 1u);
    EXPECT_EQ(j["entries"][0]["replications"], 150);
    const std::string reps = read_text(dir / "v" / "validation_reps.csv");
    EXPECT_EQ(std::count(reps.begin(), reps.end(), '\n'), 151);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run_cli("batch -c " + cfg.string() + " -o " + out("ok")), 0);
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("batch -c /no/such/file.cfg"), 2);
    EXPECT_EQ(run_cli("bogus -c " + cfg.string()), 2);
    EXPECT_EQ(run_cli("validate -b L9 -c " + cfg.string() + " -o " + out("x")), 2);

    const fs::path typo = write_config(dir / "..", small_config() + "[penalty]\nsgima = 1\n");
    EXPECT_EQ(run_cli("report -c " + typo.string() + " -o " + out("x")), 2);
    fs::remove(typo);

    // Probabilities so small that no model sees enough labels.
    std::string starved = small_config();
    starved.replace(starved.find("k1 = constant(0.5)"), 18, "k1 = constant(0.0001)");
    starved.replace(starved.find("k2 = proportional(0.3)"), 22, "k2 = constant(0.0002)");
    const fs::path sp = dir / "starved.cfg";
    std::ofstream(sp) << starved;
    EXPECT_EQ(run_cli("batch -c " + sp.string() + " -o " + out("s")), 1);
}

TEST(CliData, DataModeRunsAndValidateNeedsATruth) {
    const fs::path dir = scratch_dir("data");
    const std::string cfg = (kScenarios / "data.cfg").string();
    for (const char* c : {"batch", "iterative", "fit", "report"})
        EXPECT_EQ(run_cli(std::string(c) + " -c " + cfg + " -o " + dir.string()), 0) << c;
    EXPECT_EQ(run_cli("validate -c " + cfg + " -o " + dir.string()), 2);
    fs::remove_all(dir);
}
