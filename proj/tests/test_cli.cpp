#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "swcert/harness.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(SWCERT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const char* kSmall = " --length 30 --epochs 3 --mc-reps 8 --alpha 3 --pgd-steps 5 --threads 1";

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("certify --threat sideways"), 2);
    EXPECT_EQ(run("certify --w notanumber"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, ValidationErrorsExitOne) {
    const auto dir = fresh_dir("swcert_cli_validation");
    EXPECT_EQ(run("certify --eps 0.5,0.25 --out " + dir.string()), 1);
    std::ofstream(dir / "bad.json") << R"({"unknown_field": 3})";
    EXPECT_EQ(run("certify --config " + (dir / "bad.json").string() + " --out " + dir.string()), 1);
    EXPECT_EQ(run("certify --stream " + (dir / "missing.csv").string() + " --out " + dir.string()), 1);
    fs::remove_all(dir);
}

TEST(Cli, GenWritesStream) {
    const auto dir = fresh_dir("swcert_cli_gen");
    const auto path = dir / "s.csv";
    ASSERT_EQ(run("gen --length 40 --dim 3 --classes 4 --data-seed 9 -o " + path.string()), 0);
    const auto s = swcert::load_csv_stream(path.string(), 3, "label", 4);
    EXPECT_EQ(s.size(), 40u);
    swcert::SyntheticConfig cfg;
    cfg.length = 40;
    cfg.dim = 3;
    cfg.num_classes = 4;
    cfg.seed = 9;
    EXPECT_EQ(s, swcert::generate_synthetic_stream(cfg));
    fs::remove_all(dir);
}

TEST(Cli, CertifyFromCsvWithConfigOverride) {
    const auto dir = fresh_dir("swcert_cli_certify");
    const auto csv = dir / "s.csv";
    ASSERT_EQ(run("gen --length 30 -o " + csv.string()), 0);
    std::ofstream(dir / "cfg.json") << R"({"w": 3, "eps_grid": [0, 1], "mc_reps": 4})";
    ASSERT_EQ(run("certify --config " + (dir / "cfg.json").string() + " --w 2 --stream " + csv.string() + kSmall +
                  " --out " + dir.string()),
              0);
    std::ifstream in(dir / "results.csv");
    const auto rows = swcert::read_results_csv(in);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].certified_lower, rows[0].z_tilde);
    std::ifstream mf(dir / "results_manifest.json");
    const auto manifest = nlohmann::json::parse(mf);
    EXPECT_EQ(manifest.at("w"), 2);
    EXPECT_EQ(manifest.at("mc_reps"), 8);
    fs::remove_all(dir);
}

TEST(Cli, TrainThenAttackBothThreats) {
    const auto dir = fresh_dir("swcert_cli_attack");
    const auto model = dir / "m.txt";
    ASSERT_EQ(run(std::string("train") + kSmall + " -o " + model.string()), 0);
    ASSERT_EQ(run("attack --threat both --eps 0,0.5 --model " + model.string() + kSmall + " --out " + dir.string()),
              0);
    for (const char* name : {"results_once.csv", "results_per-window.csv", "results_once_audit.csv"})
        EXPECT_TRUE(fs::exists(dir / name)) << name;
    std::ifstream in(dir / "results_once.csv");
    const auto rows = swcert::read_results_csv(in);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].attacked_z, rows[0].clean_z);
    fs::remove_all(dir);
}

TEST(Cli, SimulateIsDeterministic) {
    const auto a = fresh_dir("swcert_cli_sim_a"), b = fresh_dir("swcert_cli_sim_b");
    const std::string args = std::string("simulate --eps 0,0.5") + kSmall + " --seed 4 --out ";
    ASSERT_EQ(run(args + a.string()), 0);
    ASSERT_EQ(run(args + b.string()), 0);
    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
    EXPECT_FALSE(slurp(a / "results.csv").empty());
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Cli, VerifyPasses) {
    const auto dir = fresh_dir("swcert_cli_verify");
    EXPECT_EQ(run("verify --cases 20 --out " + dir.string()), 0);
    EXPECT_FALSE(fs::exists(dir / "verify_counterexamples.json"));
    fs::remove_all(dir);
}
