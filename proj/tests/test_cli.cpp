// Runs the refh binary end to end on a tiny configuration.

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sys/wait.h>
#include <string>

#include <gtest/gtest.h>

#include "refh/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("refh_cli_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + REFH_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json tiny_config(std::size_t epochs) {
    return {{"preset", "lds-refh"},
            {"model", {{"hidden", 6}}},
            {"schedule",
             {{"epochs", epochs}, {"minibatch", {{"size", 3}}}, {"batch", {{"n_trajectories", 6}, {"trajectory_length", 12}, {"renewal_period", 2}}}}},
            {"data", {{"n_trajectories", 2}, {"length", 15}}},
            {"benchmark", {{"restarts", 2}, {"em_iters", 5}, {"train_trajectories", 2}, {"train_length", 50}}}};
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
    const fs::path f = dir / name;
    refh::io::open_out(f) << j.dump(2) << '\n';
    return f;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, GenerateTrainEvaluate) {
    TempDir d;
    const auto cfg = write_config(d.path, "c.json", tiny_config(4));
    const auto log = d.path / "log.txt";
    const auto data = d.path / "data", model = d.path / "model", eval = d.path / "eval";
    fs::create_directories(data);

    ASSERT_EQ(run("generate --config " + q(cfg) + " --seed 3 --out " + q(data), log), 0) << refh::io::read_text(log);
    const auto ds = refh::io::load_lds_dataset(data);
    ASSERT_EQ(ds.trajectories.size(), 2u);
    EXPECT_EQ(ds.trajectories[0].counts.cols(), 15);
    EXPECT_EQ(ds.trajectories[0].counts.rows(), 15);

    ASSERT_EQ(run("train --config " + q(cfg) + " --seed 3 --out " + q(model), log), 0) << refh::io::read_text(log);
    EXPECT_TRUE(fs::exists(model / "checkpoint.json"));
    EXPECT_TRUE(fs::exists(model / "metrics.csv"));
    const auto resolved = json::parse(refh::io::read_text(model / "config.resolved.json"));
    EXPECT_EQ(resolved.at("seed"), 3);
    EXPECT_EQ(resolved.at("model").at("hidden"), 6);
    const auto ck = refh::io::load_checkpoint(model / "checkpoint.json");
    EXPECT_EQ(ck.state.params.n_hid(), 6u);
    EXPECT_EQ(ck.state.next_renewal, 2u);

    ASSERT_EQ(run("evaluate --config " + q(cfg) + " --checkpoint " + q(model / "checkpoint.json") + " --dataset " + q(data) +
                      " --with-baselines --out " + q(eval),
                  log),
              0)
        << refh::io::read_text(log);
    const std::string csv = refh::io::read_text(eval / "eval.csv");
    EXPECT_EQ(csv.rfind("model,trajectory,mse\n", 0), 0u);
    EXPECT_NE(csv.find("refh,all,"), std::string::npos);
    EXPECT_NE(csv.find("KFopt,all,"), std::string::npos);
    EXPECT_NE(csv.find("KF0,all,"), std::string::npos);

    ASSERT_EQ(run("gen-traj --config " + q(cfg) + " --checkpoint " + q(model / "checkpoint.json") + " --steps 7 --out " + q(eval),
                  log),
              0)
        << refh::io::read_text(log);
    EXPECT_NE(refh::io::read_text(eval / "passes.csv").find("reverse,7,0,0,14,14"), std::string::npos);
}

TEST(Cli, TrainingIsDeterministic) {
    TempDir d;
    const auto cfg = write_config(d.path, "c.json", tiny_config(4));
    const auto log = d.path / "log.txt";
    ASSERT_EQ(run("train --config " + q(cfg) + " --seed 9 --out " + q(d.path / "a"), log), 0) << refh::io::read_text(log);
    ASSERT_EQ(run("train --config " + q(cfg) + " --seed 9 --out " + q(d.path / "b"), log), 0) << refh::io::read_text(log);
    ASSERT_EQ(run("train --config " + q(cfg) + " --seed 10 --out " + q(d.path / "c"), log), 0) << refh::io::read_text(log);
    const auto a = refh::io::read_text(d.path / "a" / "checkpoint.json");
    EXPECT_EQ(a, refh::io::read_text(d.path / "b" / "checkpoint.json"));
    EXPECT_EQ(refh::io::read_text(d.path / "a" / "metrics.csv"), refh::io::read_text(d.path / "b" / "metrics.csv"));
    EXPECT_NE(a, refh::io::read_text(d.path / "c" / "checkpoint.json"));
}

// The learning rate here decays per epoch independently of the total, so a
// 2-epoch run resumed to 4 epochs must retrace the 4-epoch run exactly.
TEST(Cli, ResumeMatchesUninterruptedRun) {
    TempDir d;
    const auto full = write_config(d.path, "full.json", tiny_config(4));
    const auto half = write_config(d.path, "half.json", tiny_config(2));
    const auto log = d.path / "log.txt";
    ASSERT_EQ(run("train --config " + q(full) + " --out " + q(d.path / "a"), log), 0) << refh::io::read_text(log);
    ASSERT_EQ(run("train --config " + q(half) + " --out " + q(d.path / "b"), log), 0) << refh::io::read_text(log);
    ASSERT_EQ(run("train --config " + q(full) + " --resume --out " + q(d.path / "b"), log), 0) << refh::io::read_text(log);
    EXPECT_NE(refh::io::read_text(log).find("resumed"), std::string::npos);
    EXPECT_EQ(refh::io::read_text(d.path / "a" / "checkpoint.json"), refh::io::read_text(d.path / "b" / "checkpoint.json"));
    EXPECT_EQ(refh::io::read_text(d.path / "a" / "metrics.csv"), refh::io::read_text(d.path / "b" / "metrics.csv"));
}

TEST(Cli, BenchmarkWritesAllBaselines) {
    TempDir d;
    const auto cfg = write_config(d.path, "c.json", tiny_config(1));
    const auto log = d.path / "log.txt";
    fs::create_directories(d.path / "data");
    ASSERT_EQ(run("generate --config " + q(cfg) + " --out " + q(d.path / "data"), log), 0) << refh::io::read_text(log);
    ASSERT_EQ(run("benchmark --config " + q(cfg) + " --dataset " + q(d.path / "data") + " --out " + q(d.path / "bm"), log), 0)
        << refh::io::read_text(log);
    const std::string csv = refh::io::read_text(d.path / "bm" / "benchmark.csv");
    for (const char* row : {"KF0,0,", "KFopt,0,", "KF1,0,", "KF1,1,", "KF2,0,", "KF2,1,", "# medians:"}) {
        EXPECT_NE(csv.find(row), std::string::npos) << row;
    }
}

TEST(Cli, ErrorsGiveNonzeroExit) {
    TempDir d;
    const auto log = d.path / "log.txt";
    EXPECT_NE(run("", log), 0);
    EXPECT_NE(run("frobnicate", log), 0);
    EXPECT_NE(run("train --preset no-such-preset --out " + q(d.path / "x"), log), 0);
    EXPECT_NE(refh::io::read_text(log).find("unknown preset"), std::string::npos);
    const auto bad = write_config(d.path, "bad.json", json{{"modle", {{"hidden", 3}}}});
    EXPECT_NE(run("generate --config " + q(bad) + " --out " + q(d.path), log), 0);
    EXPECT_NE(refh::io::read_text(log).find("unknown key"), std::string::npos);
    EXPECT_NE(run("evaluate --checkpoint " + q(d.path / "missing.json") + " --dataset " + q(d.path), log), 0);
}
