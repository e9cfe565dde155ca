// Runs the satt executable end to end on a tiny configuration.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "satt/io.hpp"

using namespace satt;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / ("satt_cli_test_" + std::to_string(::getpid()));

const char* kConfig = R"(synth.n_samples = 60
synth.length = 12
synth.channels = 2
data.window = 8
model.layers = 2
model.d_model = 8
model.heads = 2
model.dk = 4
model.d_ff = 8
train.max_epochs = 3
train.batches_per_epoch = 3
train.batch_size = 8
train.seeds = 1,2
)";

struct Result {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Result run(const std::string& args) {
    const auto out = kDir / "stdout.txt", err = kDir / "stderr.txt";
    const std::string cmd =
        std::string(SATT_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string p(const std::string& name) { return (kDir / name).string(); }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::create_directories(kDir);
        std::ofstream(kDir / "small.cfg") << kConfig;
        ASSERT_EQ(run("synth --config " + p("small.cfg") + " --out " + p("data.csv")).code, 0);
        ASSERT_EQ(run("train --config " + p("small.cfg") + " --data " + p("data.csv") + " --out " + p("run")).code, 0);
    }
    static void TearDownTestSuite() { fs::remove_all(kDir); }
};

}  // namespace

TEST_F(Cli, SynthWritesOneRowPerStepAndIsDeterministic) {
    ASSERT_EQ(run("synth --config " + p("small.cfg") + " --out " + p("again.csv")).code, 0);
    const auto a = slurp(p("data.csv")), b = slurp(p("again.csv"));
    EXPECT_EQ(a, b);
    EXPECT_EQ(count_lines(a), 1u + 60u * 12u);
}

TEST_F(Cli, InvalidPositiveRateNamesTheField) {
    std::ofstream(kDir / "bad.cfg") << "synth.positive_rate = 1.5\n";
    const auto r = run("synth --config " + p("bad.cfg") + " --out " + p("bad.csv"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("positive_rate"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("train").code, 1);
    EXPECT_EQ(run("train --out x --kernel gaussian").code, 1);
    EXPECT_EQ(run("--version").code, 0);
}

TEST_F(Cli, MissingDataFileIsRuntimeErrorWithPath) {
    const auto r = run("train --data " + p("nope.csv") + " --out " + p("nope"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("nope.csv"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainWritesManifestReportAndCheckpoints) {
    for (const char* f : {"manifest.json", "report.json", "learning_curve.csv", "checkpoint_1.json",
                          "checkpoint_2.json"})
        EXPECT_TRUE(fs::exists(kDir / "run" / f)) << f;
    const auto m = load_manifest(kDir / "run" / "manifest.json");
    EXPECT_EQ(m.command, "train");
    EXPECT_EQ(m.config.model.layers, 2u);
    EXPECT_EQ(m.config.train.seeds, (std::vector<std::uint64_t>{1, 2}));
}

TEST_F(Cli, EvalReproducesTrainingTestMetrics) {
    const auto report = json::parse(slurp(kDir / "run" / "report.json"));
    for (int k = 0; k < 2; ++k) {
        const std::string seed = std::to_string(k + 1);
        const auto metrics = p("metrics_" + seed + ".json");
        ASSERT_EQ(run("eval --checkpoint " + p("run/checkpoint_" + seed + ".json") + " --data " +
                      p("data.csv") + " --out " + metrics)
                      .code,
                  0);
        const auto j = json::parse(slurp(metrics));
        EXPECT_EQ(validate_metrics_json(j), "");
        EXPECT_EQ(j["auprc"].get<double>(), report["seeds"][k]["test"]["auprc"].get<double>());
        EXPECT_EQ(j["auroc"].get<double>(), report["seeds"][k]["test"]["auroc"].get<double>());
    }
}

TEST_F(Cli, EvalRejectsShapeMismatch) {
    auto ck = json::parse(slurp(kDir / "run" / "checkpoint_1.json"));
    ck["config"]["model.d_ff"] = "16";
    std::ofstream(kDir / "mismatch.json") << ck.dump();
    const auto r = run("eval --checkpoint " + p("mismatch.json") + " --data " + p("data.csv"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("ff1.w"), std::string::npos) << r.err;
}

TEST_F(Cli, DumpWritesOneFilePerLayerHead) {
    ASSERT_EQ(run("dump --checkpoint " + p("run/checkpoint_1.json") + " --data " + p("data.csv") + " --out " +
                  p("dump") + " --index 0")
                  .code,
              0);
    std::size_t csv_attention = 0, pgm = 0, kernels = 0;
    for (const auto& e : fs::directory_iterator(kDir / "dump")) {
        const auto name = e.path().filename().string();
        if (name.rfind("attention_", 0) == 0 && e.path().extension() == ".csv") ++csv_attention;
        if (e.path().extension() == ".pgm") ++pgm;
        if (name.rfind("kernel_", 0) == 0) ++kernels;
    }
    EXPECT_EQ(csv_attention, 4u);
    EXPECT_EQ(kernels, 4u);
    EXPECT_EQ(pgm, 4u);
    const auto a = read_matrix_csv(kDir / "dump" / "attention_l1_h0.csv");
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
    const auto r = run("dump --checkpoint " + p("run/checkpoint_1.json") + " --data " + p("data.csv") + " --out " +
                       p("dump2") + " --index 100000");
    EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, RerunFromManifestReproducesMetrics) {
    const auto r = run("rerun --manifest " + p("run/manifest.json") + " --out " + p("rerun"));
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("reproduced"), std::string::npos);
    const auto a = json::parse(slurp(kDir / "run" / "report.json"));
    const auto b = json::parse(slurp(kDir / "rerun" / "report.json"));
    for (int k = 0; k < 2; ++k) EXPECT_EQ(a["seeds"][k]["test"], b["seeds"][k]["test"]);
}

TEST_F(Cli, SweepRowsAndResume) {
    const std::string args =
        "sweep --config " + p("small.cfg") + " --data " + p("data.csv") + " --out " + p("sweep") + " --fractions 0.5,1";
    ASSERT_EQ(run(args).code, 0);
    const auto first = slurp(kDir / "sweep" / "sweep.csv");
    EXPECT_EQ(count_lines(first), 1u + 2u * 2u);
    EXPECT_EQ(first.substr(0, first.find('\n')), "fraction,seed,auprc,auroc,kernel,status");

    // Forget one finished cell: the rerun trains only that cell.
    auto m = load_manifest(kDir / "sweep" / "manifest.json");
    ASSERT_EQ(m.completed.size(), 4u);
    m.completed.pop_back();
    save_manifest(kDir / "sweep" / "manifest.json", m);
    const auto r = run(args);
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("resuming: 3 cells"), std::string::npos) << r.out;
    EXPECT_EQ(count_lines(r.out), 2u);
    EXPECT_EQ(slurp(kDir / "sweep" / "sweep.csv"), first);

    const auto other = run("sweep --config " + p("small.cfg") + " --data " + p("data.csv") + " --out " +
                           p("sweep") + " --fractions 0.25,1");
    EXPECT_EQ(other.code, 1);
}

TEST_F(Cli, BenchRowsAndShapeErrors) {
    auto r = run("bench --config " + p("small.cfg") + " --iters 10 --out " + p("bench.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    auto csv = slurp(p("bench.csv"));
    EXPECT_EQ(count_lines(csv), 3u);
    EXPECT_NE(csv.find("vanilla,"), std::string::npos);
    EXPECT_NE(csv.find("sat-score,"), std::string::npos);

    r = run("bench --config " + p("small.cfg") + " --iters 10 --heads 1 --dk 8 --out " + p("bench_qk.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(slurp(p("bench_qk.csv")).find("sat-qk,"), std::string::npos);

    EXPECT_EQ(run("bench --config " + p("small.cfg") + " --kernel-apply qk").code, 1);
}
