#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "satt/io.hpp"

using namespace satt;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("satt_io_test_" + std::to_string(::getpid()))) {
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path operator/(const std::string& name) const { return path_ / name; }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelConfig tiny_model(KernelMode mode = KernelMode::both) {
    ModelConfig mc;
    mc.channels = 2;
    mc.window = 6;
    mc.d_model = 8;
    mc.heads = 2;
    mc.dk = 4;
    mc.layers = 2;
    mc.d_ff = 8;
    mc.kernel.mode = mode;
    return mc;
}

Window tiny_window(std::size_t T = 6, std::size_t C = 2) {
    Window w;
    w.values = Matrix(T, C);
    w.mask = Matrix(T, C, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
        w.timestamps.push_back(static_cast<double>(t));
        for (std::size_t c = 0; c < C; ++c) w.values(t, c) = std::sin(0.7 * t + c);
    }
    return w;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST(Config, RenderParseRoundTrip) {
    RunConfig cfg;
    cfg.synth.noise = 0.1 + 0.2;  // not exactly representable as a short decimal
    cfg.synth.event_threshold = 1.0 / 3.0;
    cfg.model.kernel.mode = KernelMode::periodic;
    cfg.model.pooling = Pooling::max;
    cfg.train.seeds = {4, 5};
    cfg.data.points = PredictionPoints::all;
    const auto text = render_config(cfg);
    const auto back = parse_config_string(text);
    EXPECT_EQ(render_config(back), text);
    EXPECT_EQ(back.synth.noise, cfg.synth.noise);
    EXPECT_EQ(*back.synth.event_threshold, 1.0 / 3.0);
    EXPECT_EQ(back.train.seeds, cfg.train.seeds);
    EXPECT_EQ(back.model.pooling, Pooling::max);
}

TEST(Config, CommentsBlankLinesAndOverrides) {
    const auto cfg = parse_config_string(
        "# header\n\n  model.layers = 1   # inline\nmodel.kernel=exp\nsynth.event_threshold = auto\n");
    EXPECT_EQ(cfg.model.layers, 1u);
    EXPECT_EQ(cfg.model.kernel.mode, KernelMode::exp);
    EXPECT_FALSE(cfg.synth.event_threshold.has_value());
}

TEST(Config, ErrorsNameKeyAndLine) {
    auto message = [](const std::string& text) -> std::string {
        try {
            parse_config_string(text);
        } catch (const ConfigError& e) {
            return e.what();
        }
        return "no error";
    };
    EXPECT_NE(message("model.layers = 2\nmodel.bogus = 1\n").find("config:2"), std::string::npos);
    EXPECT_NE(message("model.bogus = 1\n").find("model.bogus"), std::string::npos);
    EXPECT_NE(message("train.batch_size = -3\n").find("train.batch_size"), std::string::npos);
    EXPECT_NE(message("synth.noise = abc\n").find("synth.noise"), std::string::npos);
    EXPECT_NE(message("model.adaptive = maybe\n").find("model.adaptive"), std::string::npos);
    EXPECT_NE(message("just words\n").find("key = value"), std::string::npos);
}

TEST(Config, SyncCopiesWindowAndChannels) {
    RunConfig cfg;
    cfg.data.window = 11;
    cfg.sync(5);
    EXPECT_EQ(cfg.model.window, 11u);
    EXPECT_EQ(cfg.model.channels, 5u);
}

TEST(Config, MissingFileIsConfigError) {
    EXPECT_THROW(load_config("/nonexistent/satt.cfg"), ConfigError);
}

// ---------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTripIsBitExact) {
    TempDir dir;
    RunConfig cfg;
    cfg.model = tiny_model();
    cfg.data.window = 6;
    ClassifierModel model(cfg.model, 17);
    NormStats stats{{0.1, -2.5}, {1.0 / 3.0, 7.0}, {}};
    save_checkpoint(dir / "ck.json", model, cfg, stats);

    const auto ck = load_checkpoint(dir / "ck.json");
    EXPECT_EQ(render_config(ck.config), render_config(cfg));
    EXPECT_EQ(ck.stats.mean, stats.mean);
    EXPECT_EQ(ck.stats.std, stats.std);
    ClassifierModel fresh(ck.config.model, 99);
    load_parameters(fresh, ck.parameters);
    EXPECT_EQ(fresh.parameters().snapshot(), model.parameters().snapshot());
    const auto w = tiny_window();
    EXPECT_EQ(fresh.classify(w), model.classify(w));
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
    TempDir dir;
    RunConfig cfg;
    cfg.model = tiny_model();
    ClassifierModel model(cfg.model, 1);
    save_checkpoint(dir / "ck.json", model, cfg, {});
    const auto ck = load_checkpoint(dir / "ck.json");

    auto wider = tiny_model();
    wider.d_ff = 16;
    ClassifierModel other(wider, 1);
    EXPECT_THROW(load_parameters(other, ck.parameters), ShapeError);

    ClassifierModel vanilla(tiny_model(KernelMode::none), 1);
    EXPECT_THROW(load_parameters(vanilla, ck.parameters), ShapeError);  // extra kernel parameters

    auto deeper = tiny_model();
    deeper.layers = 3;
    ClassifierModel more(deeper, 1);
    EXPECT_THROW(load_parameters(more, ck.parameters), ShapeError);  // missing parameters
}

TEST(Checkpoint, RejectsOtherFiles) {
    TempDir dir;
    std::ofstream(dir / "x.json") << R"({"format": "something-else", "version": 1})";
    EXPECT_THROW(load_checkpoint(dir / "x.json"), IoError);
    std::ofstream(dir / "y.json") << "{ not json";
    EXPECT_THROW(load_checkpoint(dir / "y.json"), IoError);
    EXPECT_THROW(load_checkpoint(dir / "missing.json"), IoError);
}

// ---------------------------------------------------------------- reports and metrics

TEST(Metrics, JsonMatchesSchema) {
    EvalResult r{0.25, 0.75, 40, 10};
    const auto j = metrics_json(r, "test");
    EXPECT_EQ(validate_metrics_json(j), "");
    EXPECT_EQ(j["auprc"].get<double>(), 0.25);
    EXPECT_EQ(validate_metrics_json(json::parse(j.dump())), "");
}

TEST(Metrics, SchemaViolationsAreReported) {
    const auto good = metrics_json(EvalResult{0.5, 0.5, 10, 3}, "test");
    auto broken = [&](auto mutate) {
        json j = good;
        mutate(j);
        return validate_metrics_json(j);
    };
    EXPECT_NE(broken([](json& j) { j["schema"] = "v0"; }), "");
    EXPECT_NE(broken([](json& j) { j["auprc"] = 1.5; }), "");
    EXPECT_NE(broken([](json& j) { j.erase("auroc"); }), "");
    EXPECT_NE(broken([](json& j) { j["n"] = -1; }), "");
    EXPECT_NE(broken([](json& j) { j["n_positive"] = 11; }), "");
    EXPECT_NE(broken([](json& j) { j["split"] = 3; }), "");
    EXPECT_NE(validate_metrics_json(json::array()), "");
}

TEST(Report, JsonCarriesMeanStdAndSe) {
    RunReport r;
    for (double a : {0.2, 0.4, 0.6}) {
        SeedReport s;
        s.test.auprc = a;
        s.test.auroc = 0.5;
        r.seeds.push_back(s);
    }
    r.finalize();
    const auto j = run_report_json(r);
    EXPECT_DOUBLE_EQ(j["test_auprc"]["mean"].get<double>(), 0.4);
    EXPECT_DOUBLE_EQ(j["test_auprc"]["std"].get<double>(), 0.2);
    EXPECT_DOUBLE_EQ(j["test_auprc"]["se"].get<double>(), 0.2 / std::sqrt(3.0));
    EXPECT_EQ(j["seeds"].size(), 3u);
    EXPECT_TRUE(j["seeds"][0]["head_diversity"].is_null());
}

// ---------------------------------------------------------------- dumps

TEST(Dump, MatrixCsvRoundTripIsExact) {
    TempDir dir;
    Matrix m(2, 3);
    m(0, 0) = 1.0 / 3.0;
    m(0, 1) = -1e-300;
    m(1, 2) = 12345.678901234567;
    write_matrix_csv(dir / "m.csv", m);
    EXPECT_EQ(read_matrix_csv(dir / "m.csv"), m);
}

TEST(Dump, PgmHeaderAndScaling) {
    TempDir dir;
    Matrix m(2, 3);
    m(0, 0) = -1.0;
    m(1, 2) = 1.0;
    write_pgm(dir / "a.pgm", m);
    const auto bytes = slurp(dir / "a.pgm");
    const std::string header = "P5\n3 2\n255\n";
    ASSERT_EQ(bytes.size(), header.size() + 6);
    EXPECT_EQ(bytes.substr(0, header.size()), header);
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size()]), 0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 1]), 128);
    EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 255);

    write_pgm(dir / "c.pgm", Matrix(2, 2, 0.25));
    const auto flat = slurp(dir / "c.pgm");
    EXPECT_EQ(flat.substr(flat.size() - 4), std::string(4, '\0'));
}

TEST(Dump, KernelCurvesStartAtOne) {
    const KernelParams p{0.3, 1.2, 0.8, 5.0};
    for (auto mode : {KernelMode::none, KernelMode::exp, KernelMode::periodic, KernelMode::both}) {
        KernelSpec spec;
        spec.mode = mode;
        const auto c = kernel_curves(spec, p, 10);
        for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(c(r, 0), 1.0);
        for (std::size_t h = 0; h < 10; ++h) EXPECT_EQ(c(2, h), c(0, h) * c(1, h));
        if (!spec.uses_exp()) {
            for (std::size_t h = 0; h < 10; ++h) EXPECT_EQ(c(0, h), 1.0);
        }
    }
    KernelSpec both;
    const auto c = kernel_curves(both, p, 10);
    EXPECT_EQ(c(0, 3), exp_kernel_value(0.3, 1.2, 3.0));
    EXPECT_EQ(c(1, 5), periodic_kernel_value(0.8, 5.0, 5.0));
}

TEST(Dump, OneAttentionAndOneKernelFilePerLayerHead) {
    TempDir dir;
    const auto mc = tiny_model();
    ClassifierModel model(mc, 4);
    const auto files = dump_model(model, tiny_window(), dir.path());
    EXPECT_EQ(files.attention.size(), mc.layers * mc.heads);
    EXPECT_EQ(files.kernels.size(), mc.layers * mc.heads);
    EXPECT_EQ(files.images.size(), mc.layers * mc.heads);
    for (const auto& p : files.attention) {
        const auto a = read_matrix_csv(p);
        ASSERT_EQ(a.rows(), 6u);
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
    std::ifstream in(files.kernels.front());
    std::string header, exp_row;
    std::getline(in, header);
    std::getline(in, exp_row);
    EXPECT_EQ(header, "kernel,h0,h1,h2,h3,h4,h5");
    EXPECT_EQ(exp_row.substr(0, 6), "exp,1,");
}

TEST(Dump, AdaptiveModelUsesWindowKernels) {
    TempDir dir;
    auto mc = tiny_model();
    mc.kernel.adaptive = true;
    ClassifierModel model(mc, 4);
    const auto files = dump_model(model, tiny_window(), dir.path());
    EXPECT_EQ(files.kernels.size(), 4u);
}

// ---------------------------------------------------------------- sweep rows and manifests

TEST(Sweep, RowFormat) {
    SweepCell c;
    c.fraction = 0.1;
    c.seed = 3;
    c.report.test.auprc = 0.5;
    c.report.test.auroc = 0.75;
    EXPECT_EQ(sweep_row(c, KernelMode::both), "0.1,3,0.5,0.75,both,ok");
    c.skipped = true;
    EXPECT_EQ(sweep_row(c, KernelMode::none), "0.1,3,,,none,skipped");
}

TEST(Manifest, RoundTrip) {
    TempDir dir;
    RunManifest m;
    m.command = "sweep";
    m.config.model.layers = 1;
    m.config.train.seeds = {7, 8};
    m.data_path = "/data/x.csv";
    m.artifacts = {{"report", "/out/report.json"}};
    m.fractions = {0.1, 1.0};
    m.completed = {cell_key(0.1, 7)};
    save_manifest(dir / "manifest.json", m);
    const auto back = load_manifest(dir / "manifest.json");
    EXPECT_EQ(back.command, m.command);
    EXPECT_EQ(render_config(back.config), render_config(m.config));
    EXPECT_EQ(back.data_path, m.data_path);
    EXPECT_EQ(back.artifacts, m.artifacts);
    EXPECT_EQ(back.fractions, m.fractions);
    EXPECT_EQ(back.completed, m.completed);
    EXPECT_EQ(back.version, std::string(kToolVersion));
}
