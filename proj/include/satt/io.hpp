// Artifacts: checkpoints, run reports, metrics, attention/kernel dumps, sweep
// tables and run manifests. JSON via nlohmann::json; everything else is CSV or
// binary PGM.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "satt/config.hpp"
#include "satt/train.hpp"

namespace satt {

using json = nlohmann::json;

inline constexpr const char* kCheckpointFormat = "satt-checkpoint";
inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kMetricsSchema = "satt-metrics/1";
inline constexpr const char* kManifestFormat = "satt-manifest";

#ifdef SATT_VERSION
inline constexpr const char* kToolVersion = SATT_VERSION;
#else
inline constexpr const char* kToolVersion = "0.0.0";
#endif

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

inline json summary_json(const Summary& s) {
    return {{"mean", s.mean}, {"std", s.std}, {"se", s.se}, {"n", s.n}};
}

}  // namespace detail

// ---------------------------------------------------------------- config as JSON

inline json config_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
    return j;
}

inline RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw ConfigError(k + ": expected a string value");
        set_config_value(cfg, k, v.get<std::string>());
    }
    return cfg;
}

// ---------------------------------------------------------------- checkpoints

/// Doubles are stored as JSON numbers; nlohmann prints the shortest
/// round-trip representation, so values reload bit-exactly.
inline json checkpoint_json(const ClassifierModel& model, const RunConfig& cfg, const NormStats& stats) {
    json params = json::object();
    for (const auto& [name, v] : model.parameters().entries()) {
        const Matrix& m = v->value;
        params[name] = {{"rows", m.rows()},
                        {"cols", m.cols()},
                        {"data", std::vector<double>(m.data().begin(), m.data().end())}};
    }
    return {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"config", config_json(cfg)},
            {"channels", model.config().channels},
            {"norm", {{"mean", stats.mean}, {"std", stats.std}}},
            {"parameters", params}};
}

inline void save_checkpoint(const std::filesystem::path& path, const ClassifierModel& model,
                            const RunConfig& cfg, const NormStats& stats) {
    detail::write_text(path, checkpoint_json(model, cfg, stats).dump(1) + "\n");
}

struct Checkpoint {
    RunConfig config;
    NormStats stats;
    json parameters;
};

inline Checkpoint parse_checkpoint(const json& j, const std::string& origin = "checkpoint") {
    if (j.value("format", "") != kCheckpointFormat)
        throw IoError(origin + ": not a checkpoint (format field)");
    if (j.value("version", 0) != kCheckpointVersion)
        throw IoError(origin + ": unsupported checkpoint version");
    Checkpoint c;
    try {
        c.config = config_from_json(j.at("config"));
        c.config.sync(j.at("channels").get<std::size_t>());
        c.stats.mean = j.at("norm").at("mean").get<std::vector<double>>();
        c.stats.std = j.at("norm").at("std").get<std::vector<double>>();
        c.parameters = j.at("parameters");
    } catch (const json::exception& e) {
        throw IoError(origin + ": " + e.what());
    }
    return c;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(detail::read_json(path), path.string());
}

/// Copies checkpoint values into `model`; every parameter must be present with the same shape.
inline void load_parameters(ClassifierModel& model, const json& params) {
    std::set<std::string> seen;
    for (const auto& [name, v] : model.parameters().entries()) {
        if (!params.contains(name)) throw ShapeError("checkpoint lacks parameter '" + name + "'");
        const auto& p = params.at(name);
        const auto rows = p.at("rows").get<std::size_t>();
        const auto cols = p.at("cols").get<std::size_t>();
        if (rows != v->value.rows() || cols != v->value.cols()) {
            throw ShapeError("parameter '" + name + "': checkpoint has " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", model expects " + std::to_string(v->value.rows()) +
                             "x" + std::to_string(v->value.cols()));
        }
        const auto data = p.at("data").get<std::vector<double>>();
        if (data.size() != rows * cols) throw ShapeError("parameter '" + name + "': data length");
        std::copy(data.begin(), data.end(), v->value.data().begin());
        seen.insert(name);
    }
    for (const auto& [name, _] : params.items())
        if (!seen.count(name)) throw ShapeError("checkpoint has unexpected parameter '" + name + "'");
}

// ---------------------------------------------------------------- reports

inline json eval_json(const EvalResult& r) {
    return {{"auprc", r.auprc}, {"auroc", r.auroc}, {"n", r.n}, {"n_positive", r.n_positive}};
}

inline json seed_report_json(const SeedReport& s) {
    json j = {{"seed", s.seed},
              {"epochs_run", s.epochs_run},
              {"best_epoch", s.best_epoch},
              {"train_loss", s.train_loss},
              {"val_auprc", s.val_auprc},
              {"best_val_auprc", s.best_val_auprc},
              {"test", eval_json(s.test)},
              {"ms_per_iter", s.ms_per_iter},
              {"iterations", s.iterations},
              {"n_train", s.n_train},
              {"n_train_positive", s.n_train_positive},
              {"diag_band_mass", s.diag_band_mass}};
    j["head_diversity"] = s.head_diversity ? json(*s.head_diversity) : json(nullptr);
    return j;
}

inline json run_report_json(const RunReport& r) {
    json seeds = json::array();
    for (const auto& s : r.seeds) seeds.push_back(seed_report_json(s));
    return {{"seeds", seeds},
            {"test_auprc", detail::summary_json(r.test_auprc)},
            {"test_auroc", detail::summary_json(r.test_auroc)},
            {"ms_per_iter", r.ms_per_iter},
            {"warnings", r.warnings}};
}

/// Evaluation output. Schema "satt-metrics/1":
///   {"schema": string, "split": string, "n": int, "n_positive": int,
///    "auprc": number in [0,1], "auroc": number in [0,1]}
inline json metrics_json(const EvalResult& r, const std::string& split) {
    return {{"schema", kMetricsSchema}, {"split", split},        {"n", r.n},
            {"n_positive", r.n_positive}, {"auprc", r.auprc}, {"auroc", r.auroc}};
}

/// Empty when `j` conforms to "satt-metrics/1"; otherwise the first problem.
inline std::string validate_metrics_json(const json& j) {
    if (!j.is_object()) return "not an object";
    if (j.value("schema", "") != kMetricsSchema) return "schema must be " + std::string(kMetricsSchema);
    if (!j.contains("split") || !j["split"].is_string()) return "split: string required";
    for (const char* k : {"n", "n_positive"})
        if (!j.contains(k) || !j[k].is_number_unsigned()) return std::string(k) + ": non-negative integer required";
    for (const char* k : {"auprc", "auroc"}) {
        if (!j.contains(k) || !j[k].is_number()) return std::string(k) + ": number required";
        const double v = j[k].get<double>();
        if (!(v >= 0.0 && v <= 1.0)) return std::string(k) + ": must be in [0,1]";
    }
    if (j["n_positive"].get<std::size_t>() > j["n"].get<std::size_t>()) return "n_positive exceeds n";
    return {};
}

// ---------------------------------------------------------------- attention and kernel dumps

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    std::string out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out += (j ? "," : "") + detail::format_double(m(i, j));
        out += '\n';
    }
    detail::write_text(path, out);
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto& row = rows.emplace_back();
        for (auto cell : detail::split_commas(line)) {
            const auto v = detail::parse_double(cell);
            if (!v) throw IoError(path.string() + ": bad number '" + std::string(cell) + "'");
            row.push_back(*v);
        }
        if (row.size() != rows.front().size()) throw IoError(path.string() + ": ragged rows");
    }
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

/// Binary 8-bit greyscale, min-max scaled to 0..255 (constant matrices map to 0).
inline void write_pgm(const std::filesystem::path& path, const Matrix& m) {
    double lo = 0.0, hi = 0.0;
    if (m.size()) {
        const auto [a, b] = std::minmax_element(m.data().begin(), m.data().end());
        lo = *a;
        hi = *b;
    }
    std::string out = "P5\n" + std::to_string(m.cols()) + " " + std::to_string(m.rows()) + "\n255\n";
    for (double v : m.data()) {
        const double s = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(s * 255.0))));
    }
    detail::write_text(path, out);
}

/// Kernel values at lags 0..T-1 for one head: rows exp, periodic, product.
inline Matrix kernel_curves(const KernelSpec& spec, const KernelParams& p, std::size_t T) {
    Matrix out(3, T, 1.0);
    for (std::size_t h = 0; h < T; ++h) {
        const double lag = static_cast<double>(h);
        if (spec.uses_exp()) out(0, h) = exp_kernel_value(p.exp_alpha, p.exp_beta, lag);
        if (spec.uses_periodic()) out(1, h) = periodic_kernel_value(p.per_alpha, p.per_beta, lag);
        out(2, h) = out(0, h) * out(1, h);
    }
    return out;
}

inline void write_kernel_csv(const std::filesystem::path& path, const Matrix& curves) {
    static constexpr const char* kRows[] = {"exp", "periodic", "product"};
    std::string out = "kernel";
    for (std::size_t h = 0; h < curves.cols(); ++h) out += ",h" + std::to_string(h);
    out += '\n';
    for (std::size_t r = 0; r < 3; ++r) {
        out += kRows[r];
        for (std::size_t h = 0; h < curves.cols(); ++h) out += "," + detail::format_double(curves(r, h));
        out += '\n';
    }
    detail::write_text(path, out);
}

struct DumpFiles {
    std::vector<std::filesystem::path> attention;  // CSV, one per (layer, head)
    std::vector<std::filesystem::path> images;     // PGM companions
    std::vector<std::filesystem::path> kernels;    // CSV, one per (layer, head)
};

/// Attention for one window plus the learned kernel curves, named
/// attention_l{layer}_h{head}.{csv,pgm} and kernel_l{layer}_h{head}.csv.
inline DumpFiles dump_model(const ClassifierModel& model, const Window& w, const std::filesystem::path& dir) {
    const auto& cfg = model.config();
    const auto snap = model.attention_snapshot(w);
    DumpFiles files;
    for (std::size_t l = 0; l < snap.size(); ++l)
        for (std::size_t h = 0; h < snap[l].size(); ++h) {
            const std::string tag = "l" + std::to_string(l) + "_h" + std::to_string(h);
            files.attention.push_back(dir / ("attention_" + tag + ".csv"));
            write_matrix_csv(files.attention.back(), snap[l][h]);
            files.images.push_back(dir / ("attention_" + tag + ".pgm"));
            write_pgm(files.images.back(), snap[l][h]);
            const KernelParams p = cfg.kernel.mode == KernelMode::none
                                       ? KernelParams{}
                                       : model.encoder().kernel_params(l, h, &w);
            files.kernels.push_back(dir / ("kernel_" + tag + ".csv"));
            write_kernel_csv(files.kernels.back(), kernel_curves(cfg.kernel, p, cfg.window));
        }
    return files;
}

// ---------------------------------------------------------------- sweep table

inline constexpr const char* kSweepHeader = "fraction,seed,auprc,auroc,kernel,status";

inline std::string sweep_row(const SweepCell& c, KernelMode mode) {
    std::string row = detail::format_double(c.fraction) + "," + std::to_string(c.seed) + ",";
    if (c.skipped) return row + ",," + to_string(mode) + ",skipped";
    return row + detail::format_double(c.report.test.auprc) + "," + detail::format_double(c.report.test.auroc) +
           "," + to_string(mode) + ",ok";
}

// ---------------------------------------------------------------- manifest

struct RunManifest {
    std::string command;
    RunConfig config;
    std::string data_path;
    std::map<std::string, std::string> artifacts;
    std::vector<double> fractions;  // sweep only
    std::vector<std::string> completed;  // sweep cells "fraction:seed"
    std::string version = kToolVersion;
};

inline std::string cell_key(double fraction, std::uint64_t seed) {
    return detail::format_double(fraction) + ":" + std::to_string(seed);
}

inline json manifest_json(const RunManifest& m) {
    return {{"format", kManifestFormat},  {"version", m.version},     {"command", m.command},
            {"config", config_json(m.config)}, {"seed", m.config.train.seeds}, {"data", m.data_path},
            {"artifacts", m.artifacts},   {"fractions", m.fractions}, {"completed", m.completed}};
}

inline void save_manifest(const std::filesystem::path& path, const RunManifest& m) {
    detail::write_text(path, manifest_json(m).dump(2) + "\n");
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
    const json j = detail::read_json(path);
    if (j.value("format", "") != kManifestFormat) throw IoError(path.string() + ": not a run manifest");
    RunManifest m;
    try {
        m.version = j.at("version").get<std::string>();
        m.command = j.at("command").get<std::string>();
        m.config = config_from_json(j.at("config"));
        m.data_path = j.at("data").get<std::string>();
        m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
        m.fractions = j.at("fractions").get<std::vector<double>>();
        m.completed = j.at("completed").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return m;
}

}  // namespace satt
