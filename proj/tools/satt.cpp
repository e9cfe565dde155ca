// satt: data generation, training, evaluation, dumps, sweeps and timing.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "satt/satt.hpp"

namespace fs = std::filesystem;
using namespace satt;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> kernel, kernel_apply;
    bool adaptive = false;
    std::optional<double> fraction;
    std::optional<std::size_t> layers, heads, dk, window;
};

void add_model_flags(CLI::App& app, Overrides& o) {
    app.add_option("--kernel", o.kernel, "Temporal kernel")
        ->check(CLI::IsMember({"none", "exp", "periodic", "both"}));
    app.add_option("--kernel-apply", o.kernel_apply, "Where kernels act")->check(CLI::IsMember({"score", "qk"}));
    app.add_flag("--adaptive", o.adaptive, "Per-sequence kernel parameters");
    app.add_option("--fraction", o.fraction, "Training data fraction in (0,1]");
    app.add_option("--layers", o.layers, "Encoder layers");
    app.add_option("--heads", o.heads, "Attention heads (d_model becomes heads x dk)");
    app.add_option("--dk", o.dk, "Per-head width (d_model becomes heads x dk)");
    app.add_option("--window", o.window, "Window length T");
}

/// Config file first, then command-line overrides, recorded through the same keys.
RunConfig resolve(const Overrides& o, bool seed_is_synth) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    auto set = [&](const std::string& k, const std::string& v) { set_config_value(cfg, k, v); };
    if (o.seed) set(seed_is_synth ? "synth.seed" : "train.seeds", std::to_string(*o.seed));
    if (o.kernel) set("model.kernel", *o.kernel);
    if (o.kernel_apply) set("model.kernel_apply", *o.kernel_apply);
    if (o.adaptive) set("model.adaptive", "true");
    if (o.fraction) set("train.fraction", detail::format_double(*o.fraction));
    if (o.layers) set("model.layers", std::to_string(*o.layers));
    if (o.heads) set("model.heads", std::to_string(*o.heads));
    if (o.dk) set("model.dk", std::to_string(*o.dk));
    if (o.heads || o.dk) cfg.model.d_model = cfg.model.heads * cfg.model.dk;
    if (o.window) set("data.window", std::to_string(*o.window));
    return cfg;
}

/// Data from a CSV file, or generated from the synth.* keys when no path is given.
SeriesSet load_series(const std::string& path, const RunConfig& cfg) {
    if (path.empty()) return synth_generate(cfg.synth).data;
    return load_csv(path);
}

PreparedData prepare(const std::string& path, RunConfig& cfg, const NormStats* stats = nullptr) {
    auto raw = load_series(path, cfg);
    cfg.sync(raw.channels());
    cfg.validate();
    return prepare_dataset(std::move(raw), cfg.data, stats);
}

std::string absolute_or_empty(const std::string& p) { return p.empty() ? p : fs::absolute(p).string(); }

void write_learning_curve(const fs::path& path, const RunReport& rep) {
    std::string out = "seed,epoch,train_loss,val_auprc\n";
    for (const auto& s : rep.seeds)
        for (std::size_t e = 0; e < s.train_loss.size(); ++e)
            out += std::to_string(s.seed) + "," + std::to_string(e + 1) + "," +
                   detail::format_double(s.train_loss[e]) + "," + detail::format_double(s.val_auprc[e]) + "\n";
    detail::write_text(path, out);
}

// ---------------------------------------------------------------- commands

int cmd_synth(const Overrides& o, const std::string& out) {
    RunConfig cfg = resolve(o, true);
    cfg.synth.validate();
    const auto ds = synth_generate(cfg.synth);
    export_csv(ds.data, out);
    std::cout << "wrote " << ds.data.rows() << " rows to " << out << " (threshold "
              << detail::format_double(ds.threshold) << ")\n";
    return 0;
}

/// Runs a train command described by `m`, writing every artifact under `out`.
RunReport run_train(RunManifest m, const fs::path& out) {
    fs::create_directories(out);
    m.command = "train";
    m.artifacts = {{"manifest", (out / "manifest.json").string()},
                   {"report", (out / "report.json").string()},
                   {"learning_curve", (out / "learning_curve.csv").string()}};
    for (auto s : m.config.train.seeds)
        m.artifacts["checkpoint_" + std::to_string(s)] = (out / ("checkpoint_" + std::to_string(s) + ".json")).string();
    RunConfig cfg = m.config;
    auto prep = prepare(m.data_path, cfg);
    m.config = cfg;
    save_manifest(out / "manifest.json", m);

    auto report = train_seeds(prep.dataset, cfg.model, cfg.train, cfg.data.split.seed,
                              [&](const ClassifierModel& model, const SeedReport& rep) {
                                  save_checkpoint(m.artifacts.at("checkpoint_" + std::to_string(rep.seed)), model,
                                                  cfg, prep.stats);
                              });
    report.warnings = prep.stats.warnings;
    detail::write_text(out / "report.json", run_report_json(report).dump(2) + "\n");
    write_learning_curve(out / "learning_curve.csv", report);
    return report;
}

void print_report(const RunReport& r) {
    for (const auto& s : r.seeds)
        std::cout << "seed " << s.seed << ": test auprc " << detail::format_double(s.test.auprc) << " auroc "
                  << detail::format_double(s.test.auroc) << " (best epoch " << s.best_epoch << " of "
                  << s.epochs_run << ")\n";
    std::cout << "auprc " << r.test_auprc.mean << " +- " << r.test_auprc.std << " (se " << r.test_auprc.se
              << "), auroc " << r.test_auroc.mean << " +- " << r.test_auroc.std << ", " << r.ms_per_iter
              << " ms/iter\n";
}

int cmd_train(const Overrides& o, const std::string& data, const std::string& out) {
    RunManifest m;
    m.config = resolve(o, false);
    m.data_path = absolute_or_empty(data);
    print_report(run_train(m, out));
    return 0;
}

int cmd_rerun(const std::string& manifest_path, const std::string& out) {
    const auto m = load_manifest(manifest_path);
    if (m.command != "train") throw ConfigError("rerun supports train manifests, got '" + m.command + "'");
    const auto report = run_train(m, out);
    print_report(report);
    const fs::path original = m.artifacts.count("report") ? fs::path(m.artifacts.at("report")) : fs::path();
    if (original.empty() || !fs::exists(original)) {
        std::cout << "no original report to compare against\n";
        return 0;
    }
    const json a = detail::read_json(original), b = run_report_json(report);
    bool same = a.at("seeds").size() == b.at("seeds").size();
    for (std::size_t i = 0; same && i < a.at("seeds").size(); ++i)
        same = a["seeds"][i]["test"] == b["seeds"][i]["test"];
    std::cout << (same ? "reproduced: test metrics identical\n" : "MISMATCH: test metrics differ\n");
    return same ? 0 : 2;
}

std::pair<ClassifierModel, PreparedData> load_model(const std::string& checkpoint, const std::string& data) {
    auto ck = load_checkpoint(checkpoint);
    auto prep = prepare(data, ck.config, &ck.stats);
    ClassifierModel model(ck.config.model);
    load_parameters(model, ck.parameters);
    return {std::move(model), std::move(prep)};
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out) {
    auto [model, prep] = load_model(checkpoint, data);
    const auto idx = prep.dataset.indices(Split::test);
    if (idx.empty()) throw ContractError("the test split is empty");
    const auto j = metrics_json(evaluate(model, prep.dataset, idx), "test");
    if (!out.empty()) detail::write_text(out, j.dump(2) + "\n");
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_dump(const std::string& checkpoint, const std::string& data, const std::string& out, std::size_t index) {
    auto [model, prep] = load_model(checkpoint, data);
    const auto idx = prep.dataset.indices(Split::test);
    if (index >= idx.size())
        throw ContractError("--index " + std::to_string(index) + " out of range (test split has " +
                            std::to_string(idx.size()) + " windows)");
    const auto files = dump_model(model, prep.dataset.windows[idx[index]], out);
    std::cout << "wrote " << files.attention.size() << " attention CSVs (+PGM) and " << files.kernels.size()
              << " kernel CSVs to " << out << '\n';
    return 0;
}

std::vector<double> parse_fractions(const std::string& s) {
    std::vector<double> out;
    for (auto part : detail::split_commas(s)) {
        const auto v = detail::parse_double(part);
        if (!v) throw ConfigError("--fractions: bad number '" + std::string(part) + "'");
        out.push_back(*v);
    }
    require_ascending(out);
    return out;
}

int cmd_sweep(const Overrides& o, const std::string& data, const std::string& out, const std::string& fractions) {
    const fs::path dir(out);
    const fs::path manifest_path = dir / "manifest.json";
    RunManifest m;
    m.command = "sweep";
    m.config = resolve(o, false);
    m.data_path = absolute_or_empty(data);
    m.fractions = parse_fractions(fractions);
    m.artifacts = {{"manifest", manifest_path.string()}, {"sweep", (dir / "sweep.csv").string()}};

    RunConfig cfg = m.config;
    auto prep = prepare(m.data_path, cfg);
    m.config = cfg;

    std::map<std::string, std::string> rows;  // cell key -> CSV row
    if (fs::exists(manifest_path)) {
        const auto prev = load_manifest(manifest_path);
        if (render_config(prev.config) != render_config(m.config) || prev.fractions != m.fractions ||
            prev.data_path != m.data_path)
            throw ConfigError(out + " holds a different sweep; choose another --out");
        m.completed = prev.completed;
        std::ifstream in(dir / "sweep.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto cells = detail::split_commas(line);
            if (cells.size() >= 2) {
                rows[cell_key(detail::parse_double(cells[0]).value_or(0.0), std::stoull(std::string(cells[1])))] =
                    line;
            }
        }
        std::cout << "resuming: " << m.completed.size() << " cells already complete\n";
    }
    const std::set<std::string> done_before(m.completed.begin(), m.completed.end());
    auto flush = [&] {
        std::string csv = std::string(kSweepHeader) + "\n";
        for (double f : m.fractions)
            for (auto s : cfg.train.seeds)
                if (auto it = rows.find(cell_key(f, s)); it != rows.end()) csv += it->second + "\n";
        detail::write_text(dir / "sweep.csv", csv);
        save_manifest(manifest_path, m);
    };
    flush();
    fraction_sweep(
        prep.dataset, cfg.model, cfg.train, m.fractions, cfg.data.split.seed,
        [&](double f, std::uint64_t s) { return done_before.count(cell_key(f, s)) != 0; },
        [&](const SweepCell& c) {
            const auto key = cell_key(c.fraction, c.seed);
            if (done_before.count(key)) return;
            if (!c.warning.empty()) std::cerr << "warning: " << c.warning << '\n';
            rows[key] = sweep_row(c, cfg.model.kernel.mode);
            m.completed.push_back(key);
            flush();
            std::cout << rows[key] << '\n';
        });
    return 0;
}

int cmd_bench(const Overrides& o, const std::string& data, const std::string& out, std::size_t iters) {
    RunConfig cfg = resolve(o, false);
    auto prep = prepare(data, cfg);
    const auto train_idx = training_subset(prep.dataset, cfg.train.fraction, cfg.data.split.seed);
    struct Variant {
        std::string name;
        KernelMode mode;
        KernelApplication app;
    };
    std::vector<Variant> variants{{"vanilla", KernelMode::none, KernelApplication::score},
                                  {"sat-score", KernelMode::both, KernelApplication::score}};
    if (cfg.model.dk == cfg.model.window) {
        variants.push_back({"sat-qk", KernelMode::both, KernelApplication::qk});
    } else {
        std::cerr << "note: sat-qk row omitted (needs dk == window)\n";
    }
    std::string csv = "variant,ms_per_iter,cv,ratio_to_vanilla\n";
    double vanilla = 0.0;
    for (const auto& v : variants) {
        ModelConfig mc = cfg.model;
        mc.kernel.mode = v.mode;
        mc.kernel.application = v.app;
        mc.validate();
        ClassifierModel model(mc, init_seed(cfg.train.seeds.front()));
        const auto t = time_per_iteration(model, prep.dataset, train_idx, cfg.train.batch_size, iters, 3,
                                          cfg.train.seeds.front());
        if (v.mode == KernelMode::none) vanilla = t.mean_ms;
        const std::string row = v.name + "," + detail::format_double(t.mean_ms) + "," + detail::format_double(t.cv) +
                                "," + detail::format_double(t.mean_ms / vanilla);
        csv += row + "\n";
        std::cout << row << '\n';
    }
    if (!out.empty()) detail::write_text(out, csv);
    return 0;
}

int cmd_probe(const Overrides& o, const std::string& data, const std::string& out, const std::string& fractions,
              std::size_t band) {
    RunConfig cfg = resolve(o, false);
    auto prep = prepare(data, cfg);
    const auto reps = probe_experiment(prep.dataset, cfg.model, cfg.train, parse_fractions(fractions),
                                       cfg.data.split.seed, band);
    std::string csv = "fraction,seed,layer,band_mass,best_val_mse,epochs\n";
    for (const auto& r : reps)
        for (std::size_t l = 0; l < r.band_mass.size(); ++l)
            csv += detail::format_double(r.fraction) + "," + std::to_string(r.seed) + "," + std::to_string(l + 1) +
                   "," + detail::format_double(r.band_mass[l]) + "," + detail::format_double(r.best_val_mse) + "," +
                   std::to_string(r.epochs_run) + "\n";
    if (!out.empty()) detail::write_text(out, csv);
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-attention with temporal kernels for time-series classification"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    Overrides o;
    std::string data, out, checkpoint, manifest, fractions = "0.01,0.1,0.5,1.0";
    std::size_t index = 0, iters = 100, band = 2;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset CSV");
    synth->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    synth->add_option("--seed", o.seed, "Generator seed");
    synth->add_option("--out", out, "Output CSV")->required();

    auto* train = app.add_subcommand("train", "Train one model per seed");
    train->add_option("--data", data, "Dataset CSV (default: synthesize from config)");
    train->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    train->add_option("--seed", o.seed, "Training seed (replaces train.seeds)");
    train->add_option("--out", out, "Output directory")->required();
    add_model_flags(*train, o);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
    eval->add_option("--data", data, "Dataset CSV (default: synthesize from the checkpoint config)");
    eval->add_option("--out", out, "Metrics JSON path");

    auto* dump = app.add_subcommand("dump", "Write attention and kernel dumps for one test window");
    dump->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
    dump->add_option("--data", data, "Dataset CSV (default: synthesize from the checkpoint config)");
    dump->add_option("--out", out, "Output directory")->required();
    dump->add_option("--index", index, "Test window index");

    auto* sweep = app.add_subcommand("sweep", "Train over nested data fractions (resumable)");
    sweep->add_option("--data", data, "Dataset CSV (default: synthesize from config)");
    sweep->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    sweep->add_option("--seed", o.seed, "Training seed (replaces train.seeds)");
    sweep->add_option("--out", out, "Output directory")->required();
    sweep->add_option("--fractions", fractions, "Ascending fractions");
    add_model_flags(*sweep, o);

    auto* bench = app.add_subcommand("bench", "Time training iterations: vanilla vs SAT");
    bench->add_option("--data", data, "Dataset CSV (default: synthesize from config)");
    bench->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    bench->add_option("--seed", o.seed, "Seed");
    bench->add_option("--out", out, "Timing CSV");
    bench->add_option("--iters", iters, "Timed iterations")->check(CLI::Range(10, 1000000));
    add_model_flags(*bench, o);

    auto* probe = app.add_subcommand("probe", "Masked-value probe: band mass across data fractions");
    probe->add_option("--data", data, "Dataset CSV (default: synthesize from config)");
    probe->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    probe->add_option("--seed", o.seed, "Training seed (replaces train.seeds)");
    probe->add_option("--out", out, "Band-mass CSV");
    probe->add_option("--fractions", fractions, "Ascending fractions");
    probe->add_option("--band", band, "Band half-width w");
    add_model_flags(*probe, o);

    auto* rerun = app.add_subcommand("rerun", "Repeat a train run from its manifest and compare");
    rerun->add_option("--manifest", manifest, "manifest.json of a train run")->required()->check(CLI::ExistingFile);
    rerun->add_option("--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth) return cmd_synth(o, out);
        if (*train) return cmd_train(o, data, out);
        if (*eval) return cmd_eval(checkpoint, data, out);
        if (*dump) return cmd_dump(checkpoint, data, out, index);
        if (*sweep) return cmd_sweep(o, data, out, fractions);
        if (*bench) return cmd_bench(o, data, out, iters);
        if (*probe) return cmd_probe(o, data, out, fractions, band);
        if (*rerun) return cmd_rerun(manifest, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {  // ShapeError, ContractError
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
