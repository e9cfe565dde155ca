// Training loops (classification with AUPRC early stopping, masked-value
// probe), evaluation, per-iteration timing and data-fraction sweeps.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "satt/metrics.hpp"
#include "satt/model.hpp"
#include "satt/optim.hpp"

namespace satt {

struct TrainConfig {
    std::size_t max_epochs = 100;
    std::size_t patience = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    /// Learning-rate multiplier for kernel parameters (".kernel", ".adaptive.").
    double kernel_lr_scale = 10.0;
    /// 0 means ceil(training windows / batch size).
    std::size_t batches_per_epoch = 0;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    double fraction = 1.0;
    bool verbose = false;

    void validate() const {
        auto fail = [](const std::string& f, const std::string& why) { throw ConfigError(f + ": " + why); };
        if (max_epochs == 0) fail("max_epochs", "must be >= 1");
        if (patience == 0) fail("patience", "must be >= 1");
        if (batch_size < 2) fail("batch_size", "must be >= 2");
        if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
        if (!(kernel_lr_scale > 0.0)) fail("kernel_lr_scale", "must be > 0");
        if (seeds.empty()) fail("seeds", "at least one seed required");
        if (!(fraction > 0.0 && fraction <= 1.0)) fail("fraction", "must be in (0,1]");
    }
};

struct EvalResult {
    double auprc = 0.0;
    double auroc = 0.0;
    std::size_t n = 0;
    std::size_t n_positive = 0;
};

struct SeedReport {
    std::uint64_t seed = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;  // 1-based
    std::vector<double> train_loss;
    std::vector<double> val_auprc;
    double best_val_auprc = 0.0;
    EvalResult test;
    double ms_per_iter = 0.0;
    std::size_t iterations = 0;
    std::size_t n_train = 0;
    std::size_t n_train_positive = 0;
    std::optional<double> head_diversity;
    std::vector<double> diag_band_mass;  // per layer, w = 2, averaged over test windows and heads
};

struct RunReport {
    std::vector<SeedReport> seeds;
    Summary test_auprc;
    Summary test_auroc;
    double ms_per_iter = 0.0;
    std::vector<std::string> warnings;

    void finalize() {
        std::vector<double> a, r;
        double ms = 0.0;
        for (const auto& s : seeds) {
            a.push_back(s.test.auprc);
            r.push_back(s.test.auroc);
            ms += s.ms_per_iter;
        }
        test_auprc = summarize(a);
        test_auroc = summarize(r);
        ms_per_iter = seeds.empty() ? 0.0 : ms / static_cast<double>(seeds.size());
    }
};

// ---------------------------------------------------------------- threads

/// Worker cap from SATT_THREADS (default: hardware concurrency).
inline std::size_t worker_threads() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SATT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
    }
    return n;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception is rethrown.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- evaluation

inline std::vector<int> labels_of(const TimeSeriesDataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(ds.windows[i].label);
    return out;
}

inline EvalResult evaluate(const ClassifierModel& model, const TimeSeriesDataset& ds,
                           const std::vector<std::size_t>& idx) {
    const auto scores = model.classify(ds, idx);
    const auto labels = labels_of(ds, idx);
    EvalResult r;
    r.auprc = auprc(scores, labels);
    r.auroc = auroc(scores, labels);
    r.n = idx.size();
    r.n_positive = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    return r;
}

inline bool is_kernel_parameter(const std::string& name) {
    return name.find(".kernel") != std::string::npos || name.find(".adaptive.") != std::string::npos;
}

inline void configure_rates(Adam& opt, double kernel_lr_scale) {
    opt.set_rate_scale([kernel_lr_scale](const std::string& name) {
        return is_kernel_parameter(name) ? kernel_lr_scale : 1.0;
    });
}

/// Per-layer diagonal band mass (averaged over heads) and head diversity over windows.
struct AttentionStats {
    std::vector<double> band_mass;
    std::optional<double> diversity;
};

inline AttentionStats attention_stats(const std::vector<AttentionSnapshot>& snaps, std::size_t w = 2) {
    AttentionStats st;
    if (snaps.empty()) return st;
    const std::size_t layers = snaps.front().size();
    st.band_mass.assign(layers, 0.0);
    for (const auto& s : snaps)
        for (std::size_t l = 0; l < layers; ++l) {
            double m = 0.0;
            for (const auto& a : s[l]) m += diag_band_mass(a, std::min(w, a.rows() - 1));
            st.band_mass[l] += m / static_cast<double>(s[l].size());
        }
    for (double& v : st.band_mass) v /= static_cast<double>(snaps.size());
    if (snaps.front().front().size() >= 2) st.diversity = head_diversity(snaps);
    return st;
}

// ---------------------------------------------------------------- classification training

/// Trains one model on the given training windows with balanced batches and
/// AUPRC early stopping; the best-validation weights are restored before the
/// test evaluation.
inline SeedReport train_classifier(ClassifierModel& model, const TimeSeriesDataset& ds,
                                   const std::vector<std::size_t>& train_idx, const TrainConfig& cfg,
                                   std::uint64_t seed) {
    cfg.validate();
    const auto val_idx = ds.indices(Split::val);
    const auto test_idx = ds.indices(Split::test);
    if (val_idx.empty()) throw ContractError("training needs a non-empty validation split");

    SeedReport rep;
    rep.seed = seed;
    rep.n_train = train_idx.size();
    const auto train_labels = labels_of(ds, train_idx);
    rep.n_train_positive = static_cast<std::size_t>(std::count(train_labels.begin(), train_labels.end(), 1));

    BalancedBatcher batcher(train_idx, train_labels, cfg.batch_size, derive_seed(seed, 300));
    Adam opt(model.parameters(), AdamOptions{cfg.learning_rate});
    configure_rates(opt, cfg.kernel_lr_scale);
    const std::size_t per_epoch = cfg.batches_per_epoch
                                      ? cfg.batches_per_epoch
                                      : (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;

    std::vector<Matrix> best = model.parameters().snapshot();
    double best_val = -1.0;
    std::size_t since_best = 0;
    double total_ms = 0.0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const auto t0 = std::chrono::steady_clock::now();
            model.parameters().zero_grad();
            Var loss = model.batch_loss(ds, batcher.next());
            if (!std::isfinite(loss->value[0])) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b + 1));
            }
            backward(loss);
            opt.step(model.parameters());
            total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            ++rep.iterations;
            loss_sum += loss->value[0];
        }
        rep.train_loss.push_back(loss_sum / static_cast<double>(per_epoch));
        const double val = evaluate(model, ds, val_idx).auprc;
        rep.val_auprc.push_back(val);
        rep.epochs_run = epoch;
        if (val > best_val) {
            best_val = val;
            rep.best_epoch = epoch;
            best = model.parameters().snapshot();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
        if (cfg.verbose) {
            std::cerr << "seed " << seed << " epoch " << epoch << " loss " << rep.train_loss.back()
                      << " val_auprc " << val << '\n';
        }
    }
    model.parameters().restore(best);
    rep.best_val_auprc = best_val;
    rep.ms_per_iter = rep.iterations ? total_ms / static_cast<double>(rep.iterations) : 0.0;
    if (!test_idx.empty()) rep.test = evaluate(model, ds, test_idx);

    std::vector<AttentionSnapshot> snaps;
    for (std::size_t i : test_idx) snaps.push_back(model.attention_snapshot(ds.windows[i]));
    const auto st = attention_stats(snaps);
    rep.diag_band_mass = st.band_mass;
    rep.head_diversity = st.diversity;
    return rep;
}

/// Model initialisation seed for a training seed.
inline std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, 400); }

/// One model per seed, trained on the `fraction` subset of the training split.
/// `on_model` (optional) sees each trained model, e.g. to write a checkpoint.
inline RunReport train_seeds(const TimeSeriesDataset& ds, const ModelConfig& mcfg, const TrainConfig& cfg,
                             std::uint64_t split_seed,
                             const std::function<void(const ClassifierModel&, const SeedReport&)>& on_model = {}) {
    cfg.validate();
    mcfg.validate();
    RunReport report;
    report.seeds.resize(cfg.seeds.size());
    const auto subset = training_subset(ds, cfg.fraction, split_seed);
    std::mutex m;
    parallel_for(cfg.seeds.size(), worker_threads(), [&](std::size_t k) {
        ClassifierModel model(mcfg, init_seed(cfg.seeds[k]));
        auto rep = train_classifier(model, ds, subset, cfg, cfg.seeds[k]);
        std::lock_guard lock(m);
        if (on_model) on_model(model, rep);
        report.seeds[k] = std::move(rep);
    });
    report.finalize();
    return report;
}

// ---------------------------------------------------------------- timing

struct TimingResult {
    double mean_ms = 0.0;
    double cv = 0.0;  // coefficient of variation of per-iteration times
    std::size_t iterations = 0;
};

/// Mean wall-clock time of full training iterations (forward, backward, Adam
/// step) on a private copy of the model, after `warmup` unrecorded iterations.
inline TimingResult time_per_iteration(const ClassifierModel& model, const TimeSeriesDataset& ds,
                                       const std::vector<std::size_t>& train_idx, std::size_t batch_size,
                                       std::size_t n_iters, std::size_t warmup = 3, std::uint64_t seed = 1) {
    if (n_iters < 10) throw ContractError("time_per_iteration: need at least 10 iterations");
    if (warmup < 3) throw ContractError("time_per_iteration: need at least 3 warmup iterations");
    ClassifierModel copy = model.clone();
    BalancedBatcher batcher(train_idx, labels_of(ds, train_idx), batch_size, derive_seed(seed, 500));
    Adam opt(copy.parameters());
    std::vector<double> times;
    for (std::size_t it = 0; it < warmup + n_iters; ++it) {
        const auto batch = batcher.next();
        const auto t0 = std::chrono::steady_clock::now();
        copy.parameters().zero_grad();
        Var loss = copy.batch_loss(ds, batch);
        backward(loss);
        opt.step(copy.parameters());
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (it >= warmup) times.push_back(ms);
    }
    const auto s = summarize(times);
    return {s.mean, s.mean > 0.0 ? s.std / s.mean : 0.0, times.size()};
}

// ---------------------------------------------------------------- fraction sweep

struct SweepCell {
    double fraction = 1.0;
    std::uint64_t seed = 0;
    bool skipped = false;
    std::string warning;
    SeedReport report;
};

inline void require_ascending(const std::vector<double>& fractions) {
    if (fractions.empty()) throw ConfigError("fractions: at least one value required");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) throw ConfigError("fractions: values must be in (0,1]");
        if (i && !(fractions[i] > fractions[i - 1])) throw ConfigError("fractions: must be sorted ascending");
    }
}

/// Trains every (fraction, seed) cell on nested training subsets. `done` lets
/// callers skip cells that already completed; `on_cell` fires after each cell.
inline std::vector<SweepCell> fraction_sweep(
    const TimeSeriesDataset& ds, const ModelConfig& mcfg, const TrainConfig& cfg,
    const std::vector<double>& fractions, std::uint64_t split_seed,
    const std::function<bool(double, std::uint64_t)>& done = {},
    const std::function<void(const SweepCell&)>& on_cell = {}) {
    require_ascending(fractions);
    cfg.validate();
    mcfg.validate();
    std::vector<SweepCell> cells;
    for (double f : fractions)
        for (auto s : cfg.seeds) {
            SweepCell c;
            c.fraction = f;
            c.seed = s;
            cells.push_back(c);
        }
    std::mutex m;
    parallel_for(cells.size(), worker_threads(), [&](std::size_t k) {
        SweepCell& c = cells[k];
        if (done && done(c.fraction, c.seed)) {
            c.skipped = true;
            c.warning = "already completed";
            return;
        }
        const auto subset = training_subset(ds, c.fraction, split_seed);
        const auto labels = labels_of(ds, subset);
        const auto pos = std::count(labels.begin(), labels.end(), 1);
        if (pos == 0 || pos == static_cast<long>(labels.size())) {
            c.skipped = true;
            c.warning = "fraction " + std::to_string(c.fraction) + " leaves a single-class training set";
        } else {
            ClassifierModel model(mcfg, init_seed(c.seed));
            c.report = train_classifier(model, ds, subset, cfg, c.seed);
        }
        std::lock_guard lock(m);
        if (on_cell) on_cell(c);
    });
    return cells;
}

// ---------------------------------------------------------------- masked-value probe

struct ProbeReport {
    std::uint64_t seed = 0;
    double fraction = 1.0;
    std::size_t epochs_run = 0;
    std::vector<double> val_mse;
    double best_val_mse = 0.0;
    std::vector<double> band_mass;  // per layer, averaged over evaluation windows and heads
};

/// Random masked position among non-padded steps.
inline std::size_t draw_position(const Window& w, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(w.pad, w.values.rows() - 1);
    return d(rng);
}

inline double masked_mse(const MaskedValueModel& model, const TimeSeriesDataset& ds,
                         const std::vector<std::size_t>& idx, const std::vector<std::size_t>& positions) {
    NoGradGuard guard;
    const KernelSet shared = model.encoder().shares_kernels() ? model.encoder().kernels() : KernelSet{};
    double s = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k)
        s += model.masked_predict(ds.windows[idx[k]], positions[k],
                                  model.encoder().shares_kernels() ? &shared : nullptr)
                 .loss->value[0];
    return idx.empty() ? 0.0 : s / static_cast<double>(idx.size());
}

/// Masked-value training with validation-MSE early stopping; restores the best weights.
inline ProbeReport train_masked(MaskedValueModel& model, const TimeSeriesDataset& ds,
                                const std::vector<std::size_t>& train_idx, const TrainConfig& cfg,
                                std::uint64_t seed) {
    cfg.validate();
    if (train_idx.empty()) throw ContractError("train_masked: empty training set");
    const auto val_idx = ds.indices(Split::val);
    std::mt19937_64 rng(derive_seed(seed, 600));
    std::mt19937_64 val_rng(derive_seed(seed, 601));
    std::vector<std::size_t> val_pos;
    for (std::size_t i : val_idx) val_pos.push_back(draw_position(ds.windows[i], val_rng));

    Adam opt(model.parameters(), AdamOptions{cfg.learning_rate});
    configure_rates(opt, cfg.kernel_lr_scale);
    const std::size_t per_epoch = cfg.batches_per_epoch
                                      ? cfg.batches_per_epoch
                                      : (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
    ProbeReport rep;
    rep.seed = seed;
    auto order = train_idx;
    std::size_t cursor = order.size();
    std::vector<Matrix> best = model.parameters().snapshot();
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t b = 0; b < per_epoch; ++b) {
            std::vector<std::size_t> batch, pos;
            for (std::size_t k = 0; k < cfg.batch_size; ++k) {
                if (cursor == order.size()) {
                    std::shuffle(order.begin(), order.end(), rng);
                    cursor = 0;
                }
                batch.push_back(order[cursor++]);
                pos.push_back(draw_position(ds.windows[batch.back()], rng));
            }
            model.parameters().zero_grad();
            Var loss = model.batch_loss(ds, batch, pos);
            if (!std::isfinite(loss->value[0])) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b + 1));
            }
            backward(loss);
            opt.step(model.parameters());
        }
        const double val = val_idx.empty() ? 0.0 : masked_mse(model, ds, val_idx, val_pos);
        rep.val_mse.push_back(val);
        rep.epochs_run = epoch;
        if (val < best_val) {
            best_val = val;
            best = model.parameters().snapshot();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
        if (cfg.verbose) std::cerr << "probe seed " << seed << " epoch " << epoch << " val_mse " << val << '\n';
    }
    model.parameters().restore(best);
    rep.best_val_mse = best_val;
    return rep;
}

/// Band mass of a trained probe on the test split, with a fixed masked position per window.
inline std::vector<double> probe_band_mass(const MaskedValueModel& model, const TimeSeriesDataset& ds,
                                           std::size_t w, std::uint64_t position_seed) {
    const auto idx = ds.indices(Split::test);
    std::mt19937_64 rng(derive_seed(position_seed, 700));
    std::vector<AttentionSnapshot> snaps;
    for (std::size_t i : idx) {
        const auto pos = draw_position(ds.windows[i], rng);
        snaps.push_back(model.attention_snapshot(ds.windows[i], pos));
    }
    return attention_stats(snaps, w).band_mass;
}

/// For each seed and each (ascending) fraction, trains a probe on the nested
/// training subset and records the per-layer band mass on the test split.
inline std::vector<ProbeReport> probe_experiment(const TimeSeriesDataset& ds, const ModelConfig& mcfg,
                                                 const TrainConfig& cfg, const std::vector<double>& fractions,
                                                 std::uint64_t split_seed, std::size_t w = 2) {
    require_ascending(fractions);
    std::vector<ProbeReport> out(fractions.size() * cfg.seeds.size());
    parallel_for(out.size(), worker_threads(), [&](std::size_t k) {
        const double f = fractions[k % fractions.size()];
        const auto seed = cfg.seeds[k / fractions.size()];
        MaskedValueModel model(mcfg, init_seed(seed));
        auto rep = train_masked(model, ds, training_subset(ds, f, split_seed), cfg, seed);
        rep.fraction = f;
        rep.band_mass = probe_band_mass(model, ds, w, split_seed);
        out[k] = std::move(rep);
    });
    return out;
}

}  // namespace satt
