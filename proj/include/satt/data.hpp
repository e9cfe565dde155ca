// Time-series data: synthetic generation, CSV ingestion/export, splits,
// z-normalisation, windowing and balanced batch sampling.
//
// Missing cells carry mask 0 and the fill sentinel 0 in their value slot.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "satt/tensor.hpp"

namespace satt {

inline constexpr double kMissingFill = 0.0;

/// splitmix64 finaliser; used to derive independent seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct Series {
    std::string id;
    std::vector<double> timestamps;
    Matrix values;  // L x C
    Matrix mask;    // L x C, 1 = observed
    std::vector<int> labels;

    std::size_t length() const noexcept { return timestamps.size(); }
};

struct SeriesSet {
    std::vector<std::string> channel_names;
    std::vector<Series> series;

    std::size_t channels() const noexcept { return channel_names.size(); }
    std::size_t rows() const {
        std::size_t n = 0;
        for (const auto& s : series) n += s.length();
        return n;
    }
};

enum class Split { train, val, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

struct Window {
    Matrix values;  // T x C
    Matrix mask;    // T x C
    std::vector<double> timestamps;
    int label = 0;
    std::size_t pad = 0;  // leading steps that are padding
    std::size_t series_index = 0;
    Split split = Split::train;
};

struct TimeSeriesDataset {
    std::size_t window = 0;
    std::size_t channels = 0;
    std::vector<Window> windows;

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < windows.size(); ++i)
            if (windows[i].split == s) out.push_back(i);
        return out;
    }
};

// ---------------------------------------------------------------- synthetic data

struct SynthConfig {
    std::size_t n_samples = 1000;
    std::size_t length = 48;
    std::size_t channels = 3;
    std::uint64_t seed = 1;
    double ar_coeff = 0.7;
    double amplitude = 0.5;
    double period = 12.0;
    double noise = 1.0;
    std::size_t event_window = 4;  // k in "mean of the last k steps"
    std::size_t event_channel = 0;
    double positive_rate = 0.2;
    std::optional<double> event_threshold;  // overrides positive_rate calibration
    double missing_rate = 0.0;
    std::size_t label_smear = 0;  // rows this many steps before an event are also positive
    double time_step = 1.0;
    std::size_t burn_in = 50;

    void validate() const {
        auto fail = [](const std::string& field, const std::string& why) {
            throw ConfigError(field + ": " + why);
        };
        if (n_samples == 0) fail("n_samples", "must be >= 1");
        if (length == 0) fail("length", "must be >= 1");
        if (channels == 0) fail("channels", "must be >= 1");
        if (event_channel >= channels) fail("event_channel", "must be < channels");
        if (event_window == 0) fail("event_window", "must be >= 1");
        if (!(period > 0.0)) fail("period", "must be > 0");
        if (!(noise >= 0.0)) fail("noise", "must be >= 0");
        if (!(missing_rate >= 0.0 && missing_rate < 1.0)) fail("missing_rate", "must be in [0,1)");
        if (!(time_step > 0.0)) fail("time_step", "must be > 0");
        if (!event_threshold) {
            if (!(positive_rate > 0.0 && positive_rate < 1.0))
                fail("positive_rate", "must be in (0,1)");
            const double expected = positive_rate * static_cast<double>(n_samples);
            if (std::llround(expected) < 1 ||
                std::llround(expected) >= static_cast<long long>(n_samples))
                fail("positive_rate", "unreachable with n_samples=" + std::to_string(n_samples));
        }
    }
};

struct SynthDataset {
    SeriesSet data;
    double threshold = 0.0;
};

/// Mean of channel c over the last k steps ending at t (fewer at the start).
inline double trailing_mean(const Matrix& truth, std::size_t c, std::size_t t, std::size_t k) {
    const std::size_t from = t + 1 >= k ? t + 1 - k : 0;
    double s = 0.0;
    for (std::size_t i = from; i <= t; ++i) s += truth(i, c);
    return s / static_cast<double>(t + 1 - from);
}

/// AR(1) plus a sinusoid per channel; the label at row t is 1 iff the trailing
/// k-step mean of the event channel exceeds the threshold. Without an explicit
/// threshold it is placed so that round(positive_rate * n) series are positive
/// at their final step.
inline SynthDataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t L = cfg.length, C = cfg.channels;

    std::vector<Matrix> truth;
    truth.reserve(cfg.n_samples);
    for (std::size_t n = 0; n < cfg.n_samples; ++n) {
        Matrix x(L, C);
        for (std::size_t c = 0; c < C; ++c) {
            const double phase = 2.0 * std::numbers::pi * unit(rng);
            double state = 0.0;
            for (std::size_t b = 0; b < cfg.burn_in; ++b)
                state = cfg.ar_coeff * state + cfg.noise * normal(rng);
            for (std::size_t t = 0; t < L; ++t) {
                state = cfg.ar_coeff * state + cfg.noise * normal(rng);
                x(t, c) = state + cfg.amplitude * std::sin(2.0 * std::numbers::pi *
                                                               static_cast<double>(t) / cfg.period +
                                                           phase);
            }
        }
        truth.push_back(std::move(x));
    }

    SynthDataset out;
    if (cfg.event_threshold) {
        out.threshold = *cfg.event_threshold;
    } else {
        std::vector<double> finals;
        finals.reserve(truth.size());
        for (const auto& x : truth)
            finals.push_back(trailing_mean(x, cfg.event_channel, L - 1, cfg.event_window));
        std::sort(finals.begin(), finals.end(), std::greater<>());
        const auto m = static_cast<std::size_t>(
            std::llround(cfg.positive_rate * static_cast<double>(cfg.n_samples)));
        out.threshold = 0.5 * (finals[m - 1] + finals[m]);
    }

    for (std::size_t c = 0; c < C; ++c) out.data.channel_names.push_back("x" + std::to_string(c));
    std::mt19937_64 miss_rng(derive_seed(cfg.seed, 1));
    for (std::size_t n = 0; n < cfg.n_samples; ++n) {
        Series s;
        s.id = "s" + std::to_string(n);
        s.values = truth[n];
        s.mask = Matrix(L, C, 1.0);
        s.timestamps.resize(L);
        for (std::size_t t = 0; t < L; ++t) s.timestamps[t] = static_cast<double>(t) * cfg.time_step;
        std::vector<int> event(L);
        for (std::size_t t = 0; t < L; ++t)
            event[t] = trailing_mean(truth[n], cfg.event_channel, t, cfg.event_window) > out.threshold;
        s.labels.assign(L, 0);
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t u = t; u <= std::min(L - 1, t + cfg.label_smear); ++u)
                if (event[u]) {
                    s.labels[t] = 1;
                    break;
                }
        if (cfg.missing_rate > 0.0) {
            for (std::size_t k = 0; k < s.values.size(); ++k)
                if (unit(miss_rng) < cfg.missing_rate) {
                    s.mask[k] = 0.0;
                    s.values[k] = kMissingFill;
                }
        }
        out.data.series.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------- CSV

struct CsvSchema {
    std::string id_column = "series_id";
    std::string time_column = "timestamp";
    std::string label_column = "label";
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// Reads `series_id,timestamp,<channels...>,label` rows. Empty channel cells are
/// missing. Rows are grouped by series (first-appearance order) and sorted by time.
inline SeriesSet load_csv(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open data file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file, header row required");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_commas(line);
    std::optional<std::size_t> id_col, time_col, label_col;
    std::vector<std::size_t> channel_cols;
    SeriesSet out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name(detail::trim(header[i]));
        if (name == schema.id_column) id_col = i;
        else if (name == schema.time_column) time_col = i;
        else if (name == schema.label_column) label_col = i;
        else {
            channel_cols.push_back(i);
            out.channel_names.push_back(name);
        }
    }
    if (!id_col || !time_col || !label_col) {
        throw ParseError(path + ":1: header must contain '" + schema.id_column + "', '" +
                         schema.time_column + "' and '" + schema.label_column + "'");
    }
    if (channel_cols.empty()) throw ParseError(path + ":1: no channel columns");

    struct Row {
        double t;
        std::vector<double> v;
        std::vector<double> m;
        int label;
        std::size_t line;
    };
    std::vector<std::string> order;
    std::map<std::string, std::vector<Row>> groups;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_commas(line);
        auto where = [&] { return path + ":" + std::to_string(lineno) + ": "; };
        if (f.size() != header.size()) {
            throw ParseError(where() + "expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(f.size()));
        }
        Row r;
        r.line = lineno;
        const auto t = detail::parse_double(f[*time_col]);
        if (!t) throw ParseError(where() + "unparseable timestamp '" + std::string(f[*time_col]) + "'");
        r.t = *t;
        const auto lab = detail::parse_double(f[*label_col]);
        if (!lab || (*lab != 0.0 && *lab != 1.0))
            throw ParseError(where() + "label must be 0 or 1, got '" + std::string(f[*label_col]) + "'");
        r.label = static_cast<int>(*lab);
        for (std::size_t c : channel_cols) {
            if (detail::trim(f[c]).empty()) {
                r.v.push_back(kMissingFill);
                r.m.push_back(0.0);
                continue;
            }
            const auto v = detail::parse_double(f[c]);
            if (!v || !std::isfinite(*v))
                throw ParseError(where() + "unparseable value '" + std::string(f[c]) + "'");
            r.v.push_back(*v);
            r.m.push_back(1.0);
        }
        const std::string id(detail::trim(f[*id_col]));
        if (id.empty()) throw ParseError(where() + "empty series id");
        auto [it, inserted] = groups.try_emplace(id);
        if (inserted) order.push_back(id);
        it->second.push_back(std::move(r));
    }

    const std::size_t C = channel_cols.size();
    for (const auto& id : order) {
        auto& rows = groups[id];
        std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i].t == rows[i - 1].t) {
                throw ParseError(path + ":" + std::to_string(rows[i].line) +
                                 ": duplicate timestamp " + detail::format_double(rows[i].t) +
                                 " for series '" + id + "'");
            }
        Series s;
        s.id = id;
        s.values = Matrix(rows.size(), C);
        s.mask = Matrix(rows.size(), C);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            s.timestamps.push_back(rows[i].t);
            s.labels.push_back(rows[i].label);
            for (std::size_t c = 0; c < C; ++c) {
                s.values(i, c) = rows[i].v[c];
                s.mask(i, c) = rows[i].m[c];
            }
        }
        out.series.push_back(std::move(s));
    }
    return out;
}

inline void export_csv(const SeriesSet& data, std::ostream& os, const CsvSchema& schema = {}) {
    os << schema.id_column << ',' << schema.time_column;
    for (const auto& c : data.channel_names) os << ',' << c;
    os << ',' << schema.label_column << '\n';
    for (const auto& s : data.series) {
        for (std::size_t t = 0; t < s.length(); ++t) {
            os << s.id << ',' << detail::format_double(s.timestamps[t]);
            for (std::size_t c = 0; c < data.channels(); ++c) {
                os << ',';
                if (s.mask(t, c) != 0.0) os << detail::format_double(s.values(t, c));
            }
            os << ',' << s.labels[t] << '\n';
        }
    }
}

inline void export_csv(const SeriesSet& data, const std::string& path, const CsvSchema& schema = {}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("cannot write '" + path + "'");
    export_csv(data, os, schema);
}

// ---------------------------------------------------------------- splits

struct SplitOptions {
    double test_fraction = 0.2;
    double val_fraction = 0.2;  // of the remaining training series
    std::uint64_t seed = 1;
};

/// Assigns each series to train/val/test; series ids never straddle splits.
inline std::vector<Split> assign_splits(const SeriesSet& data, const SplitOptions& opt) {
    const std::size_t n = data.series.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::sort(perm.begin(), perm.end(),
              [&](std::size_t a, std::size_t b) { return data.series[a].id < data.series[b].id; });
    std::mt19937_64 rng(derive_seed(opt.seed, 100));
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(opt.test_fraction * double(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(opt.val_fraction * double(n - n_test)));
    std::vector<Split> out(n, Split::train);
    for (std::size_t i = 0; i < n_test; ++i) out[perm[i]] = Split::test;
    for (std::size_t i = n_test; i < n_test + n_val; ++i) out[perm[i]] = Split::val;
    return out;
}

// ---------------------------------------------------------------- normalisation

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<std::string> warnings;
};

/// Per-channel mean and population std over observed cells of train-split series.
/// A zero std is clamped to 1 and recorded as a warning.
inline NormStats fit_normalization(const SeriesSet& data, const std::vector<Split>& splits) {
    const std::size_t C = data.channels();
    NormStats st;
    st.mean.assign(C, 0.0);
    st.std.assign(C, 0.0);
    std::vector<std::size_t> count(C, 0);
    for (std::size_t s = 0; s < data.series.size(); ++s) {
        if (splits[s] != Split::train) continue;
        const auto& x = data.series[s];
        for (std::size_t t = 0; t < x.length(); ++t)
            for (std::size_t c = 0; c < C; ++c)
                if (x.mask(t, c) != 0.0) {
                    st.mean[c] += x.values(t, c);
                    ++count[c];
                }
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (count[c] == 0) {
            throw ContractError("channel '" + data.channel_names[c] +
                                "' has no observed values in the training split");
        }
        st.mean[c] /= static_cast<double>(count[c]);
    }
    for (std::size_t s = 0; s < data.series.size(); ++s) {
        if (splits[s] != Split::train) continue;
        const auto& x = data.series[s];
        for (std::size_t t = 0; t < x.length(); ++t)
            for (std::size_t c = 0; c < C; ++c)
                if (x.mask(t, c) != 0.0) {
                    const double d = x.values(t, c) - st.mean[c];
                    st.std[c] += d * d;
                }
    }
    for (std::size_t c = 0; c < C; ++c) {
        st.std[c] = std::sqrt(st.std[c] / static_cast<double>(count[c]));
        if (st.std[c] == 0.0) {
            st.std[c] = 1.0;
            st.warnings.push_back("channel '" + data.channel_names[c] +
                                  "' is constant in the training split; std clamped to 1");
        }
    }
    return st;
}

inline void apply_normalization(SeriesSet& data, const NormStats& st) {
    if (st.mean.size() != data.channels()) {
        throw ShapeError("normalisation stats for " + std::to_string(st.mean.size()) +
                         " channels applied to " + std::to_string(data.channels()));
    }
    for (auto& x : data.series)
        for (std::size_t t = 0; t < x.length(); ++t)
            for (std::size_t c = 0; c < data.channels(); ++c)
                x.values(t, c) = x.mask(t, c) != 0.0 ? (x.values(t, c) - st.mean[c]) / st.std[c]
                                                     : kMissingFill;
}

/// Fits on the training split and transforms every split with those statistics.
inline NormStats znormalize(SeriesSet& data, const std::vector<Split>& splits) {
    NormStats st = fit_normalization(data, splits);
    apply_normalization(data, st);
    return st;
}

// ---------------------------------------------------------------- windowing

enum class PredictionPoints { last, all };

inline PredictionPoints parse_prediction_points(const std::string& s) {
    if (s == "last") return PredictionPoints::last;
    if (s == "all") return PredictionPoints::all;
    throw ConfigError("prediction_points: expected last|all, got '" + s + "'");
}

inline std::string to_string(PredictionPoints p) { return p == PredictionPoints::last ? "last" : "all"; }

/// Window of exactly `T` steps ending at step `end`, left-padded with masked steps.
inline Window window_at(const Series& s, std::size_t end, std::size_t T) {
    if (s.length() == 0) throw ContractError("make_windows: empty series '" + s.id + "'");
    if (T == 0) throw ContractError("make_windows: window length must be >= 1");
    const std::size_t C = s.values.cols();
    const std::size_t avail = std::min(T, end + 1);
    const std::size_t first = end + 1 - avail;
    Window w;
    w.pad = T - avail;
    w.values = Matrix(T, C, kMissingFill);
    w.mask = Matrix(T, C, 0.0);
    w.timestamps.assign(T, s.timestamps[first]);
    for (std::size_t k = 0; k < avail; ++k) {
        const std::size_t src = first + k, dst = w.pad + k;
        w.timestamps[dst] = s.timestamps[src];
        for (std::size_t c = 0; c < C; ++c) {
            w.values(dst, c) = s.values(src, c);
            w.mask(dst, c) = s.mask(src, c);
        }
    }
    w.label = s.labels[end];
    return w;
}

inline std::vector<Window> make_windows(const Series& s, std::size_t T,
                                        PredictionPoints points = PredictionPoints::last) {
    if (s.length() == 0) throw ContractError("make_windows: empty series '" + s.id + "'");
    std::vector<Window> out;
    if (points == PredictionPoints::last) {
        out.push_back(window_at(s, s.length() - 1, T));
    } else {
        for (std::size_t end = 0; end < s.length(); ++end) out.push_back(window_at(s, end, T));
    }
    return out;
}

struct DataOptions {
    std::size_t window = 48;
    PredictionPoints points = PredictionPoints::last;
    SplitOptions split;
};

struct PreparedData {
    TimeSeriesDataset dataset;
    NormStats stats;
    std::vector<Split> series_split;
};

/// Split, normalise (train statistics) and window a raw series set. When
/// `stats` is given it is used instead of fitting.
inline PreparedData prepare_dataset(SeriesSet data, const DataOptions& opt,
                                    const NormStats* stats = nullptr) {
    PreparedData out;
    out.series_split = assign_splits(data, opt.split);
    if (stats) {
        out.stats = *stats;
        apply_normalization(data, out.stats);
    } else {
        out.stats = znormalize(data, out.series_split);
    }
    out.dataset.window = opt.window;
    out.dataset.channels = data.channels();
    for (std::size_t s = 0; s < data.series.size(); ++s) {
        for (auto& w : make_windows(data.series[s], opt.window, opt.points)) {
            w.series_index = s;
            w.split = out.series_split[s];
            out.dataset.windows.push_back(std::move(w));
        }
    }
    return out;
}

/// Training windows from the first ceil(fraction * n) training series of a
/// seed-determined order; smaller fractions give subsets of larger ones.
inline std::vector<std::size_t> training_subset(const TimeSeriesDataset& ds, double fraction,
                                                std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction: must be in (0,1]");
    std::vector<std::size_t> series;
    for (const auto& w : ds.windows)
        if (w.split == Split::train) series.push_back(w.series_index);
    std::sort(series.begin(), series.end());
    series.erase(std::unique(series.begin(), series.end()), series.end());
    std::mt19937_64 rng(derive_seed(seed, 200));
    std::shuffle(series.begin(), series.end(), rng);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(series.size()) - 1e-9)));
    std::set<std::size_t> chosen(series.begin(), series.begin() + std::min(keep, series.size()));
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.windows.size(); ++i)
        if (ds.windows[i].split == Split::train && chosen.count(ds.windows[i].series_index))
            out.push_back(i);
    return out;
}

// ---------------------------------------------------------------- batching

/// Emits batches with ceil(b/2) positives and floor(b/2) negatives. The larger
/// class is walked through reshuffled permutations; the smaller one is drawn
/// uniformly with replacement.
class BalancedBatcher {
public:
    BalancedBatcher(const std::vector<std::size_t>& indices, const std::vector<int>& labels,
                    std::size_t batch_size, std::uint64_t seed)
        : batch_(batch_size), rng_(seed) {
        if (indices.size() != labels.size()) throw ShapeError("BalancedBatcher: indices/labels length");
        if (batch_size < 2) throw ContractError("BalancedBatcher: batch size must be >= 2");
        for (std::size_t i = 0; i < indices.size(); ++i)
            (labels[i] ? pos_.items : neg_.items).push_back(indices[i]);
        if (pos_.items.empty()) throw ContractError("balanced batching needs at least one positive example");
        if (neg_.items.empty()) throw ContractError("balanced batching needs at least one negative example");
        pos_.with_replacement = pos_.items.size() < neg_.items.size();
        neg_.with_replacement = neg_.items.size() < pos_.items.size();
    }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> out;
        out.reserve(batch_);
        const std::size_t n_pos = (batch_ + 1) / 2;
        for (std::size_t i = 0; i < n_pos; ++i) out.push_back(draw(pos_));
        for (std::size_t i = n_pos; i < batch_; ++i) out.push_back(draw(neg_));
        return out;
    }

    std::size_t positives() const noexcept { return pos_.items.size(); }
    std::size_t negatives() const noexcept { return neg_.items.size(); }

private:
    struct Pool {
        std::vector<std::size_t> items;
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
        bool with_replacement = false;
    };

    std::size_t draw(Pool& p) {
        if (p.with_replacement) {
            std::uniform_int_distribution<std::size_t> pick(0, p.items.size() - 1);
            return p.items[pick(rng_)];
        }
        if (p.cursor == p.order.size()) {
            p.order = p.items;
            std::shuffle(p.order.begin(), p.order.end(), rng_);
            p.cursor = 0;
        }
        return p.order[p.cursor++];
    }

    std::size_t batch_;
    std::mt19937_64 rng_;
    Pool pos_, neg_;
};

}  // namespace satt
