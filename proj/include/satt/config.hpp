// Flat `key = value` configuration covering data generation, windowing, the
// model and training. Keys are grouped by prefix (synth., data., model.,
// train.); `#` starts a comment. Every key has a default, and render_config()
// writes all of them so a run can be reproduced from its manifest alone.

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "satt/data.hpp"
#include "satt/model.hpp"
#include "satt/train.hpp"

namespace satt {

struct RunConfig {
    SynthConfig synth;
    DataOptions data;
    ModelConfig model;
    TrainConfig train;

    /// Fills model fields that follow from the data (window length, channels).
    void sync(std::size_t channels) {
        model.window = data.window;
        model.channels = channels;
    }

    void validate() const {
        train.validate();
        model.validate();
        if (data.window == 0) throw ConfigError("data.window: must be >= 1");
        if (!(data.split.test_fraction >= 0.0 && data.split.test_fraction < 1.0))
            throw ConfigError("data.test_fraction: must be in [0,1)");
        if (!(data.split.val_fraction > 0.0 && data.split.val_fraction < 1.0))
            throw ConfigError("data.val_fraction: must be in (0,1)");
    }
};

namespace detail {

struct ConfigKey {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline double to_real(const std::string& key, const std::string& v) {
    const auto d = parse_double(v);
    if (!d) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return *d;
}

inline std::uint64_t to_count(const std::string& key, const std::string& v) {
    const std::string_view s = trim(v);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

inline std::string from_bool(bool b) { return b ? "true" : "false"; }

inline std::vector<std::uint64_t> to_seed_list(const std::string& key, const std::string& v) {
    std::vector<std::uint64_t> out;
    for (auto part : split_commas(v)) out.push_back(to_count(key, std::string(trim(part))));
    if (out.empty()) throw ConfigError(key + ": at least one seed required");
    return out;
}

inline std::string from_seed_list(const std::vector<std::uint64_t>& seeds) {
    std::string s;
    for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
    return s;
}

#define SATT_REAL(key, field)                                                                  \
    ConfigKey{key, [](const RunConfig& c) { return format_double(c.field); },                  \
              [](RunConfig& c, const std::string& v) { c.field = to_real(key, v); }}
#define SATT_COUNT(key, field)                                                                  \
    ConfigKey{key, [](const RunConfig& c) { return std::to_string(c.field); },                  \
              [](RunConfig& c, const std::string& v) {                                          \
                  c.field = static_cast<decltype(c.field)>(to_count(key, v));                   \
              }}
#define SATT_BOOL(key, field)                                                                  \
    ConfigKey{key, [](const RunConfig& c) { return from_bool(c.field); },                      \
              [](RunConfig& c, const std::string& v) { c.field = to_bool(key, v); }}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        SATT_COUNT("synth.n_samples", synth.n_samples),
        SATT_COUNT("synth.length", synth.length),
        SATT_COUNT("synth.channels", synth.channels),
        SATT_COUNT("synth.seed", synth.seed),
        SATT_REAL("synth.ar_coeff", synth.ar_coeff),
        SATT_REAL("synth.amplitude", synth.amplitude),
        SATT_REAL("synth.period", synth.period),
        SATT_REAL("synth.noise", synth.noise),
        SATT_COUNT("synth.event_window", synth.event_window),
        SATT_COUNT("synth.event_channel", synth.event_channel),
        SATT_REAL("synth.positive_rate", synth.positive_rate),
        ConfigKey{"synth.event_threshold",
                  [](const RunConfig& c) {
                      return c.synth.event_threshold ? format_double(*c.synth.event_threshold) : "auto";
                  },
                  [](RunConfig& c, const std::string& v) {
                      if (v == "auto") {
                          c.synth.event_threshold.reset();
                      } else {
                          c.synth.event_threshold = to_real("synth.event_threshold", v);
                      }
                  }},
        SATT_REAL("synth.missing_rate", synth.missing_rate),
        SATT_COUNT("synth.label_smear", synth.label_smear),
        SATT_REAL("synth.time_step", synth.time_step),
        SATT_COUNT("synth.burn_in", synth.burn_in),

        SATT_COUNT("data.window", data.window),
        ConfigKey{"data.prediction_points", [](const RunConfig& c) { return to_string(c.data.points); },
                  [](RunConfig& c, const std::string& v) { c.data.points = parse_prediction_points(v); }},
        SATT_REAL("data.test_fraction", data.split.test_fraction),
        SATT_REAL("data.val_fraction", data.split.val_fraction),
        SATT_COUNT("data.split_seed", data.split.seed),

        SATT_COUNT("model.d_model", model.d_model),
        SATT_COUNT("model.heads", model.heads),
        SATT_COUNT("model.dk", model.dk),
        SATT_COUNT("model.layers", model.layers),
        SATT_COUNT("model.d_ff", model.d_ff),
        ConfigKey{"model.kernel", [](const RunConfig& c) { return to_string(c.model.kernel.mode); },
                  [](RunConfig& c, const std::string& v) { c.model.kernel.mode = parse_kernel_mode(v); }},
        ConfigKey{"model.kernel_apply",
                  [](const RunConfig& c) { return to_string(c.model.kernel.application); },
                  [](RunConfig& c, const std::string& v) {
                      c.model.kernel.application = parse_kernel_application(v);
                  }},
        SATT_BOOL("model.adaptive", model.kernel.adaptive),
        SATT_BOOL("model.positional_encoding", model.positional_encoding),
        SATT_BOOL("model.causal", model.causal),
        ConfigKey{"model.pooling", [](const RunConfig& c) { return to_string(c.model.pooling); },
                  [](RunConfig& c, const std::string& v) { c.model.pooling = parse_pooling(v); }},
        SATT_REAL("model.init_flatness", model.init_flatness),

        SATT_COUNT("train.max_epochs", train.max_epochs),
        SATT_COUNT("train.patience", train.patience),
        SATT_COUNT("train.batch_size", train.batch_size),
        SATT_REAL("train.learning_rate", train.learning_rate),
        SATT_REAL("train.kernel_lr_scale", train.kernel_lr_scale),
        SATT_COUNT("train.batches_per_epoch", train.batches_per_epoch),
        ConfigKey{"train.seeds", [](const RunConfig& c) { return from_seed_list(c.train.seeds); },
                  [](RunConfig& c, const std::string& v) { c.train.seeds = to_seed_list("train.seeds", v); }},
        SATT_REAL("train.fraction", train.fraction),
        SATT_BOOL("train.verbose", train.verbose),
    };
    return keys;
}

#undef SATT_REAL
#undef SATT_COUNT
#undef SATT_BOOL

}  // namespace detail

/// Sets one key. Unknown keys are configuration errors.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys())
        if (k.name == key) {
            k.set(cfg, value);
            return;
        }
    throw ConfigError("unknown configuration key '" + key + "'");
}

/// Applies `key = value` lines on top of `base`.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}, const std::string& origin = "config") {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key(detail::trim(body.substr(0, eq)));
        const std::string value(detail::trim(body.substr(eq + 1)));
        try {
            set_config_value(base, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

inline RunConfig parse_config_string(const std::string& text, RunConfig base = {}) {
    std::istringstream in(text);
    return parse_config(in, std::move(base));
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in, std::move(base), path);
}

/// Every key with its current value, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : detail::config_keys()) out.emplace_back(k.name, k.get(cfg));
    return out;
}

inline std::string render_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
    return out;
}

}  // namespace satt
