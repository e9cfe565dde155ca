// Encoder stack and the two task models built on it: binary event
// classification and masked-value regression.
//
// Input per step is [z-scored values (missing -> 0), observation mask], embedded
// linearly and summed with a sinusoidal position code.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "satt/attention.hpp"
#include "satt/data.hpp"

namespace satt {

enum class Pooling { mean, max, last };

inline std::string to_string(Pooling p) {
    switch (p) {
        case Pooling::mean: return "mean";
        case Pooling::max: return "max";
        case Pooling::last: return "last";
    }
    return "mean";
}

inline Pooling parse_pooling(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "max") return Pooling::max;
    if (s == "last") return Pooling::last;
    throw ConfigError("pooling: expected mean|max|last, got '" + s + "'");
}

struct ModelConfig {
    std::size_t channels = 3;
    std::size_t window = 48;
    std::size_t d_model = 16;
    std::size_t heads = 2;
    std::size_t dk = 8;
    std::size_t layers = 3;
    std::size_t d_ff = 32;
    KernelSpec kernel;
    bool positional_encoding = true;
    bool causal = false;
    Pooling pooling = Pooling::mean;
    /// Initial kernel value at lag T/2; close to 1 starts near vanilla attention.
    double init_flatness = 0.95;

    void validate() const {
        auto fail = [](const std::string& f, const std::string& why) { throw ConfigError(f + ": " + why); };
        if (channels == 0) fail("channels", "must be >= 1");
        if (window == 0) fail("window", "must be >= 1");
        if (heads == 0) fail("heads", "must be >= 1");
        if (dk == 0) fail("dk", "must be >= 1");
        if (layers == 0) fail("layers", "must be >= 1");
        if (d_ff == 0) fail("d_ff", "must be >= 1");
        if (heads * dk != d_model) {
            fail("d_model", "heads x dk must equal d_model (" + std::to_string(heads) + " x " +
                                std::to_string(dk) + " != " + std::to_string(d_model) + ")");
        }
        if (!(init_flatness > 0.0 && init_flatness < 1.0)) fail("init_flatness", "must be in (0,1)");
        if (kernel.mode != KernelMode::none && kernel.application == KernelApplication::qk)
            require_qk_shape(dk, window);
    }
};

/// Attention matrices of one forward pass, [layer][head].
using AttentionSnapshot = std::vector<std::vector<Matrix>>;

/// Kernel matrices for every (layer, head).
using KernelSet = std::vector<std::vector<HeadKernels>>;

inline Matrix sinusoidal_positions(std::size_t T, std::size_t d) {
    Matrix pe(T, d);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < d; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
            pe(t, i) = (i % 2 == 0) ? std::sin(static_cast<double>(t) * freq)
                                    : std::cos(static_cast<double>(t) * freq);
        }
    return pe;
}

/// Default kernel parameters: near-flat kernels, head-dependent initial periods.
inline KernelParams initial_kernel_params(const ModelConfig& cfg, std::size_t head) {
    const double half = std::max(1.0, static_cast<double>(cfg.window) / 2.0);
    const double neg_log = -std::log(cfg.init_flatness);
    KernelParams p;
    p.exp_beta = 1.0;
    p.exp_alpha = neg_log / half;
    p.per_alpha = std::sqrt(neg_log / 2.0);
    p.per_beta = std::max(2.0, static_cast<double>(cfg.window) / std::pow(2.0, double(head + 1)));
    return p;
}

class Encoder {
public:
    Encoder(const ModelConfig& cfg, ParameterSet& params, std::mt19937_64& rng) : cfg_(cfg) {
        cfg_.validate();
        auto normal = [&](std::size_t r, std::size_t c, double fan_in) {
            std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
            Matrix m(r, c);
            for (double& v : m.data()) v = dist(rng);
            return m;
        };
        const std::size_t d = cfg_.d_model, in = 2 * cfg_.channels;
        w_in_ = params.add("embed.w", normal(in, d, double(in)));
        b_in_ = params.add("embed.b", Matrix(1, d));
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            EncoderBlockParams b;
            for (std::size_t h = 0; h < cfg_.heads; ++h) {
                const std::string hp = p + "head" + std::to_string(h) + ".";
                AttentionHeadParams head;
                head.w_query = params.add(hp + "w_query", normal(d, cfg_.dk, double(d)));
                head.w_key = params.add(hp + "w_key", normal(d, cfg_.dk, double(d)));
                head.w_value = params.add(hp + "w_value", normal(d, cfg_.dk, double(d)));
                if (cfg_.kernel.mode != KernelMode::none) {
                    const Matrix init = to_unconstrained(initial_kernel_params(cfg_, h));
                    if (cfg_.kernel.adaptive) {
                        head.adaptive.weight = params.add(hp + "adaptive.w", Matrix(4, kKernelParamCount));
                        head.adaptive.bias = params.add(hp + "adaptive.b", init);
                    } else {
                        head.kernel_raw = params.add(hp + "kernel", init);
                    }
                }
                b.heads.push_back(std::move(head));
            }
            b.w_out = params.add(p + "w_out", normal(cfg_.heads * cfg_.dk, d, double(cfg_.heads * cfg_.dk)));
            b.b_out = params.add(p + "b_out", Matrix(1, d));
            b.ln1_gain = params.add(p + "ln1.gain", Matrix(1, d, 1.0));
            b.ln1_bias = params.add(p + "ln1.bias", Matrix(1, d));
            b.ln2_gain = params.add(p + "ln2.gain", Matrix(1, d, 1.0));
            b.ln2_bias = params.add(p + "ln2.bias", Matrix(1, d));
            b.ff1_w = params.add(p + "ff1.w", normal(d, cfg_.d_ff, double(d)));
            b.ff1_b = params.add(p + "ff1.b", Matrix(1, cfg_.d_ff));
            b.ff2_w = params.add(p + "ff2.w", normal(cfg_.d_ff, d, double(cfg_.d_ff)));
            b.ff2_b = params.add(p + "ff2.b", Matrix(1, d));
            blocks_.push_back(std::move(b));
        }
        lnf_gain_ = params.add("final_ln.gain", Matrix(1, d, 1.0));
        lnf_bias_ = params.add("final_ln.bias", Matrix(1, d));
        if (cfg_.positional_encoding) positions_ = constant(sinusoidal_positions(cfg_.window, d));
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    const std::vector<EncoderBlockParams>& blocks() const noexcept { return blocks_; }

    void check_window(const Window& w) const {
        if (w.values.rows() != cfg_.window || w.values.cols() != cfg_.channels) {
            throw ShapeError("window " + w.values.shape_str() + " does not match model input " +
                             std::to_string(cfg_.window) + "x" + std::to_string(cfg_.channels));
        }
    }

    /// Kernel matrices shared by all windows (non-adaptive), or for one window (adaptive).
    KernelSet kernels(const Window* w = nullptr) const {
        KernelSet out(blocks_.size());
        if (cfg_.kernel.mode == KernelMode::none) {
            for (auto& l : out) l.resize(cfg_.heads);
            return out;
        }
        std::optional<TemporalFeatures> feats;
        if (cfg_.kernel.adaptive) {
            if (!w) throw ContractError("adaptive kernels need a window");
            feats = temporal_features(w->values, w->mask, w->timestamps, w->pad);
        }
        for (std::size_t l = 0; l < blocks_.size(); ++l)
            for (const auto& head : blocks_[l].heads) {
                Var p = feats ? adaptive_params(*feats, head.adaptive) : head.kernel_params();
                out[l].push_back(kernel_product(cfg_.kernel, p, cfg_.window));
            }
        return out;
    }

    bool shares_kernels() const noexcept { return !cfg_.kernel.adaptive; }

    /// Positive kernel parameters for (layer, head); `w` needed when adaptive.
    KernelParams kernel_params(std::size_t layer, std::size_t head, const Window* w = nullptr) const {
        if (cfg_.kernel.mode == KernelMode::none) return {};
        const auto& hp = blocks_.at(layer).heads.at(head);
        if (cfg_.kernel.adaptive) {
            if (!w) throw ContractError("adaptive kernels need a window");
            const auto f = temporal_features(w->values, w->mask, w->timestamps, w->pad);
            return params_from_row(adaptive_params(f, hp.adaptive)->value);
        }
        return params_from_row(hp.kernel_params()->value);
    }

    Var embed(const Window& w) const {
        check_window(w);
        Matrix in(cfg_.window, 2 * cfg_.channels);
        for (std::size_t t = 0; t < cfg_.window; ++t)
            for (std::size_t c = 0; c < cfg_.channels; ++c) {
                const bool observed = w.mask(t, c) != 0.0;
                in(t, c) = observed ? w.values(t, c) : kMissingFill;
                in(t, cfg_.channels + c) = observed ? 1.0 : 0.0;
            }
        return add_row(matmul(constant(std::move(in)), w_in_), b_in_);
    }

    struct Encoded {
        Var out;  // T x d_model after the final layer norm
        std::vector<std::vector<Var>> attention;
    };

    /// Runs the blocks on an embedded window (position code added here).
    Encoded encode(Var x, const KernelSet& kernels) const {
        if (positions_) x = add(x, positions_);
        Encoded r;
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            auto o = multi_head_forward(x, blocks_[l], cfg_.kernel, kernels[l], cfg_.causal);
            x = o.out;
            r.attention.push_back(std::move(o.attention));
        }
        r.out = layer_norm(x, lnf_gain_, lnf_bias_);
        return r;
    }

private:
    ModelConfig cfg_;
    Var w_in_, b_in_;
    std::vector<EncoderBlockParams> blocks_;
    Var lnf_gain_, lnf_bias_;
    Var positions_;
};

inline AttentionSnapshot to_snapshot(const std::vector<std::vector<Var>>& attention) {
    AttentionSnapshot s;
    for (const auto& layer : attention) {
        std::vector<Matrix> heads;
        for (const auto& a : layer) heads.push_back(a->value);
        s.push_back(std::move(heads));
    }
    return s;
}

// ---------------------------------------------------------------- classifier

class ClassifierModel {
public:
    explicit ClassifierModel(const ModelConfig& cfg, std::uint64_t seed = 1)
        : rng_(seed), encoder_(cfg, params_, rng_) {
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(double(cfg.d_model)));
        Matrix w(cfg.d_model, 1);
        for (double& v : w.data()) v = dist(rng_);
        head_w_ = params_.add("head.w", std::move(w));
        head_b_ = params_.add("head.b", Matrix(1, 1));
    }

    ClassifierModel(const ClassifierModel&) = delete;
    ClassifierModel& operator=(const ClassifierModel&) = delete;
    ClassifierModel(ClassifierModel&&) = default;

    ClassifierModel clone() const {
        ClassifierModel m(config());
        m.params_.copy_values_from(params_);
        return m;
    }

    const ModelConfig& config() const noexcept { return encoder_.config(); }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }
    const Encoder& encoder() const noexcept { return encoder_; }

    struct Forward {
        Var logit;
        std::vector<std::vector<Var>> attention;
    };

    Forward forward(const Window& w, const KernelSet* shared = nullptr) const {
        KernelSet own;
        if (!shared || !encoder_.shares_kernels()) {
            own = encoder_.kernels(&w);
            shared = &own;
        }
        auto enc = encoder_.encode(encoder_.embed(w), *shared);
        Var pooled;
        switch (config().pooling) {
            case Pooling::mean: pooled = mean_rows(enc.out); break;
            case Pooling::max: pooled = max_rows(enc.out); break;
            case Pooling::last: pooled = select_row(enc.out, enc.out->value.rows() - 1); break;
        }
        return {add(matmul(pooled, head_w_), head_b_), std::move(enc.attention)};
    }

    /// Event probability; deterministic and read-only on the weights.
    double classify(const Window& w) const {
        NoGradGuard guard;
        return sigmoid(forward(w).logit->value[0]);
    }

    std::vector<double> classify(const TimeSeriesDataset& ds, const std::vector<std::size_t>& idx) const {
        NoGradGuard guard;
        const KernelSet shared = encoder_.shares_kernels() ? encoder_.kernels() : KernelSet{};
        std::vector<double> out;
        out.reserve(idx.size());
        for (std::size_t i : idx)
            out.push_back(sigmoid(forward(ds.windows[i], encoder_.shares_kernels() ? &shared : nullptr)
                                      .logit->value[0]));
        return out;
    }

    /// Mean binary cross-entropy over a batch of windows.
    Var batch_loss(const TimeSeriesDataset& ds, const std::vector<std::size_t>& idx) const {
        const KernelSet shared = encoder_.shares_kernels() ? encoder_.kernels() : KernelSet{};
        std::vector<Var> losses;
        losses.reserve(idx.size());
        for (std::size_t i : idx) {
            const auto& w = ds.windows[i];
            auto f = forward(w, encoder_.shares_kernels() ? &shared : nullptr);
            losses.push_back(bce_with_logits(f.logit, static_cast<double>(w.label)));
        }
        return mean_of(losses);
    }

    AttentionSnapshot attention_snapshot(const Window& w) const {
        NoGradGuard guard;
        return to_snapshot(forward(w).attention);
    }

private:
    ParameterSet params_;
    std::mt19937_64 rng_;
    Encoder encoder_;
    Var head_w_, head_b_;
};

// ---------------------------------------------------------------- masked-value probe

class MaskedValueModel {
public:
    explicit MaskedValueModel(const ModelConfig& cfg, std::uint64_t seed = 1)
        : rng_(seed), encoder_(cfg, params_, rng_) {
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(double(cfg.d_model)));
        Matrix emb(1, cfg.d_model);
        for (double& v : emb.data()) v = dist(rng_);
        mask_embedding_ = params_.add("mask_embedding", std::move(emb));
        Matrix w(cfg.d_model, cfg.channels);
        for (double& v : w.data()) v = dist(rng_);
        head_w_ = params_.add("head.w", std::move(w));
        head_b_ = params_.add("head.b", Matrix(1, cfg.channels));
    }

    MaskedValueModel(const MaskedValueModel&) = delete;
    MaskedValueModel& operator=(const MaskedValueModel&) = delete;
    MaskedValueModel(MaskedValueModel&&) = default;

    MaskedValueModel clone() const {
        MaskedValueModel m(config());
        m.params_.copy_values_from(params_);
        return m;
    }

    const ModelConfig& config() const noexcept { return encoder_.config(); }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }
    const Encoder& encoder() const noexcept { return encoder_; }

    struct Result {
        Var predictions;  // T x C, one regression output per position
        Var loss;         // squared error at the masked position (observed channels)
        std::vector<std::vector<Var>> attention;
    };

    Result masked_predict(const Window& w, std::size_t position, const KernelSet* shared = nullptr) const {
        if (position >= config().window) {
            throw ContractError("masked position " + std::to_string(position) + " outside [0, " +
                                std::to_string(config().window) + ")");
        }
        KernelSet own;
        if (!shared || !encoder_.shares_kernels()) {
            own = encoder_.kernels(&w);
            shared = &own;
        }
        Var x = replace_row(encoder_.embed(w), position, mask_embedding_);
        auto enc = encoder_.encode(x, *shared);
        Result r;
        r.predictions = add_row(matmul(enc.out, head_w_), head_b_);
        r.attention = std::move(enc.attention);
        Var pred = select_row(r.predictions, position);
        std::vector<Var> errs;
        for (std::size_t c = 0; c < config().channels; ++c) {
            if (w.mask(position, c) == 0.0) continue;
            errs.push_back(square(sub(element(pred, 0, c), constant(Matrix::scalar(w.values(position, c))))));
        }
        if (errs.empty()) throw ContractError("masked position has no observed target");
        r.loss = mean_of(errs);
        return r;
    }

    Var batch_loss(const TimeSeriesDataset& ds, const std::vector<std::size_t>& idx,
                   const std::vector<std::size_t>& positions) const {
        if (idx.size() != positions.size()) throw ShapeError("batch_loss: positions length");
        const KernelSet shared = encoder_.shares_kernels() ? encoder_.kernels() : KernelSet{};
        std::vector<Var> losses;
        for (std::size_t k = 0; k < idx.size(); ++k)
            losses.push_back(masked_predict(ds.windows[idx[k]], positions[k],
                                            encoder_.shares_kernels() ? &shared : nullptr)
                                 .loss);
        return mean_of(losses);
    }

    AttentionSnapshot attention_snapshot(const Window& w, std::size_t position) const {
        NoGradGuard guard;
        return to_snapshot(masked_predict(w, position).attention);
    }

private:
    ParameterSet params_;
    std::mt19937_64 rng_;
    Encoder encoder_;
    Var mask_embedding_;
    Var head_w_, head_b_;
};

}  // namespace satt
