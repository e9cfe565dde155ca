// Kernel-modulated multi-head self-attention and pre-norm encoder blocks.
//
// Two ways of applying the kernels are supported:
//   score : A = softmax((Ce . Cp . (Q K^T)) / sqrt(dk))           any dk
//   qk    : A = softmax(((Ce . Q)(Cp . K)^T) / sqrt(dk))          dk == T only
// where "." is the element-wise product. With mode none both reduce to
// softmax(Q K^T / sqrt(dk)) through the exact same sequence of operations.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "satt/autodiff.hpp"
#include "satt/kernels.hpp"

namespace satt {

struct AttentionHeadParams {
    Var w_query;  // d_in x dk
    Var w_key;    // d_in x dk
    Var w_value;  // d_in x dk
    Var kernel_raw;  // 1 x 4 unconstrained, used when not adaptive
    AdaptiveMap adaptive;  // used when adaptive

    std::size_t dk() const { return w_query->value.cols(); }

    /// Positive kernel parameters for this head (non-adaptive path).
    Var kernel_params() const { return positive_params(kernel_raw); }
};

struct EncoderBlockParams {
    std::vector<AttentionHeadParams> heads;
    Var w_out, b_out;        // (heads*dk) x d_model, 1 x d_model
    Var ln1_gain, ln1_bias;  // 1 x d_model
    Var ln2_gain, ln2_bias;
    Var ff1_w, ff1_b;  // d_model x d_ff, 1 x d_ff
    Var ff2_w, ff2_b;  // d_ff x d_model, 1 x d_model
};

struct AttentionResult {
    Var attention;  // T x T, row-stochastic
    Var logits;     // pre-softmax input
    Var raw;        // Q K^T (score mode) or Qhat Khat^T (qk mode), before scaling
};

inline void require_qk_shape(std::size_t dk, std::size_t T) {
    if (dk != T) {
        throw ConfigError("kernel application 'qk' multiplies T x T kernels element-wise with "
                          "T x dk queries/keys and needs dk == T (dk=" +
                          std::to_string(dk) + ", T=" + std::to_string(T) + ")");
    }
}

/// Attention matrix for one head given precomputed kernels.
inline AttentionResult attention_scores(const Var& x, const AttentionHeadParams& head,
                                        const KernelSpec& spec, const HeadKernels& kernels,
                                        bool causal = false) {
    const std::size_t T = x->value.rows();
    if (T == 0) throw ContractError("attention_scores requires T >= 1");
    if (x->value.cols() != head.w_query->value.rows()) {
        throw ShapeError("attention_scores: input " + x->value.shape_str() +
                         " vs query projection " + head.w_query->value.shape_str());
    }
    const std::size_t dk = head.dk();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    Var q = matmul(x, head.w_query);
    Var k = matmul(x, head.w_key);
    AttentionResult r;
    if (spec.mode != KernelMode::none && spec.application == KernelApplication::qk) {
        require_qk_shape(dk, T);
        r.raw = matmul_nt(hadamard(kernels.exp, q), hadamard(kernels.periodic, k));
        r.logits = scale(r.raw, inv_sqrt_dk);
    } else {
        r.raw = matmul_nt(q, k);
        r.logits = spec.mode == KernelMode::none ? scale(r.raw, inv_sqrt_dk)
                                                 : scale(hadamard(kernels.product, r.raw), inv_sqrt_dk);
    }
    if (causal) r.logits = causal_mask(r.logits);
    r.attention = softmax_rows(r.logits);
    return r;
}

/// Convenience overload computing the head's own (non-adaptive) kernels.
inline AttentionResult attention_scores(const Var& x, const AttentionHeadParams& head,
                                        const KernelSpec& spec, bool causal = false) {
    const std::size_t T = x->value.rows();
    if (spec.mode != KernelMode::none && spec.application == KernelApplication::qk)
        require_qk_shape(head.dk(), T);
    const HeadKernels kernels = spec.mode == KernelMode::none
                                    ? HeadKernels{}
                                    : kernel_product(spec, head.kernel_params(), T);
    return attention_scores(x, head, spec, kernels, causal);
}

/// Element-wise kernelisation of queries and keys, evaluated entry by entry:
/// Qhat(i,j) = Ke(|i-j|) Q(i,j), Khat(i,j) = Kp(|i-j|) K(i,j). Only defined for dk == T.
inline std::pair<Matrix, Matrix> elementwise_kernelization(const Matrix& q, const Matrix& k,
                                                           const KernelParams& p,
                                                           KernelMode mode = KernelMode::both) {
    q.require_same(k, "elementwise_kernelization");
    require_qk_shape(q.cols(), q.rows());
    const bool use_exp = mode == KernelMode::exp || mode == KernelMode::both;
    const bool use_per = mode == KernelMode::periodic || mode == KernelMode::both;
    Matrix qh(q.rows(), q.cols());
    Matrix kh(k.rows(), k.cols());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        for (std::size_t j = 0; j < q.cols(); ++j) {
            const double lag = i > j ? double(i - j) : double(j - i);
            const double ce = use_exp ? exp_kernel_value(p.exp_alpha, p.exp_beta, lag) : 1.0;
            const double cp = use_per ? periodic_kernel_value(p.per_alpha, p.per_beta, lag) : 1.0;
            qh(i, j) = ce * q(i, j);
            kh(i, j) = cp * k(i, j);
        }
    }
    return {std::move(qh), std::move(kh)};
}

struct MultiHeadOutput {
    Var out;                     // T x d_model, before the residual connection
    std::vector<Var> attention;  // one T x T matrix per head
};

/// Heads run on `x`, outputs are concatenated and projected by w_out/b_out.
inline MultiHeadOutput multi_head_attention(const Var& x, const EncoderBlockParams& block,
                                            const KernelSpec& spec,
                                            const std::vector<HeadKernels>& kernels,
                                            bool causal = false) {
    if (kernels.size() != block.heads.size()) {
        throw ShapeError("multi_head_attention: " + std::to_string(kernels.size()) +
                         " kernel sets for " + std::to_string(block.heads.size()) + " heads");
    }
    MultiHeadOutput r;
    std::vector<Var> head_out;
    head_out.reserve(block.heads.size());
    for (std::size_t h = 0; h < block.heads.size(); ++h) {
        const auto& head = block.heads[h];
        auto scores = attention_scores(x, head, spec, kernels[h], causal);
        head_out.push_back(matmul(scores.attention, matmul(x, head.w_value)));
        r.attention.push_back(scores.attention);
    }
    Var cat = head_out.size() == 1 ? head_out.front() : concat_cols(head_out);
    r.out = add_row(matmul(cat, block.w_out), block.b_out);
    return r;
}

/// Pre-norm block: y = x + MHA(LN(x)); out = y + FFN(LN(y)).
inline MultiHeadOutput multi_head_forward(const Var& x, const EncoderBlockParams& block,
                                          const KernelSpec& spec,
                                          const std::vector<HeadKernels>& kernels,
                                          bool causal = false) {
    if (x->value.cols() != block.w_out->value.cols()) {
        throw ShapeError("encoder block: input " + x->value.shape_str() + " vs model width " +
                         std::to_string(block.w_out->value.cols()));
    }
    auto mha = multi_head_attention(layer_norm(x, block.ln1_gain, block.ln1_bias), block, spec,
                                    kernels, causal);
    Var y = add(x, mha.out);
    Var hidden = gelu(add_row(matmul(layer_norm(y, block.ln2_gain, block.ln2_bias), block.ff1_w),
                              block.ff1_b));
    mha.out = add(y, add_row(matmul(hidden, block.ff2_w), block.ff2_b));
    return mha;
}

}  // namespace satt
