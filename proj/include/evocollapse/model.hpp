#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evocollapse/error.hpp"
#include "evocollapse/rng.hpp"
#include "evocollapse/tensor.hpp"

namespace evocollapse {

struct ModelConfig {
    Index n_layers = 8;
    Index d_model = 64;
    Index n_heads = 4;
    Index d_ff = 128;
    Index vocab_size = 256;
    Index max_seq_len = 64;
    double rope_theta = 10000.0;
    double rms_eps = 1e-5;

    Index head_dim() const noexcept { return d_model / n_heads; }

    /// Throws InvalidArgument describing the first violated constraint.
    void validate() const {
        auto bad = [](const std::string& m) { fail(ErrorClass::InvalidArgument, "model config: " + m); };
        if (n_layers < 2) bad("n_layers must be >= 2, got " + std::to_string(n_layers));
        if (d_model <= 0 || n_heads <= 0 || d_ff <= 0) bad("d_model, n_heads and d_ff must be positive");
        if (d_model % n_heads != 0) bad("d_model must be divisible by n_heads");
        if (head_dim() % 2 != 0) bad("head dimension must be even for rotary embeddings");
        if (vocab_size != 256) bad("vocab_size must be 256 for the byte tokenizer");
        if (max_seq_len < 1) bad("max_seq_len must be >= 1");
        if (!(rope_theta > 0.0) || !std::isfinite(rope_theta)) bad("rope_theta must be positive");
        if (!(rms_eps > 0.0) || !std::isfinite(rms_eps)) bad("rms_eps must be positive");
    }

    bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
struct LayerWeights {
    Tensor<Scalar> attn_q, attn_k, attn_v, attn_o;
    Tensor<Scalar> ffn_gate, ffn_up, ffn_down;
    Tensor<Scalar> norm_attn, norm_ffn;

    static LayerWeights zeros(const ModelConfig& c) {
        LayerWeights w;
        w.attn_q = Tensor<Scalar>::matrix(c.d_model, c.d_model);
        w.attn_k = Tensor<Scalar>::matrix(c.d_model, c.d_model);
        w.attn_v = Tensor<Scalar>::matrix(c.d_model, c.d_model);
        w.attn_o = Tensor<Scalar>::matrix(c.d_model, c.d_model);
        w.ffn_gate = Tensor<Scalar>::matrix(c.d_ff, c.d_model);
        w.ffn_up = Tensor<Scalar>::matrix(c.d_ff, c.d_model);
        w.ffn_down = Tensor<Scalar>::matrix(c.d_model, c.d_ff);
        w.norm_attn = Tensor<Scalar>::vector(c.d_model);
        w.norm_ffn = Tensor<Scalar>::vector(c.d_model);
        return w;
    }
};

/// The nine per-layer tensors, in checkpoint order.
template <typename Scalar>
constexpr std::array<std::pair<std::string_view, Tensor<Scalar> LayerWeights<Scalar>::*>, 9> layer_fields() {
    using W = LayerWeights<Scalar>;
    return {{{"attn_q", &W::attn_q},
             {"attn_k", &W::attn_k},
             {"attn_v", &W::attn_v},
             {"attn_o", &W::attn_o},
             {"ffn_gate", &W::ffn_gate},
             {"ffn_up", &W::ffn_up},
             {"ffn_down", &W::ffn_down},
             {"norm_attn", &W::norm_attn},
             {"norm_ffn", &W::norm_ffn}}};
}

template <typename Scalar>
struct TransformerModel {
    ModelConfig config;
    Tensor<Scalar> embedding;
    std::vector<LayerWeights<Scalar>> layers;
    Tensor<Scalar> final_norm;
    Tensor<Scalar> lm_head;

    Index n_layers() const noexcept { return static_cast<Index>(layers.size()); }
};

/// Checks every tensor shape against the config; throws ShapeMismatch.
template <typename Scalar>
void validate_shapes(const TransformerModel<Scalar>& m) {
    m.config.validate();
    if (m.n_layers() != m.config.n_layers)
        fail(ErrorClass::ShapeMismatch, "model has " + std::to_string(m.n_layers()) + " layers but config declares " +
                                            std::to_string(m.config.n_layers));
    auto expect = [](const Tensor<Scalar>& t, const Shape& s, const std::string& name) {
        if (t.shape() != s)
            fail(ErrorClass::ShapeMismatch,
                 name + ": expected " + shape_string(s) + ", got " + shape_string(t.shape()));
    };
    const auto& c = m.config;
    expect(m.embedding, {c.vocab_size, c.d_model}, "embedding");
    expect(m.final_norm, {c.d_model}, "final_norm");
    expect(m.lm_head, {c.vocab_size, c.d_model}, "lm_head");
    const auto ref = LayerWeights<Scalar>::zeros(c);
    for (Index i = 0; i < m.n_layers(); ++i)
        for (const auto& [name, field] : layer_fields<Scalar>())
            expect(m.layers[i].*field, (ref.*field).shape(), "layers." + std::to_string(i) + "." + std::string(name));
}

template <typename Scalar>
TransformerModel<Scalar> init_random(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    auto fill = [&rng](Tensor<Scalar>& t) {
        for (Scalar& v : t.data()) v = static_cast<Scalar>(0.02 * rng.normal());
    };
    TransformerModel<Scalar> m;
    m.config = config;
    m.embedding = Tensor<Scalar>::matrix(config.vocab_size, config.d_model);
    fill(m.embedding);
    m.layers.reserve(static_cast<std::size_t>(config.n_layers));
    for (Index i = 0; i < config.n_layers; ++i) {
        auto w = LayerWeights<Scalar>::zeros(config);
        for (const auto& [name, field] : layer_fields<Scalar>()) {
            if (name.starts_with("norm_"))
                (w.*field).values().setOnes();
            else
                fill(w.*field);
        }
        m.layers.push_back(std::move(w));
    }
    m.final_norm = Tensor<Scalar>::vector(config.d_model);
    m.final_norm.values().setOnes();
    m.lm_head = Tensor<Scalar>::matrix(config.vocab_size, config.d_model);
    fill(m.lm_head);
    return m;
}

// ---------------------------------------------------------------------------
// Tokenization

struct TokenSequence {
    std::vector<std::int32_t> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
    bool operator==(const TokenSequence&) const = default;
};

TokenSequence tokenize_bytes(std::string_view text, std::size_t max_len);

// ---------------------------------------------------------------------------
// Forward pass

/// Raw projection outputs of one decoder layer, each [seq_len x width].
template <typename Scalar>
struct LayerActivations {
    RowMatrix<Scalar> attn_q, attn_k, attn_v, attn_o;
    RowMatrix<Scalar> ffn_gate, ffn_up, ffn_down;
};

template <typename Scalar>
struct ActivationTrace {
    std::vector<LayerActivations<Scalar>> layers;
    RowMatrix<Scalar> final_hidden;  // after the final RMSNorm
};

template <typename Scalar>
struct ForwardResult {
    RowMatrix<Scalar> logits;  // [seq_len x vocab_size]
    std::optional<ActivationTrace<Scalar>> trace;
};

/// Row-wise RMSNorm with an elementwise gain vector.
template <typename Derived, typename Scalar = typename Derived::Scalar>
RowMatrix<Scalar> rms_norm(const Eigen::MatrixBase<Derived>& x, const Tensor<Scalar>& weight, Scalar eps) {
    RowMatrix<Scalar> out(x.rows(), x.cols());
    const Scalar inv_cols = Scalar(1) / static_cast<Scalar>(x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const Scalar mean_sq = x.row(r).squaredNorm() * inv_cols;
        const Scalar scale = Scalar(1) / std::sqrt(mean_sq + eps);
        out.row(r) = (x.row(r) * scale).cwiseProduct(weight.values().row(0));
    }
    return out;
}

namespace detail {

/// Rotates interleaved (even, odd) pairs within each head by position-dependent angles.
template <typename Scalar>
void apply_rope(RowMatrix<Scalar>& x, Index n_heads, Scalar theta) {
    const Index hd = x.cols() / n_heads;
    std::vector<Scalar> inv_freq(static_cast<std::size_t>(hd / 2));
    for (Index i = 0; i < hd / 2; ++i)
        inv_freq[i] = std::pow(theta, -static_cast<Scalar>(2 * i) / static_cast<Scalar>(hd));
    for (Index t = 0; t < x.rows(); ++t) {
        for (Index i = 0; i < hd / 2; ++i) {
            const Scalar angle = static_cast<Scalar>(t) * inv_freq[i];
            const Scalar c = std::cos(angle), s = std::sin(angle);
            for (Index h = 0; h < n_heads; ++h) {
                const Index j = h * hd + 2 * i;
                const Scalar a = x(t, j), b = x(t, j + 1);
                x(t, j) = a * c - b * s;
                x(t, j + 1) = a * s + b * c;
            }
        }
    }
}

template <typename Scalar>
RowMatrix<Scalar> causal_attention(const RowMatrix<Scalar>& q, const RowMatrix<Scalar>& k, const RowMatrix<Scalar>& v,
                                   Index n_heads) {
    const Index T = q.rows();
    const Index hd = q.cols() / n_heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    RowMatrix<Scalar> out(T, q.cols());
    RowMatrix<Scalar> scores(T, T);
    for (Index h = 0; h < n_heads; ++h) {
        const auto qh = q.middleCols(h * hd, hd);
        const auto kh = k.middleCols(h * hd, hd);
        const auto vh = v.middleCols(h * hd, hd);
        scores.noalias() = (qh * kh.transpose()) * scale;
        for (Index i = 0; i < T; ++i) {
            const Scalar mx = scores.row(i).head(i + 1).maxCoeff();
            Scalar total = 0;
            for (Index j = 0; j <= i; ++j) {
                const Scalar e = std::exp(scores(i, j) - mx);
                scores(i, j) = e;
                total += e;
            }
            scores.row(i).head(i + 1) /= total;
            scores.row(i).tail(T - i - 1).setZero();
        }
        out.middleCols(h * hd, hd).noalias() = scores * vh;
    }
    return out;
}

}  // namespace detail

template <typename Scalar>
ForwardResult<Scalar> forward(const TransformerModel<Scalar>& model, const TokenSequence& tokens, bool capture) {
    const auto& c = model.config;
    const Index T = static_cast<Index>(tokens.size());
    if (T == 0) fail(ErrorClass::InvalidArgument, "forward: empty token sequence");
    if (T > c.max_seq_len)
        fail(ErrorClass::ShapeMismatch,
             "forward: sequence length " + std::to_string(T) + " exceeds max_seq_len " + std::to_string(c.max_seq_len));
    if (model.n_layers() != c.n_layers)
        fail(ErrorClass::ShapeMismatch, "forward: layer list does not match config");

    RowMatrix<Scalar> x(T, c.d_model);
    for (Index t = 0; t < T; ++t) {
        const auto tok = tokens.tokens[static_cast<std::size_t>(t)];
        if (tok < 0 || tok >= c.vocab_size)
            fail(ErrorClass::ShapeMismatch, "forward: token " + std::to_string(tok) + " outside vocabulary");
        x.row(t) = model.embedding.values().row(tok);
    }

    const Scalar eps = static_cast<Scalar>(c.rms_eps);
    const Scalar theta = static_cast<Scalar>(c.rope_theta);
    ForwardResult<Scalar> result;
    if (capture) result.trace.emplace().layers.reserve(model.layers.size());

    for (const auto& w : model.layers) {
        const RowMatrix<Scalar> h = rms_norm(x, w.norm_attn, eps);
        RowMatrix<Scalar> q = h * w.attn_q.values().transpose();
        RowMatrix<Scalar> k = h * w.attn_k.values().transpose();
        RowMatrix<Scalar> v = h * w.attn_v.values().transpose();
        LayerActivations<Scalar>* act = nullptr;
        if (capture) {
            act = &result.trace->layers.emplace_back();
            act->attn_q = q;
            act->attn_k = k;
            act->attn_v = v;
        }
        detail::apply_rope(q, c.n_heads, theta);
        detail::apply_rope(k, c.n_heads, theta);
        const RowMatrix<Scalar> mixed = detail::causal_attention(q, k, v, c.n_heads);
        RowMatrix<Scalar> attn_out = mixed * w.attn_o.values().transpose();
        x += attn_out;

        const RowMatrix<Scalar> h2 = rms_norm(x, w.norm_ffn, eps);
        RowMatrix<Scalar> gate = h2 * w.ffn_gate.values().transpose();
        RowMatrix<Scalar> up = h2 * w.ffn_up.values().transpose();
        const RowMatrix<Scalar> act_in =
            (gate.array() / (Scalar(1) + (-gate.array()).exp())).cwiseProduct(up.array()).matrix();
        RowMatrix<Scalar> down = act_in * w.ffn_down.values().transpose();
        x += down;

        if (act) {
            act->attn_o = std::move(attn_out);
            act->ffn_gate = std::move(gate);
            act->ffn_up = std::move(up);
            act->ffn_down = std::move(down);
        }
    }

    RowMatrix<Scalar> final_hidden = rms_norm(x, model.final_norm, eps);
    result.logits = final_hidden * model.lm_head.values().transpose();
    if (capture) result.trace->final_hidden = std::move(final_hidden);
    return result;
}

using Model = TransformerModel<float>;
using Trace = ActivationTrace<float>;

}  // namespace evocollapse
