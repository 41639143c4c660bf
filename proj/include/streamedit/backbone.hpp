// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "streamedit/attention.hpp"
#include "streamedit/errors.hpp"
#include "streamedit/noise.hpp"
#include "streamedit/tensor.hpp"

namespace streamedit {

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

/// Lower-cased words; punctuation separates tokens and is dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isalnum(uc) || ch == '\'' || ch == '-') {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

/// A tokenized prompt and its text-encoder output (one row per token).
struct Prompt {
    std::string text;
    std::vector<std::string> tokens;
    Matrix<float> embedding;
};

/// Hashed word embeddings: every word maps to a fixed Gaussian vector, so source
/// and target prompts share one vocabulary.
inline Prompt hashed_prompt(std::string_view text, std::size_t dim, std::uint64_t seed) {
    Prompt p;
    p.text = std::string(text);
    p.tokens = tokenize(text);
    detail::require(!p.tokens.empty(), "prompt has no tokens");
    p.embedding = Matrix<float>(p.tokens.size(), dim);
    for (std::size_t i = 0; i < p.tokens.size(); ++i) {
        const auto key = combine_key(seed, fnv1a(p.tokens[i]));
        auto row = p.embedding.row(i);
        for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<float>(standard_normal(key, d));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Velocity-model contract
// ---------------------------------------------------------------------------

/// Keys and values of one attention layer, one row per token.
struct LayerKv {
    Matrix<float> k;
    Matrix<float> v;
};

/// Per-layer KV of one chunk.
using ChunkKv = std::vector<LayerKv>;

/// Previous-chunk keys/values visible to the current forward, one entry per layer.
/// An empty `layers` vector means no previous context.
struct ContextView {
    std::vector<LayerKv> layers;
    std::size_t frames = 0;

    std::size_t tokens() const noexcept { return layers.empty() ? 0 : layers.front().k.rows(); }
};

struct SelfAttentionSite {
    std::size_t layer;
    std::size_t heads;
    const Matrix<float>& q;
    const Matrix<float>& k;
    const Matrix<float>& v;
    const Matrix<float>& k_ctx;
    const Matrix<float>& v_ctx;
};

/// Full replacement operands for a self-attention site. k/v hold the complete key list.
struct SelfAttentionOverride {
    Matrix<float> q;
    Matrix<float> k;
    Matrix<float> v;
};

struct CrossAttentionSite {
    std::size_t layer;
    std::size_t heads;
    const Matrix<float>& q;       // visual queries
    const Matrix<float>& k_text;  // prompt keys
    const Matrix<float>& v_text;  // prompt values
};

/// Interception points inside a forward. Every method has a pass-through default.
class ForwardHooks {
public:
    virtual ~ForwardHooks() = default;

    /// Called at every self-attention site with the current-chunk Q/K/V and the
    /// previous-context K/V. Returning a value replaces the attention operands.
    virtual std::optional<SelfAttentionOverride> self_attention(const SelfAttentionSite&) { return std::nullopt; }

    /// Whether cross_attention_map should be fed; maps are only materialized on request.
    virtual bool wants_cross_attention_maps() const { return false; }

    /// Head-averaged cross-attention probabilities (visual queries x prompt tokens), pre-boost.
    virtual void cross_attention_map(std::size_t /*layer*/, const Matrix<float>& /*probs*/) {}

    /// Called with the plain cross-attention output; returning a value replaces it.
    virtual std::optional<Matrix<float>> cross_attention_output(const CrossAttentionSite&, const Matrix<float>& /*plain*/) {
        return std::nullopt;
    }
};

struct ForwardRequest {
    const Latent& x_t;
    double t;
    const Prompt& prompt;
    const ContextView& context;
    ForwardHooks* hooks = nullptr;
    // The noise x_t was formed with. Only analytic test models read it.
    const Latent* noise = nullptr;
};

struct ForwardResult {
    Latent velocity;
    ChunkKv kv;  // the current chunk's own self-attention K/V per layer, for caching
};

/// Chunk-level velocity model. Implementations must be shape preserving and
/// deterministic for a hook-free forward; weights are immutable after construction.
///
/// Adapters for pretrained streaming generators implement this same interface.
class VelocityModel {
public:
    virtual ~VelocityModel() = default;

    virtual ForwardResult forward(const ForwardRequest& req) const = 0;
    virtual std::size_t layers() const = 0;
    virtual std::size_t heads() const = 0;
    /// Width of cached K/V rows.
    virtual std::size_t kv_dim() const = 0;
    virtual TokenGrid token_grid(const LatentShape& shape) const = 0;
    virtual Prompt encode_prompt(std::string_view text) const = 0;
};

/// Decorator counting forwards (function evaluations) of the wrapped model.
class CountingModel final : public VelocityModel {
public:
    explicit CountingModel(const VelocityModel& inner) : inner_(inner) {}

    ForwardResult forward(const ForwardRequest& req) const override {
        count_.fetch_add(1, std::memory_order_relaxed);
        return inner_.forward(req);
    }
    std::size_t layers() const override { return inner_.layers(); }
    std::size_t heads() const override { return inner_.heads(); }
    std::size_t kv_dim() const override { return inner_.kv_dim(); }
    TokenGrid token_grid(const LatentShape& s) const override { return inner_.token_grid(s); }
    Prompt encode_prompt(std::string_view text) const override { return inner_.encode_prompt(text); }

    std::size_t count() const noexcept { return count_.load(std::memory_order_relaxed); }
    void reset() noexcept { count_.store(0); }

private:
    const VelocityModel& inner_;
    mutable std::atomic<std::size_t> count_{0};
};

// ---------------------------------------------------------------------------
// Patching: 1 x 2 x 2 latent patches become tokens.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kPatch = 2;

inline TokenGrid patch_grid(const LatentShape& s) {
    detail::require(s.height % kPatch == 0 && s.width % kPatch == 0,
                    "latent height and width must be multiples of the 2x2 patch size");
    return {s.frames, s.height / kPatch, s.width / kPatch};
}

inline Matrix<float> patchify(const Latent& x) {
    const auto& s = x.shape();
    const TokenGrid g = patch_grid(s);
    Matrix<float> tokens(g.tokens(), kPatch * kPatch * s.channels);
    for (std::size_t f = 0; f < g.frames; ++f)
        for (std::size_t i = 0; i < g.height; ++i)
            for (std::size_t j = 0; j < g.width; ++j) {
                auto row = tokens.row((f * g.height + i) * g.width + j);
                std::size_t d = 0;
                for (std::size_t di = 0; di < kPatch; ++di)
                    for (std::size_t dj = 0; dj < kPatch; ++dj)
                        for (std::size_t c = 0; c < s.channels; ++c) row[d++] = x.at(f, i * kPatch + di, j * kPatch + dj, c);
            }
    return tokens;
}

inline Latent unpatchify(const Matrix<float>& tokens, const LatentShape& s) {
    const TokenGrid g = patch_grid(s);
    detail::require(tokens.rows() == g.tokens() && tokens.cols() == kPatch * kPatch * s.channels, "unpatchify: shape mismatch");
    Latent x(s);
    for (std::size_t f = 0; f < g.frames; ++f)
        for (std::size_t i = 0; i < g.height; ++i)
            for (std::size_t j = 0; j < g.width; ++j) {
                auto row = tokens.row((f * g.height + i) * g.width + j);
                std::size_t d = 0;
                for (std::size_t di = 0; di < kPatch; ++di)
                    for (std::size_t dj = 0; dj < kPatch; ++dj)
                        for (std::size_t c = 0; c < s.channels; ++c) x.at(f, i * kPatch + di, j * kPatch + dj, c) = row[d++];
            }
    return x;
}

// ---------------------------------------------------------------------------
// Toy chunk-causal transformer
// ---------------------------------------------------------------------------

struct ToyBackboneConfig {
    std::size_t channels = 4;
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t dim = 64;
    std::size_t ffn_dim = 128;
    std::uint64_t seed = 2026;
};

/// Small DiT-style velocity model: patch embedding, timestep embedding, then blocks of
/// self-attention over (current chunk + cached context), prompt cross-attention and an MLP.
/// Weights are drawn from a fixed-seed generator. Within a chunk attention is
/// bidirectional; previous chunks are visible only through the supplied context.
class ToyBackbone final : public VelocityModel {
public:
    explicit ToyBackbone(ToyBackboneConfig cfg = {}) : cfg_(cfg) {
        detail::require(cfg_.layers > 0 && cfg_.heads > 0 && cfg_.dim % cfg_.heads == 0, "ToyBackbone: bad configuration");
        detail::require(cfg_.channels > 0, "ToyBackbone: channels must be positive");
        const std::size_t pd = patch_dim();
        std::uint64_t k = cfg_.seed;
        auto next = [&k](std::size_t rows, std::size_t cols, double gain = 1.0) {
            k = combine_key(k, 0x5eedULL);
            return gaussian_matrix<float>(rows, cols, k, gain / std::sqrt(static_cast<double>(rows)));
        };
        w_in_ = next(pd, cfg_.dim);
        w_time_ = next(kTimeFeatures, cfg_.dim);
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            Block b;
            b.wq = next(cfg_.dim, cfg_.dim);
            b.wk = next(cfg_.dim, cfg_.dim);
            b.wv = next(cfg_.dim, cfg_.dim);
            b.wo = next(cfg_.dim, cfg_.dim, 0.5);
            b.cq = next(cfg_.dim, cfg_.dim);
            b.ck = next(cfg_.dim, cfg_.dim);
            b.cv = next(cfg_.dim, cfg_.dim);
            b.co = next(cfg_.dim, cfg_.dim, 0.5);
            b.w1 = next(cfg_.dim, cfg_.ffn_dim);
            b.w2 = next(cfg_.ffn_dim, cfg_.dim, 0.5);
            blocks_.push_back(std::move(b));
        }
        w_out_ = next(cfg_.dim, pd);
    }

    const ToyBackboneConfig& config() const noexcept { return cfg_; }
    std::size_t layers() const override { return cfg_.layers; }
    std::size_t heads() const override { return cfg_.heads; }
    std::size_t kv_dim() const override { return cfg_.dim; }
    TokenGrid token_grid(const LatentShape& s) const override { return patch_grid(s); }
    Prompt encode_prompt(std::string_view text) const override { return hashed_prompt(text, cfg_.dim, cfg_.seed); }

    ForwardResult forward(const ForwardRequest& req) const override {
        const auto& s = req.x_t.shape();
        detail::require(s.channels == cfg_.channels, "ToyBackbone: latent has " + std::to_string(s.channels) +
                                                         " channels, model expects " + std::to_string(cfg_.channels));
        detail::require(req.prompt.embedding.cols() == cfg_.dim, "ToyBackbone: prompt embedding width mismatch");
        const auto& ctx = req.context;
        detail::require(ctx.layers.empty() || ctx.layers.size() == cfg_.layers,
                        "ToyBackbone: context has " + std::to_string(ctx.layers.size()) + " layers, model has " +
                            std::to_string(cfg_.layers));
        for (const auto& l : ctx.layers)
            detail::require(l.k.cols() == cfg_.dim && l.v.cols() == cfg_.dim && l.k.rows() == l.v.rows(),
                            "ToyBackbone: context K/V width does not match the model dimension");

        const TokenGrid grid = patch_grid(s);
        Matrix<float> h = matmul(patchify(req.x_t), w_in_);
        add_position_and_time(h, grid, req.t);

        ForwardResult result;
        result.kv.reserve(cfg_.layers);
        const Matrix<float> empty(0, cfg_.dim);
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            const Block& b = blocks_[l];

            // self-attention
            Matrix<float> n = layer_norm(h);
            Matrix<float> q = matmul(n, b.wq);
            Matrix<float> k = matmul(n, b.wk);
            Matrix<float> v = matmul(n, b.wv);
            const Matrix<float>& k_ctx = ctx.layers.empty() ? empty : ctx.layers[l].k;
            const Matrix<float>& v_ctx = ctx.layers.empty() ? empty : ctx.layers[l].v;
            std::optional<SelfAttentionOverride> ov;
            if (req.hooks) ov = req.hooks->self_attention(SelfAttentionSite{l, cfg_.heads, q, k, v, k_ctx, v_ctx});
            Matrix<float> sa;
            if (ov) {
                detail::require(ov->q.rows() == q.rows() && ov->q.cols() == cfg_.dim && ov->k.cols() == cfg_.dim &&
                                    ov->v.cols() == cfg_.dim && ov->k.rows() == ov->v.rows(),
                                "ToyBackbone: self-attention override has inconsistent shapes");
                sa = multi_head_attention(ov->q, ov->k, ov->v, cfg_.heads);
            } else {
                Matrix<float> k_all = k;
                Matrix<float> v_all = v;
                k_all.append_rows(k_ctx);
                v_all.append_rows(v_ctx);
                sa = multi_head_attention(q, k_all, v_all, cfg_.heads);
            }
            add_inplace(h, matmul(sa, b.wo));
            result.kv.push_back({std::move(k), std::move(v)});

            // prompt cross-attention
            n = layer_norm(h);
            const Matrix<float> cq = matmul(n, b.cq);
            const Matrix<float> ck = matmul(req.prompt.embedding, b.ck);
            const Matrix<float> cv = matmul(req.prompt.embedding, b.cv);
            if (req.hooks && req.hooks->wants_cross_attention_maps())
                req.hooks->cross_attention_map(l, head_averaged_probabilities(cq, ck, cfg_.heads));
            Matrix<float> ca = multi_head_attention(cq, ck, cv, cfg_.heads);
            if (req.hooks) {
                if (auto rep = req.hooks->cross_attention_output(CrossAttentionSite{l, cfg_.heads, cq, ck, cv}, ca)) {
                    detail::require(rep->rows() == ca.rows() && rep->cols() == ca.cols(),
                                    "ToyBackbone: cross-attention replacement has wrong shape");
                    ca = std::move(*rep);
                }
            }
            add_inplace(h, matmul(ca, b.co));

            // feed-forward
            Matrix<float> f = matmul(layer_norm(h), b.w1);
            for (auto& x : f.data()) x = gelu(x);
            add_inplace(h, matmul(f, b.w2));
        }
        result.velocity = unpatchify(matmul(layer_norm(h), w_out_), s);
        result.velocity.set_chunk_index(req.x_t.chunk_index());
        return result;
    }

private:
    static constexpr std::size_t kTimeFeatures = 16;

    struct Block {
        Matrix<float> wq, wk, wv, wo;
        Matrix<float> cq, ck, cv, co;
        Matrix<float> w1, w2;
    };

    std::size_t patch_dim() const { return kPatch * kPatch * cfg_.channels; }

    void add_position_and_time(Matrix<float>& h, const TokenGrid& g, double t) const {
        std::vector<float> feats(kTimeFeatures);
        for (std::size_t i = 0; i < kTimeFeatures / 2; ++i) {
            const double w = std::numbers::pi * static_cast<double>(1u << i);
            feats[2 * i] = static_cast<float>(std::sin(w * t));
            feats[2 * i + 1] = static_cast<float>(std::cos(w * t));
        }
        std::vector<float> temb(cfg_.dim, 0.0f);
        for (std::size_t i = 0; i < kTimeFeatures; ++i)
            for (std::size_t d = 0; d < cfg_.dim; ++d) temb[d] += feats[i] * w_time_(i, d);

        const std::size_t half = cfg_.dim / 2;
        for (std::size_t f = 0; f < g.frames; ++f)
            for (std::size_t i = 0; i < g.height; ++i)
                for (std::size_t j = 0; j < g.width; ++j) {
                    auto row = h.row((f * g.height + i) * g.width + j);
                    for (std::size_t d = 0; d < cfg_.dim; ++d) {
                        const double pos = d < half ? static_cast<double>(i) : static_cast<double>(j);
                        const std::size_t dd = d % half;
                        const double freq = std::pow(100.0, -static_cast<double>(dd / 2 * 2) / static_cast<double>(half));
                        const double pe = (dd % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
                        row[d] += temb[d] + static_cast<float>(0.5 * pe);
                    }
                }
    }

    static Matrix<float> layer_norm(const Matrix<float>& x) {
        Matrix<float> out(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            auto in = x.row(r);
            double mean = 0.0, var = 0.0;
            for (float v : in) mean += v;
            mean /= static_cast<double>(in.size());
            for (float v : in) var += (v - mean) * (v - mean);
            var /= static_cast<double>(in.size());
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            auto o = out.row(r);
            for (std::size_t d = 0; d < in.size(); ++d) o[d] = static_cast<float>((in[d] - mean) * inv);
        }
        return out;
    }

    static void add_inplace(Matrix<float>& a, const Matrix<float>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
    }

    static float gelu(float x) {
        const float c = 0.7978845608f;  // sqrt(2/pi)
        return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
    }

    ToyBackboneConfig cfg_;
    Matrix<float> w_in_, w_time_, w_out_;
    std::vector<Block> blocks_;
};

// ---------------------------------------------------------------------------
// Analytic oracle
// ---------------------------------------------------------------------------

/// Planted cross-attention for grounding fixtures: queries inside `region` put more
/// mass on the trigger words than on the rest of the prompt, queries outside put less.
struct PlantedAttention {
    std::vector<std::string> trigger_words;
    std::function<TokenMask(const Latent&, const TokenGrid&)> region;
    double surplus = 0.5;  // relative extra mass on trigger tokens, in (0, 1)
};

struct OracleConfig {
    std::size_t layers = 2;
    std::optional<PlantedAttention> planted;
};

/// Exact flow-field test double: v = eps - x0_target, where x0_target is the clean
/// chunk registered for the request's prompt and chunk index. Without noise (clean
/// forwards at t = 0) it returns zero velocity. K/V rows are the patch features.
class OracleBackbone final : public VelocityModel {
public:
    OracleBackbone(std::size_t channels, OracleConfig cfg = {}) : channels_(channels), cfg_(std::move(cfg)) {
        detail::require(cfg_.layers > 0, "OracleBackbone: needs at least one layer");
    }

    /// Registers the clean chunks the oracle flows toward when conditioned on `prompt_text`.
    void set_target(std::string_view prompt_text, std::vector<Latent> chunks) { targets_[std::string(prompt_text)] = std::move(chunks); }

    std::size_t layers() const override { return cfg_.layers; }
    std::size_t heads() const override { return 1; }
    std::size_t kv_dim() const override { return kPatch * kPatch * channels_; }
    TokenGrid token_grid(const LatentShape& s) const override { return patch_grid(s); }
    Prompt encode_prompt(std::string_view text) const override { return hashed_prompt(text, kv_dim(), 0); }

    ForwardResult forward(const ForwardRequest& req) const override {
        const auto& s = req.x_t.shape();
        detail::require(s.channels == channels_, "OracleBackbone: channel mismatch");
        ForwardResult result;
        result.velocity = Latent(s, 0.0f, req.x_t.chunk_index());
        if (req.noise) {
            require_same_shape(req.x_t, *req.noise, "OracleBackbone noise");
            const Latent& x0 = target_for(req.prompt.text, req.x_t.chunk_index(), s);
            for (std::size_t i = 0; i < result.velocity.size(); ++i)
                result.velocity.data()[i] = req.noise->data()[i] - x0.data()[i];
        }
        const TokenGrid grid = patch_grid(s);
        const Matrix<float> tokens = patchify(req.x_t);
        const Matrix<float> empty(0, kv_dim());
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            if (req.hooks) {
                const Matrix<float>& kc = req.context.layers.empty() ? empty : req.context.layers[l].k;
                const Matrix<float>& vc = req.context.layers.empty() ? empty : req.context.layers[l].v;
                (void)req.hooks->self_attention(SelfAttentionSite{l, 1, tokens, tokens, tokens, kc, vc});
                if (req.hooks->wants_cross_attention_maps())
                    req.hooks->cross_attention_map(l, planted_map(req.x_t, req.prompt, grid));
            }
            result.kv.push_back({tokens, tokens});
        }
        return result;
    }

private:
    const Latent& target_for(const std::string& prompt, std::size_t chunk, const LatentShape& s) const {
        auto it = targets_.find(prompt);
        if (it == targets_.end()) throw InvalidArgument("OracleBackbone: no target registered for prompt '" + prompt + "'");
        detail::require(chunk < it->second.size(), "OracleBackbone: no target chunk " + std::to_string(chunk));
        const Latent& x0 = it->second[chunk];
        detail::require(x0.shape() == s, "OracleBackbone: target chunk shape differs from the request");
        return x0;
    }

    Matrix<float> planted_map(const Latent& x, const Prompt& prompt, const TokenGrid& grid) const {
        const std::size_t P = prompt.tokens.size();
        Matrix<float> map(grid.tokens(), P, 1.0f / static_cast<float>(P));
        if (!cfg_.planted) return map;
        const auto& pl = *cfg_.planted;
        std::vector<bool> trig(P, false);
        std::size_t n_trig = 0;
        for (std::size_t p = 0; p < P; ++p)
            for (const auto& w : pl.trigger_words)
                if (prompt.tokens[p] == w && !trig[p]) trig[p] = true, ++n_trig;
        if (n_trig == 0 || n_trig == P) return map;
        const TokenMask region = pl.region(x, grid);
        detail::require(region.grid() == grid, "PlantedAttention: region grid mismatch");
        for (std::size_t q = 0; q < grid.tokens(); ++q) {
            const double sign = region[q] ? 1.0 : -1.0;
            double sum = 0.0;
            std::vector<double> w(P);
            for (std::size_t p = 0; p < P; ++p) sum += (w[p] = trig[p] ? 1.0 + sign * pl.surplus : 1.0);
            for (std::size_t p = 0; p < P; ++p) map(q, p) = static_cast<float>(w[p] / sum);
        }
        return map;
    }

    std::size_t channels_;
    OracleConfig cfg_;
    std::map<std::string, std::vector<Latent>> targets_;
};

}  // namespace streamedit
