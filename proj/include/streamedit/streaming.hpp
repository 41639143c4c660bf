// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "streamedit/attention.hpp"
#include "streamedit/backbone.hpp"
#include "streamedit/boosting.hpp"
#include "streamedit/bridge.hpp"
#include "streamedit/errors.hpp"
#include "streamedit/grounding.hpp"
#include "streamedit/guidance.hpp"
#include "streamedit/kv_cache.hpp"
#include "streamedit/noise.hpp"
#include "streamedit/sampling.hpp"

namespace streamedit {

struct SessionOptions {
    Schedule schedule = Schedule::uniform(15);
    BridgeConfig bridge;
    double omega = 4.0;
    bool boosting = true;
    bool guidance = true;
    CachePolicy policy = RollingPolicy{};
    std::size_t chunk_frames = 3;
    std::uint64_t seed = 0;
    std::string source_prompt;
    std::string target_prompt;
    std::string source_trigger;
    std::string target_trigger;
    // Number of leading cross-attention layers used for grounding; 0 means all.
    std::size_t grounding_layers = 0;
    // Keep the per-step soft masks in the step reports.
    bool keep_soft_masks = false;
};

struct StepReport {
    std::size_t step = 0;  // i, counting down from N to 1
    double t = 0.0;
    double blend = 0.0;    // r
    bool source_kv_injected = false;
    bool target_grounded = false;
    std::uint64_t noise_key = 0;
    float max_sog_correction = 0.0f;
    float max_observable_error = 0.0f;
    std::optional<Latent> soft_mask;
};

struct ChunkReport {
    std::size_t chunk_index = 0;
    std::size_t frames = 0;
    std::size_t nfe = 0;
    TokenMask source_mask;      // M^src from the clean source forward
    TokenMask step_target_mask; // M^tgt from the first step below t_inj (empty if none)
    TokenMask final_target_mask;// M^tgt from the clean target forward
    TokenMask committed_mask;   // M^src OR final M^tgt
    std::size_t mask_slot = 0;
    float max_sog_correction = 0.0f;
    std::size_t source_cache_frames = 0;
    std::size_t target_cache_frames = 0;
    double millis = 0.0;
    std::vector<StepReport> steps;
};

struct GroundedForward {
    TokenMask mask;
    ChunkKv kv;
};

namespace detail {

/// Collects head-averaged cross-attention maps of every layer.
class MapRecorder : public ForwardHooks {
public:
    bool wants_cross_attention_maps() const override { return true; }
    void cross_attention_map(std::size_t layer, const Matrix<float>& probs) override {
        if (maps.size() <= layer) maps.resize(layer + 1);
        maps[layer] = probs;
    }
    std::vector<Matrix<float>> maps;
};

/// Records the source branch's self-attention operands for the bridge.
class SourceRecorder : public ForwardHooks {
public:
    struct Site {
        BranchQkv<float> current;
        PrevKv<float> previous;
    };

    std::optional<SelfAttentionOverride> self_attention(const SelfAttentionSite& s) override {
        if (sites.size() <= s.layer) sites.resize(s.layer + 1);
        sites[s.layer] = Site{{s.q, s.k, s.v}, {s.k_ctx, s.v_ctx}};
        return std::nullopt;
    }
    std::vector<Site> sites;
};

/// Target-branch hooks of one denoising step: bridged self-attention, optional map
/// recording for grounding, and regional cross-attention boosting.
class TargetStepHooks : public MapRecorder {
public:
    TargetStepHooks(const SourceRecorder& src, const TokenMask& m_prev_ctx, const TokenMask& m_curr, double t, double r,
                    const BridgeConfig& cfg, bool record_maps, std::optional<WeightMap> boost)
        : src_(src), m_prev_(m_prev_ctx), m_curr_(m_curr), t_(t), r_(r), cfg_(cfg), record_maps_(record_maps),
          boost_(std::move(boost)) {}

    std::optional<SelfAttentionOverride> self_attention(const SelfAttentionSite& s) override {
        if (!cfg_.applies_to(s.layer)) return std::nullopt;
        ensure(s.layer < src_.sites.size(), "bridge: no recorded source operands for layer " + std::to_string(s.layer));
        const auto& rec = src_.sites[s.layer];
        ensure(rec.previous.k.rows() == s.k_ctx.rows(), "bridge: source and target caches are out of step");
        auto a = assemble_target_kv(rec.current, BranchQkv<float>{s.q, s.k, s.v}, rec.previous, PrevKv<float>{s.k_ctx, s.v_ctx},
                                    m_prev_, m_curr_, t_, r_, cfg_);
        return SelfAttentionOverride{std::move(a.q), std::move(a.k), std::move(a.v)};
    }

    bool wants_cross_attention_maps() const override { return record_maps_; }

    std::optional<Matrix<float>> cross_attention_output(const CrossAttentionSite& s, const Matrix<float>& plain) override {
        if (!boost_ || boost_->is_identity()) return std::nullopt;
        return regional_boost(s.q, s.k_text, s.v_text, plain, *boost_, s.heads);
    }

private:
    const SourceRecorder& src_;
    const TokenMask& m_prev_;
    const TokenMask& m_curr_;
    double t_;
    double r_;
    const BridgeConfig& cfg_;
    bool record_maps_;
    std::optional<WeightMap> boost_;
};

}  // namespace detail

/// One chunked autoregressive editing session over a fixed velocity model.
///
/// Per chunk: a clean source forward (grounding + source KV), N dual-branch steps
/// (source forward, bridged/boosted target forward, guidance, consistency update),
/// and a clean target forward (grounding + target KV). 2(N+1) forwards per chunk.
class EditSession {
public:
    EditSession(const VelocityModel& model, SessionOptions opts)
        : model_(model), opts_(std::move(opts)), src_cache_(opts_.policy, Branch::source),
          tgt_cache_(opts_.policy, Branch::target) {
        opts_.bridge.validate();
        detail::require(opts_.omega > 0.0, "EditSession: omega must be positive");
        detail::require(opts_.chunk_frames > 0, "EditSession: chunk size must be positive");
        src_prompt_ = model_.encode_prompt(opts_.source_prompt);
        tgt_prompt_ = model_.encode_prompt(opts_.target_prompt);
        src_triggers_ = TriggerSet::from_phrase(src_prompt_.tokens, tokenize(opts_.source_trigger));
        tgt_triggers_ = TriggerSet::from_phrase(tgt_prompt_.tokens, tokenize(opts_.target_trigger));
        src_triggers_.validate();
        tgt_triggers_.validate();
        const std::size_t n = opts_.grounding_layers == 0 ? model_.layers() : std::min(opts_.grounding_layers, model_.layers());
        ground_layers_.resize(n);
        std::iota(ground_layers_.begin(), ground_layers_.end(), std::size_t{0});
    }

    const SessionOptions& options() const noexcept { return opts_; }
    std::size_t nfe() const noexcept { return nfe_; }
    const MaskRegistry& registry() const noexcept { return registry_; }
    const KvCache& source_cache() const noexcept { return src_cache_; }
    const KvCache& target_cache() const noexcept { return tgt_cache_; }
    const std::vector<ChunkReport>& reports() const noexcept { return reports_; }
    const std::vector<Latent>& outputs() const noexcept { return outputs_; }
    bool has_visual_prompt() const noexcept { return visual_prompt_; }
    const std::vector<std::size_t>& grounding_layers() const noexcept { return ground_layers_; }

    /// One clean (t = 0) forward on `latent` for `branch`: grounding mask plus the chunk's KV. One NFE.
    GroundedForward clean_forward_and_ground(Branch branch, const Latent& latent) {
        detail::MapRecorder rec;
        auto res = forward(branch, latent, 0.0, &rec, nullptr);
        const auto& triggers = branch == Branch::source ? src_triggers_ : tgt_triggers_;
        return {ground(rec.maps, triggers, ground_layers_, model_.token_grid(latent.shape())), std::move(res.kv)};
    }

    /// Installs a first-frame pair (source frame, edited frame) as the initial previous context.
    /// Under a window-sink cache the frame fills every sink slot.
    void install_visual_prompt(const Latent& f_src, const Latent& f_tgt) {
        detail::require(f_src.size() > 0 && f_tgt.size() > 0, "visual prompt: both the source and the edited frame are required");
        detail::require(f_src.shape().frames == 1 && f_tgt.shape().frames == 1, "visual prompt: expected single frames");
        require_same_shape(f_src, f_tgt, "visual prompt");
        detail::require(outputs_.empty() && !visual_prompt_, "visual prompt must be installed before the first chunk");
        check_spatial(f_src.shape());

        auto src = clean_forward_and_ground(Branch::source, f_src);
        auto tgt = clean_forward_and_ground(Branch::target, f_tgt);

        std::size_t copies = 1;
        if (const auto* w = std::get_if<WindowSinkPolicy>(&opts_.policy)) copies = std::max<std::size_t>(1, w->sink_frames);
        auto repeat_mask = [copies](const TokenMask& m) { return concat_masks(std::vector<TokenMask>(copies, m)); };
        const std::size_t slot = registry_.commit(repeat_mask(src.mask), repeat_mask(tgt.mask));
        for (std::size_t i = 0; i < copies; ++i) {
            src_cache_.append(src.kv, 1, slot, i);
            tgt_cache_.append(tgt.kv, 1, slot, i);
        }
        visual_prompt_ = true;
    }

    /// Edits the next chunk of the source video and returns the edited clean chunk.
    Latent run_chunk(const Latent& source_chunk) {
        const auto start = std::chrono::steady_clock::now();
        const std::size_t c = outputs_.size();
        const std::size_t nfe_before = nfe_;
        detail::require(source_chunk.shape().frames > 0 && source_chunk.shape().frames <= opts_.chunk_frames,
                        "run_chunk: chunk has " + std::to_string(source_chunk.shape().frames) + " frames, limit is " +
                            std::to_string(opts_.chunk_frames));
        detail::require(source_chunk.all_finite(), "run_chunk: source chunk contains non-finite values");
        check_spatial(source_chunk.shape());

        Latent x0 = source_chunk;
        x0.set_chunk_index(c);
        const TokenGrid grid = model_.token_grid(x0.shape());
        const Schedule& sched = opts_.schedule;

        ChunkReport report;
        report.chunk_index = c;
        report.frames = x0.shape().frames;

        // Previous-context mask, aligned frame by frame with the cached tokens.
        const TokenMask m_prev_ctx = context_mask();

        auto src_clean = clean_forward_and_ground(Branch::source, x0);
        registry_.begin_chunk(src_clean.mask);
        report.source_mask = src_clean.mask;

        Latent z = x0;
        bool target_grounded = false;
        for (std::size_t i = sched.steps(); i >= 1; --i) {
            StepReport step;
            step.step = i;
            step.t = sched.t(i);
            step.blend = blend_ratio(sched.t(i - 1), opts_.bridge.rho);
            step.noise_key = noise_key(opts_.seed, c, i);
            const Latent eps = gaussian_latent(x0.shape(), step.noise_key, c);
            const BranchInputs in = dual_branch_inputs({x0, z, eps, step.t});

            detail::SourceRecorder src_rec;
            const Latent v_src = forward(Branch::source, in.source, step.t, &src_rec, &eps).velocity;

            const bool ground_now = !target_grounded && step.t < opts_.bridge.t_inj;
            std::optional<WeightMap> boost;
            if (opts_.boosting) {
                const TokenMask& bm = step.t >= opts_.bridge.t_inj ? registry_.m_src_curr() : registry_.m_curr();
                boost = build_weight_map(tgt_triggers_, bm, opts_.omega);
            }
            const TokenMask m_curr = registry_.m_curr();
            detail::TargetStepHooks hooks(src_rec, m_prev_ctx, m_curr, step.t, step.blend, opts_.bridge, ground_now, std::move(boost));
            const Latent v_tgt = forward(Branch::target, in.target, step.t, &hooks, &eps).velocity;
            step.source_kv_injected = step.t < opts_.bridge.t_inj;

            if (ground_now) {
                report.step_target_mask = ground(hooks.maps, tgt_triggers_, ground_layers_, grid);
                registry_.update_target(report.step_target_mask);
                target_grounded = true;
                step.target_grounded = true;
            }

            Latent v = v_tgt;
            if (opts_.guidance) {
                GuidanceTerms g = source_oriented_guidance(v_tgt, v_src, x0, eps);
                step.max_sog_correction = max_abs(g.correction);
                step.max_observable_error = max_abs(g.g);
                if (opts_.keep_soft_masks) step.soft_mask = std::move(g.soft_mask);
                v = std::move(g.velocity);
            }
            report.max_sog_correction = std::max(report.max_sog_correction, step.max_sog_correction);
            z = predict_clean(in.target, v, step.t);
            report.steps.push_back(std::move(step));
        }

        auto tgt_clean = clean_forward_and_ground(Branch::target, z);
        report.final_target_mask = tgt_clean.mask;
        report.mask_slot = registry_.commit(src_clean.mask, tgt_clean.mask);
        report.committed_mask = registry_.m_prev().back();
        src_cache_.append(src_clean.kv, x0.shape().frames, report.mask_slot);
        tgt_cache_.append(tgt_clean.kv, x0.shape().frames, report.mask_slot);

        report.nfe = nfe_ - nfe_before;
        detail::ensure(report.nfe == 2 * (sched.steps() + 1), "run_chunk: forward count " + std::to_string(report.nfe) +
                                                                   " differs from 2(N+1)");
        detail::ensure(src_cache_.stored_frames() == tgt_cache_.stored_frames(), "run_chunk: branch caches diverged");
        report.source_cache_frames = src_cache_.stored_frames();
        report.target_cache_frames = tgt_cache_.stored_frames();
        report.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

        z.set_chunk_index(c);
        outputs_.push_back(z);
        reports_.push_back(std::move(report));
        return z;
    }

    /// Edits every chunk in order. A failure is rethrown as ChunkFailure nesting the cause.
    Latent run(const std::vector<Latent>& chunks) {
        detail::require(!chunks.empty(), "run: no chunks");
        for (const auto& ch : chunks) {
            const std::size_t c = outputs_.size();
            try {
                run_chunk(ch);
            } catch (const std::exception& e) {
                std::throw_with_nested(ChunkFailure(c, e.what()));
            }
        }
        return concat_frames(outputs_);
    }

    Latent run_video(const Latent& video) { return run(split_chunks(video, opts_.chunk_frames)); }

    /// M_prev restricted to the frames currently held in the caches.
    TokenMask context_mask() const {
        std::vector<TokenMask> parts;
        for (const auto& tag : tgt_cache_.context_tags()) {
            detail::ensure(tag.mask_slot < registry_.m_prev().size(), "context_mask: cache frame refers to an unknown mask slot");
            parts.push_back(registry_.m_prev()[tag.mask_slot].frame(tag.frame_in_slot));
        }
        return parts.empty() ? TokenMask() : concat_masks(parts);
    }

private:
    ForwardResult forward(Branch branch, const Latent& x, double t, ForwardHooks* hooks, const Latent* noise) {
        const KvCache& cache = branch == Branch::source ? src_cache_ : tgt_cache_;
        const ContextView ctx = cache.view(branch);
        const Prompt& prompt = branch == Branch::source ? src_prompt_ : tgt_prompt_;
        ++nfe_;
        ForwardResult r = model_.forward(ForwardRequest{x, t, prompt, ctx, hooks, noise});
        detail::ensure(r.velocity.shape() == x.shape(), "backbone returned a velocity of the wrong shape");
        return r;
    }

    void check_spatial(const LatentShape& s) {
        if (!spatial_) {
            spatial_ = s;
            return;
        }
        detail::require(s.height == spatial_->height && s.width == spatial_->width && s.channels == spatial_->channels,
                        "latent spatial dims " + to_string(s) + " differ from the session's " + to_string(*spatial_));
    }

    const VelocityModel& model_;
    SessionOptions opts_;
    Prompt src_prompt_, tgt_prompt_;
    TriggerSet src_triggers_, tgt_triggers_;
    std::vector<std::size_t> ground_layers_;
    KvCache src_cache_, tgt_cache_;
    MaskRegistry registry_;
    std::vector<Latent> outputs_;
    std::vector<ChunkReport> reports_;
    std::optional<LatentShape> spatial_;
    std::size_t nfe_ = 0;
    bool visual_prompt_ = false;
};

}  // namespace streamedit
