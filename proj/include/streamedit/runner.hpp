// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamedit/backbone.hpp"
#include "streamedit/config.hpp"
#include "streamedit/errors.hpp"
#include "streamedit/latent_io.hpp"
#include "streamedit/metrics.hpp"
#include "streamedit/noise.hpp"
#include "streamedit/streaming.hpp"

namespace streamedit {

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

struct FixtureSpec {
    std::size_t frames = 12;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 4;
    std::uint64_t seed = 7;
    // Sign of the object's channel signature; an "edited" fixture flips it.
    float object_sign = 1.0f;
};

/// Smooth textured background plus a square object drifting one position per frame.
inline Latent make_fixture(const FixtureSpec& spec) {
    detail::require(spec.frames > 0 && spec.height > 0 && spec.width > 0 && spec.channels > 0, "make_fixture: dims must be positive");
    Latent x({spec.frames, spec.height, spec.width, spec.channels});
    const std::size_t side = std::max<std::size_t>(2, spec.height / 4);
    const std::uint64_t key = combine_key(spec.seed, fnv1a("fixture"));
    std::uint64_t counter = 0;
    for (std::size_t f = 0; f < spec.frames; ++f) {
        const std::size_t top = spec.height / 2 - std::min(spec.height / 2, side / 2);
        const std::size_t left = (spec.width / 4 + f) % std::max<std::size_t>(1, spec.width - side + 1);
        for (std::size_t h = 0; h < spec.height; ++h)
            for (std::size_t w = 0; w < spec.width; ++w)
                for (std::size_t c = 0; c < spec.channels; ++c) {
                    const double dc = static_cast<double>(c);
                    double v = 0.5 * std::sin(0.35 * static_cast<double>(h) + 0.9 * dc) * std::cos(0.27 * static_cast<double>(w) - 0.4 * dc);
                    const bool inside = h >= top && h < top + side && w >= left && w < left + side;
                    if (inside) v = spec.object_sign * (c % 2 == 0 ? 1.5 : -1.0);
                    v += 0.05 * standard_normal(key, counter++);
                    x.at(f, h, w, c) = static_cast<float>(v);
                }
    }
    return x;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunResult {
    RunConfig config;  // effective configuration (echoed in the manifest)
    Latent source;
    Latent edited;
    std::vector<ChunkReport> chunks;
    std::size_t total_nfe = 0;
    std::size_t expected_nfe = 0;
    float max_abs_error_vs_source = 0.0f;
    float max_sog_correction = 0.0f;
    double millis = 0.0;
    nlohmann::json manifest;
};

/// Configuration actually executed for `c`: identity checks edit the source prompt into itself
/// with omega = 1 on the analytic oracle.
inline RunConfig effective_config(RunConfig c) {
    if (c.mode == RunMode::identity_check) {
        c.backbone = "oracle";
        c.target_prompt = c.source_prompt;
        c.target_trigger = c.source_trigger;
        c.omega = 1.0;
    }
    validate_config(c);
    return c;
}

inline SessionOptions session_options(const RunConfig& c) {
    SessionOptions o;
    o.schedule = Schedule::uniform(c.steps);
    o.bridge.rho = c.rho;
    o.bridge.t_inj = c.t_inj;
    o.bridge.source_kv_mask_complement = c.kv_mask_complement;
    o.omega = c.resolved_omega();
    o.boosting = c.boosting;
    o.guidance = c.sog;
    o.policy = c.cache_policy();
    o.chunk_frames = c.chunk_size;
    o.seed = c.seed;
    o.source_prompt = c.source_prompt;
    o.target_prompt = c.target_prompt;
    o.source_trigger = c.source_trigger;
    o.target_trigger = c.target_trigger;
    o.grounding_layers = c.grounding_layers;
    o.keep_soft_masks = c.soft_masks;
    return o;
}

namespace detail {

inline std::string chunk_file(const char* prefix, std::size_t c, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu%s", prefix, c, ext);
    return buf;
}

inline nlohmann::json shape_json(const LatentShape& s) { return {s.frames, s.height, s.width, s.channels}; }

inline Latent first_frame(const Latent& x) {
    require(x.shape().frames >= 1, "visual prompt latent has no frames");
    return x.slice_frames(0, 1);
}

}  // namespace detail

/// Edits `source` according to `config` with an explicit model. Writes nothing.
inline RunResult run_edit(const RunConfig& config, const VelocityModel& model, const Latent& source,
                          const Latent* vp_src = nullptr, const Latent* vp_tgt = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    RunResult r;
    r.config = config;
    r.source = source;
    CountingModel counted(model);
    EditSession session(counted, session_options(config));
    if (vp_src || vp_tgt) {
        detail::require(vp_src && vp_tgt, "visual prompt: both the source and the edited frame are required");
        session.install_visual_prompt(detail::first_frame(*vp_src), detail::first_frame(*vp_tgt));
    }
    r.edited = session.run_video(source);
    r.chunks = session.reports();
    r.total_nfe = session.nfe();
    detail::ensure(counted.count() == r.total_nfe, "forward counter disagrees with the session's NFE count");
    r.expected_nfe = r.chunks.size() * 2 * (config.steps + 1) + (session.has_visual_prompt() ? 2 : 0);
    detail::ensure(r.total_nfe == r.expected_nfe, "total NFE differs from C * 2(N+1) (+2 with a visual prompt)");
    r.max_abs_error_vs_source = max_abs_diff(r.edited, source);
    for (const auto& ch : r.chunks) r.max_sog_correction = std::max(r.max_sog_correction, ch.max_sog_correction);
    r.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

/// Builds the configured backbone for latents with `channels` channels.
inline std::unique_ptr<VelocityModel> make_backbone(const RunConfig& c, const std::vector<Latent>& source_chunks, std::size_t channels) {
    if (c.backbone == "oracle") {
        auto m = std::make_unique<OracleBackbone>(channels);
        // Both prompts flow toward the source: the oracle reconstructs.
        m->set_target(c.source_prompt, source_chunks);
        m->set_target(c.target_prompt, source_chunks);
        return m;
    }
    ToyBackboneConfig tc;
    tc.channels = channels;
    tc.seed = c.model_seed;
    return std::make_unique<ToyBackbone>(tc);
}

inline nlohmann::json build_manifest(const RunResult& r, const std::vector<std::string>& mask_paths,
                                     const std::vector<std::vector<std::string>>& soft_mask_paths) {
    nlohmann::json m;
    m["format"] = "streamedit-run-manifest";
    m["version"] = 1;
    m["config"] = config_to_json(r.config);
    m["effective_omega"] = r.config.resolved_omega();
    m["source_shape"] = detail::shape_json(r.source.shape());
    m["output_shape"] = detail::shape_json(r.edited.shape());
    m["output"] = "edited.sgve";
    m["total_nfe"] = r.total_nfe;
    m["expected_nfe"] = r.expected_nfe;
    m["visual_prompt"] = r.config.has_visual_prompt();
    m["max_abs_error_vs_source"] = r.max_abs_error_vs_source;
    m["max_sog_correction"] = r.max_sog_correction;
    nlohmann::json chunks = nlohmann::json::array();
    for (std::size_t i = 0; i < r.chunks.size(); ++i) {
        const auto& c = r.chunks[i];
        nlohmann::json j;
        j["index"] = c.chunk_index;
        j["frames"] = c.frames;
        j["nfe"] = c.nfe;
        j["mask"] = i < mask_paths.size() ? mask_paths[i] : "";
        j["mask_slot"] = c.mask_slot;
        j["source_mask_tokens"] = c.source_mask.count();
        j["target_mask_tokens"] = c.final_target_mask.count();
        j["committed_mask_tokens"] = c.committed_mask.count();
        j["max_sog_correction"] = c.max_sog_correction;
        j["cache_frames"] = c.target_cache_frames;
        j["millis"] = c.millis;
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& s : c.steps)
            steps.push_back({{"step", s.step}, {"t", s.t}, {"blend", s.blend}, {"noise_key", s.noise_key},
                             {"source_kv_injected", s.source_kv_injected}, {"target_grounded", s.target_grounded}});
        j["steps"] = std::move(steps);
        if (i < soft_mask_paths.size() && !soft_mask_paths[i].empty()) j["soft_masks"] = soft_mask_paths[i];
        chunks.push_back(std::move(j));
    }
    m["chunks"] = std::move(chunks);
    const double frames = static_cast<double>(std::max<std::size_t>(1, r.edited.shape().frames));
    m["timing"] = {{"total_ms", r.millis}, {"ms_per_frame", r.millis / frames}};
    return m;
}

/// Writes edited.sgve, masks/, optional soft_masks/ and manifest.json under `dir`.
inline void write_run_outputs(RunResult& r, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "masks");
    write_latent(dir / "edited.sgve", r.edited);
    std::vector<std::string> mask_paths;
    std::vector<std::vector<std::string>> soft_paths;
    for (const auto& c : r.chunks) {
        const std::string rel = "masks/" + detail::chunk_file("chunk", c.chunk_index, ".sgvm");
        write_mask(dir / rel, c.committed_mask, c.chunk_index);
        mask_paths.push_back(rel);
        std::vector<std::string> soft;
        for (const auto& s : c.steps) {
            if (!s.soft_mask) continue;
            const std::string srel = "soft_masks/" + detail::chunk_file("chunk", c.chunk_index, "") + "_step_" +
                                     std::to_string(s.step) + ".sgve";
            write_latent(dir / srel, *s.soft_mask);
            soft.push_back(srel);
        }
        soft_paths.push_back(std::move(soft));
    }
    r.manifest = build_manifest(r, mask_paths, soft_paths);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
    out << r.manifest.dump(2) << '\n';
}

/// Loads inputs named by `config`, runs it and writes outputs when `out` is set.
inline RunResult run_from_config(const RunConfig& config) {
    const RunConfig c = effective_config(config);
    if (c.src.empty()) throw UsageError("no source latent given (--src)");
    const Latent source = read_latent(c.src);
    std::optional<Latent> vp_src, vp_tgt;
    if (c.has_visual_prompt()) {
        vp_src = read_latent(c.visual_prompt_src);
        vp_tgt = read_latent(c.visual_prompt_tgt);
    }
    const auto model = make_backbone(c, split_chunks(source, c.chunk_size), source.shape().channels);
    RunResult r = run_edit(c, *model, source, vp_src ? &*vp_src : nullptr, vp_tgt ? &*vp_tgt : nullptr);
    if (!c.out.empty()) write_run_outputs(r, c.out);
    else r.manifest = build_manifest(r, {}, {});
    return r;
}

/// Background (metric domain) of a run: positions outside every committed edit mask,
/// at latent resolution. Masks are read from `dir`/masks in chunk order.
inline TokenMask background_from_run(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / "masks"))
        if (e.path().extension() == ".sgvm") files.push_back(e.path());
    if (files.empty()) throw FormatError("no mask files under " + (dir / "masks").string());
    std::sort(files.begin(), files.end());
    std::vector<TokenMask> parts;
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto a = read_mask(files[i]);
        if (a.chunk_index != i) throw FormatError(files[i].string() + ": expected chunk " + std::to_string(i));
        parts.push_back(std::move(a.mask));
    }
    return upsample_token_mask(concat_masks(parts).complement(), kPatch);
}

}  // namespace streamedit
