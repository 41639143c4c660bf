// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 2 usage, 3 format, 4 invariant violation.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "streamedit/exit_codes.hpp"
#include "streamedit/runner.hpp"

namespace se = streamedit;

namespace {

using se::kExitFormat;
using se::kExitInvariant;
using se::kExitOk;
using se::kExitUsage;

constexpr double kIdentityTolerance = 1e-4;

/// Flags shared by the subcommands that run the editor. Only flags given on the command
/// line become overrides, so a --config file is never silently reset to defaults.
struct RunFlags {
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::map<std::string, bool> switches;
    std::map<std::string, CLI::Option*> switch_options;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        options[key] = app->add_option(flag, values[key], help);
    }
    void add_switch(CLI::App* app, const std::string& flag, const std::string& key, bool initial, const std::string& help) {
        switches[key] = initial;
        switch_options[key] = app->add_flag(flag, switches[key], help);
    }

    std::vector<std::pair<std::string, std::string>> overrides() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [key, opt] : options)
            if (opt->count() > 0) out.emplace_back(key, values.at(key));
        for (const auto& [key, opt] : switch_options)
            if (opt->count() > 0) out.emplace_back(key, switches.at(key) ? "true" : "false");
        return out;
    }

    se::RunConfig resolve(std::vector<std::pair<std::string, std::string>> extra = {}) const {
        auto ov = overrides();
        ov.insert(ov.end(), extra.begin(), extra.end());
        return se::parse_config(config.empty() ? std::nullopt : std::optional<std::filesystem::path>(config), ov);
    }
};

void add_run_flags(CLI::App* app, RunFlags& f) {
    const se::RunConfig defaults;
    app->add_option("--config", f.config, "key=value or JSON config file; a run manifest.json replays that run");
    f.add(app, "--steps", "steps", "sampling steps N");
    f.add(app, "--rho", "rho", "blending exponent");
    f.add(app, "--omega", "omega", "trigger attention weight (default 4 rolling, 2 window-sink or visual prompt)");
    f.add(app, "--t-inj", "t_inj", "source KV injection threshold in (0,1)");
    f.options["policy"] = app->add_option("--policy", f.values["policy"], "KV cache policy")->check(CLI::IsMember({"rolling", "window-sink"}));
    f.add(app, "--seed", "seed", "noise seed");
    f.add(app, "--src", "src", "source latent (.sgve)");
    f.add(app, "--out", "out", "output directory");
    f.add(app, "--visual-prompt-src", "visual_prompt_src", "first source frame latent (.sgve)");
    f.add(app, "--visual-prompt-tgt", "visual_prompt_tgt", "edited first frame latent (.sgve)");
    f.add(app, "--chunk-size", "chunk_size", "frames per chunk");
    f.add(app, "--backbone", "backbone", "toy or oracle");
    f.add(app, "--model-seed", "model_seed", "toy backbone weight seed");
    f.add(app, "--source-prompt", "source_prompt", "source prompt");
    f.add(app, "--target-prompt", "target_prompt", "target prompt");
    f.add(app, "--source-trigger", "source_trigger", "source trigger phrase");
    f.add(app, "--target-trigger", "target_trigger", "target trigger phrase");
    f.add(app, "--grounding-layers", "grounding_layers", "cross-attention layers averaged for grounding (0 = all)");
    f.add_switch(app, "--soft-masks,!--no-soft-masks", "soft_masks", defaults.soft_masks, "write per-step guidance soft masks");
    f.add_switch(app, "--boosting,!--no-boosting", "boosting", defaults.boosting, "regional attention boosting");
    f.add_switch(app, "--sog,!--no-sog", "sog", defaults.sog, "source-oriented guidance");
    f.add_switch(app, "--kv-mask-complement,!--no-kv-mask-complement", "kv_mask_complement", defaults.kv_mask_complement,
                 "inject source tokens outside M_curr instead of inside");
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

nlohmann::json run_summary(const se::RunResult& r) {
    return {{"mode", se::mode_name(r.config.mode)},
            {"output", r.config.out.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.config.out)},
            {"chunks", r.chunks.size()},
            {"frames", r.edited.shape().frames},
            {"total_nfe", r.total_nfe},
            {"expected_nfe", r.expected_nfe},
            {"effective_omega", r.config.resolved_omega()},
            {"max_abs_error_vs_source", r.max_abs_error_vs_source},
            {"max_sog_correction", r.max_sog_correction},
            {"total_ms", r.millis}};
}

int cmd_edit(const RunFlags& f) {
    const auto r = se::run_from_config(f.resolve({{"mode", "edit"}}));
    print_json(run_summary(r));
    return kExitOk;
}

int cmd_identity_check(const RunFlags& f) {
    const auto r = se::run_from_config(f.resolve({{"mode", "identity-check"}}));
    auto j = run_summary(r);
    const bool ok = static_cast<double>(r.max_abs_error_vs_source) <= kIdentityTolerance && r.max_sog_correction == 0.0f;
    j["tolerance"] = kIdentityTolerance;
    j["pass"] = ok;
    print_json(j);
    if (!ok) std::cerr << "identity-check: source not reproduced within tolerance\n";
    return ok ? kExitOk : kExitInvariant;
}

int cmd_benchmark(const RunFlags& f) {
    const auto r = se::run_from_config(f.resolve({{"mode", "benchmark"}}));
    auto j = run_summary(r);
    nlohmann::json per_chunk = nlohmann::json::array();
    for (const auto& c : r.chunks) per_chunk.push_back({{"index", c.chunk_index}, {"frames", c.frames}, {"ms", c.millis}});
    j["per_chunk"] = std::move(per_chunk);
    j["ms_per_frame"] = r.millis / static_cast<double>(std::max<std::size_t>(1, r.edited.shape().frames));
    print_json(j);
    return kExitOk;
}

struct MetricsFlags {
    std::string src, out, edited;
};

int cmd_metrics(const MetricsFlags& f) {
    const std::filesystem::path run_dir(f.out);
    const auto src = se::read_latent(f.src);
    const auto edited = se::read_latent(f.edited.empty() ? run_dir / "edited.sgve" : std::filesystem::path(f.edited));
    if (src.shape() != edited.shape())
        throw se::FormatError("source shape " + se::to_string(src.shape()) + " differs from edited " + se::to_string(edited.shape()));
    const auto bg = se::background_from_run(run_dir);
    const auto m = se::masked_metrics(src, edited, bg);
    print_json({{"domain", "background"},
                {"positions", m.positions},
                {"mse", m.mse},
                {"psnr_db", m.psnr},
                {"ssim", m.ssim}});
    return kExitOk;
}

struct FixtureFlags {
    std::string out;
    se::FixtureSpec spec;
    bool edited = false;
};

int cmd_make_fixture(const FixtureFlags& f) {
    auto spec = f.spec;
    if (f.edited) spec.object_sign = -spec.object_sign;
    const auto x = se::make_fixture(spec);
    se::write_latent(f.out, x);
    print_json({{"output", f.out}, {"shape", {x.shape().frames, x.shape().height, x.shape().width, x.shape().channels}}});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming training-free video latent editor"};
    app.require_subcommand(1);

    RunFlags edit_flags, identity_flags, bench_flags;
    auto* edit = app.add_subcommand("edit", "edit a source latent video chunk by chunk");
    add_run_flags(edit, edit_flags);
    auto* identity = app.add_subcommand("identity-check", "edit the source into itself on the oracle backbone; exit 4 on mismatch");
    add_run_flags(identity, identity_flags);
    auto* bench = app.add_subcommand("benchmark", "edit and report per-chunk wall time");
    add_run_flags(bench, bench_flags);

    MetricsFlags metrics_flags;
    auto* metrics = app.add_subcommand("metrics", "background-preservation metrics of an edit run");
    metrics->add_option("--src", metrics_flags.src, "source latent (.sgve)")->required();
    metrics->add_option("--out", metrics_flags.out, "run output directory holding masks/ and edited.sgve")->required();
    metrics->add_option("--edited", metrics_flags.edited, "edited latent to score instead of <out>/edited.sgve");

    FixtureFlags fixture_flags;
    auto* fixture = app.add_subcommand("make-fixture", "write a synthetic source latent");
    fixture->add_option("--out", fixture_flags.out, "output latent path (.sgve)")->required();
    fixture->add_option("--frames", fixture_flags.spec.frames, "frames")->check(CLI::PositiveNumber);
    fixture->add_option("--height", fixture_flags.spec.height, "latent height")->check(CLI::PositiveNumber);
    fixture->add_option("--width", fixture_flags.spec.width, "latent width")->check(CLI::PositiveNumber);
    fixture->add_option("--channels", fixture_flags.spec.channels, "latent channels")->check(CLI::PositiveNumber);
    fixture->add_option("--seed", fixture_flags.spec.seed, "texture seed");
    fixture->add_flag("--edited", fixture_flags.edited, "flip the object's channel signature");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*edit) return cmd_edit(edit_flags);
        if (*identity) return cmd_identity_check(identity_flags);
        if (*bench) return cmd_benchmark(bench_flags);
        if (*metrics) return cmd_metrics(metrics_flags);
        if (*fixture) return cmd_make_fixture(fixture_flags);
    } catch (...) {
        return se::exit_code_for(std::current_exception(), std::cerr);
    }
    return kExitUsage;
}
