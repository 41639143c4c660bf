// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamedit/errors.hpp"
#include "streamedit/kv_cache.hpp"

namespace streamedit {

enum class RunMode { edit, identity_check, benchmark };

inline const char* mode_name(RunMode m) {
    switch (m) {
        case RunMode::edit: return "edit";
        case RunMode::identity_check: return "identity-check";
        case RunMode::benchmark: return "benchmark";
    }
    return "edit";
}

/// Everything needed to reproduce one run.
struct RunConfig {
    std::size_t steps = 15;
    double rho = 2.0;
    // Unset means 4 for a rolling cache without a visual prompt, otherwise 2.
    std::optional<double> omega;
    double t_inj = 0.5;
    std::string policy = "rolling";
    std::size_t chunk_size = 3;
    std::uint64_t seed = 0;
    std::uint64_t model_seed = 2026;
    std::string backbone = "toy";
    std::string source_prompt = "a cat sitting on the grass";
    std::string target_prompt = "a dog sitting on the grass";
    std::string source_trigger = "cat";
    std::string target_trigger = "dog";
    std::string src;
    std::string out;
    std::string visual_prompt_src;
    std::string visual_prompt_tgt;
    RunMode mode = RunMode::edit;
    bool boosting = true;
    bool sog = true;
    bool kv_mask_complement = false;
    std::size_t grounding_layers = 0;
    bool soft_masks = false;

    bool has_visual_prompt() const { return !visual_prompt_src.empty() || !visual_prompt_tgt.empty(); }

    double resolved_omega() const {
        if (omega) return *omega;
        return policy == "rolling" && !has_visual_prompt() ? 4.0 : 2.0;
    }

    CachePolicy cache_policy() const { return policy == "rolling" ? CachePolicy{RollingPolicy{}} : CachePolicy{WindowSinkPolicy{}}; }
};

/// Every accepted configuration key, in manifest order.
inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "steps",          "rho",           "omega",          "t_inj",          "policy",
        "chunk_size",     "seed",          "model_seed",     "backbone",       "source_prompt",
        "target_prompt",  "source_trigger", "target_trigger", "src",           "out",
        "visual_prompt_src", "visual_prompt_tgt", "mode",    "boosting",       "sog",
        "kv_mask_complement", "grounding_layers", "soft_masks"};
    return keys;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
    T out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw UsageError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw UsageError("key '" + key + "': expected a number, got '" + v + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("key '" + key + "': expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Sets one key from its textual value. Unknown keys and malformed values are usage errors.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "steps") c.steps = parse_integer<std::size_t>(key, value);
    else if (key == "rho") c.rho = parse_real(key, value);
    else if (key == "omega") c.omega = parse_real(key, value);
    else if (key == "t_inj") c.t_inj = parse_real(key, value);
    else if (key == "policy") c.policy = value;
    else if (key == "chunk_size") c.chunk_size = parse_integer<std::size_t>(key, value);
    else if (key == "seed") c.seed = parse_integer<std::uint64_t>(key, value);
    else if (key == "model_seed") c.model_seed = parse_integer<std::uint64_t>(key, value);
    else if (key == "backbone") c.backbone = value;
    else if (key == "source_prompt") c.source_prompt = value;
    else if (key == "target_prompt") c.target_prompt = value;
    else if (key == "source_trigger") c.source_trigger = value;
    else if (key == "target_trigger") c.target_trigger = value;
    else if (key == "src") c.src = value;
    else if (key == "out") c.out = value;
    else if (key == "visual_prompt_src") c.visual_prompt_src = value;
    else if (key == "visual_prompt_tgt") c.visual_prompt_tgt = value;
    else if (key == "mode") {
        if (value == "edit") c.mode = RunMode::edit;
        else if (value == "identity-check") c.mode = RunMode::identity_check;
        else if (value == "benchmark") c.mode = RunMode::benchmark;
        else throw UsageError("key 'mode': expected edit, identity-check or benchmark, got '" + value + "'");
    } else if (key == "boosting") c.boosting = parse_bool(key, value);
    else if (key == "sog") c.sog = parse_bool(key, value);
    else if (key == "kv_mask_complement") c.kv_mask_complement = parse_bool(key, value);
    else if (key == "grounding_layers") c.grounding_layers = parse_integer<std::size_t>(key, value);
    else if (key == "soft_masks") c.soft_masks = parse_bool(key, value);
    else throw UsageError("unknown configuration key '" + key + "'");
}

/// Rejects values no run can use.
inline void validate_config(const RunConfig& c) {
    auto bad = [](const std::string& m) { throw UsageError(m); };
    if (c.steps == 0) bad("steps must be at least 1");
    if (!(c.rho >= 0.0)) bad("rho must be non-negative");
    if (c.omega && !(*c.omega > 0.0)) bad("omega must be positive");
    if (!(c.t_inj >= 0.0 && c.t_inj <= 1.0)) bad("t_inj must lie in [0, 1]");
    if (c.policy != "rolling" && c.policy != "window-sink") bad("policy must be rolling or window-sink, got '" + c.policy + "'");
    if (c.chunk_size == 0) bad("chunk_size must be at least 1");
    if (c.backbone != "toy" && c.backbone != "oracle") bad("backbone must be toy or oracle, got '" + c.backbone + "'");
    if (c.visual_prompt_src.empty() != c.visual_prompt_tgt.empty())
        bad("visual prompting needs both visual_prompt_src and visual_prompt_tgt");
}

/// Applies key=value lines. Blank lines and lines starting with '#' are skipped.
/// A key may appear once per file.
inline void apply_config_text(RunConfig& c, std::string_view text, const std::string& origin = "config") {
    std::istringstream in{std::string(text)};
    std::string line;
    std::set<std::string> seen;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const std::string t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto where = origin + ":" + std::to_string(n);
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw UsageError(where + ": expected key = value, got '" + t + "'");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw UsageError(where + ": missing key");
        if (!seen.insert(key).second) throw UsageError(where + ": key '" + key + "' set more than once");
        try {
            set_config_value(c, key, value);
        } catch (const UsageError& e) {
            throw UsageError(where + ": " + e.what());
        }
    }
}

/// Applies a JSON object of key/value pairs. A run manifest is accepted too: its "config" member is used.
inline void apply_config_json(RunConfig& c, const nlohmann::json& j) {
    const nlohmann::json& obj = j.contains("config") && j["config"].is_object() ? j["config"] : j;
    if (!obj.is_object()) throw UsageError("JSON configuration must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (value.is_null()) {
            if (key == "omega") {
                c.omega.reset();
                continue;
            }
            set_config_value(c, key, "");
            continue;
        }
        std::string text;
        if (value.is_string()) text = value.get<std::string>();
        else if (value.is_boolean()) text = value.get<bool>() ? "true" : "false";
        else if (value.is_number_unsigned()) text = std::to_string(value.get<std::uint64_t>());
        else if (value.is_number_integer()) text = std::to_string(value.get<std::int64_t>());
        else if (value.is_number_float()) {
            std::ostringstream os;
            os.precision(17);
            os << value.get<double>();
            text = os.str();
        } else throw UsageError("key '" + key + "': unsupported JSON value");
        set_config_value(c, key, text);
    }
}

/// Reads a configuration file: JSON when the first non-blank character is '{', key=value lines otherwise.
inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open configuration file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw UsageError(path.string() + ": malformed JSON: " + e.what());
        }
        apply_config_json(c, j);
    } else {
        apply_config_text(c, text, path.string());
    }
}

/// Defaults, then the optional file, then explicit overrides (key to textual value).
inline RunConfig parse_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    RunConfig c;
    if (file) apply_config_file(c, *file);
    for (const auto& [k, v] : overrides) set_config_value(c, k, v);
    validate_config(c);
    return c;
}

/// Full configuration echo; feeding it back through apply_config_json reproduces `c`.
inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["steps"] = c.steps;
    j["rho"] = c.rho;
    j["omega"] = c.omega ? nlohmann::json(*c.omega) : nlohmann::json(nullptr);
    j["t_inj"] = c.t_inj;
    j["policy"] = c.policy;
    j["chunk_size"] = c.chunk_size;
    j["seed"] = c.seed;
    j["model_seed"] = c.model_seed;
    j["backbone"] = c.backbone;
    j["source_prompt"] = c.source_prompt;
    j["target_prompt"] = c.target_prompt;
    j["source_trigger"] = c.source_trigger;
    j["target_trigger"] = c.target_trigger;
    j["src"] = c.src;
    j["out"] = c.out;
    j["visual_prompt_src"] = c.visual_prompt_src;
    j["visual_prompt_tgt"] = c.visual_prompt_tgt;
    j["mode"] = mode_name(c.mode);
    j["boosting"] = c.boosting;
    j["sog"] = c.sog;
    j["kv_mask_complement"] = c.kv_mask_complement;
    j["grounding_layers"] = c.grounding_layers;
    j["soft_masks"] = c.soft_masks;
    return j;
}

}  // namespace streamedit
