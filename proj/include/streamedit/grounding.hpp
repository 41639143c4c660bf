// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "streamedit/attention.hpp"
#include "streamedit/errors.hpp"
#include "streamedit/tensor.hpp"

namespace streamedit {

/// Prompt tokens P and the trigger subset T used for grounding and boosting.
class TriggerSet {
public:
    TriggerSet() = default;
    TriggerSet(std::vector<std::string> prompt_tokens, std::vector<std::size_t> trigger_indices)
        : tokens_(std::move(prompt_tokens)), triggers_(std::move(trigger_indices)) {
        std::sort(triggers_.begin(), triggers_.end());
        triggers_.erase(std::unique(triggers_.begin(), triggers_.end()), triggers_.end());
        for (auto i : triggers_) detail::require(i < tokens_.size(), "TriggerSet: trigger index out of range");
        is_trigger_.assign(tokens_.size(), false);
        for (auto i : triggers_) is_trigger_[i] = true;
    }

    /// Locates the first contiguous occurrence of `phrase` inside `prompt_tokens`.
    static TriggerSet from_phrase(std::vector<std::string> prompt_tokens, const std::vector<std::string>& phrase) {
        detail::require(!phrase.empty(), "TriggerSet: trigger phrase is empty");
        auto it = std::search(prompt_tokens.begin(), prompt_tokens.end(), phrase.begin(), phrase.end());
        if (it == prompt_tokens.end()) {
            std::string p;
            for (const auto& w : phrase) p += (p.empty() ? "" : " ") + w;
            throw InvalidArgument("TriggerSet: trigger phrase '" + p + "' does not occur in the prompt");
        }
        const auto first = static_cast<std::size_t>(it - prompt_tokens.begin());
        std::vector<std::size_t> idx(phrase.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = first + i;
        return TriggerSet(std::move(prompt_tokens), std::move(idx));
    }

    const std::vector<std::string>& prompt_tokens() const noexcept { return tokens_; }
    const std::vector<std::size_t>& trigger_indices() const noexcept { return triggers_; }
    std::size_t prompt_size() const noexcept { return tokens_.size(); }
    bool is_trigger(std::size_t p) const { return is_trigger_.at(p); }

    /// Throws unless T is nonempty and a strict subset of P.
    void validate() const {
        detail::require(!triggers_.empty(), "trigger set is empty");
        detail::require(triggers_.size() < tokens_.size(), "trigger set must be a strict subset of the prompt");
    }

private:
    std::vector<std::string> tokens_;
    std::vector<std::size_t> triggers_;
    std::vector<bool> is_trigger_;
};

/// Per-query foreground/background attention difference of one layer:
/// mean attention on trigger tokens minus mean attention on the remaining tokens.
template <typename T>
std::vector<double> trigger_attention_difference(const Matrix<T>& map, const TriggerSet& triggers) {
    detail::require(map.cols() == triggers.prompt_size(), "grounding: map has " + std::to_string(map.cols()) +
                                                             " prompt columns, prompt has " +
                                                             std::to_string(triggers.prompt_size()) + " tokens");
    const double n_t = static_cast<double>(triggers.trigger_indices().size());
    const double n_bg = static_cast<double>(triggers.prompt_size()) - n_t;
    std::vector<double> diff(map.rows());
    for (std::size_t q = 0; q < map.rows(); ++q) {
        double fg = 0.0, bg = 0.0;
        auto row = map.row(q);
        for (std::size_t p = 0; p < row.size(); ++p) (triggers.is_trigger(p) ? fg : bg) += static_cast<double>(row[p]);
        diff[q] = fg / n_t - bg / n_bg;
    }
    return diff;
}

/// Grounding mask: average the per-layer differences over `layers`, then threshold
/// with H(x) = [x > 0]. Exact ties map to background.
///
/// `maps[l]` is the head-averaged cross-attention of layer l, one row per visual query.
template <typename T>
TokenMask ground(const std::vector<Matrix<T>>& maps, const TriggerSet& triggers, const std::vector<std::size_t>& layers,
                 const TokenGrid& grid) {
    triggers.validate();
    detail::require(!layers.empty(), "grounding: layer range is empty");
    std::vector<double> acc(grid.tokens(), 0.0);
    for (auto l : layers) {
        detail::require(l < maps.size(), "grounding: no attention map for layer " + std::to_string(l));
        detail::require(maps[l].rows() == grid.tokens(), "grounding: map rows do not match the token grid");
        const auto d = trigger_attention_difference(maps[l], triggers);
        for (std::size_t q = 0; q < acc.size(); ++q) acc[q] += d[q];
    }
    TokenMask mask(grid);
    const double n = static_cast<double>(layers.size());
    for (std::size_t q = 0; q < acc.size(); ++q) mask.set(q, acc[q] / n > 0.0);
    return mask;
}

inline TokenMask union_mask(const TokenMask& a, const TokenMask& b) {
    detail::require(a.grid() == b.grid(), "union_mask: resolution mismatch");
    std::vector<std::uint8_t> bits(a.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = a.bits()[i] | b.bits()[i];
    return TokenMask(a.grid(), std::move(bits));
}

/// Current-chunk masks and the append-only history of committed chunk masks.
class MaskRegistry {
public:
    const TokenMask& m_curr() const noexcept { return m_curr_; }
    const TokenMask& m_src_curr() const noexcept { return m_src_curr_; }
    const std::vector<TokenMask>& m_prev() const noexcept { return m_prev_; }

    /// Starts a chunk: M_curr and M^src_curr both become the source mask.
    void begin_chunk(const TokenMask& m_src) {
        m_src_curr_ = m_src;
        m_curr_ = m_src;
    }

    /// M_curr <- M^src_curr OR M^tgt.
    void update_target(const TokenMask& m_tgt) { m_curr_ = union_mask(m_src_curr_, m_tgt); }

    /// Appends M^src OR M^tgt to the history and clears the current-chunk masks.
    /// Returns the history slot of the committed mask.
    std::size_t commit(const TokenMask& m_src, const TokenMask& m_tgt_final) {
        m_prev_.push_back(union_mask(m_src, m_tgt_final));
        m_curr_ = TokenMask();
        m_src_curr_ = TokenMask();
        return m_prev_.size() - 1;
    }

private:
    TokenMask m_curr_;
    TokenMask m_src_curr_;
    std::vector<TokenMask> m_prev_;
};

inline std::size_t commit_chunk_masks(MaskRegistry& registry, const TokenMask& m_src, const TokenMask& m_tgt_final) {
    return registry.commit(m_src, m_tgt_final);
}

}  // namespace streamedit
