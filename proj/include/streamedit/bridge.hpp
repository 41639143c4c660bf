// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "streamedit/attention.hpp"
#include "streamedit/errors.hpp"
#include "streamedit/tensor.hpp"

namespace streamedit {

struct BridgeConfig {
    double rho = 2.0;    // blending exponent
    double t_inj = 0.5;  // source KV is appended only when t < t_inj
    // Select the complement of M_curr for the injected source block.
    bool source_kv_mask_complement = false;
    // Self-attention layers the bridge acts on; nullopt means every layer.
    std::optional<std::vector<std::size_t>> layers;

    void validate() const {
        detail::require(rho >= 0.0, "BridgeConfig: rho must be non-negative");
        detail::require(t_inj > 0.0 && t_inj < 1.0, "BridgeConfig: t_inj must lie in (0,1)");
    }

    bool applies_to(std::size_t layer) const {
        return !layers || std::find(layers->begin(), layers->end(), layer) != layers->end();
    }
};

/// Target share r = 1 - t_next^rho of the blended queries/keys, where t_next is the
/// next (smaller) timestep. r = 1 at t_next = 0 for every rho.
inline double blend_ratio(double t_next, double rho) {
    detail::require(t_next >= 0.0 && t_next <= 1.0, "blend_ratio: t_next must lie in [0,1]");
    if (t_next == 0.0) return 1.0;
    return std::clamp(1.0 - std::pow(t_next, rho), 0.0, 1.0);
}

/// r * a_tgt + (1 - r) * a_src, elementwise.
template <typename T>
Matrix<T> blend_tensors(const Matrix<T>& a_tgt, const Matrix<T>& a_src, double r) {
    detail::require(a_tgt.rows() == a_src.rows() && a_tgt.cols() == a_src.cols(), "blend_tensors: shape mismatch");
    detail::require(r >= 0.0 && r <= 1.0, "blend_tensors: r must lie in [0,1]");
    const T rt = static_cast<T>(r);
    const T rs = static_cast<T>(1.0 - r);
    Matrix<T> out(a_tgt.rows(), a_tgt.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = rt * a_tgt.data()[i] + rs * a_src.data()[i];
    return out;
}

/// Masked tokens are blended; unmasked tokens keep the target keys.
template <typename T>
Matrix<T> blend_prev_keys(const Matrix<T>& k_tgt_prev, const Matrix<T>& k_src_prev, const TokenMask& m_prev, double r) {
    detail::require(k_tgt_prev.rows() == k_src_prev.rows() && k_tgt_prev.cols() == k_src_prev.cols(),
                    "blend_prev_keys: source/target previous keys differ in shape");
    detail::require(m_prev.size() == k_tgt_prev.rows(), "blend_prev_keys: mask covers " + std::to_string(m_prev.size()) +
                                                            " tokens, keys have " + std::to_string(k_tgt_prev.rows()));
    Matrix<T> out = k_tgt_prev;
    const T rt = static_cast<T>(r);
    const T rs = static_cast<T>(1.0 - r);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        if (!m_prev[i]) continue;
        auto o = out.row(i);
        auto s = k_src_prev.row(i);
        auto g = k_tgt_prev.row(i);
        for (std::size_t d = 0; d < o.size(); ++d) o[d] = rt * g[d] + rs * s[d];
    }
    return out;
}

/// Query/key/value tensors of the current chunk in one branch.
template <typename T>
struct BranchQkv {
    Matrix<T> q, k, v;
};

/// Cached keys/values of previous chunks in one branch.
template <typename T>
struct PrevKv {
    Matrix<T> k, v;
};

/// Target-branch self-attention operands. Key/value layout is
/// [current | previous | injected source], block sizes recorded below.
template <typename T>
struct AssembledAttention {
    Matrix<T> q, k, v;
    std::size_t current_tokens = 0;
    std::size_t previous_tokens = 0;
    std::size_t injected_tokens = 0;
    std::vector<std::size_t> injected_indices;  // positions within the current chunk
};

/// Builds the bridged target self-attention. `r` is blend_ratio(t_next, rho), `t` the
/// current timestep that gates source KV injection. V is never blended.
template <typename T>
AssembledAttention<T> assemble_target_kv(const BranchQkv<T>& src, const BranchQkv<T>& tgt, const PrevKv<T>& src_prev,
                                         const PrevKv<T>& tgt_prev, const TokenMask& m_prev, const TokenMask& m_curr,
                                         double t, double r, const BridgeConfig& config) {
    detail::require(src.q.rows() == tgt.q.rows() && src.k.rows() == tgt.k.rows() && src.v.rows() == tgt.v.rows(),
                    "assemble_target_kv: source/target current token counts differ");
    detail::require(tgt_prev.k.rows() == tgt_prev.v.rows(), "assemble_target_kv: previous K/V token counts differ");
    detail::require(t >= 0.0 && t <= 1.0, "assemble_target_kv: t must lie in [0,1]");

    AssembledAttention<T> out;
    out.q = blend_tensors(tgt.q, src.q, r);
    out.k = blend_tensors(tgt.k, src.k, r);
    out.v = tgt.v;
    out.current_tokens = tgt.k.rows();

    if (tgt_prev.k.rows() > 0) {
        out.k.append_rows(blend_prev_keys(tgt_prev.k, src_prev.k, m_prev, r));
        out.v.append_rows(tgt_prev.v);
    }
    out.previous_tokens = tgt_prev.k.rows();

    if (t < config.t_inj) {
        detail::require(m_curr.size() == src.k.rows(), "assemble_target_kv: M_curr does not cover the current chunk");
        const TokenMask sel_mask = config.source_kv_mask_complement ? m_curr.complement() : m_curr;
        auto ks = select_masked_tokens(src.k, sel_mask);
        auto vs = select_masked_tokens(src.v, sel_mask);
        out.k.append_rows(ks.rows);
        out.v.append_rows(vs.rows);
        out.injected_tokens = ks.indices.size();
        out.injected_indices = std::move(ks.indices);
    }
    return out;
}

}  // namespace streamedit
