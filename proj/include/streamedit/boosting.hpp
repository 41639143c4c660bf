// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "streamedit/attention.hpp"
#include "streamedit/errors.hpp"
#include "streamedit/grounding.hpp"
#include "streamedit/tensor.hpp"

namespace streamedit {

/// Boost weights w[p,q] = omega if p is a trigger and q is masked, else 1.
/// Stored row-constant: one token-weight vector plus the query mask.
class WeightMap {
public:
    WeightMap(std::vector<double> token_weights, TokenMask query_mask, double omega)
        : token_weights_(std::move(token_weights)), query_mask_(std::move(query_mask)), omega_(omega) {}

    double at(std::size_t p, std::size_t q) const { return query_mask_[q] ? token_weights_.at(p) : 1.0; }
    double omega() const noexcept { return omega_; }
    std::size_t prompt_tokens() const noexcept { return token_weights_.size(); }
    std::size_t queries() const noexcept { return query_mask_.size(); }
    const std::vector<double>& token_weights() const noexcept { return token_weights_; }
    const TokenMask& query_mask() const noexcept { return query_mask_; }

    /// True when every entry is 1, i.e. boosting cannot change anything.
    bool is_identity() const {
        if (omega_ == 1.0 || query_mask_.none()) return true;
        for (double w : token_weights_)
            if (w != 1.0) return false;
        return true;
    }

    Matrix<double> dense() const {
        Matrix<double> w(queries(), prompt_tokens());
        for (std::size_t q = 0; q < queries(); ++q)
            for (std::size_t p = 0; p < prompt_tokens(); ++p) w(q, p) = at(p, q);
        return w;
    }

private:
    std::vector<double> token_weights_;
    TokenMask query_mask_;
    double omega_;
};

inline WeightMap build_weight_map(const TriggerSet& triggers, const TokenMask& mask, double omega) {
    detail::require(omega > 0.0, "build_weight_map: omega must be positive");
    std::vector<double> w(triggers.prompt_size(), 1.0);
    for (auto p : triggers.trigger_indices()) w[p] = omega;
    return WeightMap(std::move(w), mask, omega);
}

/// Boosted attention probabilities from explicit scores (rows = queries, cols = prompt tokens):
/// A[q,p] = exp(S + ln w) / sum_j exp(S_j + ln w_j). Reference form; needs the score matrix.
template <typename T>
Matrix<T> boost_direct(const Matrix<T>& scores, const WeightMap& w) {
    detail::require(scores.rows() == w.queries() && scores.cols() == w.prompt_tokens(), "boost_direct: shape mismatch");
    Matrix<T> shifted(scores.rows(), scores.cols());
    for (std::size_t q = 0; q < scores.rows(); ++q)
        for (std::size_t p = 0; p < scores.cols(); ++p)
            shifted(q, p) = scores(q, p) + static_cast<T>(std::log(w.at(p, q)));
    return softmax_rows(shifted);
}

/// Boosted attention output using only an output-returning attention primitive:
/// num = Attn(Q, K, w*V), den = Attn(Q, K, w), result = num / den.
/// `token_weights` holds one positive weight per key token, broadcast over value channels.
template <typename T>
Matrix<T> boost_two_pass(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, std::span<const T> token_weights,
                         double scale) {
    detail::require(token_weights.size() == k.rows(), "boost_two_pass: one weight per key token required");
    for (T w : token_weights) detail::require(w > T{0}, "boost_two_pass: weights must be positive");
    Matrix<T> wv = v;
    Matrix<T> wcol(k.rows(), 1);
    for (std::size_t p = 0; p < k.rows(); ++p) {
        for (auto& x : wv.row(p)) x *= token_weights[p];
        wcol(p, 0) = token_weights[p];
    }
    const Matrix<T> num = softmax_attention(q, k, wv, scale);
    const Matrix<T> den = softmax_attention(q, k, wcol, scale);
    Matrix<T> out = num;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const T d = den(i, 0);
        if (!(d > T{0}) || !std::isfinite(d))
            throw NumericalFailure("boost_two_pass: non-positive denominator at query " + std::to_string(i));
        for (auto& x : out.row(i)) x /= d;
    }
    return out;
}

/// Multi-head two-pass boosting; the same token weights apply to every head.
template <typename T>
Matrix<T> boost_two_pass_multi_head(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                    std::span<const T> token_weights, std::size_t heads) {
    detail::require(heads > 0 && q.cols() % heads == 0 && v.cols() % heads == 0, "boost_two_pass: bad head split");
    const std::size_t dq = q.cols() / heads;
    const std::size_t dv = v.cols() / heads;
    Matrix<T> out(q.rows(), v.cols());
    for (std::size_t h = 0; h < heads; ++h)
        out.set_cols(h * dv, boost_two_pass(q.slice_cols(h * dq, dq), k.slice_cols(h * dq, dq), v.slice_cols(h * dv, dv),
                                            token_weights, default_attention_scale(dq)));
    return out;
}

/// Row q from `boosted` where mask(q) = 1, otherwise from `plain`.
template <typename T>
Matrix<T> splice_regional(const Matrix<T>& boosted, const Matrix<T>& plain, const TokenMask& mask) {
    detail::require(boosted.rows() == plain.rows() && boosted.cols() == plain.cols(), "splice_regional: shape mismatch");
    detail::require(mask.size() == plain.rows(), "splice_regional: mask does not match query count");
    Matrix<T> out = plain;
    for (std::size_t q = 0; q < out.rows(); ++q)
        if (mask[q]) std::copy(boosted.row(q).begin(), boosted.row(q).end(), out.row(q).begin());
    return out;
}

/// Regionally boosted cross-attention output. Returns `plain_out` untouched when
/// the weight map is all ones.
template <typename T>
Matrix<T> regional_boost(const Matrix<T>& q, const Matrix<T>& k_text, const Matrix<T>& v_text,
                         const Matrix<T>& plain_out, const WeightMap& w, std::size_t heads) {
    detail::require(w.queries() == q.rows() && w.prompt_tokens() == k_text.rows(), "regional_boost: weight map mismatch");
    if (w.is_identity()) return plain_out;
    std::vector<T> tw(w.token_weights().begin(), w.token_weights().end());
    const Matrix<T> boosted = boost_two_pass_multi_head<T>(q, k_text, v_text, tw, heads);
    return splice_regional(boosted, plain_out, w.query_mask());
}

}  // namespace streamedit
