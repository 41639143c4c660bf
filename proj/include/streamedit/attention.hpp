// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "streamedit/errors.hpp"
#include "streamedit/tensor.hpp"

namespace streamedit {

/// Visual-token lattice a mask indexes: (frames, height, width) after patching.
struct TokenGrid {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t tokens() const noexcept { return frames * height * width; }
    std::size_t tokens_per_frame() const noexcept { return height * width; }
    friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

/// Binary mask over visual tokens.
class TokenMask {
public:
    TokenMask() = default;
    explicit TokenMask(TokenGrid grid, bool value = false) : grid_(grid), bits_(grid.tokens(), value ? 1 : 0) {}
    TokenMask(TokenGrid grid, std::vector<std::uint8_t> bits) : grid_(grid), bits_(std::move(bits)) {
        detail::require(bits_.size() == grid_.tokens(), "TokenMask: bit count does not match token grid");
        for (auto& b : bits_) detail::require(b <= 1, "TokenMask: values must be 0 or 1");
    }

    static TokenMask zeros(TokenGrid g) { return TokenMask(g, false); }
    static TokenMask ones(TokenGrid g) { return TokenMask(g, true); }

    const TokenGrid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return bits_.size(); }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set(std::size_t i, bool v) { bits_.at(i) = v ? 1 : 0; }
    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    std::size_t count() const noexcept { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }
    bool none() const noexcept { return count() == 0; }

    /// Bits of a single frame of the grid.
    TokenMask frame(std::size_t f) const {
        detail::require(f < grid_.frames, "TokenMask::frame out of range");
        const auto n = grid_.tokens_per_frame();
        auto b = bits_.begin() + static_cast<std::ptrdiff_t>(f * n);
        return TokenMask({1, grid_.height, grid_.width}, std::vector<std::uint8_t>(b, b + static_cast<std::ptrdiff_t>(n)));
    }

    TokenMask complement() const {
        TokenMask out = *this;
        for (auto& b : out.bits_) b = 1 - b;
        return out;
    }

    friend bool operator==(const TokenMask&, const TokenMask&) = default;

private:
    TokenGrid grid_;
    std::vector<std::uint8_t> bits_;
};

/// Concatenates masks along the frame axis. All parts must share the spatial grid.
inline TokenMask concat_masks(const std::vector<TokenMask>& parts) {
    if (parts.empty()) return {};
    TokenGrid g = parts.front().grid();
    g.frames = 0;
    std::vector<std::uint8_t> bits;
    for (const auto& p : parts) {
        detail::require(p.grid().height == g.height && p.grid().width == g.width, "concat_masks: spatial grid mismatch");
        g.frames += p.grid().frames;
        bits.insert(bits.end(), p.bits().begin(), p.bits().end());
    }
    return TokenMask(g, std::move(bits));
}

inline double default_attention_scale(std::size_t head_dim) { return 1.0 / std::sqrt(static_cast<double>(head_dim)); }

/// scale * Q K^T, one row per query.
template <typename T>
Matrix<T> attention_scores(const Matrix<T>& q, const Matrix<T>& k, double scale) {
    detail::require(q.cols() == k.cols(), "attention_scores: query/key dims differ");
    Matrix<T> s(q.rows(), k.rows());
    const T sc = static_cast<T>(scale);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        auto qi = q.row(i);
        for (std::size_t j = 0; j < k.rows(); ++j) {
            auto kj = k.row(j);
            T acc = 0;
            for (std::size_t d = 0; d < q.cols(); ++d) acc += qi[d] * kj[d];
            s(i, j) = sc * acc;
        }
    }
    return s;
}

/// Row-wise numerically stable softmax.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& scores) {
    Matrix<T> p(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto s = scores.row(i);
        auto o = p.row(i);
        const T mx = s.empty() ? T{} : *std::max_element(s.begin(), s.end());
        T sum = 0;
        for (std::size_t j = 0; j < s.size(); ++j) sum += (o[j] = std::exp(s[j] - mx));
        for (auto& v : o) v /= sum;
    }
    return p;
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    detail::require(a.cols() == b.rows(), "matmul: inner dims differ");
    Matrix<T> out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto oi = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) oi[j] += aik * bk[j];
        }
    }
    return out;
}

/// Optional diagnostics from the reference attention path.
template <typename T>
struct AttentionDebug {
    std::vector<T> row_sums;
};

/// Reference single-head attention: out[q] = sum_p softmax_p(scale * Q[q].K[p]) V[p].
template <typename T>
Matrix<T> softmax_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, double scale,
                            AttentionDebug<T>* debug = nullptr) {
    detail::require(k.rows() > 0, "softmax_attention: empty key set");
    detail::require(k.rows() == v.rows(), "softmax_attention: K and V disagree on token count");
    detail::require(scale > 0.0, "softmax_attention: scale must be positive");
    const Matrix<T> p = softmax_rows(attention_scores(q, k, scale));
    if (debug) {
        debug->row_sums.assign(p.rows(), T{});
        for (std::size_t i = 0; i < p.rows(); ++i)
            for (auto x : p.row(i)) debug->row_sums[i] += x;
    }
    return matmul(p, v);
}

/// Splits columns into `heads` equal slices, attends per head, and concatenates.
template <typename T>
Matrix<T> multi_head_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, std::size_t heads) {
    detail::require(heads > 0 && q.cols() % heads == 0 && v.cols() % heads == 0, "multi_head_attention: bad head split");
    const std::size_t dq = q.cols() / heads;
    const std::size_t dv = v.cols() / heads;
    Matrix<T> out(q.rows(), v.cols());
    for (std::size_t h = 0; h < heads; ++h) {
        out.set_cols(h * dv, softmax_attention(q.slice_cols(h * dq, dq), k.slice_cols(h * dq, dq), v.slice_cols(h * dv, dv),
                                               default_attention_scale(dq)));
    }
    return out;
}

/// Head-averaged attention probabilities (queries x keys).
template <typename T>
Matrix<T> head_averaged_probabilities(const Matrix<T>& q, const Matrix<T>& k, std::size_t heads) {
    detail::require(heads > 0 && q.cols() % heads == 0, "head_averaged_probabilities: bad head split");
    const std::size_t dq = q.cols() / heads;
    Matrix<T> avg(q.rows(), k.rows());
    for (std::size_t h = 0; h < heads; ++h) {
        const auto p = softmax_rows(attention_scores(q.slice_cols(h * dq, dq), k.slice_cols(h * dq, dq), default_attention_scale(dq)));
        for (std::size_t i = 0; i < avg.size(); ++i) avg.data()[i] += p.data()[i];
    }
    for (auto& x : avg.data()) x /= static_cast<T>(heads);
    return avg;
}

template <typename T>
struct TokenSelection {
    Matrix<T> rows;
    std::vector<std::size_t> indices;
};

/// Rows whose mask bit is set, in order, together with their original indices.
template <typename T>
TokenSelection<T> select_masked_tokens(const Matrix<T>& tokens, const TokenMask& mask) {
    detail::require(tokens.rows() == mask.size(), "select_masked_tokens: token count " + std::to_string(tokens.rows()) +
                                                      " does not match mask size " + std::to_string(mask.size()));
    TokenSelection<T> sel;
    sel.rows = Matrix<T>(0, tokens.cols());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        sel.indices.push_back(i);
        sel.rows.append_rows(tokens.slice_rows(i, 1));
    }
    return sel;
}

}  // namespace streamedit
