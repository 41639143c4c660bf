// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "streamedit/tensor.hpp"

namespace streamedit {

/// Exact velocity of the straight interpolant through x0 and eps: eps - x0.
inline Latent gt_velocity(const Latent& x0_src, const Latent& eps) {
    require_same_shape(x0_src, eps, "gt_velocity");
    Latent out(x0_src.shape(), 0.0f, x0_src.chunk_index());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = eps.data()[i] - x0_src.data()[i];
    return out;
}

/// Abs-Mean-Norm soft mask, shape (frames, height, width, 1).
///
/// Channel mean of |x|, min-max normalized jointly over every position of the chunk.
/// A constant mean map (including all zeros) yields an all-zero mask.
inline Latent amn(const Latent& x) {
    const auto& s = x.shape();
    LatentShape ms{s.frames, s.height, s.width, 1};
    const std::size_t positions = ms.numel();
    std::vector<double> m(positions, 0.0);
    for (std::size_t i = 0; i < positions; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < s.channels; ++c) acc += std::abs(static_cast<double>(x.data()[i * s.channels + c]));
        m[i] = s.channels ? acc / static_cast<double>(s.channels) : 0.0;
    }
    Latent out(ms, 0.0f, x.chunk_index());
    if (m.empty()) return out;
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    const double mn = *lo, mx = *hi;
    if (!(mx > mn)) return out;
    for (std::size_t i = 0; i < positions; ++i) out.data()[i] = static_cast<float>((m[i] - mn) / (mx - mn));
    return out;
}

/// Intermediate terms of one source-oriented guidance evaluation.
struct GuidanceTerms {
    Latent v_gt;        // eps - x0_src
    Latent g;           // observable error v_gt - v_src
    Latent soft_mask;   // amn(v_tgt - v_src), (frames, height, width, 1)
    Latent correction;  // soft_mask (broadcast over channels) * g
    Latent velocity;    // v_tgt + correction
};

inline GuidanceTerms source_oriented_guidance(const Latent& v_tgt, const Latent& v_src, const Latent& x0_src,
                                              const Latent& eps) {
    require_same_shape(v_tgt, v_src, "apply_sog");
    require_same_shape(v_tgt, x0_src, "apply_sog");
    require_same_shape(v_tgt, eps, "apply_sog");
    GuidanceTerms t;
    t.v_gt = gt_velocity(x0_src, eps);
    t.g = Latent(v_tgt.shape(), 0.0f, v_tgt.chunk_index());
    Latent diff(v_tgt.shape(), 0.0f, v_tgt.chunk_index());
    for (std::size_t i = 0; i < v_tgt.size(); ++i) {
        t.g.data()[i] = t.v_gt.data()[i] - v_src.data()[i];
        diff.data()[i] = v_tgt.data()[i] - v_src.data()[i];
    }
    t.soft_mask = amn(diff);
    t.correction = Latent(v_tgt.shape(), 0.0f, v_tgt.chunk_index());
    t.velocity = v_tgt;
    const std::size_t ch = v_tgt.shape().channels;
    for (std::size_t i = 0; i < v_tgt.size(); ++i) {
        const float m = t.soft_mask.data()[i / ch];
        if (m == 0.0f) continue;  // keeps v_tgt bitwise where the mask vanishes
        t.correction.data()[i] = m * t.g.data()[i];
        t.velocity.data()[i] = v_tgt.data()[i] + t.correction.data()[i];
    }
    return t;
}

/// Corrected target velocity v_tgt + amn(v_tgt - v_src) * ((eps - x0_src) - v_src).
inline Latent apply_sog(const Latent& v_tgt, const Latent& v_src, const Latent& x0_src, const Latent& eps) {
    return source_oriented_guidance(v_tgt, v_src, x0_src, eps).velocity;
}

inline float max_abs(const Latent& x) {
    float m = 0.0f;
    for (float v : x.data()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace streamedit
