// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "streamedit/attention.hpp"
#include "streamedit/errors.hpp"
#include "streamedit/tensor.hpp"

namespace streamedit {

/// PSNR reported for a zero mean squared error.
inline constexpr double kPsnrCapDb = 100.0;
inline constexpr std::size_t kSsimWindow = 7;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

struct MaskedMetrics {
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::size_t positions = 0;  // masked (frame, h, w) positions
};

/// Latent-resolution mask from a token mask whose tokens cover `patch` x `patch` latent positions.
inline TokenMask upsample_token_mask(const TokenMask& m, std::size_t patch) {
    detail::require(patch > 0, "upsample_token_mask: patch must be positive");
    const TokenGrid g = m.grid();
    TokenMask out({g.frames, g.height * patch, g.width * patch});
    for (std::size_t f = 0; f < g.frames; ++f)
        for (std::size_t h = 0; h < g.height * patch; ++h)
            for (std::size_t w = 0; w < g.width * patch; ++w) {
                const std::size_t src = (f * g.height + h / patch) * g.width + w / patch;
                out.set((f * g.height * patch + h) * g.width * patch + w, m[src]);
            }
    return out;
}

/// Metrics over the positions where `background` is 1, every channel included.
///
/// PSNR uses the source (first argument) as reference: its dynamic range is the max minus
/// min of `src` over the masked positions, or 1 when that range is 0.
/// SSIM is evaluated per frame and per channel with a 7x7 window clipped at the borders,
/// centred on each masked position, and averaged.
inline MaskedMetrics masked_metrics(const Latent& src, const Latent& out, const TokenMask& background) {
    require_same_shape(src, out, "masked_metrics");
    const auto& s = src.shape();
    const TokenGrid g = background.grid();
    detail::require(g.frames == s.frames && g.height == s.height && g.width == s.width,
                    "masked_metrics: mask grid does not match the latent's frames x height x width");
    MaskedMetrics r;
    r.positions = background.count();
    if (r.positions == 0 || s.channels == 0) throw UndefinedMetric("masked_metrics: background mask is empty");

    double sq = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t p = 0; p < background.size(); ++p) {
        if (!background[p]) continue;
        for (std::size_t c = 0; c < s.channels; ++c) {
            const double a = src.data()[p * s.channels + c], b = out.data()[p * s.channels + c];
            sq += (a - b) * (a - b);
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
    }
    const double n = static_cast<double>(r.positions * s.channels);
    r.mse = sq / n;
    const double range = hi > lo ? hi - lo : 1.0;
    r.psnr = r.mse == 0.0 ? kPsnrCapDb : std::min(kPsnrCapDb, 10.0 * std::log10(range * range / r.mse));

    const double c1 = (kSsimK1 * range) * (kSsimK1 * range);
    const double c2 = (kSsimK2 * range) * (kSsimK2 * range);
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kSsimWindow / 2);
    const auto H = static_cast<std::ptrdiff_t>(s.height), W = static_cast<std::ptrdiff_t>(s.width);
    double ssim_sum = 0.0;
    for (std::size_t f = 0; f < s.frames; ++f)
        for (std::ptrdiff_t h = 0; h < H; ++h)
            for (std::ptrdiff_t w = 0; w < W; ++w) {
                if (!background[(f * s.height + static_cast<std::size_t>(h)) * s.width + static_cast<std::size_t>(w)]) continue;
                const std::ptrdiff_t h0 = std::max<std::ptrdiff_t>(0, h - half), h1 = std::min(H - 1, h + half);
                const std::ptrdiff_t w0 = std::max<std::ptrdiff_t>(0, w - half), w1 = std::min(W - 1, w + half);
                const double cnt = static_cast<double>((h1 - h0 + 1) * (w1 - w0 + 1));
                for (std::size_t c = 0; c < s.channels; ++c) {
                    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                    for (std::ptrdiff_t y = h0; y <= h1; ++y)
                        for (std::ptrdiff_t x = w0; x <= w1; ++x) {
                            const double a = src.at(f, static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
                            const double b = out.at(f, static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
                            sx += a;
                            sy += b;
                            sxx += a * a;
                            syy += b * b;
                            sxy += a * b;
                        }
                    const double mx = sx / cnt, my = sy / cnt;
                    const double vx = sxx / cnt - mx * mx, vy = syy / cnt - my * my;
                    const double cxy = sxy / cnt - mx * my;
                    ssim_sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                }
            }
    r.ssim = ssim_sum / n;
    return r;
}

/// Metrics over every position.
inline MaskedMetrics full_metrics(const Latent& src, const Latent& out) {
    const auto& s = src.shape();
    return masked_metrics(src, out, TokenMask::ones({s.frames, s.height, s.width}));
}

}  // namespace streamedit
