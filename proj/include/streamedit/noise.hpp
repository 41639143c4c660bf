// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "streamedit/tensor.hpp"

namespace streamedit {

// Stateless counter-based generator: every sample is a pure function of (key, counter),
// so the same key always reproduces the same tensor regardless of call order.

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t combine_key(std::uint64_t a, std::uint64_t b) noexcept {
    return mix64(a ^ (mix64(b) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Uniform in the open interval (0, 1).
inline double uniform01(std::uint64_t key, std::uint64_t counter) noexcept {
    const std::uint64_t bits = mix64(combine_key(key, counter)) >> 11;  // 53 bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Standard normal sample via Box-Muller on two independent counters.
inline double standard_normal(std::uint64_t key, std::uint64_t counter) noexcept {
    const double u1 = uniform01(key, 2 * counter);
    const double u2 = uniform01(key, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Key for the shared per-step noise of one chunk.
constexpr std::uint64_t noise_key(std::uint64_t session_seed, std::uint64_t chunk_index, std::uint64_t step_index) noexcept {
    return combine_key(combine_key(session_seed, chunk_index), step_index);
}

inline Latent gaussian_latent(const LatentShape& shape, std::uint64_t key, std::size_t chunk_index = 0) {
    Latent out(shape, 0.0f, chunk_index);
    auto v = out.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(standard_normal(key, i));
    return out;
}

template <typename T>
Matrix<T> gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t key, double stddev = 1.0) {
    Matrix<T> out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = static_cast<T>(stddev * standard_normal(key, i));
    return out;
}

}  // namespace streamedit
