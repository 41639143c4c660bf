// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "streamedit/attention.hpp"
#include "streamedit/errors.hpp"
#include "streamedit/tensor.hpp"

namespace streamedit {

// Latent file layout (all integers little-endian):
//   0  char[4]  "SGVE"
//   4  u16      version (1)
//   6  u32[4]   frames, height, width, channels
//   22 u16      dtype tag (1 = float32 little-endian)
//   24 body     row-major float32, product(dims) * 4 bytes
//
// Mask file layout:
//   0  char[4]  "SGVM"
//   4  u16      version (1)
//   6  u32[3]   frames, height, width (token grid)
//   18 u32      chunk index
//   22 body     ceil(tokens / 8) bytes, bit i of byte j is token 8j + i

inline constexpr std::array<char, 4> kLatentMagic{'S', 'G', 'V', 'E'};
inline constexpr std::array<char, 4> kMaskMagic{'S', 'G', 'V', 'M'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint16_t kDtypeFloat32LE = 1;
inline constexpr std::size_t kLatentHeaderBytes = 24;
inline constexpr std::size_t kMaskHeaderBytes = 22;
// Refuse bodies above 16 GiB; anything larger is a corrupt header in practice.
inline constexpr std::uint64_t kMaxBodyBytes = std::uint64_t{1} << 34;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument(std::string(what) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_latent(const Latent& x) {
    static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
    std::vector<std::uint8_t> out;
    out.reserve(kLatentHeaderBytes + x.size() * 4);
    out.insert(out.end(), kLatentMagic.begin(), kLatentMagic.end());
    detail::put_u16(out, kFormatVersion);
    const auto& s = x.shape();
    for (auto d : {s.frames, s.height, s.width, s.channels}) detail::put_u32(out, detail::checked_u32(d, "latent dim"));
    detail::put_u16(out, kDtypeFloat32LE);
    for (float v : x.data()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        detail::put_u32(out, bits);
    }
    return out;
}

inline Latent decode_latent(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kLatentHeaderBytes) throw FormatError("latent file: truncated header (" + std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), kLatentMagic.data(), 4) != 0) throw FormatError("latent file: bad magic");
    const auto version = detail::get_u16(bytes.data() + 4);
    if (version != kFormatVersion) throw FormatError("latent file: unsupported version " + std::to_string(version));
    std::array<std::uint64_t, 4> dims{};
    for (std::size_t i = 0; i < 4; ++i) dims[i] = detail::get_u32(bytes.data() + 6 + 4 * i);
    const auto dtype = detail::get_u16(bytes.data() + 22);
    if (dtype != kDtypeFloat32LE) throw FormatError("latent file: unsupported dtype tag " + std::to_string(dtype));

    std::uint64_t body = 4;
    for (auto d : dims) {
        if (d != 0 && body > kMaxBodyBytes / d) throw FormatError("latent file: dims overflow");
        body *= d;
    }
    if (body > kMaxBodyBytes) throw FormatError("latent file: dims overflow");
    const std::uint64_t have = bytes.size() - kLatentHeaderBytes;
    if (have < body) throw FormatError("latent file: truncated body (" + std::to_string(have) + " of " + std::to_string(body) + " bytes)");
    if (have > body) throw FormatError("latent file: " + std::to_string(have - body) + " trailing bytes");

    LatentShape s{dims[0], dims[1], dims[2], dims[3]};
    std::vector<float> data(s.numel());
    const std::uint8_t* p = bytes.data() + kLatentHeaderBytes;
    for (std::size_t i = 0; i < data.size(); ++i, p += 4) {
        const std::uint32_t bits = detail::get_u32(p);
        std::memcpy(&data[i], &bits, 4);
    }
    return Latent(s, std::move(data));
}

inline void write_latent(const std::filesystem::path& path, const Latent& x) { detail::write_file(path, encode_latent(x)); }

inline Latent read_latent(const std::filesystem::path& path) { return decode_latent(detail::read_file(path)); }

struct MaskArtifact {
    TokenMask mask;
    std::uint32_t chunk_index = 0;
};

inline std::vector<std::uint8_t> encode_mask(const TokenMask& m, std::size_t chunk_index) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMaskMagic.begin(), kMaskMagic.end());
    detail::put_u16(out, kFormatVersion);
    for (auto d : {m.grid().frames, m.grid().height, m.grid().width}) detail::put_u32(out, detail::checked_u32(d, "mask dim"));
    detail::put_u32(out, detail::checked_u32(chunk_index, "chunk index"));
    std::vector<std::uint8_t> packed((m.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    out.insert(out.end(), packed.begin(), packed.end());
    return out;
}

inline MaskArtifact decode_mask(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kMaskHeaderBytes) throw FormatError("mask file: truncated header");
    if (std::memcmp(bytes.data(), kMaskMagic.data(), 4) != 0) throw FormatError("mask file: bad magic");
    if (detail::get_u16(bytes.data() + 4) != kFormatVersion) throw FormatError("mask file: unsupported version");
    const std::uint64_t f = detail::get_u32(bytes.data() + 6), h = detail::get_u32(bytes.data() + 10),
                        w = detail::get_u32(bytes.data() + 14);
    if (h != 0 && w != 0 && f > (kMaxBodyBytes * 8) / (h * w)) throw FormatError("mask file: dims overflow");
    const std::uint64_t tokens = f * h * w;
    if (bytes.size() - kMaskHeaderBytes != (tokens + 7) / 8) throw FormatError("mask file: body length does not match dims");
    MaskArtifact a;
    a.chunk_index = detail::get_u32(bytes.data() + 18);
    TokenMask m({f, h, w});
    for (std::size_t i = 0; i < tokens; ++i) m.set(i, (bytes[kMaskHeaderBytes + i / 8] >> (i % 8)) & 1u);
    a.mask = std::move(m);
    return a;
}

inline void write_mask(const std::filesystem::path& path, const TokenMask& m, std::size_t chunk_index) {
    detail::write_file(path, encode_mask(m, chunk_index));
}

inline MaskArtifact read_mask(const std::filesystem::path& path) { return decode_mask(detail::read_file(path)); }

}  // namespace streamedit
