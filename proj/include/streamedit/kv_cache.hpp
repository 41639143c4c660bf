// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <variant>
#include <vector>

#include "streamedit/backbone.hpp"
#include "streamedit/errors.hpp"

namespace streamedit {

/// Fixed-size cache, oldest frames evicted first.
struct RollingPolicy {
    std::size_t max_frames = 21;
};

/// The first `sink_frames` frames ever appended stay forever; after them only the
/// most recent `local_frames` frames are kept.
struct WindowSinkPolicy {
    std::size_t local_frames = 9;
    std::size_t sink_frames = 3;
};

using CachePolicy = std::variant<RollingPolicy, WindowSinkPolicy>;

inline std::string policy_name(const CachePolicy& p) {
    return std::holds_alternative<RollingPolicy>(p) ? "rolling" : "window-sink";
}

/// Upper bound on frames visible as context under `p`.
inline std::size_t max_context_frames(const CachePolicy& p) {
    if (const auto* r = std::get_if<RollingPolicy>(&p)) return r->max_frames;
    const auto& w = std::get<WindowSinkPolicy>(p);
    return w.sink_frames + w.local_frames;
}

enum class Branch { source, target };

inline const char* branch_name(Branch b) { return b == Branch::source ? "source" : "target"; }

/// Identifies which committed mask (history slot) and which of its frames a cached frame came from.
struct FrameTag {
    std::size_t mask_slot = 0;
    std::size_t frame_in_slot = 0;
    friend bool operator==(const FrameTag&, const FrameTag&) = default;
};

struct CachedFrame {
    FrameTag tag;
    std::vector<LayerKv> layers;  // tokens_per_frame rows per layer
};

/// Per-layer K/V of previous frames for one branch.
class KvCache {
public:
    explicit KvCache(CachePolicy policy = RollingPolicy{}, Branch owner = Branch::source) : policy_(policy), owner_(owner) {
        if (const auto* r = std::get_if<RollingPolicy>(&policy_))
            detail::require(r->max_frames > 0, "KvCache: rolling cache needs a positive size");
    }

    const CachePolicy& policy() const noexcept { return policy_; }
    Branch owner() const noexcept { return owner_; }

    /// Appends `frame_count` frames whose rows are laid out frame-major in `kv`, then evicts.
    /// Frames are tagged (mask_slot, first_frame_in_slot + i).
    void append(const ChunkKv& kv, std::size_t frame_count, std::size_t mask_slot, std::size_t first_frame_in_slot = 0) {
        detail::require(frame_count > 0, "KvCache::append: no frames");
        detail::require(!kv.empty(), "KvCache::append: no layers");
        if (layers_ == 0) layers_ = kv.size();
        detail::require(kv.size() == layers_, "KvCache::append: layer count " + std::to_string(kv.size()) +
                                                  " does not match cache layer count " + std::to_string(layers_));
        const std::size_t rows = kv.front().k.rows();
        detail::require(rows % frame_count == 0, "KvCache::append: token rows are not divisible by the frame count");
        const std::size_t per_frame = rows / frame_count;
        if (tokens_per_frame_ == 0) tokens_per_frame_ = per_frame;
        detail::require(per_frame == tokens_per_frame_, "KvCache::append: tokens per frame changed");
        for (const auto& l : kv) detail::require(l.k.rows() == rows && l.v.rows() == rows, "KvCache::append: ragged layers");

        for (std::size_t f = 0; f < frame_count; ++f) {
            CachedFrame cf;
            cf.tag = {mask_slot, first_frame_in_slot + f};
            cf.layers.reserve(layers_);
            for (const auto& l : kv) cf.layers.push_back({l.k.slice_rows(f * per_frame, per_frame), l.v.slice_rows(f * per_frame, per_frame)});
            push(std::move(cf));
        }
    }

    std::size_t stored_frames() const noexcept { return sink_.size() + recent_.size(); }
    /// Frames visible as attention context. Every stored frame is visible.
    std::size_t context_frames() const noexcept { return stored_frames(); }
    std::size_t sink_frames() const noexcept { return sink_.size(); }
    std::size_t layers() const noexcept { return layers_; }
    std::size_t tokens_per_frame() const noexcept { return tokens_per_frame_; }
    std::size_t evicted_frames() const noexcept { return evicted_; }
    bool empty() const noexcept { return stored_frames() == 0; }

    /// Context frames in attention order: sink first, then recent frames oldest to newest.
    std::vector<const CachedFrame*> frames() const {
        std::vector<const CachedFrame*> out;
        out.reserve(stored_frames());
        for (const auto& f : sink_) out.push_back(&f);
        for (const auto& f : recent_) out.push_back(&f);
        return out;
    }

    std::vector<FrameTag> context_tags() const {
        std::vector<FrameTag> tags;
        for (const auto* f : frames()) tags.push_back(f->tag);
        return tags;
    }

    /// Concatenated context K/V for a forward run by `reader`. Reads are logged.
    ContextView view(Branch reader) const {
        reads_.push_back(reader);
        ContextView v;
        v.frames = stored_frames();
        if (empty()) return v;
        v.layers.resize(layers_);
        for (const auto* f : frames())
            for (std::size_t l = 0; l < layers_; ++l) {
                v.layers[l].k.append_rows(f->layers[l].k);
                v.layers[l].v.append_rows(f->layers[l].v);
            }
        return v;
    }

    /// Branch of every forward that has read this cache.
    const std::vector<Branch>& read_log() const noexcept { return reads_; }

private:
    void push(CachedFrame f) {
        if (const auto* r = std::get_if<RollingPolicy>(&policy_)) {
            recent_.push_back(std::move(f));
            while (recent_.size() > r->max_frames) {
                recent_.pop_front();
                ++evicted_;
            }
            return;
        }
        const auto& w = std::get<WindowSinkPolicy>(policy_);
        if (sink_.size() < w.sink_frames) {
            sink_.push_back(std::move(f));
            return;
        }
        recent_.push_back(std::move(f));
        while (recent_.size() > w.local_frames) {
            recent_.pop_front();
            ++evicted_;
        }
    }

    CachePolicy policy_;
    Branch owner_;
    std::size_t layers_ = 0;
    std::size_t tokens_per_frame_ = 0;
    std::size_t evicted_ = 0;
    std::vector<CachedFrame> sink_;
    std::deque<CachedFrame> recent_;
    mutable std::vector<Branch> reads_;
};

inline void cache_append(KvCache& cache, const ChunkKv& kv, std::size_t frame_count, std::size_t mask_slot) {
    cache.append(kv, frame_count, mask_slot);
}

}  // namespace streamedit
