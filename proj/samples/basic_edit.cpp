// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Streams a synthetic latent video through the editor one chunk at a time and prints
// what each chunk cost and which tokens it edited.

#include <cstdio>

#include "streamedit/metrics.hpp"
#include "streamedit/runner.hpp"

namespace se = streamedit;

int main() {
    const se::Latent video = se::make_fixture({});
    const se::ToyBackbone model;

    se::SessionOptions opts;
    opts.schedule = se::Schedule::uniform(5);
    opts.policy = se::WindowSinkPolicy{};
    opts.omega = 2.0;
    opts.source_prompt = "a cat sitting on the grass";
    opts.target_prompt = "a dog sitting on the grass";
    opts.source_trigger = "cat";
    opts.target_trigger = "dog";
    se::EditSession session(model, opts);

    // First-frame visual prompt: here the "edited" frame is the fixture with its object flipped.
    se::FixtureSpec edited_spec;
    edited_spec.object_sign = -1.0f;
    session.install_visual_prompt(video.slice_frames(0, 1), se::make_fixture(edited_spec).slice_frames(0, 1));

    for (const auto& chunk : se::split_chunks(video, opts.chunk_frames)) {
        (void)session.run_chunk(chunk);
        const auto& r = session.reports().back();
        std::printf("chunk %zu: %zu frames, %zu forwards, %zu/%zu tokens edited, cache %zu frames, %.1f ms\n", r.chunk_index,
                    r.frames, r.nfe, r.committed_mask.count(), r.committed_mask.size(), r.target_cache_frames, r.millis);
    }

    const se::Latent edited = se::concat_frames(session.outputs());
    const auto full = se::full_metrics(video, edited);
    std::printf("total forwards %zu, whole-video PSNR %.2f dB, SSIM %.3f\n", session.nfe(), full.psnr, full.ssim);
    return 0;
}
