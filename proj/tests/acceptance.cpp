// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one line per criterion, nonzero exit if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "streamedit/runner.hpp"

namespace se = streamedit;
using se::Matrix;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Matrix<float> random_matrix(std::mt19937_64& g, std::size_t r, std::size_t c) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    Matrix<float> m(r, c);
    for (auto& x : m.data()) x = n(g);
    return m;
}

se::Latent random_latent(std::mt19937_64& g, se::LatentShape s) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    se::Latent x(s);
    for (auto& v : x.data()) v = n(g);
    return x;
}

se::TokenMask random_mask(std::mt19937_64& g, se::TokenGrid grid) {
    std::bernoulli_distribution b(0.5);
    se::TokenMask m(grid);
    for (std::size_t i = 0; i < m.size(); ++i) m.set(i, b(g));
    return m;
}

std::vector<se::Latent> random_chunks(std::uint64_t seed, std::size_t count, se::LatentShape s) {
    std::mt19937_64 g(seed);
    std::vector<se::Latent> out;
    for (std::size_t c = 0; c < count; ++c) out.push_back(random_latent(g, s));
    return out;
}

constexpr const char* kSource = "a cat sitting on the grass";
constexpr const char* kTarget = "a dog sitting on the grass";

se::SessionOptions edit_options(std::size_t steps, se::CachePolicy policy = se::RollingPolicy{}) {
    se::SessionOptions o;
    o.schedule = se::Schedule::uniform(steps);
    o.policy = policy;
    o.source_prompt = kSource;
    o.target_prompt = kTarget;
    o.source_trigger = "cat";
    o.target_trigger = "dog";
    return o;
}

const se::CachePolicy kPolicies[] = {se::RollingPolicy{}, se::WindowSinkPolicy{}};

// ---------------------------------------------------------------------------

Outcome two_pass_boosting_identity() {
    const auto t0 = Clock::now();
    std::mt19937_64 g(1);
    std::uniform_int_distribution<std::size_t> tokens(1, 16), dims(1, 32);
    const double omegas[] = {0.5, 1.0, 2.0, 4.0};
    std::bernoulli_distribution trig(0.3);
    double worst = 0.0;
    const std::size_t cases = 1200;
    for (std::size_t i = 0; i < cases; ++i) {
        const std::size_t nq = tokens(g), nk = tokens(g), dk = dims(g), dv = dims(g);
        const double omega = omegas[i % 4];
        const auto q = random_matrix(g, nq, dk), k = random_matrix(g, nk, dk), v = random_matrix(g, nk, dv);
        std::vector<double> wd(nk, 1.0);
        std::vector<float> wf(nk, 1.0f);
        for (std::size_t p = 0; p < nk; ++p)
            if (trig(g)) wd[p] = omega, wf[p] = static_cast<float>(omega);
        const double scale = se::default_attention_scale(dk);
        const se::WeightMap w(wd, se::TokenMask::ones({1, 1, nq}), omega);
        const auto direct = se::matmul(se::boost_direct(se::attention_scores(q, k, scale), w), v);
        const auto two_pass = se::boost_two_pass<float>(q, k, v, wf, scale);
        worst = std::max(worst, static_cast<double>(se::max_abs_diff(direct, two_pass)));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-5 && secs < 10.0, fmt("%zu cases, max |two-pass - direct| = %.3g (<= 1e-5), %.2f s (< 10 s)", cases, worst, secs)};
}

Outcome omega_neutrality() {
    const se::ToyBackbone model;
    const auto chunks = random_chunks(2, 3, {3, 8, 8, 4});
    auto a = edit_options(5);
    a.omega = 1.0;
    auto b = edit_options(5);
    b.boosting = false;
    se::EditSession sa(model, a), sb(model, b);
    const auto oa = sa.run(chunks), ob = sb.run(chunks);
    const bool same = oa == ob;
    return {same, fmt("3 chunks, N = 5: omega = 1 output %s the boosting-disabled output", same ? "is bitwise equal to" : "DIFFERS from")};
}

Outcome oracle_idempotence() {
    const auto t0 = Clock::now();
    const auto video = se::make_fixture({});
    const auto chunks = se::split_chunks(video, 3);
    float worst = 0.0f, worst_sog = 0.0f;
    for (std::size_t n : {5u, 15u})
        for (const auto& p : kPolicies) {
            se::OracleBackbone model(video.shape().channels);
            model.set_target(kSource, chunks);
            auto o = edit_options(n, p);
            o.target_prompt = kSource;
            o.target_trigger = "cat";
            o.omega = 1.0;
            se::EditSession s(model, o);
            worst = std::max(worst, se::max_abs_diff(s.run(chunks), video));
            for (const auto& r : s.reports()) worst_sog = std::max(worst_sog, r.max_sog_correction);
        }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4f && worst_sog == 0.0f && secs < 30.0,
            fmt("C = %zu, N in {5,15}, both caches: max error %.3g (<= 1e-4), max guidance term %g (== 0), %.2f s (< 30 s)",
                chunks.size(), double(worst), double(worst_sog), secs)};
}

Outcome nfe_accounting() {
    const se::ToyBackbone inner;
    const auto chunks = random_chunks(4, 3, {3, 4, 4, 4});
    const auto frame = random_chunks(5, 2, {1, 4, 4, 4});
    bool ok = true;
    std::ostringstream log;
    for (std::size_t n : {1u, 5u, 15u}) {
        for (bool vp : {false, true}) {
            se::CountingModel model(inner);
            se::EditSession s(model, edit_options(n));
            if (vp) s.install_visual_prompt(frame[0], frame[1]);
            std::size_t before = model.count();
            for (const auto& c : chunks) {
                (void)s.run_chunk(c);
                ok = ok && model.count() - before == 2 * (n + 1);
                before = model.count();
            }
            const std::size_t expected = chunks.size() * 2 * (n + 1) + (vp ? 2 : 0);
            ok = ok && model.count() == expected && s.nfe() == expected;
            log << " N=" << n << (vp ? "+vp" : "") << ":" << model.count() << "/" << expected;
        }
    }
    return {ok, "counted/expected forwards for 3 chunks:" + log.str()};
}

Outcome cache_constants() {
    const auto chunks = random_chunks(6, 10, {3, 4, 4, 4});
    se::OracleBackbone model(4);
    model.set_target(kSource, chunks);
    model.set_target(kTarget, chunks);
    bool ok = true;
    std::size_t rolling_max = 0;
    {
        se::EditSession s(model, edit_options(1));
        for (const auto& c : chunks) {
            (void)s.run_chunk(c);
            rolling_max = std::max({rolling_max, s.source_cache().stored_frames(), s.target_cache().stored_frames()});
        }
        ok = ok && rolling_max <= 21 && s.target_cache().stored_frames() == 21;
    }
    std::size_t mismatches = 0;
    {
        se::EditSession s(model, edit_options(1, se::WindowSinkPolicy{}));
        const auto f = random_chunks(7, 1, {1, 4, 4, 4})[0];
        s.install_visual_prompt(f, f);
        std::size_t frames = 0;
        for (const auto& c : chunks) {
            (void)s.run_chunk(c);
            frames += c.shape().frames;
            const std::size_t want = std::min<std::size_t>(3 + 9, 3 + frames);
            if (s.target_cache().context_frames() != want || s.source_cache().context_frames() != want) ++mismatches;
        }
        ok = ok && mismatches == 0 && s.target_cache().sink_frames() == 3;
    }
    return {ok, fmt("rolling peak %zu frames over 10 chunks (<= 21); window-sink context mismatches vs min(3+9, 3+frames): %zu",
                    rolling_max, mismatches)};
}

Outcome blending_limits() {
    bool exact = se::blend_ratio(0.0, 2.0) == 1.0 && se::blend_ratio(1.0, 2.0) == 0.0 && se::blend_ratio(0.5, 2.0) == 0.75;
    for (double rho : {0.0, 0.5, 1.0, 3.0}) exact = exact && se::blend_ratio(0.0, rho) == 1.0 && se::blend_ratio(1.0, rho) == 0.0;
    std::mt19937_64 g(8);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const se::TokenGrid cur{1, 2, 3}, prev{2, 2, 3};
        const se::BranchQkv<float> b{random_matrix(g, 6, 8), random_matrix(g, 6, 8), random_matrix(g, 6, 8)};
        const se::PrevKv<float> pk{random_matrix(g, 12, 8), random_matrix(g, 12, 8)};
        const auto m_prev = random_mask(g, prev);
        Matrix<float> k_all = b.k, v_all = b.v;
        k_all.append_rows(pk.k);
        v_all.append_rows(pk.v);
        const auto plain = se::softmax_attention(b.q, k_all, v_all, 1.0 / std::sqrt(8.0));
        for (double r : {0.0, 0.25, 0.5, 0.75, 1.0})
            for (double t : {0.9, 0.3}) {
                const auto a = se::assemble_target_kv(b, b, pk, pk, m_prev, se::TokenMask::zeros(cur), t, r, se::BridgeConfig{});
                const auto bridged = se::softmax_attention(a.q, a.k, a.v, 1.0 / std::sqrt(8.0));
                worst = std::max(worst, static_cast<double>(se::max_abs_diff(bridged, plain)));
            }
    }
    return {exact && worst <= 1e-6,
            fmt("endpoint identities %s; identical branches with empty M_curr: max |bridged - plain| = %.3g (<= 1e-6)",
                exact ? "exact" : "NOT exact", worst)};
}

Outcome grounding_correctness() {
    const auto t0 = Clock::now();
    std::mt19937_64 g(9);
    std::size_t exact = 0;
    const std::size_t trials = 50;
    for (std::size_t i = 0; i < trials; ++i) {
        const se::TokenGrid grid{3, 4, 4};
        const auto region = random_mask(g, grid);
        std::uniform_real_distribution<double> surplus(0.05, 0.95);
        se::OracleConfig cfg;
        cfg.planted = se::PlantedAttention{{"cat", "dog"}, [region](const se::Latent&, const se::TokenGrid&) { return region; },
                                           surplus(g)};
        const se::OracleBackbone model(4, cfg);
        se::EditSession s(model, edit_options(1));
        const auto latent = random_latent(g, {3, 8, 8, 4});
        exact += s.clean_forward_and_ground(se::Branch::source, latent).mask == region &&
                 s.clean_forward_and_ground(se::Branch::target, latent).mask == region;
    }
    const double secs = seconds_since(t0);
    return {exact == trials && secs < 5.0, fmt("%zu/%zu planted regions recovered exactly on both branches, %.2f s (< 5 s)", exact, trials, secs)};
}

Outcome guidance_properties() {
    std::mt19937_64 g(10);
    bool noop = true;
    for (int i = 0; i < 20; ++i) {
        const se::LatentShape s{3, 4, 4, 4};
        const auto x0 = random_latent(g, s), eps = random_latent(g, s), v_tgt = random_latent(g, s);
        noop = noop && se::apply_sog(v_tgt, se::gt_velocity(x0, eps), x0, eps) == v_tgt;
    }
    std::size_t violations = 0, rounded_excess = 0;
    std::uniform_int_distribution<std::size_t> d(1, 4);
    for (int i = 0; i < 1000; ++i) {
        const se::LatentShape s{d(g), d(g), d(g), d(g)};
        const auto x0 = random_latent(g, s), eps = random_latent(g, s), vs = random_latent(g, s), vt = random_latent(g, s);
        const auto terms = se::source_oriented_guidance(vt, vs, x0, eps);
        se::Latent diff = terms.velocity;
        for (std::size_t j = 0; j < diff.size(); ++j) diff.data()[j] -= vt.data()[j];
        // The asserted bound is on the correction term; v_tgt + correction - v_tgt carries float rounding.
        if (!(se::max_abs(terms.correction) <= se::max_abs(terms.g))) ++violations;
        if (se::max_abs(diff) > se::max_abs(terms.g)) ++rounded_excess;
    }
    return {noop && violations == 0,
            fmt("perfect-source no-op %s; bound violations over 1000 cases: %zu (after float re-subtraction: %zu)",
                noop ? "exact" : "NOT exact", violations, rounded_excess)};
}

Outcome sampler_round_trip() {
    float worst = 0.0f;
    for (std::size_t n : {1u, 5u, 15u}) {
        const auto src = random_chunks(11 + n, 2, {3, 8, 8, 4});
        const auto tgt = random_chunks(21 + n, 2, {3, 8, 8, 4});
        se::OracleBackbone model(4);
        model.set_target(kSource, src);
        model.set_target(kTarget, tgt);
        se::EditSession s(model, edit_options(n));
        worst = std::max(worst, se::max_abs_diff(s.run(src), se::concat_frames(tgt)));
    }
    return {worst <= 1e-6f, fmt("N in {1,5,15}: max |z_0 - target| = %.3g (<= 1e-6)", double(worst))};
}

Outcome determinism_and_replay() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "streamedit_acceptance_replay";
    fs::remove_all(dir);
    se::FixtureSpec spec;
    spec.frames = 6;
    se::write_latent(dir / "src.sgve", se::make_fixture(spec));
    se::RunConfig c;
    c.steps = 3;
    c.src = (dir / "src.sgve").string();
    c.out = (dir / "first").string();
    (void)se::run_from_config(c);
    const auto a = se::run_from_config(se::parse_config(dir / "first" / "manifest.json", {{"out", (dir / "a").string()}}));
    const auto b = se::run_from_config(se::parse_config(dir / "first" / "manifest.json", {{"out", (dir / "b").string()}}));
    bool same = se::read_latent(dir / "a" / "edited.sgve") == se::read_latent(dir / "b" / "edited.sgve") && a.edited == b.edited;
    std::size_t masks = 0;
    for (const auto& e : fs::directory_iterator(dir / "a" / "masks")) {
        same = same && se::detail::read_file(e.path()) == se::detail::read_file(dir / "b" / "masks" / e.path().filename());
        ++masks;
    }
    same = same && se::detail::read_file(dir / "first" / "edited.sgve") == se::detail::read_file(dir / "a" / "edited.sgve");
    fs::remove_all(dir);
    return {same && masks == 2, fmt("two replays of one manifest: latents and %zu mask files %s", masks, same ? "bitwise identical" : "DIFFER")};
}

Outcome latent_round_trip() {
    std::mt19937_64 g(12);
    std::uniform_int_distribution<std::size_t> d(1, 9);
    std::size_t exact = 0;
    for (int i = 0; i < 100; ++i) {
        auto x = random_latent(g, {d(g), d(g), d(g), d(g)});
        x.data()[0] = i % 2 ? -0.0f : std::numeric_limits<float>::denorm_min();
        exact += se::decode_latent(se::encode_latent(x)).data() == x.data() &&
                 std::memcmp(se::decode_latent(se::encode_latent(x)).data().data(), x.data().data(), x.size() * sizeof(float)) == 0;
    }
    // Malformed inputs: every truncation and every single-byte header corruption.
    const auto good = se::encode_latent(random_latent(g, {2, 3, 3, 2}));
    std::size_t rejected = 0, accepted_valid = 0, other = 0, cases = 0;
    auto probe = [&](const std::vector<std::uint8_t>& bytes) {
        ++cases;
        try {
            const auto y = se::decode_latent(bytes);
            accepted_valid += y.size() * sizeof(float) + se::kLatentHeaderBytes == bytes.size();
        } catch (const se::FormatError&) {
            ++rejected;
        } catch (...) {
            ++other;
        }
    };
    for (std::size_t n = 0; n < good.size(); ++n) probe(std::vector<std::uint8_t>(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n)));
    for (std::size_t i = 0; i < se::kLatentHeaderBytes; ++i)
        for (std::uint8_t v : {std::uint8_t{0x00}, std::uint8_t{0xff}, std::uint8_t{0x7f}}) {
            auto bad = good;
            if (bad[i] == v) continue;
            bad[i] = v;
            probe(bad);
        }
    const bool ok = exact == 100 && other == 0 && rejected + accepted_valid == cases && rejected >= good.size();
    return {ok, fmt("%zu/100 bit-exact round trips; %zu malformed inputs: %zu format errors, %zu other exceptions", exact, cases, rejected, other)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"two-pass boosting identity", two_pass_boosting_identity},
        {"omega neutrality", omega_neutrality},
        {"oracle idempotence", oracle_idempotence},
        {"forward-pass accounting", nfe_accounting},
        {"cache policy constants", cache_constants},
        {"blending-limit identities", blending_limits},
        {"grounding on planted fixtures", grounding_correctness},
        {"guidance properties", guidance_properties},
        {"consistency-sampler round trip", sampler_round_trip},
        {"determinism and manifest replay", determinism_and_replay},
        {"latent file round trip", latent_round_trip},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("[%s] criterion %zu: %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
