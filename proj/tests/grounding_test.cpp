// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "streamedit/grounding.hpp"
#include "test_support.hpp"

namespace se = streamedit;
using se::Matrix;
using se::testing::random_mask;
using se::testing::rng;

namespace {

const std::vector<std::string> kPrompt{"a", "red", "car", "on", "the", "road"};

/// Rows are distributions over the prompt. Inside `region` every trigger token gets
/// `delta` more than uniform; outside it gets `delta` less. Non-triggers absorb the rest.
Matrix<float> planted_map(const se::TokenMask& region, const se::TriggerSet& t, double delta) {
    const std::size_t P = t.prompt_size();
    const double nt = static_cast<double>(t.trigger_indices().size());
    const double nb = static_cast<double>(P) - nt;
    Matrix<float> m(region.size(), P);
    for (std::size_t q = 0; q < region.size(); ++q) {
        const double s = region[q] ? delta : -delta;
        for (std::size_t p = 0; p < P; ++p)
            m(q, p) = static_cast<float>(1.0 / static_cast<double>(P) + (t.is_trigger(p) ? s : -s * nt / nb));
    }
    return m;
}

}  // namespace

TEST(TriggerSet, FromPhraseFindsContiguousTokens) {
    const auto t = se::TriggerSet::from_phrase(kPrompt, {"red", "car"});
    EXPECT_EQ(t.trigger_indices(), (std::vector<std::size_t>{1, 2}));
    EXPECT_TRUE(t.is_trigger(2));
    EXPECT_FALSE(t.is_trigger(3));
    EXPECT_THROW(se::TriggerSet::from_phrase(kPrompt, {"car", "red"}), se::InvalidArgument);
    EXPECT_THROW(se::TriggerSet::from_phrase(kPrompt, {}), se::InvalidArgument);
}

TEST(TriggerSet, ValidateRequiresNonEmptyStrictSubset) {
    EXPECT_THROW(se::TriggerSet(kPrompt, {}).validate(), se::InvalidArgument);
    try {
        se::TriggerSet(kPrompt, {0, 1, 2, 3, 4, 5}).validate();
        FAIL() << "full trigger set accepted";
    } catch (const se::InvalidArgument& e) {
        EXPECT_STREQ(e.what(), "trigger set must be a strict subset of the prompt");
    }
    EXPECT_NO_THROW(se::TriggerSet(kPrompt, {2}).validate());
    EXPECT_THROW(se::TriggerSet(kPrompt, {6}), se::InvalidArgument);
}

TEST(Ground, PlantedRegionIsRecovered) {
    auto& g = rng(61);
    const se::TriggerSet t(kPrompt, {2});
    const se::TokenGrid grid{3, 4, 4};
    for (int trial = 0; trial < 20; ++trial) {
        const auto region = random_mask(g, grid, 0.3);
        const std::vector<Matrix<float>> maps{planted_map(region, t, 0.05), planted_map(region, t, 0.02)};
        EXPECT_EQ(se::ground(maps, t, {0, 1}, grid), region);
    }
}

TEST(Ground, TriggerDominantEverywhereGivesAllOnes) {
    const se::TriggerSet t(kPrompt, {1, 2});
    const se::TokenGrid grid{1, 2, 3};
    const std::vector<Matrix<float>> maps{planted_map(se::TokenMask::ones(grid), t, 0.03)};
    EXPECT_EQ(se::ground(maps, t, {0}, grid), se::TokenMask::ones(grid));
}

TEST(Ground, UniformAttentionTiesToBackground) {
    const se::TriggerSet t(kPrompt, {2});
    const se::TokenGrid grid{2, 2, 2};
    const std::vector<Matrix<float>> maps(2, Matrix<float>(grid.tokens(), kPrompt.size(), 1.0f / 6.0f));
    EXPECT_EQ(se::ground(maps, t, {0, 1}, grid), se::TokenMask::zeros(grid));
}

TEST(Ground, AveragesLayersBeforeThresholding) {
    // Layer 0 says "foreground" weakly, layer 1 says "background" strongly: the average wins.
    const se::TriggerSet t(kPrompt, {2});
    const se::TokenGrid grid{1, 1, 2};
    const auto on = se::TokenMask::ones(grid);
    const std::vector<Matrix<float>> maps{planted_map(on, t, 0.01), planted_map(on.complement(), t, 0.05)};
    EXPECT_EQ(se::ground(maps, t, {0, 1}, grid), se::TokenMask::zeros(grid));
    EXPECT_EQ(se::ground(maps, t, {0}, grid), on);
}

TEST(Ground, AddingAConstantPerQueryLeavesMaskUnchanged) {
    auto& g = rng(62);
    const se::TriggerSet t(kPrompt, {2, 3});
    const se::TokenGrid grid{2, 3, 3};
    for (int trial = 0; trial < 10; ++trial) {
        const auto region = random_mask(g, grid);
        auto m = planted_map(region, t, 0.04);
        const auto before = se::trigger_attention_difference(m, t);
        for (std::size_t q = 0; q < m.rows(); ++q) {
            // Powers of two keep the shifted sums exact.
            const float c = std::ldexp(1.0f, -4 - static_cast<int>(q % 3));
            for (auto& x : m.row(q)) x += c;
        }
        const auto after = se::trigger_attention_difference(m, t);
        for (std::size_t q = 0; q < before.size(); ++q) EXPECT_NEAR(after[q], before[q], 1e-7);
        EXPECT_EQ(se::ground(std::vector<Matrix<float>>{m}, t, {0}, grid), region);
    }
}

TEST(Ground, SwappingTriggersAndRestFlipsTieFreeMasks) {
    auto& g = rng(63);
    const se::TriggerSet t(kPrompt, {1, 2});
    const se::TriggerSet swapped(kPrompt, {0, 3, 4, 5});
    const se::TokenGrid grid{2, 4, 4};
    const auto region = random_mask(g, grid);
    const std::vector<Matrix<float>> maps{planted_map(region, t, 0.03)};
    const auto a = se::ground(maps, t, {0}, grid);
    const auto b = se::ground(maps, swapped, {0}, grid);
    for (std::size_t q = 0; q < a.size(); ++q) EXPECT_LE(b[q], !a[q]);
}

TEST(Ground, RejectsBadInputs) {
    const se::TokenGrid grid{1, 2, 2};
    const std::vector<Matrix<float>> maps{Matrix<float>(4, 6, 1.0f / 6)};
    EXPECT_THROW(se::ground(maps, se::TriggerSet(kPrompt, {}), {0}, grid), se::InvalidArgument);
    EXPECT_THROW(se::ground(maps, se::TriggerSet(kPrompt, {0, 1, 2, 3, 4, 5}), {0}, grid), se::InvalidArgument);
    EXPECT_THROW(se::ground(maps, se::TriggerSet(kPrompt, {1}), {}, grid), se::InvalidArgument);
    EXPECT_THROW(se::ground(maps, se::TriggerSet(kPrompt, {1}), {1}, grid), se::InvalidArgument);
    EXPECT_THROW(se::ground(maps, se::TriggerSet(kPrompt, {1}), {0}, se::TokenGrid{1, 2, 3}), se::InvalidArgument);
    const std::vector<Matrix<float>> narrow{Matrix<float>(4, 5, 0.2f)};
    EXPECT_THROW(se::ground(narrow, se::TriggerSet(kPrompt, {1}), {0}, grid), se::InvalidArgument);
}

TEST(UnionMask, Examples) {
    const se::TokenGrid grid{1, 2, 2};
    const se::TokenMask a(grid, std::vector<std::uint8_t>{1, 0, 1, 0});
    const se::TokenMask b(grid, std::vector<std::uint8_t>{0, 0, 1, 1});
    EXPECT_EQ(se::union_mask(a, b), se::TokenMask(grid, std::vector<std::uint8_t>{1, 0, 1, 1}));
    EXPECT_EQ(se::union_mask(a, se::TokenMask::zeros(grid)), a);
    EXPECT_EQ(se::union_mask(a, se::TokenMask::ones(grid)), se::TokenMask::ones(grid));
    EXPECT_THROW(se::union_mask(a, se::TokenMask::ones({1, 1, 4})), se::InvalidArgument);
}

TEST(MaskRegistry, ChunkLifecycle) {
    auto& g = rng(64);
    const se::TokenGrid grid{3, 2, 2};
    se::MaskRegistry reg;
    EXPECT_TRUE(reg.m_prev().empty());
    const auto ms = random_mask(g, grid), mt = random_mask(g, grid), mf = random_mask(g, grid);
    reg.begin_chunk(ms);
    EXPECT_EQ(reg.m_curr(), ms);
    EXPECT_EQ(reg.m_src_curr(), ms);
    reg.update_target(mt);
    for (std::size_t i = 0; i < grid.tokens(); ++i) EXPECT_EQ(reg.m_curr()[i], ms[i] || mt[i]);
    EXPECT_EQ(reg.m_src_curr(), ms);
    EXPECT_EQ(se::commit_chunk_masks(reg, ms, mf), 0u);
    ASSERT_EQ(reg.m_prev().size(), 1u);
    for (std::size_t i = 0; i < grid.tokens(); ++i) EXPECT_EQ(reg.m_prev()[0][i], ms[i] || mf[i]);
    EXPECT_EQ(reg.m_curr().size(), 0u);
    const auto first = reg.m_prev()[0];
    reg.begin_chunk(mt);
    EXPECT_EQ(reg.commit(mt, mt), 1u);
    EXPECT_EQ(reg.m_prev()[0], first);
}
