// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <limits>

#include <cmath>

#include "streamedit/boosting.hpp"
#include "test_support.hpp"

namespace se = streamedit;
using se::Matrix;
using se::testing::max_dev;
using se::testing::random_mask;
using se::testing::random_matrix;
using se::testing::rng;

namespace {

const std::vector<std::string> kPrompt{"a", "cat", "in", "snow"};

/// sum_p w_p exp(s_p) V_p / sum_p w_p exp(s_p), in double with explicit loops.
std::vector<std::vector<double>> reference_boost(const Matrix<float>& q, const Matrix<float>& k, const Matrix<float>& v,
                                                 const std::vector<double>& w, double scale) {
    std::vector<std::vector<double>> out(q.rows(), std::vector<double>(v.cols(), 0.0));
    for (std::size_t i = 0; i < q.rows(); ++i) {
        std::vector<double> e(k.rows());
        double mx = -INFINITY;
        for (std::size_t p = 0; p < k.rows(); ++p) {
            double dot = 0;
            for (std::size_t d = 0; d < q.cols(); ++d) dot += double(q(i, d)) * double(k(p, d));
            e[p] = scale * dot;
            mx = std::max(mx, e[p]);
        }
        double z = 0;
        for (std::size_t p = 0; p < k.rows(); ++p) z += (e[p] = w[p] * std::exp(e[p] - mx));
        for (std::size_t p = 0; p < k.rows(); ++p)
            for (std::size_t d = 0; d < v.cols(); ++d) out[i][d] += e[p] / z * double(v(p, d));
    }
    return out;
}

}  // namespace

TEST(WeightMap, OmegaOneIsAllOnes) {
    const se::TriggerSet t(kPrompt, {1});
    const auto w = se::build_weight_map(t, se::TokenMask::ones({1, 2, 2}), 1.0);
    EXPECT_TRUE(w.is_identity());
    for (const auto dense = w.dense(); auto x : dense.data()) EXPECT_EQ(x, 1.0);
}

TEST(WeightMap, EmptyMaskIsAllOnes) {
    const se::TriggerSet t(kPrompt, {1});
    const auto w = se::build_weight_map(t, se::TokenMask::zeros({1, 2, 2}), 4.0);
    EXPECT_TRUE(w.is_identity());
    for (const auto dense = w.dense(); auto x : dense.data()) EXPECT_EQ(x, 1.0);
}

TEST(WeightMap, TwoByTwoHasExactlyOneBoostedEntry) {
    const se::TriggerSet t({"cat", "grass"}, {0});
    se::TokenMask m({1, 1, 2});
    m.set(1, true);
    const auto w = se::build_weight_map(t, m, 4.0);
    int fours = 0;
    for (const auto dense = w.dense(); auto x : dense.data()) {
        EXPECT_TRUE(x == 1.0 || x == 4.0);
        fours += x == 4.0;
    }
    EXPECT_EQ(fours, 1);
    EXPECT_EQ(w.at(0, 1), 4.0);
}

TEST(WeightMap, CaseDefinitionHoldsEverywhere) {
    auto& g = rng(71);
    const se::TriggerSet t(kPrompt, {1, 3});
    const auto m = random_mask(g, {2, 3, 3});
    const auto w = se::build_weight_map(t, m, 2.5);
    for (std::size_t q = 0; q < m.size(); ++q)
        for (std::size_t p = 0; p < kPrompt.size(); ++p) EXPECT_EQ(w.at(p, q), (t.is_trigger(p) && m[q]) ? 2.5 : 1.0);
}

TEST(WeightMap, NonPositiveOmegaRejected) {
    const se::TriggerSet t(kPrompt, {1});
    EXPECT_THROW(se::build_weight_map(t, se::TokenMask::ones({1, 1, 1}), 0.0), se::InvalidArgument);
    EXPECT_THROW(se::build_weight_map(t, se::TokenMask::ones({1, 1, 1}), -2.0), se::InvalidArgument);
}

TEST(BoostDirect, UnitWeightsArePlainSoftmax) {
    auto& g = rng(72);
    const auto s = random_matrix(g, 4, 4);
    const se::TriggerSet t(kPrompt, {1});
    EXPECT_LE(max_dev(se::boost_direct(s, se::build_weight_map(t, se::TokenMask::ones({1, 2, 2}), 1.0)), se::softmax_rows(s)), 0.0);
}

TEST(BoostDirect, SingleTokenIsOne) {
    auto& g = rng(73);
    const auto s = random_matrix(g, 3, 1);
    const se::WeightMap w({4.0}, se::TokenMask::ones({1, 1, 3}), 4.0);
    for (const auto p = se::boost_direct(s, w); auto x : p.data()) EXPECT_EQ(x, 1.0f);
}

TEST(BoostDirect, AnalyticTwoTokenCase) {
    const Matrix<double> s{{0.0, 0.0}};
    const se::WeightMap w({std::exp(1.0), 1.0}, se::TokenMask::ones({1, 1, 1}), std::exp(1.0));
    const auto a = se::boost_direct(s, w);
    const double e = std::exp(1.0);
    EXPECT_NEAR(a(0, 0), e / (e + 1), 1e-15);
    EXPECT_NEAR(a(0, 1), 1 / (e + 1), 1e-15);
    EXPECT_NEAR(a(0, 0), 0.731, 5e-4);
}

TEST(BoostDirect, RowsSumToOne) {
    auto& g = rng(74);
    const se::TriggerSet t(kPrompt, {1, 2});
    for (double omega : {0.5, 2.0, 4.0, 16.0}) {
        const auto a = se::boost_direct(random_matrix(g, 9, 4, 2.0), se::build_weight_map(t, random_mask(g, {1, 3, 3}), omega));
        for (std::size_t q = 0; q < a.rows(); ++q) {
            double s = 0;
            for (auto x : a.row(q)) s += x;
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(BoostDirect, LargerOmegaStrictlyRaisesTriggerMass) {
    auto& g = rng(75);
    const se::TriggerSet t(kPrompt, {1});
    const auto s = random_matrix(g, 4, 4);
    const auto mask = se::TokenMask::ones({1, 2, 2});
    double prev = 0.0;
    for (double omega : {0.5, 1.0, 2.0, 4.0, 8.0}) {
        const auto a = se::boost_direct(s, se::build_weight_map(t, mask, omega));
        const double mass = a(0, 1);
        EXPECT_GT(mass, prev);
        prev = mass;
    }
}

TEST(BoostTwoPass, UnitWeightsMatchPlainAttention) {
    auto& g = rng(76);
    const auto q = random_matrix(g, 6, 8), k = random_matrix(g, 5, 8), v = random_matrix(g, 5, 4);
    const std::vector<float> ones(5, 1.0f);
    EXPECT_LE(max_dev(se::boost_two_pass<float>(q, k, v, ones, 0.35), se::softmax_attention(q, k, v, 0.35)), 1e-6);
}

TEST(BoostTwoPass, SingleTokenReturnsValueRow) {
    auto& g = rng(77);
    const auto q = random_matrix(g, 3, 4), k = random_matrix(g, 1, 4), v = random_matrix(g, 1, 5);
    const std::vector<float> w{7.0f};
    const auto out = se::boost_two_pass<float>(q, k, v, w, 0.5);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t d = 0; d < 5; ++d) EXPECT_NEAR(out(i, d), v(0, d), 1e-6);
}

TEST(BoostTwoPass, MatchesDirectFormThreeByFive) {
    auto& g = rng(78);
    const se::TriggerSet t({"a", "b", "c", "d", "e"}, {1, 3});
    for (int trial = 0; trial < 50; ++trial) {
        const auto q = random_matrix(g, 3, 8), k = random_matrix(g, 5, 8), v = random_matrix(g, 5, 6);
        const double scale = se::default_attention_scale(8);
        const auto wm = se::build_weight_map(t, se::TokenMask::ones({1, 1, 3}), 4.0);
        const auto direct = se::matmul(se::boost_direct(se::attention_scores(q, k, scale), wm), v);
        const std::vector<float> tw(wm.token_weights().begin(), wm.token_weights().end());
        EXPECT_LE(max_dev(se::boost_two_pass<float>(q, k, v, tw, scale), direct), 1e-5);
    }
}

TEST(BoostTwoPass, DoublePrecisionAgreesToTenDigits) {
    auto& g = rng(79);
    for (int trial = 0; trial < 100; ++trial) {
        const auto q = random_matrix<double>(g, 4, 8), k = random_matrix<double>(g, 7, 8), v = random_matrix<double>(g, 7, 3);
        std::vector<double> w(7);
        std::uniform_real_distribution<double> u(0.25, 8.0);
        for (auto& x : w) x = u(g);
        const se::WeightMap wm(w, se::TokenMask::ones({1, 2, 2}), 2.0);
        const auto direct = se::matmul(se::boost_direct(se::attention_scores(q, k, 0.3), wm), v);
        EXPECT_LE(max_dev(se::boost_two_pass<double>(q, k, v, w, 0.3), direct), 1e-10);
    }
}

TEST(BoostTwoPass, AgreesWithIndependentReference) {
    auto& g = rng(80);
    for (int trial = 0; trial < 100; ++trial) {
        const auto q = random_matrix(g, 5, 16), k = random_matrix(g, 9, 16), v = random_matrix(g, 9, 8);
        std::vector<double> w(9, 1.0);
        w[trial % 9] = 4.0;
        const std::vector<float> wf(w.begin(), w.end());
        EXPECT_LE(max_dev(se::boost_two_pass<float>(q, k, v, wf, 0.25), reference_boost(q, k, v, w, 0.25)), 1e-5);
    }
}

TEST(BoostTwoPass, RejectsBadWeights) {
    const Matrix<float> q(2, 4, 0.1f), k(3, 4, 0.2f), v(3, 2, 1.0f);
    const std::vector<float> zero{1.0f, 0.0f, 1.0f}, short_w{1.0f, 1.0f};
    EXPECT_THROW(se::boost_two_pass<float>(q, k, v, zero, 1.0), se::InvalidArgument);
    EXPECT_THROW(se::boost_two_pass<float>(q, k, v, short_w, 1.0), se::InvalidArgument);
}

TEST(BoostTwoPass, UnderflowingDenominatorIsANumericalFailure) {
    const Matrix<float> q(1, 1, 1.0f), k(2, 1, 1.0f), v(2, 1, 1.0f);
    // Half of the smallest denormal rounds to zero, so the weighted denominator vanishes.
    const float d = std::numeric_limits<float>::denorm_min();
    EXPECT_THROW(se::boost_two_pass<float>(q, k, v, std::vector<float>{d, d}, 1.0), se::NumericalFailure);
    const Matrix<float> nan_q(1, 1, std::numeric_limits<float>::quiet_NaN());
    EXPECT_THROW(se::boost_two_pass<float>(nan_q, k, v, std::vector<float>{1.0f, 1.0f}, 1.0), se::NumericalFailure);
}

TEST(SpliceRegional, MasksSelectRows) {
    auto& g = rng(81);
    const auto a = random_matrix(g, 8, 3), b = random_matrix(g, 8, 3);
    EXPECT_EQ(se::splice_regional(a, b, se::TokenMask::ones({2, 2, 2})), a);
    EXPECT_EQ(se::splice_regional(a, b, se::TokenMask::zeros({2, 2, 2})), b);
    const auto m = random_mask(g, {2, 2, 2});
    const auto s = se::splice_regional(a, b, m);
    for (std::size_t q = 0; q < 8; ++q)
        for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(s(q, d), m[q] ? a(q, d) : b(q, d));
    EXPECT_THROW(se::splice_regional(a, b, se::TokenMask::ones({1, 2, 2})), se::InvalidArgument);
}

TEST(RegionalBoost, OmegaOneIsBitwiseNoOp) {
    auto& g = rng(82);
    const se::TriggerSet t(kPrompt, {1});
    const auto q = random_matrix(g, 8, 16), k = random_matrix(g, 4, 16), v = random_matrix(g, 4, 16);
    const auto plain = se::multi_head_attention(q, k, v, 4);
    const auto w = se::build_weight_map(t, se::TokenMask::ones({2, 2, 2}), 1.0);
    EXPECT_EQ(se::regional_boost(q, k, v, plain, w, 4), plain);
}

TEST(RegionalBoost, UnmaskedRowsKeepPlainOutput) {
    auto& g = rng(83);
    const se::TriggerSet t(kPrompt, {1});
    const auto q = random_matrix(g, 8, 16), k = random_matrix(g, 4, 16), v = random_matrix(g, 4, 16);
    const auto plain = se::multi_head_attention(q, k, v, 4);
    const auto m = random_mask(g, {2, 2, 2});
    const auto out = se::regional_boost(q, k, v, plain, se::build_weight_map(t, m, 4.0), 4);
    for (std::size_t i = 0; i < 8; ++i) {
        if (m[i]) continue;
        for (std::size_t d = 0; d < 16; ++d) EXPECT_EQ(out(i, d), plain(i, d));
    }
}
