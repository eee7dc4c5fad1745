#include <peermech/estimation.hpp>
#include <peermech/random.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"

using namespace peermech;

TEST(EstimateContinuous, TwoProbeExample)
{
    const std::vector<ProbePair> p{{1.1, 1.0}, {0.9, 1.0}};
    const auto e = estimate_continuous(p);
    EXPECT_NEAR(e.bias, 0.0, 1e-12);
    EXPECT_NEAR(e.reliability, 100.0, 1e-9);
}

TEST(EstimateContinuous, ThreeProbeExample)
{
    const std::vector<ProbePair> p{{0.9, 0.8}, {1.2, 1.0}, {1.2, 1.2}};
    const auto e = estimate_continuous(p);
    EXPECT_NEAR(e.bias, 0.1, 1e-12);
    EXPECT_NEAR(e.reliability, 150.0, 1e-9);
}

TEST(EstimateContinuous, ExamplesAgreeWithNumericalOptimizer)
{
    const auto a = oracle::mle_bias_reliability({{1.1, 1.0}, {0.9, 1.0}});
    EXPECT_NEAR(a.bias, 0.0, 1e-6);
    EXPECT_NEAR(a.reliability, 100.0, 1e-4);
    const auto b = oracle::mle_bias_reliability({{0.9, 0.8}, {1.2, 1.0}, {1.2, 1.2}});
    EXPECT_NEAR(b.bias, 0.1, 1e-6);
    EXPECT_NEAR(b.reliability, 150.0, 1.5e-4);
}

TEST(EstimateContinuous, ZeroResidualsHitTheCap)
{
    const std::vector<ProbePair> p{{0.85, 0.8}, {1.05, 1.0}, {1.25, 1.2}, {0.65, 0.6}};
    const auto e = estimate_continuous(p);
    EXPECT_NEAR(e.bias, 0.05, 1e-12);
    EXPECT_EQ(e.reliability, tau_cap);
}

TEST(EstimateContinuous, Errors)
{
    const std::vector<ProbePair> one{{1.0, 1.0}};
    EXPECT_THROW(estimate_continuous(one), EstimationError);
    EXPECT_THROW(estimate_continuous({}), EstimationError);
    const std::vector<ProbePair> bad{{1.0, 1.0}, {std::nan(""), 1.0}};
    EXPECT_THROW(estimate_continuous(bad), DomainError);
}

TEST(EstimateContinuous, ConsistentAsProbesGrow)
{
    const double b_true = 0.07, tau_true = 400.0;
    double previous_b = 1e9, previous_tau = 1e9;
    for (std::size_t count : {128u, 512u, 2048u}) {
        double se_b = 0.0, se_tau = 0.0;
        constexpr int reps = 200;
        for (int r = 0; r < reps; ++r) {
            Rng rng(derive_seed(17, {count, static_cast<std::uint64_t>(r)}));
            std::normal_distribution<double> noise(0.0, 1.0 / std::sqrt(tau_true));
            std::normal_distribution<double> truth(1.0, 0.25);
            std::vector<ProbePair> pairs(count);
            for (auto& p : pairs) {
                p.truth = truth(rng);
                p.reported = p.truth + b_true + noise(rng);
            }
            const auto e = estimate_continuous(pairs);
            se_b += (e.bias - b_true) * (e.bias - b_true);
            se_tau += (e.reliability / tau_true - 1.0) * (e.reliability / tau_true - 1.0);
        }
        const double rmse_b = std::sqrt(se_b / reps), rmse_tau = std::sqrt(se_tau / reps);
        EXPECT_LT(rmse_b, previous_b);
        EXPECT_LT(rmse_tau, previous_tau);
        previous_b = rmse_b;
        previous_tau = rmse_tau;
    }
    EXPECT_LT(previous_b, 0.002);
    EXPECT_LT(previous_tau, 0.05);
}

TEST(EstimateDiscrete, PerfectReportsGiveTopOfGrid)
{
    const auto params = DiscreteModelParams::uniform(4);
    const std::vector<ProbePair> p{{0, 0}, {2, 2}, {4, 4}, {3, 3}, {1, 1}};
    EXPECT_DOUBLE_EQ(estimate_discrete(p, params).q, 16.0);
}

TEST(EstimateDiscrete, MaximalDistanceGivesZero)
{
    const auto params = DiscreteModelParams::uniform(4);
    const std::vector<ProbePair> p{{0, 4}};
    EXPECT_DOUBLE_EQ(estimate_discrete(p, params).q, 0.0);
}

TEST(EstimateDiscrete, GridArgmaxAndRefinement)
{
    const auto params = DiscreteModelParams::uniform(4);
    const std::vector<ProbePair> p{{2, 2}, {3, 2}};
    auto lik = [](double q) { return oracle::error_pmf(2, 2, q, 4) * oracle::error_pmf(3, 2, q, 4); };
    double best_q = 0.0, best = -1.0;
    for (double q : params.q_grid)
        if (lik(q) > best) {
            best = lik(q);
            best_q = q;
        }
    const double got = estimate_discrete(p, params).q;
    EXPECT_DOUBLE_EQ(got, best_q);

    double fine_q = 0.0, fine = -1.0;
    for (int k = 0; k < 10000; ++k) {
        const double q = 16.0 * k / 9999.0;
        if (lik(q) > fine) {
            fine = lik(q);
            fine_q = q;
        }
    }
    EXPECT_LE(std::abs(got - fine_q), 16.0 / 99.0);
}

TEST(EstimateDiscrete, PermutationInvariant)
{
    const auto params = DiscreteModelParams::uniform(4);
    Rng rng(4);
    std::uniform_int_distribution<int> score(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<ProbePair> p(5);
        for (auto& x : p)
            x = {static_cast<double>(score(rng)), static_cast<double>(score(rng))};
        const double q = estimate_discrete(p, params).q;
        for (int s = 0; s < 5; ++s) {
            std::shuffle(p.begin(), p.end(), rng);
            EXPECT_EQ(estimate_discrete(p, params).q, q);
        }
    }
}

TEST(EstimateDiscrete, MatchesLikelihoodScan)
{
    const auto params = DiscreteModelParams::uniform(4);
    const std::vector<ProbePair> p{{1, 2}, {2, 2}, {4, 2}, {0, 0}};
    double best_q = -1.0, best = -1e300;
    for (double q : params.q_grid) {
        double ll = 0.0;
        for (const auto& x : p)
            ll += std::log(oracle::error_pmf(static_cast<int>(x.reported), static_cast<int>(x.truth), q, 4));
        EXPECT_NEAR(discrete_log_likelihood(p, q, 4), ll, 1e-12);
        if (ll > best) {
            best = ll;
            best_q = q;
        }
    }
    EXPECT_DOUBLE_EQ(estimate_discrete(p, params).q, best_q);
}

TEST(EstimateDiscrete, Errors)
{
    const auto params = DiscreteModelParams::uniform(4);
    EXPECT_THROW(estimate_discrete({}, params), EstimationError);
    const std::vector<ProbePair> out{{5, 2}};
    EXPECT_THROW(estimate_discrete(out, params), DomainError);
    const std::vector<ProbePair> frac{{1.5, 2}};
    EXPECT_THROW(estimate_discrete(frac, params), DomainError);
}

TEST(MleOracle, RandomInstancesMatch)
{
    Rng rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t count = 2 + static_cast<std::size_t>(unit(rng) * 9);
        const double b = (unit(rng) - 0.5) * 0.4;
        const double sd = 0.01 + 0.3 * unit(rng);
        std::normal_distribution<double> noise(0.0, sd);
        std::vector<ProbePair> pairs(count);
        std::vector<std::pair<double, double>> raw(count);
        for (std::size_t k = 0; k < count; ++k) {
            pairs[k].truth = 0.5 + unit(rng);
            pairs[k].reported = pairs[k].truth + b + noise(rng);
            raw[k] = {pairs[k].reported, pairs[k].truth};
        }
        const auto got = estimate_continuous(pairs);
        const auto ref = oracle::mle_bias_reliability(raw);
        EXPECT_NEAR(got.bias, ref.bias, 1e-4);
        EXPECT_NEAR(got.reliability / ref.reliability, 1.0, 1e-2);
    }
}
