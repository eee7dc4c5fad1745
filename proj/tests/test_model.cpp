#include <peermech/model.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "oracles.hpp"

using namespace peermech;

TEST(ContinuousDensity, PeakValueMatchesFormula)
{
    EXPECT_NEAR(continuous_error_density(1.0, 1.0, {0.0, 16.0}), 1.5957691216057308, 1e-12);
    EXPECT_NEAR(continuous_error_density(1.1, 1.0, {0.1, 100.0}), 3.989422804014327, 1e-12);
}

TEST(ContinuousDensity, IntegratesToOne)
{
    for (const BiasReliability acc : {BiasReliability{0.0, 16.0}, {0.3, 1.0}, {-0.05, 2500.0}}) {
        const double sd = 1.0 / std::sqrt(acc.reliability);
        const double centre = 1.0 + acc.bias;
        const double a = centre - 8 * sd, b = centre + 8 * sd;
        constexpr int n = 20000;
        const double h = (b - a) / n;
        double s = 0.0;
        for (int k = 0; k <= n; ++k) {
            const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
            s += w * continuous_error_density(a + h * k, 1.0, acc);
        }
        EXPECT_NEAR(s * h / 3.0, 1.0, 1e-6);
    }
}

TEST(ContinuousDensity, ModeAtTruthPlusBias)
{
    const BiasReliability acc{0.2, 9.0};
    const double peak = continuous_error_density(1.2, 1.0, acc);
    for (double d : {1e-3, 0.01, 0.1, 1.0}) {
        EXPECT_LT(continuous_error_density(1.2 + d, 1.0, acc), peak);
        EXPECT_LT(continuous_error_density(1.2 - d, 1.0, acc), peak);
    }
}

TEST(ContinuousDensity, RejectsBadInput)
{
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_THROW(continuous_error_density(inf, 1.0, {0.0, 1.0}), DomainError);
    EXPECT_THROW(continuous_error_density(1.0, std::nan(""), {0.0, 1.0}), DomainError);
    EXPECT_THROW(continuous_error_density(1.0, 1.0, {0.0, 0.0}), DomainError);
    EXPECT_THROW(continuous_error_density(1.0, 1.0, {0.0, -2.0}), DomainError);
}

TEST(DiscretePmf, ZeroAccuracyIsUniform)
{
    for (int y = 0; y <= 4; ++y)
        for (int o = 0; o <= 4; ++o)
            EXPECT_DOUBLE_EQ(discrete_error_pmf(o, y, 0.0, 4), 0.2);
}

TEST(DiscretePmf, HandEvaluatedNormalizer)
{
    const double expected = 1.0 / (std::exp(-12.0) + std::exp(-8.0) + std::exp(-4.0) + 1.0 + std::exp(-4.0));
    EXPECT_NEAR(discrete_error_pmf(3, 3, 16.0, 4), expected, 1e-15);
    EXPECT_NEAR(discrete_error_pmf(3, 3, 16.0, 4), 0.9643453699067993, 1e-12);
    const double interior = 1.0 / (1.0 + 2 * std::exp(-4.0) + 2 * std::exp(-8.0));
    EXPECT_NEAR(discrete_error_pmf(2, 2, 16.0, 4), interior, 1e-15);
}

TEST(DiscretePmf, NormalizesExactly)
{
    for (int m : {1, 4, 9})
        for (double q : {0.0, 0.5, 4.0, 16.0})
            for (int y = 0; y <= m; ++y) {
                double s = 0.0;
                for (int o = 0; o <= m; ++o)
                    s += discrete_error_pmf(o, y, q, m);
                EXPECT_NEAR(s, 1.0, 1e-12);
            }
}

TEST(DiscretePmf, SymmetricAndMonotoneInDistance)
{
    const int m = 6;
    for (double q : {0.3, 2.0, 16.0})
        for (int y = 0; y <= m; ++y)
            for (int o = 0; o <= m; ++o) {
                // same distance on the other side, when it exists
                const int mirror = 2 * y - o;
                if (mirror >= 0 && mirror <= m) {
                    EXPECT_DOUBLE_EQ(discrete_error_pmf(o, y, q, m), discrete_error_pmf(mirror, y, q, m));
                }
                if (o > y && o < m) {
                    EXPECT_GE(discrete_error_pmf(o, y, q, m), discrete_error_pmf(o + 1, y, q, m));
                }
                if (o < y && o > 0) {
                    EXPECT_GE(discrete_error_pmf(o, y, q, m), discrete_error_pmf(o - 1, y, q, m));
                }
            }
}

TEST(DiscretePmf, AgreesWithIndependentFormula)
{
    for (int y = 0; y <= 4; ++y)
        for (int o = 0; o <= 4; ++o)
            for (double q : {0.0, 1.7, 9.0})
                EXPECT_NEAR(discrete_error_pmf(o, y, q, 4), oracle::error_pmf(o, y, q, 4), 1e-15);
}

TEST(DiscretePmf, LogPmfConsistent)
{
    for (int y = 0; y <= 4; ++y)
        for (int o = 0; o <= 4; ++o)
            EXPECT_NEAR(std::exp(discrete_error_log_pmf(o, y, 3.3, 4)), discrete_error_pmf(o, y, 3.3, 4), 1e-15);
}

TEST(DiscretePmf, RejectsScoresOutsideDomain)
{
    EXPECT_THROW(discrete_error_pmf(5, 2, 1.0, 4), DomainError);
    EXPECT_THROW(discrete_error_pmf(-1, 2, 1.0, 4), DomainError);
    EXPECT_THROW(discrete_error_pmf(1, 7, 1.0, 4), DomainError);
    EXPECT_THROW(discrete_error_pmf(1, 2, -0.5, 4), DomainError);
}

TEST(ModelParams, ContinuousValidation)
{
    EXPECT_NO_THROW(ContinuousModelParams{}.validate());
    EXPECT_THROW((ContinuousModelParams{1.0, 0.0, 400.0, 25.0, 0.01}.validate()), ConfigError);
    EXPECT_THROW((ContinuousModelParams{1.0, 16.0, -1.0, 25.0, 0.01}.validate()), ConfigError);
    EXPECT_THROW((ContinuousModelParams{1.0, 16.0, 400.0, 0.0, 0.01}.validate()), ConfigError);
    EXPECT_THROW((ContinuousModelParams{1.0, 16.0, 400.0, 25.0, 0.0}.validate()), ConfigError);
}

TEST(ModelParams, ReliabilityMeanSetsRate)
{
    const auto p = ContinuousModelParams::with_reliability_mean(1.0, 16.0, 400.0, 2500.0);
    EXPECT_DOUBLE_EQ(p.alpha, 25.0);
    EXPECT_DOUBLE_EQ(p.beta, 0.01);
    EXPECT_NEAR(p.mean_reliability(), 2500.0, 1e-9);
}

TEST(ModelParams, DiscreteDefaults)
{
    const auto p = DiscreteModelParams::uniform(4);
    ASSERT_EQ(p.q_grid.size(), 100u);
    EXPECT_DOUBLE_EQ(p.q_grid.front(), 0.0);
    EXPECT_DOUBLE_EQ(p.q_grid.back(), 16.0);
    EXPECT_EQ(p.num_scores(), 5u);
    for (double v : p.score_prior)
        EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(ModelParams, DiscreteValidation)
{
    auto p = DiscreteModelParams::uniform(4);
    p.q_grid = {0.0, 2.0, 2.0};
    EXPECT_THROW(p.validate(), ConfigError);
    p = DiscreteModelParams::uniform(4);
    p.score_prior = {0.5, 0.5, 0.1, 0.0, 0.0};
    EXPECT_THROW(p.validate(), ConfigError);
    p.score_prior = {0.5, 0.5};
    EXPECT_THROW(p.validate(), ConfigError);
    EXPECT_THROW(DiscreteModelParams::uniform(0), ConfigError);
}

TEST(Rounding, HalvesRoundUp)
{
    EXPECT_EQ(round_half_up(2.5), 3);
    EXPECT_EQ(round_half_up(2.49), 2);
    EXPECT_EQ(round_half_up(0.5), 1);
    EXPECT_EQ(round_half_up(3.0), 3);
}
