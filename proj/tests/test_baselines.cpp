#include <peermech/baselines.hpp>
#include <peermech/simulation.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"

using namespace peermech;

namespace {

/// Plan where every grader grades every paper as non-probe (separate id spaces).
AssignmentPlan all_grade_all(std::size_t graders, std::size_t papers)
{
    std::vector<GraderLoad> loads(graders);
    for (auto& l : loads)
        for (PaperId j = 0; j < papers; ++j)
            l.nonprobes.push_back(j);
    return AssignmentPlan(papers, loads, {}, 0, false);
}

/// One paper graded by the given reports.
std::pair<AssignmentPlan, GradeMatrix> single_paper(const std::vector<double>& reports)
{
    const auto plan = all_grade_all(reports.size(), 1);
    GradeMatrix g;
    for (GraderId i = 0; i < reports.size(); ++i)
        g.set(i, 0, reports[i], false);
    return {plan, g};
}

} // namespace

TEST(MeanMedian, Examples)
{
    EXPECT_DOUBLE_EQ(mean_of(std::vector<double>{1.0, 1.2}), 1.1);
    EXPECT_DOUBLE_EQ(mean_of(std::vector<double>{0.9}), 0.9);
    EXPECT_NEAR(mean_of(std::vector<double>{0, 1, 4}), 5.0 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(median_of(std::vector<double>{1.0, 1.2, 2.0}), 1.2);
    EXPECT_DOUBLE_EQ(median_of(std::vector<double>{1.0, 1.2}), 1.1);
    EXPECT_DOUBLE_EQ(median_of(std::vector<double>{0, 1, 4, 4}), 2.5);
    EXPECT_THROW(mean_of(std::vector<double>{}), DomainError);
    EXPECT_THROW(median_of(std::vector<double>{}), DomainError);
}

TEST(MeanMedian, PlanLevel)
{
    const auto [plan, g] = single_paper({0.0, 1.0, 4.0, 4.0});
    EXPECT_DOUBLE_EQ(mean_scores(plan, g).at(0), 2.25);
    EXPECT_DOUBLE_EQ(median_scores(plan, g).at(0), 2.5);
}

TEST(MeanMedian, IgnoreProbeReports)
{
    std::vector<GraderLoad> loads(3);
    loads[0] = {{1}, {0}};
    loads[1] = {{0}, {}};
    loads[2] = {{}, {0}};
    const AssignmentPlan plan(2, loads, {}, 0, false);
    GradeMatrix g;
    g.set(0, 1, 100.0, true);
    g.set(0, 0, 1.0, false);
    g.set(1, 0, 50.0, true);
    g.set(2, 0, 2.0, false);
    const auto m = mean_scores(plan, g);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_DOUBLE_EQ(m.at(0), 1.5);
}

TEST(MeanMedian, PermutationInvariantAndTranslationEquivariant)
{
    std::vector<double> r{0.3, 1.9, 1.1, 0.7, 1.4};
    const double mean = mean_of(r), median = median_of(r);
    std::reverse(r.begin(), r.end());
    EXPECT_DOUBLE_EQ(mean_of(r), mean);
    EXPECT_DOUBLE_EQ(median_of(r), median);
    for (double& v : r)
        v += 0.25;
    EXPECT_NEAR(mean_of(r), mean + 0.25, 1e-14);
    EXPECT_NEAR(median_of(r), median + 0.25, 1e-14);
}

TEST(GibbsConfig, Validation)
{
    EXPECT_THROW((GibbsConfig{0, 0, 1}.validate()), ConfigError);
    EXPECT_THROW((GibbsConfig{10, 10, 1}.validate()), ConfigError);
    EXPECT_NO_THROW((GibbsConfig{10, 9, 1}.validate()));
}

TEST(GibbsContinuous, DegenerateNoiseRecoversTruth)
{
    // Precise graders with small biases: the posterior on y concentrates near truth.
    const auto gen = ContinuousModelParams::with_reliability_mean(1.0, 16.0, 400.0, 1e6, 400.0);
    World w = generate_world({30, 6, 8}, gen, 2);
    const auto res = gibbs_continuous_detailed(w.plan, w.observations, gen, {2000, 500, 7});
    for (const auto& [j, x] : res.scores) {
        // a common shift of y and b is only pinned down by the bias prior
        EXPECT_LT(std::abs(x - w.truths[j]), 2.0 / std::sqrt(gen.eta));
    }
}

TEST(GibbsContinuous, DeterministicAndWellBehaved)
{
    const ContinuousModelParams gen{};
    const World w = generate_world({20, 5, 6}, gen, 9);
    const auto a = gibbs_continuous_detailed(w.plan, w.observations, gen, {300, 100, 42});
    const auto b = gibbs_continuous_detailed(w.plan, w.observations, gen, {300, 100, 42});
    EXPECT_EQ(a.scores, b.scores);
    EXPECT_GT(a.min_reliability_sample, 0.0);
    EXPECT_TRUE(a.bias_samples_finite);
    const auto c = gibbs_continuous(w.plan, w.observations, gen, {300, 100, 43});
    EXPECT_NE(a.scores, c);
}

TEST(GibbsContinuous, MatchesQuadratureOnMicroInstance)
{
    const ContinuousModelParams p{1.0, 16.0, 100.0, 25.0, 25.0 / 100.0};
    const std::vector<std::array<double, 2>> obs{{1.12, 0.95}, {0.71, 0.62}, {1.30, 1.41}};
    const auto plan = all_grade_all(2, 3);
    GradeMatrix g;
    for (PaperId j = 0; j < 3; ++j)
        for (GraderId i = 0; i < 2; ++i)
            g.set(i, j, obs[j][i], false);
    const auto exact = oracle::continuous_posterior_means(obs, {p.mu, p.gamma, p.eta, p.alpha, p.beta}, 41, 41);
    const auto gibbs = gibbs_continuous(plan, g, p, {60000, 2000, 11});
    for (PaperId j = 0; j < 3; ++j)
        EXPECT_NEAR(gibbs.at(j), exact[j], 0.02) << "paper " << j;
}

TEST(GibbsDiscrete, ConditionalsNormalizeAndReduceToPrior)
{
    auto params = DiscreteModelParams::uniform(4);
    params.score_prior = {0.1, 0.2, 0.3, 0.25, 0.15};
    const std::vector<ObservedAccuracy> flat{{0, 0.0}, {4, 0.0}, {2, 0.0}};
    const auto c0 = discrete_score_conditional(flat, params);
    for (std::size_t k = 0; k < 5; ++k)
        EXPECT_NEAR(c0[k], params.score_prior[k], 1e-15);

    const std::vector<ObservedAccuracy> some{{1, 3.0}, {2, 12.0}, {4, 0.5}};
    const auto c1 = discrete_score_conditional(some, params);
    double s = 0.0;
    for (double v : c1) {
        EXPECT_GE(v, 0.0);
        s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);

    const std::vector<ObservedTruth> obs{{1, 2}, {3, 3}, {0, 0}};
    const auto cq = discrete_accuracy_conditional(obs, params);
    EXPECT_EQ(cq.size(), 100u);
    s = 0.0;
    for (double v : cq) {
        EXPECT_GE(v, 0.0);
        s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(GibbsDiscrete, MatchesEnumerationOnMicroInstance)
{
    const auto params = DiscreteModelParams::uniform(4);
    const int obs[2][2] = {{3, 1}, {4, 2}}; // obs[grader][paper]
    const auto plan = all_grade_all(2, 2);
    GradeMatrix g;
    for (GraderId i = 0; i < 2; ++i)
        for (PaperId j = 0; j < 2; ++j)
            g.set(i, j, obs[i][j], false);
    const auto exact = oracle::discrete_joint_marginals(obs, params.score_prior, params.q_grid, 4);
    const auto res = gibbs_discrete_detailed(plan, g, params, {40000, 2000, 3});
    for (std::size_t p = 0; p < 2; ++p) {
        const auto& counts = res.score_counts[p];
        double total = 0.0;
        for (auto c : counts)
            total += static_cast<double>(c);
        double tv = 0.0;
        for (std::size_t k = 0; k < 5; ++k)
            tv += std::abs(static_cast<double>(counts[k]) / total - exact[p][k]);
        EXPECT_LE(0.5 * tv, 0.05) << "paper " << p;
    }
}

TEST(GibbsDiscrete, ModeAndDeterminism)
{
    const auto params = DiscreteModelParams::uniform(4);
    const auto plan = all_grade_all(3, 4);
    GradeMatrix g;
    for (GraderId i = 0; i < 3; ++i)
        for (PaperId j = 0; j < 4; ++j)
            g.set(i, j, static_cast<double>(j), false);
    const auto a = gibbs_discrete_detailed(plan, g, params, {500, 100, 1});
    const auto b = gibbs_discrete_detailed(plan, g, params, {500, 100, 1});
    EXPECT_EQ(a.scores, b.scores);
    EXPECT_EQ(a.score_counts, b.score_counts);
    for (std::size_t p = 0; p < 4; ++p) {
        const auto& c = a.score_counts[p];
        const auto mode = std::max_element(c.begin(), c.end()) - c.begin();
        EXPECT_EQ(a.scores.at(a.papers[p]), static_cast<double>(mode));
    }
    // unanimous graders: the mode is the agreed score
    for (PaperId j = 0; j < 4; ++j)
        EXPECT_EQ(a.scores.at(j), static_cast<double>(j));
}

TEST(GibbsDiscrete, RejectsOutOfDomainReports)
{
    const auto params = DiscreteModelParams::uniform(4);
    const auto [plan, g] = single_paper({1.0, 5.0});
    EXPECT_THROW(gibbs_discrete(plan, g, params, {10, 1, 0}), DomainError);
}
