#pragma once

#include <peermech/assignment.hpp>
#include <peermech/baselines.hpp>
#include <peermech/errors.hpp>
#include <peermech/grades.hpp>
#include <peermech/model.hpp>
#include <peermech/random.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace peermech {

/// True scores and grader parameters of one synthetic cohort.
struct Population {
    AssignmentPlan plan;
    TrueScores truths;
    std::vector<BiasReliability> graders;
};

/// A population plus one draw of observations on every plan edge.
struct World {
    AssignmentPlan plan;
    TrueScores truths;
    std::vector<BiasReliability> graders;
    GradeMatrix observations;
};

struct CohortShape {
    std::size_t n = 50;
    std::size_t probes = 10;
    std::size_t k = 10;
};

/// y_j ~ N(mu, 1/gamma), b_i ~ N(0, 1/eta), tau_i ~ Gamma(alpha, rate beta), on a fresh plan.
inline Population sample_population(const CohortShape& shape, const ContinuousModelParams& gen, std::uint64_t seed)
{
    gen.validate();
    Population pop;
    pop.plan = build_assignment(shape.n, shape.probes, shape.k, derive_seed(seed, {stream::assignment}));
    Rng rng(derive_seed(seed, {stream::world}));
    std::normal_distribution<double> score(gen.mu, 1.0 / std::sqrt(gen.gamma));
    std::normal_distribution<double> bias(0.0, 1.0 / std::sqrt(gen.eta));
    std::gamma_distribution<double> reliability(gen.alpha, 1.0 / gen.beta);
    pop.truths.resize(shape.n);
    for (auto& y : pop.truths)
        y = score(rng);
    pop.graders.resize(shape.n);
    for (auto& g : pop.graders) {
        g.bias = bias(rng);
        g.reliability = reliability(rng);
    }
    return pop;
}

/// obs ~ N(y_j + b_i, 1/tau_i) on every edge. An infinite reliability gives y_j + b_i exactly.
inline GradeMatrix sample_observations(const AssignmentPlan& plan, const TrueScores& truths,
                                       const std::vector<BiasReliability>& graders, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    GradeMatrix obs;
    for (const PlanEdge& e : plan.edges()) {
        const BiasReliability& g = graders.at(e.grader);
        const double z = noise(rng);
        const double sd = std::isinf(g.reliability) ? 0.0 : 1.0 / std::sqrt(g.reliability);
        obs.set(e.grader, e.paper, truths.at(e.paper) + g.bias + sd * z, e.probe);
    }
    return obs;
}

inline World generate_world(const CohortShape& shape, const ContinuousModelParams& gen, std::uint64_t seed)
{
    Population pop = sample_population(shape, gen, seed);
    GradeMatrix obs = sample_observations(pop.plan, pop.truths, pop.graders, derive_seed(seed, {stream::observations}));
    return {std::move(pop.plan), std::move(pop.truths), std::move(pop.graders), std::move(obs)};
}

// ---------------------------------------------------------------------------
// Reporting behaviour

enum class GraderBehavior {
    Truthful,
    /// Report min(observed, own true score): never rate a peer above oneself.
    Strategic,
};

inline double strategic_report(double observed, double own_score) noexcept
{
    return observed > own_score ? own_score : observed;
}

/// Turns observations into reports. Observations are left untouched.
inline GradeMatrix apply_behavior(const GradeMatrix& observations, const TrueScores& truths, GraderBehavior behavior)
{
    if (behavior == GraderBehavior::Truthful)
        return observations;
    GradeMatrix out;
    for (const auto& [key, entry] : observations) {
        if (key.first >= truths.size())
            throw DomainError("strategic behaviour needs the true score of grader " + std::to_string(key.first));
        out.set(key.first, key.second, strategic_report(entry.score, truths[key.first]), entry.probe);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Unilateral deviations used by the incentive audit

enum class Deviation {
    Truthful,
    /// Report the prior mean on every non-probe paper.
    ConstantPrior,
    /// The strategic own-score cap.
    OwnScore,
    /// Uniform noise over mu +- 2 prior standard deviations.
    UniformNoise,
};

inline std::string_view to_string(Deviation d) noexcept
{
    switch (d) {
    case Deviation::Truthful: return "truthful";
    case Deviation::ConstantPrior: return "constant";
    case Deviation::OwnScore: return "own-score";
    case Deviation::UniformNoise: return "uniform-noise";
    }
    return "unknown";
}

inline Deviation parse_deviation(std::string_view s)
{
    if (s == "truthful")
        return Deviation::Truthful;
    if (s == "constant")
        return Deviation::ConstantPrior;
    if (s == "own-score")
        return Deviation::OwnScore;
    if (s == "uniform-noise")
        return Deviation::UniformNoise;
    throw ConfigError("unknown deviation strategy '" + std::string(s) + "'");
}

/// Rewrites `grader`'s non-probe reports according to `deviation`; probe reports stay truthful.
inline void apply_deviation(GradeMatrix& grades, const AssignmentPlan& plan, GraderId grader, Deviation deviation,
                            const TrueScores& truths, double prior_mu, double prior_gamma, std::uint64_t seed)
{
    Rng rng(seed);
    const double half_width = 2.0 / std::sqrt(prior_gamma);
    std::uniform_real_distribution<double> uniform(prior_mu - half_width, prior_mu + half_width);
    for (PaperId j : plan.load(grader).nonprobes) {
        const double observed = grades.score(grader, j);
        switch (deviation) {
        case Deviation::Truthful: break;
        case Deviation::ConstantPrior: grades.update_score(grader, j, prior_mu); break;
        case Deviation::OwnScore: grades.update_score(grader, j, strategic_report(observed, truths.at(grader))); break;
        case Deviation::UniformNoise: grades.update_score(grader, j, uniform(rng)); break;
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics

/// When does a paper come back for regrading?
struct RegradeRule {
    enum class Kind { Threshold, RoundedMismatch } kind = Kind::Threshold;
    double threshold = 0.005;

    static RegradeRule absolute(double threshold)
    {
        if (!(threshold > 0.0))
            throw ConfigError("regrade threshold must be > 0");
        return {Kind::Threshold, threshold};
    }
    /// Discrete scores: regrade iff the score rounded to the nearest integer (halves up) differs from the truth.
    static RegradeRule rounded() { return {Kind::RoundedMismatch, 0.0}; }

    bool regrade(double given, double truth) const noexcept
    {
        if (kind == Kind::RoundedMismatch)
            return round_half_up(given) != round_half_up(truth);
        return std::abs(given - truth) >= threshold;
    }
};

struct ScoreMetrics {
    double rmse = 0.0;
    double regrade_fraction = 0.0;
    /// Sum of squared errors: the total rechecking cost under quadratic cost.
    double total_cost = 0.0;
};

inline ScoreMetrics compute_metrics(const PaperScores& scores, const TrueScores& truths, const RegradeRule& rule)
{
    if (scores.empty())
        throw InputError("compute_metrics: no scored papers");
    ScoreMetrics m;
    std::size_t regrades = 0;
    for (const auto& [paper, x] : scores) {
        if (paper >= truths.size())
            throw InputError("compute_metrics: no true score for paper " + std::to_string(paper));
        const double d = x - truths[paper];
        m.total_cost += d * d;
        if (rule.regrade(x, truths[paper]))
            ++regrades;
    }
    const double count = static_cast<double>(scores.size());
    m.rmse = std::sqrt(m.total_cost / count);
    m.regrade_fraction = static_cast<double>(regrades) / count;
    return m;
}

/// Same as above for parallel score/truth vectors.
inline ScoreMetrics compute_metrics(std::span<const double> scores, std::span<const double> truths, const RegradeRule& rule)
{
    if (scores.size() != truths.size())
        throw InputError("compute_metrics: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(truths.size()) + " truths");
    PaperScores s;
    for (PaperId j = 0; j < scores.size(); ++j)
        s.emplace(j, scores[j]);
    return compute_metrics(s, TrueScores(truths.begin(), truths.end()), rule);
}

/// Mean and 95% normal-approximation half-width of a sample.
struct MeanCi {
    double mean = 0.0;
    double halfwidth = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

inline MeanCi mean_ci(std::span<const double> values)
{
    MeanCi r;
    r.count = values.size();
    if (values.empty())
        return r;
    // shifted by the first value so a constant sample gives exactly that value and zero spread
    const double origin = values.front();
    double s = 0.0;
    for (double v : values)
        s += v - origin;
    const double shift = s / static_cast<double>(values.size());
    r.mean = origin + shift;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values)
            ss += (v - origin - shift) * (v - origin - shift);
        const double var = ss / static_cast<double>(values.size() - 1);
        r.std_error = std::sqrt(var / static_cast<double>(values.size()));
        r.halfwidth = 1.96 * r.std_error;
    }
    return r;
}

} // namespace peermech
