#pragma once

#include <peermech/assignment.hpp>
#include <peermech/errors.hpp>
#include <peermech/grades.hpp>
#include <peermech/model.hpp>
#include <peermech/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

namespace peermech {

using PaperScores = std::map<PaperId, double>;

namespace detail {

template <class Aggregate>
PaperScores aggregate_nonprobe(const AssignmentPlan& plan, const GradeMatrix& grades, Aggregate&& aggregate)
{
    PaperScores out;
    std::vector<double> values;
    for (PaperId j : plan.scored_papers()) {
        values.clear();
        for (GraderId i : plan.nonprobe_graders(j))
            values.push_back(grades.score(i, j));
        if (values.empty())
            throw DomainError("paper " + std::to_string(j) + " has no reports");
        out.emplace(j, aggregate(values));
    }
    return out;
}

} // namespace detail

inline double mean_of(std::span<const double> values)
{
    if (values.empty())
        throw DomainError("mean of an empty report set");
    double s = 0.0;
    for (double v : values)
        s += v;
    return s / static_cast<double>(values.size());
}

/// Median; for an even count the average of the two middle values.
inline double median_of(std::span<const double> values)
{
    if (values.empty())
        throw DomainError("median of an empty report set");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Arithmetic mean of the non-probe reports on each scored paper.
inline PaperScores mean_scores(const AssignmentPlan& plan, const GradeMatrix& grades)
{
    return detail::aggregate_nonprobe(plan, grades, [](const std::vector<double>& v) { return mean_of(v); });
}

inline PaperScores median_scores(const AssignmentPlan& plan, const GradeMatrix& grades)
{
    return detail::aggregate_nonprobe(plan, grades, [](const std::vector<double>& v) { return median_of(v); });
}

// ---------------------------------------------------------------------------
// Gibbs sampling

struct GibbsConfig {
    std::size_t total_iterations = 1000;
    std::size_t burn_in = 200;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (total_iterations < 1)
            throw ConfigError("gibbs: total_iterations must be >= 1");
        if (burn_in >= total_iterations)
            throw ConfigError("gibbs: burn_in must be < total_iterations");
    }
};

/// Non-probe edges in a compact adjacency form shared by both samplers.
struct GibbsGraph {
    std::vector<PaperId> papers;    // dense paper index -> paper id
    std::vector<GraderId> graders;  // dense grader index -> grader id
    struct Edge {
        std::size_t paper;
        std::size_t grader;
        double score;
    };
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> by_paper;  // edge indices
    std::vector<std::vector<std::size_t>> by_grader; // edge indices

    static GibbsGraph from_plan(const AssignmentPlan& plan, const GradeMatrix& grades)
    {
        GibbsGraph g;
        g.papers = plan.scored_papers();
        std::vector<std::size_t> grader_index(plan.num_graders(), std::numeric_limits<std::size_t>::max());
        for (GraderId i = 0; i < plan.num_graders(); ++i) {
            if (!plan.load(i).nonprobes.empty()) {
                grader_index[i] = g.graders.size();
                g.graders.push_back(i);
            }
        }
        g.by_paper.resize(g.papers.size());
        g.by_grader.resize(g.graders.size());
        for (std::size_t p = 0; p < g.papers.size(); ++p) {
            for (GraderId i : plan.nonprobe_graders(g.papers[p])) {
                const std::size_t e = g.edges.size();
                g.edges.push_back({p, grader_index[i], grades.score(i, g.papers[p])});
                g.by_paper[p].push_back(e);
                g.by_grader[grader_index[i]].push_back(e);
            }
        }
        return g;
    }
};

namespace detail {

/// Draws an index from unnormalized log weights.
inline std::size_t sample_log_weights(std::span<const double> logw, Rng& rng)
{
    double top = -std::numeric_limits<double>::infinity();
    for (double v : logw)
        top = std::max(top, v);
    double total = 0.0;
    for (double v : logw)
        total += std::exp(v - top);
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (std::size_t k = 0; k < logw.size(); ++k) {
        u -= std::exp(logw[k] - top);
        if (u < 0.0)
            return k;
    }
    // Round-off: fall back to the last index with positive weight.
    for (std::size_t k = logw.size(); k-- > 0;)
        if (std::isfinite(logw[k]))
            return k;
    return 0;
}

inline std::vector<double> normalize_log_weights(std::span<const double> logw)
{
    double top = -std::numeric_limits<double>::infinity();
    for (double v : logw)
        top = std::max(top, v);
    std::vector<double> p(logw.size());
    double total = 0.0;
    for (std::size_t k = 0; k < logw.size(); ++k) {
        p[k] = std::isfinite(logw[k]) ? std::exp(logw[k] - top) : 0.0;
        total += p[k];
    }
    for (double& v : p)
        v /= total;
    return p;
}

} // namespace detail

struct GibbsContinuousResult {
    PaperScores scores;
    double min_reliability_sample = std::numeric_limits<double>::infinity();
    bool bias_samples_finite = true;
};

/// Gibbs sampler for the bias/reliability model with conjugate full conditionals:
///   y_j | .   ~ N((gamma mu + sum tau_i (obs - b_i)) / (gamma + sum tau_i), 1 / (gamma + sum tau_i))
///   b_i | .   ~ N(tau_i sum (obs - y_j) / (eta + n_i tau_i), 1 / (eta + n_i tau_i))
///   tau_i | . ~ Gamma(alpha + n_i / 2, rate = beta + sum (obs - y_j - b_i)^2 / 2)
/// The score of each paper is the mean of y_j over iterations burn_in+1..T.
inline GibbsContinuousResult gibbs_continuous_detailed(const AssignmentPlan& plan, const GradeMatrix& grades,
                                                       const ContinuousModelParams& params, const GibbsConfig& cfg)
{
    params.validate();
    cfg.validate();
    const GibbsGraph g = GibbsGraph::from_plan(plan, grades);
    Rng rng(cfg.seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);

    std::vector<double> y(g.papers.size(), params.mu);
    std::vector<double> b(g.graders.size(), 0.0);
    std::vector<double> tau(g.graders.size(), params.alpha / params.beta);
    std::vector<double> y_sum(g.papers.size(), 0.0);

    GibbsContinuousResult result;
    for (std::size_t t = 1; t <= cfg.total_iterations; ++t) {
        for (std::size_t p = 0; p < y.size(); ++p) {
            double num = params.gamma * params.mu;
            double prec = params.gamma;
            for (std::size_t e : g.by_paper[p]) {
                const auto& edge = g.edges[e];
                num += tau[edge.grader] * (edge.score - b[edge.grader]);
                prec += tau[edge.grader];
            }
            y[p] = num / prec + std_normal(rng) / std::sqrt(prec);
        }
        for (std::size_t i = 0; i < b.size(); ++i) {
            double resid = 0.0;
            for (std::size_t e : g.by_grader[i])
                resid += g.edges[e].score - y[g.edges[e].paper];
            const double prec = params.eta + static_cast<double>(g.by_grader[i].size()) * tau[i];
            b[i] = tau[i] * resid / prec + std_normal(rng) / std::sqrt(prec);
            result.bias_samples_finite = result.bias_samples_finite && std::isfinite(b[i]);
        }
        for (std::size_t i = 0; i < tau.size(); ++i) {
            double ss = 0.0;
            for (std::size_t e : g.by_grader[i]) {
                const double r = g.edges[e].score - y[g.edges[e].paper] - b[i];
                ss += r * r;
            }
            const double shape = params.alpha + 0.5 * static_cast<double>(g.by_grader[i].size());
            const double rate = params.beta + 0.5 * ss;
            tau[i] = std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
            result.min_reliability_sample = std::min(result.min_reliability_sample, tau[i]);
        }
        if (t > cfg.burn_in)
            for (std::size_t p = 0; p < y.size(); ++p)
                y_sum[p] += y[p];
    }
    const double kept = static_cast<double>(cfg.total_iterations - cfg.burn_in);
    for (std::size_t p = 0; p < y.size(); ++p)
        result.scores.emplace(g.papers[p], y_sum[p] / kept);
    return result;
}

inline PaperScores gibbs_continuous(const AssignmentPlan& plan, const GradeMatrix& grades,
                                    const ContinuousModelParams& params, const GibbsConfig& cfg)
{
    return gibbs_continuous_detailed(plan, grades, params, cfg).scores;
}

// --- discrete ---------------------------------------------------------------

/// Observation and accuracy of one report on a paper, as seen by the y_j conditional.
struct ObservedAccuracy {
    int observed;
    double q;
};

/// Conditional of y_j over S: prior(k) * prod_i p(observed_i | k, q_i), normalized.
inline std::vector<double> discrete_score_conditional(std::span<const ObservedAccuracy> reports,
                                                      const DiscreteModelParams& params)
{
    std::vector<double> logw(params.num_scores());
    for (int k = 0; k <= params.m; ++k) {
        const double prior = params.score_prior[static_cast<std::size_t>(k)];
        double lw = prior > 0.0 ? std::log(prior) : -std::numeric_limits<double>::infinity();
        for (const auto& r : reports)
            lw += discrete_error_log_pmf(r.observed, k, r.q, params.m);
        logw[static_cast<std::size_t>(k)] = lw;
    }
    return detail::normalize_log_weights(logw);
}

/// Observation and current true-score sample for one report of a grader.
struct ObservedTruth {
    int observed;
    int truth;
};

/// Conditional of q_i over the grid (uniform prior over the grid):
/// prod_j p(observed_j | y_j, q), normalized.
inline std::vector<double> discrete_accuracy_conditional(std::span<const ObservedTruth> reports,
                                                         const DiscreteModelParams& params)
{
    std::vector<double> logw(params.q_grid.size(), 0.0);
    for (std::size_t k = 0; k < params.q_grid.size(); ++k)
        for (const auto& r : reports)
            logw[k] += discrete_error_log_pmf(r.observed, r.truth, params.q_grid[k], params.m);
    return detail::normalize_log_weights(logw);
}

struct GibbsDiscreteResult {
    PaperScores scores;
    /// Retained-sample counts per paper (dense paper order of `papers`) over S.
    std::vector<PaperId> papers;
    std::vector<std::vector<std::size_t>> score_counts;
};

/// Gibbs sampler for the discrete model. Alternates y_j given accuracies and
/// q_i given scores, starting from q_i uniform over the grid and y_j from the
/// score prior. The score of each paper is the mode of its retained samples
/// (ties to the smaller score).
inline GibbsDiscreteResult gibbs_discrete_detailed(const AssignmentPlan& plan, const GradeMatrix& grades,
                                                   const DiscreteModelParams& params, const GibbsConfig& cfg)
{
    params.validate();
    cfg.validate();
    const GibbsGraph g = GibbsGraph::from_plan(plan, grades);
    for (const auto& e : g.edges)
        if (std::floor(e.score) != e.score || !params.in_domain(static_cast<int>(e.score)))
            throw DomainError("gibbs_discrete: report outside {0.." + std::to_string(params.m) + "}");

    const std::size_t s = params.num_scores();
    const std::size_t nq = params.q_grid.size();
    // log p(obs | truth, q_k) lookup: [k][obs][truth]
    std::vector<double> table(nq * s * s);
    for (std::size_t k = 0; k < nq; ++k)
        for (std::size_t o = 0; o < s; ++o)
            for (std::size_t t = 0; t < s; ++t)
                table[(k * s + o) * s + t] =
                    discrete_error_log_pmf(static_cast<int>(o), static_cast<int>(t), params.q_grid[k], params.m);
    auto log_pmf = [&](std::size_t k, std::size_t o, std::size_t t) { return table[(k * s + o) * s + t]; };

    std::vector<double> log_prior(s);
    for (std::size_t y = 0; y < s; ++y)
        log_prior[y] = params.score_prior[y] > 0.0 ? std::log(params.score_prior[y]) : -std::numeric_limits<double>::infinity();

    Rng rng(cfg.seed);
    std::vector<std::size_t> q(g.graders.size());
    std::uniform_int_distribution<std::size_t> pick_q(0, nq - 1);
    for (auto& v : q)
        v = pick_q(rng);
    std::vector<std::size_t> y(g.papers.size());
    for (auto& v : y)
        v = detail::sample_log_weights(log_prior, rng);

    GibbsDiscreteResult result;
    result.papers = g.papers;
    result.score_counts.assign(g.papers.size(), std::vector<std::size_t>(s, 0));

    std::vector<double> logw_y(s), logw_q(nq);
    for (std::size_t t = 1; t <= cfg.total_iterations; ++t) {
        for (std::size_t p = 0; p < y.size(); ++p) {
            for (std::size_t k = 0; k < s; ++k) {
                double lw = log_prior[k];
                for (std::size_t e : g.by_paper[p])
                    lw += log_pmf(q[g.edges[e].grader], static_cast<std::size_t>(g.edges[e].score), k);
                logw_y[k] = lw;
            }
            y[p] = detail::sample_log_weights(logw_y, rng);
        }
        for (std::size_t i = 0; i < q.size(); ++i) {
            for (std::size_t k = 0; k < nq; ++k) {
                double lw = 0.0;
                for (std::size_t e : g.by_grader[i])
                    lw += log_pmf(k, static_cast<std::size_t>(g.edges[e].score), y[g.edges[e].paper]);
                logw_q[k] = lw;
            }
            q[i] = detail::sample_log_weights(logw_q, rng);
        }
        if (t > cfg.burn_in)
            for (std::size_t p = 0; p < y.size(); ++p)
                ++result.score_counts[p][y[p]];
    }
    for (std::size_t p = 0; p < y.size(); ++p) {
        const auto& c = result.score_counts[p];
        const auto mode = std::max_element(c.begin(), c.end()); // first maximum = smaller score
        result.scores.emplace(g.papers[p], static_cast<double>(mode - c.begin()));
    }
    return result;
}

inline PaperScores gibbs_discrete(const AssignmentPlan& plan, const GradeMatrix& grades,
                                  const DiscreteModelParams& params, const GibbsConfig& cfg)
{
    return gibbs_discrete_detailed(plan, grades, params, cfg).scores;
}

} // namespace peermech
