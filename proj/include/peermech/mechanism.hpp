#pragma once

#include <peermech/assignment.hpp>
#include <peermech/errors.hpp>
#include <peermech/estimation.hpp>
#include <peermech/grades.hpp>
#include <peermech/model.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace peermech {

/// A report on one paper together with the reporting grader's estimated accuracy.
template <class Accuracy>
struct PaperReport {
    GraderId grader;
    double score;
    Accuracy accuracy;
};

// ---------------------------------------------------------------------------
// Continuous scoring: the posterior of y given debiased reports is Gaussian and
// the expected-reward maximizer under quadratic reward is its mean.

struct ContinuousPrior {
    double mu = 1.0;
    double gamma = 16.0;
};

/// Posterior mean (gamma mu + sum tau_i (y_i - b_i)) / (gamma + sum tau_i).
/// An empty report set yields the prior mean.
template <class Range>
double posterior_mean_continuous(const Range& reports, const ContinuousPrior& prior)
{
    double num = prior.gamma * prior.mu;
    double den = prior.gamma;
    for (const auto& r : reports) {
        num += r.accuracy.reliability * (r.score - r.accuracy.bias);
        den += r.accuracy.reliability;
    }
    return num / den;
}

inline double erm_score_continuous(std::span<const PaperReport<BiasReliability>> reports, const ContinuousPrior& prior)
{
    if (reports.empty())
        throw DomainError("erm_score_continuous: paper has no reports");
    for (const auto& r : reports) {
        if (!std::isfinite(r.score) || !std::isfinite(r.accuracy.bias))
            throw DomainError("erm_score_continuous: non-finite report");
        if (!(r.accuracy.reliability > 0.0))
            throw DomainError("erm_score_continuous: reliability must be positive");
    }
    return posterior_mean_continuous(reports, prior);
}

// ---------------------------------------------------------------------------
// Discrete scoring: posterior weights prior(y) * prod_i exp(-q_i |y - y_i| / m),
// score = argmin_x sum_y w(y) (x - y)^2 over x in S.

/// Normalized posterior weights over S from the exponential-distance kernel.
template <class Range>
std::vector<double> posterior_weights_discrete(const Range& reports, const DiscreteModelParams& params)
{
    const std::size_t s = params.num_scores();
    const double m = static_cast<double>(params.m);
    std::vector<double> logw(s, -std::numeric_limits<double>::infinity());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t y = 0; y < s; ++y) {
        if (params.score_prior[y] <= 0.0)
            continue;
        double lw = std::log(params.score_prior[y]);
        for (const auto& r : reports)
            lw -= r.accuracy.q * std::abs(static_cast<double>(y) - r.score) / m;
        logw[y] = lw;
        top = std::max(top, lw);
    }
    std::vector<double> w(s, 0.0);
    double total = 0.0;
    for (std::size_t y = 0; y < s; ++y) {
        if (std::isfinite(logw[y]))
            w[y] = std::exp(logw[y] - top);
        total += w[y];
    }
    for (double& v : w)
        v /= total;
    return w;
}

/// Integer minimizing expected squared loss under `weights`; ties go to the smaller score.
inline int argmin_expected_loss(std::span<const double> weights)
{
    int best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < weights.size(); ++x) {
        double loss = 0.0;
        for (std::size_t y = 0; y < weights.size(); ++y) {
            const double d = static_cast<double>(x) - static_cast<double>(y);
            loss += weights[y] * d * d;
        }
        if (loss < best_loss) {
            best_loss = loss;
            best = static_cast<int>(x);
        }
    }
    return best;
}

inline void check_discrete_reports(std::span<const PaperReport<DiscreteAccuracy>> reports, const DiscreteModelParams& params)
{
    for (const auto& r : reports) {
        if (std::floor(r.score) != r.score || !params.in_domain(static_cast<int>(r.score)))
            throw DomainError("discrete report outside {0.." + std::to_string(params.m) + "}");
        if (!(r.accuracy.q >= 0.0) || !std::isfinite(r.accuracy.q))
            throw DomainError("discrete accuracy must be finite and >= 0");
    }
}

inline int erm_score_discrete(std::span<const PaperReport<DiscreteAccuracy>> reports, const DiscreteModelParams& params)
{
    if (reports.empty())
        throw DomainError("erm_score_discrete: paper has no reports");
    check_discrete_reports(reports, params);
    const auto w = posterior_weights_discrete(reports, params);
    return argmin_expected_loss(w);
}

// ---------------------------------------------------------------------------
// Scoring-model policies used by run_trupeqa.

template <class M>
concept ScoringModel = requires(const M& m, std::span<const ProbePair> probes,
                                std::span<const PaperReport<typename M::Accuracy>> reports) {
    typename M::Accuracy;
    { m.estimate(probes) } -> std::same_as<typename M::Accuracy>;
    { m.score(reports) } -> std::same_as<double>;
};

class ContinuousScoring {
public:
    using Accuracy = BiasReliability;

    explicit ContinuousScoring(ContinuousPrior prior) : prior_(prior)
    {
        if (!(prior.gamma > 0.0) || !std::isfinite(prior.mu))
            throw ConfigError("continuous prior: gamma must be > 0 and mu finite");
    }

    const ContinuousPrior& prior() const noexcept { return prior_; }

    Accuracy estimate(std::span<const ProbePair> probes) const { return estimate_continuous(probes); }

    /// ERM score; with no reports this is the prior-only decision mu.
    double score(std::span<const PaperReport<Accuracy>> reports) const
    {
        return reports.empty() ? prior_.mu : erm_score_continuous(reports, prior_);
    }

private:
    ContinuousPrior prior_;
};

class DiscreteScoring {
public:
    using Accuracy = DiscreteAccuracy;

    explicit DiscreteScoring(DiscreteModelParams params) : params_(std::move(params)) { params_.validate(); }

    const DiscreteModelParams& params() const noexcept { return params_; }

    Accuracy estimate(std::span<const ProbePair> probes) const { return estimate_discrete(probes, params_); }

    double score(std::span<const PaperReport<Accuracy>> reports) const
    {
        check_discrete_reports(reports, params_);
        return static_cast<double>(argmin_expected_loss(posterior_weights_discrete(reports, params_)));
    }

private:
    DiscreteModelParams params_;
};

static_assert(ScoringModel<ContinuousScoring>);
static_assert(ScoringModel<DiscreteScoring>);

// ---------------------------------------------------------------------------
// Transfers

/// W*_j - W^(-i)*_j: reward of the ERM score with every report minus the reward
/// of the ERM score computed without `excluded`. Falls back to the prior-only
/// decision when `excluded` is the only grader.
template <ScoringModel Model>
double transfer_for_paper(std::span<const PaperReport<typename Model::Accuracy>> reports, const Model& model,
                          double true_score, GraderId excluded)
{
    using Report = PaperReport<typename Model::Accuracy>;
    const auto it = std::find_if(reports.begin(), reports.end(), [&](const Report& r) { return r.grader == excluded; });
    if (it == reports.end())
        throw DomainError("transfer_for_paper: grader " + std::to_string(excluded) + " did not grade this paper");
    std::vector<Report> without;
    without.reserve(reports.size());
    for (const Report& r : reports)
        if (r.grader != excluded)
            without.push_back(r);
    const double with_all = model.score(reports);
    const double without_i = model.score(std::span<const Report>(without));
    return reward(with_all, true_score) - reward(without_i, true_score);
}

// ---------------------------------------------------------------------------
// End to end

template <class Accuracy>
struct MechanismOutcome {
    /// Estimated accuracy per grader; empty for graders with no probe papers.
    std::vector<std::optional<Accuracy>> accuracies;
    /// Score x_j for every scored (non-probe) paper.
    std::map<PaperId, double> scores;
    /// t_i per grader (zero for graders without non-probe papers).
    std::vector<double> transfers;
    /// W*_j - W^(-i)*_j per (grader, paper) non-probe edge.
    std::map<std::pair<GraderId, PaperId>, double> per_paper_transfers;
};

/// Throws InputError listing every plan edge without a grade, and every grade off the plan.
inline void check_grades_cover_plan(const AssignmentPlan& plan, const GradeMatrix& grades)
{
    std::string missing;
    std::size_t missing_count = 0;
    for (const PlanEdge& e : plan.edges()) {
        const GradeEntry* g = grades.find(e.grader, e.paper);
        if (g == nullptr || g->probe != e.probe) {
            ++missing_count;
            missing += " (" + std::to_string(e.grader) + "," + std::to_string(e.paper) + ")";
        }
    }
    if (missing_count > 0)
        throw InputError("missing grades for " + std::to_string(missing_count) + " edge(s):" + missing);
    if (grades.size() != plan.num_edges()) {
        std::string extra;
        for (const auto& [key, entry] : grades) {
            const auto& gs = plan.graders(key.second);
            if (key.second >= plan.num_papers() || !std::binary_search(gs.begin(), gs.end(), key.first))
                extra += " (" + std::to_string(key.first) + "," + std::to_string(key.second) + ")";
        }
        throw InputError("grades outside the assignment:" + extra);
    }
}

/// Collects probe pairs of one grader.
inline std::vector<ProbePair> probe_pairs(const AssignmentPlan& plan, const GradeMatrix& grades, const TrueScores& truths,
                                          GraderId grader)
{
    std::vector<ProbePair> out;
    for (PaperId j : plan.load(grader).probes)
        out.push_back({grades.score(grader, j), truths.at(j)});
    return out;
}

template <ScoringModel Model>
std::vector<std::optional<typename Model::Accuracy>> estimate_accuracies(const AssignmentPlan& plan,
                                                                         const GradeMatrix& grades,
                                                                         const TrueScores& truths, const Model& model)
{
    std::vector<std::optional<typename Model::Accuracy>> acc(plan.num_graders());
    for (GraderId i = 0; i < plan.num_graders(); ++i) {
        const GraderLoad& l = plan.load(i);
        if (l.probes.empty()) {
            if (!l.nonprobes.empty())
                throw EstimationError("grader " + std::to_string(i) + " has non-probe papers but no probe papers");
            continue;
        }
        const auto pairs = probe_pairs(plan, grades, truths, i);
        acc[i] = model.estimate(pairs);
    }
    return acc;
}

/// Non-probe reports on paper j with the graders' accuracies attached.
template <class Accuracy>
std::vector<PaperReport<Accuracy>> paper_reports(const AssignmentPlan& plan, const GradeMatrix& grades,
                                                 const std::vector<std::optional<Accuracy>>& accuracies, PaperId j)
{
    std::vector<PaperReport<Accuracy>> out;
    for (GraderId i : plan.nonprobe_graders(j))
        out.push_back({i, grades.score(i, j), *accuracies.at(i)});
    return out;
}

/// Full mechanism: estimate accuracies from probe reports only, score every
/// non-probe paper from non-probe reports only, and pay each grader the sum of
/// their per-paper marginal contributions.
template <ScoringModel Model>
MechanismOutcome<typename Model::Accuracy> run_trupeqa(const AssignmentPlan& plan, const GradeMatrix& grades,
                                                        const TrueScores& truths, const Model& model)
{
    using Accuracy = typename Model::Accuracy;
    using Report = PaperReport<Accuracy>;
    check_grades_cover_plan(plan, grades);
    if (truths.size() != plan.num_papers())
        throw InputError("true scores cover " + std::to_string(truths.size()) + " papers, plan has " +
                         std::to_string(plan.num_papers()));

    MechanismOutcome<Accuracy> out;
    out.accuracies = estimate_accuracies(plan, grades, truths, model);
    out.transfers.assign(plan.num_graders(), 0.0);

    std::vector<Report> without;
    for (PaperId j : plan.scored_papers()) {
        const auto reports = paper_reports(plan, grades, out.accuracies, j);
        const double x = model.score(std::span<const Report>(reports));
        out.scores.emplace(j, x);
        const double w_all = reward(x, truths[j]);
        for (const Report& r : reports) {
            without.clear();
            for (const Report& other : reports)
                if (other.grader != r.grader)
                    without.push_back(other);
            const double x_without = model.score(std::span<const Report>(without));
            out.per_paper_transfers.emplace(std::pair{r.grader, j}, w_all - reward(x_without, truths[j]));
        }
    }
    // Sum in canonical (grader, paper) order.
    for (const auto& [key, t] : out.per_paper_transfers)
        out.transfers[key.first] += t;
    return out;
}

} // namespace peermech
