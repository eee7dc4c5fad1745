#pragma once

#include <peermech/errors.hpp>
#include <peermech/model.hpp>

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace peermech {

/// One probe observation: what the grader reported and the staff-assigned truth.
struct ProbePair {
    double reported;
    double truth;
};

/// Maximum-likelihood (bias, reliability) from probe pairs:
/// bias = mean(reported - truth), reliability = |P| / sum (reported - truth - bias)^2,
/// clamped to tau_cap.
inline BiasReliability estimate_continuous(std::span<const ProbePair> pairs)
{
    if (pairs.size() < 2)
        throw EstimationError("estimate_continuous: need at least 2 probe pairs, got " + std::to_string(pairs.size()));
    double sum = 0.0;
    for (const ProbePair& p : pairs) {
        if (!std::isfinite(p.reported) || !std::isfinite(p.truth))
            throw DomainError("estimate_continuous: non-finite score");
        sum += p.reported - p.truth;
    }
    const double count = static_cast<double>(pairs.size());
    const double bias = sum / count;
    double ss = 0.0;
    for (const ProbePair& p : pairs) {
        const double r = p.reported - p.truth - bias;
        ss += r * r;
    }
    double tau = ss > 0.0 ? count / ss : std::numeric_limits<double>::infinity();
    if (!(tau <= tau_cap))
        tau = tau_cap;
    return {bias, tau};
}

/// log prod_j p(reported_j | truth_j, q) under the discrete error model.
inline double discrete_log_likelihood(std::span<const ProbePair> pairs, double q, int m)
{
    double ll = 0.0;
    for (const ProbePair& p : pairs)
        ll += discrete_error_log_pmf(static_cast<int>(p.reported), static_cast<int>(p.truth), q, m);
    return ll;
}

/// Grid point of q maximizing the probe likelihood; ties go to the smaller q.
inline DiscreteAccuracy estimate_discrete(std::span<const ProbePair> pairs, const DiscreteModelParams& params)
{
    if (pairs.empty())
        throw EstimationError("estimate_discrete: no probe pairs");
    for (const ProbePair& p : pairs) {
        const bool integral = std::floor(p.reported) == p.reported && std::floor(p.truth) == p.truth;
        if (!integral || !params.in_domain(static_cast<int>(p.reported)) || !params.in_domain(static_cast<int>(p.truth)))
            throw DomainError("estimate_discrete: score outside {0.." + std::to_string(params.m) + "}");
    }
    // The likelihood only depends on the multiset of (reported, truth); summing
    // a sorted count table keeps the result independent of pair order.
    const std::size_t s = params.num_scores();
    std::vector<int> counts(s * s, 0);
    for (const ProbePair& p : pairs)
        ++counts[static_cast<std::size_t>(p.reported) * s + static_cast<std::size_t>(p.truth)];

    double best_q = params.q_grid.front();
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double q : params.q_grid) {
        double ll = 0.0;
        for (std::size_t r = 0; r < s; ++r)
            for (std::size_t t = 0; t < s; ++t)
                if (counts[r * s + t] != 0)
                    ll += counts[r * s + t] *
                          discrete_error_log_pmf(static_cast<int>(r), static_cast<int>(t), q, params.m);
        if (ll > best_ll) {
            best_ll = ll;
            best_q = q;
        }
    }
    return {best_q};
}

} // namespace peermech
