#pragma once

#include <peermech/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

namespace peermech {

using GraderId = std::uint32_t;
using PaperId = std::uint32_t;

/// Reliability estimates are clamped here; zero probe residuals would
/// otherwise give an infinite precision.
inline constexpr double tau_cap = 1e8;

/// Reward of giving score x to a paper whose true score is y.
inline double reward(double x, double y) noexcept
{
    const double d = x - y;
    return -d * d;
}

// ---------------------------------------------------------------------------
// Continuous model: y ~ N(mu, 1/gamma), b ~ N(0, 1/eta), tau ~ Gamma(alpha, beta),
// observation ~ N(y + b, 1/tau).

struct ContinuousModelParams {
    double mu = 1.0;
    double gamma = 16.0;
    double eta = 400.0;
    double alpha = 25.0;
    double beta = 25.0 / 2500.0; // rate

    void validate() const
    {
        if (!std::isfinite(mu))
            throw ConfigError("continuous model: mu must be finite");
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw ConfigError("continuous model: gamma must be > 0");
        if (!(eta > 0.0) || !std::isfinite(eta))
            throw ConfigError("continuous model: eta must be > 0");
        if (!(alpha > 0.0) || !std::isfinite(alpha))
            throw ConfigError("continuous model: alpha must be > 0");
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw ConfigError("continuous model: beta must be > 0");
    }

    double mean_reliability() const noexcept { return alpha / beta; }

    /// Gamma prior with the given mean and shape (rate = shape / mean).
    static ContinuousModelParams with_reliability_mean(double mu, double gamma, double eta,
                                                       double reliability_mean, double shape = 25.0)
    {
        ContinuousModelParams p{mu, gamma, eta, shape, shape / reliability_mean};
        p.validate();
        return p;
    }
};

/// Bias and reliability (precision) of one grader.
struct BiasReliability {
    double bias = 0.0;
    double reliability = 1.0;

    friend bool operator==(const BiasReliability&, const BiasReliability&) = default;
};

// ---------------------------------------------------------------------------
// Discrete model: S = {0..m}, accuracy q on a finite grid,
// p(obs | y, q) proportional to exp(-q |obs - y| / m).

inline std::vector<double> linspace(double lo, double hi, std::size_t count)
{
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k)
        out[k] = lo + step * static_cast<double>(k);
    out.back() = hi;
    return out;
}

struct DiscreteModelParams {
    int m = 4;
    std::vector<double> q_grid;
    std::vector<double> score_prior;

    /// Uniform prior over S and a uniform grid of `grid_points` values in [0, q_max].
    static DiscreteModelParams uniform(int m, std::size_t grid_points = 100, double q_max = 16.0)
    {
        if (m < 1)
            throw ConfigError("discrete model: m must be >= 1");
        DiscreteModelParams p;
        p.m = m;
        p.q_grid = linspace(0.0, q_max, grid_points);
        p.score_prior.assign(static_cast<std::size_t>(m) + 1, 1.0 / static_cast<double>(m + 1));
        p.validate();
        return p;
    }

    std::size_t num_scores() const noexcept { return static_cast<std::size_t>(m) + 1; }

    void validate() const
    {
        if (m < 1)
            throw ConfigError("discrete model: m must be >= 1");
        if (q_grid.empty())
            throw ConfigError("discrete model: q_grid is empty");
        for (std::size_t k = 0; k < q_grid.size(); ++k) {
            if (!(q_grid[k] >= 0.0) || !std::isfinite(q_grid[k]))
                throw ConfigError("discrete model: q_grid values must be finite and >= 0");
            if (k > 0 && !(q_grid[k] > q_grid[k - 1]))
                throw ConfigError("discrete model: q_grid must be strictly increasing");
        }
        if (score_prior.size() != num_scores())
            throw ConfigError("discrete model: score_prior must have m+1 entries");
        double total = 0.0;
        for (double p : score_prior) {
            if (!(p >= 0.0))
                throw ConfigError("discrete model: score_prior entries must be >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ConfigError("discrete model: score_prior must sum to 1");
    }

    bool in_domain(int score) const noexcept { return score >= 0 && score <= m; }
};

/// Accuracy of one grader in the discrete model.
struct DiscreteAccuracy {
    double q = 0.0;

    friend bool operator==(const DiscreteAccuracy&, const DiscreteAccuracy&) = default;
};

using AccuracyEstimate = std::variant<BiasReliability, DiscreteAccuracy>;

// ---------------------------------------------------------------------------
// Error models

/// Normal density of `observed` with mean `truth + bias` and variance `1/reliability`.
inline double continuous_error_density(double observed, double truth, const BiasReliability& acc)
{
    if (!std::isfinite(observed) || !std::isfinite(truth) || !std::isfinite(acc.bias))
        throw DomainError("continuous_error_density: non-finite input");
    if (!(acc.reliability > 0.0) || !std::isfinite(acc.reliability))
        throw DomainError("continuous_error_density: reliability must be positive and finite");
    const double r = observed - truth - acc.bias;
    return std::sqrt(acc.reliability / (2.0 * std::numbers::pi)) * std::exp(-0.5 * acc.reliability * r * r);
}

/// exp(-q |observed - truth| / m) without the normalizer.
inline double discrete_error_kernel(int observed, int truth, double q, int m) noexcept
{
    return std::exp(-q * std::abs(observed - truth) / static_cast<double>(m));
}

/// log of sum_z exp(-q |z - truth| / m) over z in {0..m}.
inline double discrete_error_log_normalizer(int truth, double q, int m) noexcept
{
    double z = 0.0;
    for (int s = 0; s <= m; ++s)
        z += discrete_error_kernel(s, truth, q, m);
    return std::log(z);
}

inline double discrete_error_pmf(int observed, int truth, double q, int m)
{
    if (m < 1)
        throw DomainError("discrete_error_pmf: m must be >= 1");
    if (observed < 0 || observed > m || truth < 0 || truth > m)
        throw DomainError("discrete_error_pmf: score outside {0.." + std::to_string(m) + "}");
    if (!(q >= 0.0) || !std::isfinite(q))
        throw DomainError("discrete_error_pmf: q must be finite and >= 0");
    return discrete_error_kernel(observed, truth, q, m) / std::exp(discrete_error_log_normalizer(truth, q, m));
}

/// log p(observed | truth, q) for the discrete error model; no range checks.
inline double discrete_error_log_pmf(int observed, int truth, double q, int m) noexcept
{
    return -q * std::abs(observed - truth) / static_cast<double>(m) - discrete_error_log_normalizer(truth, q, m);
}

/// Integer score for a real-valued aggregate: nearest integer, halves round up.
inline int round_half_up(double x) noexcept { return static_cast<int>(std::floor(x + 0.5)); }

} // namespace peermech
