#pragma once

// Reference computations used by the tests. Nothing here calls the library's
// estimators or scoring rules; each oracle works from the model's likelihood
// or posterior directly.

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

inline double normal_log_density(double x, double mean, double precision)
{
    const double d = x - mean;
    return 0.5 * std::log(precision / (2.0 * std::numbers::pi)) - 0.5 * precision * d * d;
}

// ---------------------------------------------------------------------------
// Bias/reliability MLE by nested one-dimensional Brent searches on the full
// log-likelihood sum_k log N(obs_k; truth_k + b, 1/tau).

struct Fit {
    double bias;
    double reliability;
};

inline double gaussian_log_likelihood(const std::vector<std::pair<double, double>>& pairs, double b, double tau)
{
    double s = 0.0;
    for (const auto& [obs, truth] : pairs)
        s += normal_log_density(obs, truth + b, tau);
    return s;
}

inline Fit mle_bias_reliability(const std::vector<std::pair<double, double>>& pairs)
{
    constexpr int bits = 52;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [obs, truth] : pairs) {
        lo = std::min(lo, obs - truth);
        hi = std::max(hi, obs - truth);
    }
    const double pad = 0.1 * (hi - lo) + 1e-9;
    auto best_log_tau = [&](double b) {
        auto neg = [&](double lt) { return -gaussian_log_likelihood(pairs, b, std::exp(lt)); };
        return boost::math::tools::brent_find_minima(neg, -20.0, 40.0, bits);
    };
    auto neg_profile = [&](double b) { return best_log_tau(b).second; };
    const double b = boost::math::tools::brent_find_minima(neg_profile, lo - pad, hi + pad, bits).first;
    return {b, std::exp(best_log_tau(b).first)};
}

// ---------------------------------------------------------------------------
// Continuous expected-reward maximization: posterior moments by quadrature
// around the numerically located mode, then a grid search over candidates.

struct GaussianReport {
    double obs;
    double bias;
    double reliability;
};

inline double log_posterior(double y, double mu, double gamma, const std::vector<GaussianReport>& reports)
{
    double s = normal_log_density(y, mu, gamma);
    for (const auto& r : reports)
        s += normal_log_density(r.obs, y + r.bias, r.reliability);
    return s;
}

struct Moments {
    double m1;
    double m2;
};

inline Moments posterior_moments(double mu, double gamma, const std::vector<GaussianReport>& reports)
{
    double lo = mu, hi = mu;
    for (const auto& r : reports) {
        lo = std::min(lo, r.obs - r.bias);
        hi = std::max(hi, r.obs - r.bias);
    }
    auto neg = [&](double y) { return -log_posterior(y, mu, gamma, reports); };
    const double pad = 1e-3 + 0.1 * (hi - lo);
    const auto [mode, fmin] = boost::math::tools::brent_find_minima(neg, lo - pad, hi + pad, 52);
    // curvature by central differences sets the integration window
    const double h = 1e-4 * (1.0 + std::abs(mode));
    const double curv = (neg(mode + h) - 2.0 * fmin + neg(mode - h)) / (h * h);
    const double sd = 1.0 / std::sqrt(std::max(curv, 1e-12));
    const double a = mode - 12.0 * sd, b = mode + 12.0 * sd;
    constexpr int n = 4000; // Simpson, even
    const double step = (b - a) / n;
    double z = 0.0, s1 = 0.0, s2 = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double y = a + step * k;
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        const double p = w * std::exp(-neg(y) + fmin);
        z += p;
        s1 += p * y;
        s2 += p * y * y;
    }
    return {s1 / z, s2 / z};
}

/// argmax over x on a grid of spacing `resolution` of -E[(x-y)^2], searched
/// over the hull of the prior mean and debiased reports.
inline double grid_search_erm(double mu, double gamma, const std::vector<GaussianReport>& reports,
                              double resolution = 1e-4)
{
    const Moments mom = posterior_moments(mu, gamma, reports);
    double lo = mu, hi = mu;
    for (const auto& r : reports) {
        lo = std::min(lo, r.obs - r.bias);
        hi = std::max(hi, r.obs - r.bias);
    }
    const auto steps = static_cast<long>(std::ceil((hi - lo) / resolution));
    double best_x = lo, best = -std::numeric_limits<double>::infinity();
    for (long k = 0; k <= steps; ++k) {
        const double x = lo + resolution * static_cast<double>(k);
        const double expected_reward = -(x * x - 2.0 * x * mom.m1 + mom.m2);
        if (expected_reward > best) {
            best = expected_reward;
            best_x = x;
        }
    }
    return best_x;
}

// ---------------------------------------------------------------------------
// Discrete expected-loss minimization by brute force on the kernel objective
// sum_y prior(y) prod_i exp(-q_i |y - obs_i| / m) (x - y)^2.

struct KernelReport {
    int obs;
    double q;
};

inline int brute_force_discrete_erm(const std::vector<KernelReport>& reports, const std::vector<double>& prior, int m)
{
    int best_x = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int x = 0; x <= m; ++x) {
        double loss = 0.0, mass = 0.0;
        for (int y = 0; y <= m; ++y) {
            double w = prior[static_cast<std::size_t>(y)];
            for (const auto& r : reports)
                w *= std::exp(-r.q * std::abs(y - r.obs) / m);
            loss += w * (x - y) * (x - y);
            mass += w;
        }
        loss /= mass;
        if (loss < best * (1.0 - 1e-13)) {
            best = loss;
            best_x = x;
        }
    }
    return best_x;
}

/// The normalized exponential-distance error PMF, written out independently.
inline double error_pmf(int obs, int truth, double q, int m)
{
    double z = 0.0;
    for (int s = 0; s <= m; ++s)
        z += std::exp(-q * std::abs(s - truth) / m);
    return std::exp(-q * std::abs(obs - truth) / m) / z;
}

// ---------------------------------------------------------------------------
// Exact posterior marginals for the discrete Gibbs micro-instance: two papers,
// two graders, both grading both papers. Enumerates (y1, y2, q1, q2).

inline std::vector<std::vector<double>> discrete_joint_marginals(const int obs[2][2], // obs[grader][paper]
                                                                 const std::vector<double>& prior,
                                                                 const std::vector<double>& grid, int m)
{
    const auto s = static_cast<std::size_t>(m + 1);
    std::vector<std::vector<double>> marg(2, std::vector<double>(s, 0.0));
    double total = 0.0;
    for (std::size_t y1 = 0; y1 < s; ++y1)
        for (std::size_t y2 = 0; y2 < s; ++y2) {
            const int ys[2] = {static_cast<int>(y1), static_cast<int>(y2)};
            double grader_mass[2] = {0.0, 0.0};
            for (int g = 0; g < 2; ++g)
                for (double q : grid)
                    grader_mass[g] += error_pmf(obs[g][0], ys[0], q, m) * error_pmf(obs[g][1], ys[1], q, m);
            const double p = prior[y1] * prior[y2] * grader_mass[0] * grader_mass[1];
            marg[0][y1] += p;
            marg[1][y2] += p;
            total += p;
        }
    for (auto& row : marg)
        for (double& v : row)
            v /= total;
    return marg;
}

// ---------------------------------------------------------------------------
// Posterior means of the true scores for the continuous Gibbs micro-instance:
// P papers, two graders, both grading every paper. The true scores are
// integrated out in closed form per paper; the four grader parameters are
// integrated on a tensor grid.

struct BiasReliabilityPrior {
    double mu, gamma, eta, alpha, beta;
};

inline std::vector<double> continuous_posterior_means(const std::vector<std::array<double, 2>>& obs, // obs[paper][grader]
                                                      const BiasReliabilityPrior& pr, std::size_t grid_b,
                                                      std::size_t grid_tau)
{
    const double b_sd = 1.0 / std::sqrt(pr.eta);
    const double tau_mean = pr.alpha / pr.beta;
    const double tau_sd = std::sqrt(pr.alpha) / pr.beta;
    std::vector<double> bs(grid_b), taus(grid_tau), log_prior_tau(grid_tau), log_prior_b(grid_b);
    for (std::size_t k = 0; k < grid_b; ++k) {
        bs[k] = -6.0 * b_sd + 12.0 * b_sd * static_cast<double>(k) / static_cast<double>(grid_b - 1);
        log_prior_b[k] = normal_log_density(bs[k], 0.0, pr.eta);
    }
    const double t_lo = std::max(tau_mean - 6.0 * tau_sd, 1e-6 * tau_mean);
    const double t_hi = tau_mean + 8.0 * tau_sd;
    for (std::size_t k = 0; k < grid_tau; ++k) {
        taus[k] = t_lo + (t_hi - t_lo) * static_cast<double>(k) / static_cast<double>(grid_tau - 1);
        log_prior_tau[k] = (pr.alpha - 1.0) * std::log(taus[k]) - pr.beta * taus[k];
    }
    const std::size_t papers = obs.size();

    // log marginal likelihood of one paper's two reports, y integrated out
    auto paper_term = [&](const std::array<double, 2>& o, double b1, double b2, double t1, double t2, double& mean) {
        const double prec = pr.gamma + t1 + t2;
        mean = (pr.gamma * pr.mu + t1 * (o[0] - b1) + t2 * (o[1] - b2)) / prec;
        const double d1 = o[0] - b1 - pr.mu, d2 = o[1] - b2 - pr.mu;
        // N(d; 0, S) with S = 1/gamma 11' + diag(1/t1, 1/t2)
        const double s11 = 1.0 / pr.gamma + 1.0 / t1, s22 = 1.0 / pr.gamma + 1.0 / t2, s12 = 1.0 / pr.gamma;
        const double det = s11 * s22 - s12 * s12;
        const double quad = (s22 * d1 * d1 - 2.0 * s12 * d1 * d2 + s11 * d2 * d2) / det;
        return -0.5 * std::log(det) - 0.5 * quad;
    };

    std::vector<double> num(papers, 0.0);
    double den = 0.0;
    double shift = -std::numeric_limits<double>::infinity();
    std::vector<double> means(papers);
    // two passes: first for the maximum log weight, then the weighted sums
    for (int pass = 0; pass < 2; ++pass)
        for (std::size_t a = 0; a < grid_b; ++a)
            for (std::size_t c = 0; c < grid_b; ++c)
                for (std::size_t u = 0; u < grid_tau; ++u)
                    for (std::size_t v = 0; v < grid_tau; ++v) {
                        double lw = log_prior_b[a] + log_prior_b[c] + log_prior_tau[u] + log_prior_tau[v];
                        for (std::size_t p = 0; p < papers; ++p)
                            lw += paper_term(obs[p], bs[a], bs[c], taus[u], taus[v], means[p]);
                        if (pass == 0) {
                            shift = std::max(shift, lw);
                            continue;
                        }
                        const double w = std::exp(lw - shift);
                        den += w;
                        for (std::size_t p = 0; p < papers; ++p)
                            num[p] += w * means[p];
                    }
    for (double& v : num)
        v /= den;
    return num;
}

} // namespace oracle
