#pragma once

#include <peermech/baselines.hpp>
#include <peermech/csv.hpp>
#include <peermech/mechanism.hpp>
#include <peermech/random.hpp>
#include <peermech/simulation.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace peermech {

/// Runs fn(0..count-1) on up to `jobs` threads. Each index is handled exactly
/// once; the first exception (by index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn)
{
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    std::vector<std::exception_ptr> errors(count);
    if (jobs == 1) {
        for (std::size_t k = 0; k < count; ++k) {
            try {
                fn(k);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(jobs);
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t k = next++; k < count; k = next++) {
                    try {
                        fn(k);
                    } catch (...) {
                        errors[k] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : workers)
            t.join();
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

enum class MechanismKind { Trupeqa, Mean, Median, Gibbs };

inline constexpr MechanismKind all_mechanisms[] = {MechanismKind::Trupeqa, MechanismKind::Mean, MechanismKind::Median,
                                                   MechanismKind::Gibbs};

inline std::string_view to_string(MechanismKind m) noexcept
{
    switch (m) {
    case MechanismKind::Trupeqa: return "trupeqa";
    case MechanismKind::Mean: return "mean";
    case MechanismKind::Median: return "median";
    case MechanismKind::Gibbs: return "gibbs";
    }
    return "unknown";
}

inline MechanismKind parse_mechanism(std::string_view s)
{
    for (MechanismKind m : all_mechanisms)
        if (to_string(m) == s)
            return m;
    throw ConfigError("unknown mechanism '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Continuous experiments

struct ExperimentConfig {
    CohortShape shape{50, 10, 10};
    double mu = 1.0;
    double gamma = 16.0;
    double eta = 400.0;
    double reliability_mean = 2500.0;
    double reliability_shape = 25.0;
    /// Prior the mechanisms believe in; defaults to the generating prior.
    ContinuousPrior mechanism_prior{1.0, 16.0};
    GraderBehavior behavior = GraderBehavior::Truthful;
    /// Feed manipulated reports to the mechanism as well (off: it sees truthful reports).
    bool trupeqa_sees_manipulated = false;
    double threshold = 0.005;
    std::size_t trials_outer = 10;
    std::size_t trials_inner = 10;
    std::uint64_t master_seed = 0;
    std::size_t gibbs_iterations = 1000;
    std::size_t gibbs_burn_in = 200;
    std::vector<MechanismKind> mechanisms{std::begin(all_mechanisms), std::end(all_mechanisms)};
    std::size_t jobs = 1;

    ContinuousModelParams generation() const
    {
        return ContinuousModelParams::with_reliability_mean(mu, gamma, eta, reliability_mean, reliability_shape);
    }

    /// Parameters the Gibbs baseline assumes: the mechanism prior on scores and
    /// the generating hyperparameters for bias and reliability.
    ContinuousModelParams gibbs_model() const
    {
        ContinuousModelParams p = generation();
        p.mu = mechanism_prior.mu;
        p.gamma = mechanism_prior.gamma;
        return p;
    }

    void validate() const
    {
        generation().validate();
        if (!(mechanism_prior.gamma > 0.0))
            throw ConfigError("mechanism prior gamma must be > 0");
        if (!(threshold > 0.0))
            throw ConfigError("threshold must be > 0");
        if (trials_outer < 1 || trials_inner < 1)
            throw ConfigError("trial counts must be >= 1");
        GibbsConfig{gibbs_iterations, gibbs_burn_in, 0}.validate();
        if (mechanisms.empty())
            throw ConfigError("no mechanisms selected");
    }

    std::size_t replications() const noexcept { return trials_outer * trials_inner; }
};

struct MechanismReplication {
    MechanismKind mechanism;
    ScoreMetrics metrics;
    /// min_i t_i and mean_i t_i; TRUPEQA only.
    std::optional<double> transfer_min;
    std::optional<double> transfer_mean;
};

struct ReplicationResult {
    std::size_t replication = 0;
    std::vector<MechanismReplication> mechanisms;
};

struct MechanismSummary {
    MechanismKind mechanism;
    MeanCi rmse;
    MeanCi regrade_fraction;
    MeanCi total_cost;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<ReplicationResult> replications;
    std::vector<MechanismSummary> summaries;

    const MechanismSummary& summary(MechanismKind m) const
    {
        for (const auto& s : summaries)
            if (s.mechanism == m)
                return s;
        throw InputError("mechanism " + std::string(to_string(m)) + " not part of this experiment");
    }
};

/// One replication: population from the outer index, observations from the inner
/// index, and every mechanism scored on the same reports.
inline ReplicationResult run_replication(const ExperimentConfig& cfg, std::size_t outer, std::size_t inner)
{
    const ContinuousModelParams gen = cfg.generation();
    const std::uint64_t pop_seed = derive_seed(cfg.master_seed, {outer});
    const Population pop = sample_population(cfg.shape, gen, pop_seed);
    const GradeMatrix observations =
        sample_observations(pop.plan, pop.truths, pop.graders, derive_seed(cfg.master_seed, {outer, inner, stream::observations}));
    const GradeMatrix reports = apply_behavior(observations, pop.truths, cfg.behavior);
    const RegradeRule rule = RegradeRule::absolute(cfg.threshold);

    ReplicationResult out;
    out.replication = outer * cfg.trials_inner + inner;
    for (MechanismKind m : cfg.mechanisms) {
        MechanismReplication r{m, {}, std::nullopt, std::nullopt};
        switch (m) {
        case MechanismKind::Trupeqa: {
            const GradeMatrix& input = cfg.trupeqa_sees_manipulated ? reports : observations;
            const auto outcome = run_trupeqa(pop.plan, input, pop.truths, ContinuousScoring(cfg.mechanism_prior));
            r.metrics = compute_metrics(outcome.scores, pop.truths, rule);
            r.transfer_min = *std::min_element(outcome.transfers.begin(), outcome.transfers.end());
            double s = 0.0;
            for (double t : outcome.transfers)
                s += t;
            r.transfer_mean = s / static_cast<double>(outcome.transfers.size());
            break;
        }
        case MechanismKind::Mean: r.metrics = compute_metrics(mean_scores(pop.plan, reports), pop.truths, rule); break;
        case MechanismKind::Median: r.metrics = compute_metrics(median_scores(pop.plan, reports), pop.truths, rule); break;
        case MechanismKind::Gibbs: {
            const GibbsConfig gc{cfg.gibbs_iterations, cfg.gibbs_burn_in,
                                 derive_seed(cfg.master_seed, {outer, inner, stream::gibbs})};
            r.metrics = compute_metrics(gibbs_continuous(pop.plan, reports, cfg.gibbs_model(), gc), pop.truths, rule);
            break;
        }
        }
        out.mechanisms.push_back(r);
    }
    return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    ExperimentResult result;
    result.config = cfg;
    result.replications.resize(cfg.replications());
    parallel_for(cfg.replications(), cfg.jobs, [&](std::size_t r) {
        result.replications[r] = run_replication(cfg, r / cfg.trials_inner, r % cfg.trials_inner);
    });
    for (std::size_t k = 0; k < cfg.mechanisms.size(); ++k) {
        std::vector<double> rmse, frac, cost;
        for (const auto& rep : result.replications) {
            rmse.push_back(rep.mechanisms[k].metrics.rmse);
            frac.push_back(rep.mechanisms[k].metrics.regrade_fraction);
            cost.push_back(rep.mechanisms[k].metrics.total_cost);
        }
        result.summaries.push_back({cfg.mechanisms[k], mean_ci(rmse), mean_ci(frac), mean_ci(cost)});
    }
    return result;
}

inline void write_replications_csv(std::ostream& os, const ExperimentResult& result)
{
    os << "mechanism,replication,rmse,regrade_fraction,total_transfer_min,total_transfer_mean\n";
    for (std::size_t k = 0; k < result.config.mechanisms.size(); ++k) {
        for (const auto& rep : result.replications) {
            const auto& m = rep.mechanisms[k];
            os << to_string(m.mechanism) << ',' << rep.replication << ',' << csv::format(m.metrics.rmse) << ','
               << csv::format(m.metrics.regrade_fraction) << ','
               << (m.transfer_min ? csv::format(*m.transfer_min) : "") << ','
               << (m.transfer_mean ? csv::format(*m.transfer_mean) : "") << '\n';
        }
    }
}

inline void write_aggregate_header(std::ostream& os)
{
    os << "mechanism,mean_reliability,eta,rmse,rmse_ci,regrade_fraction,frac_ci\n";
}

inline void write_aggregate_rows(std::ostream& os, const ExperimentResult& result)
{
    for (const auto& s : result.summaries)
        os << to_string(s.mechanism) << ',' << csv::format(result.config.reliability_mean) << ','
           << csv::format(result.config.eta) << ',' << csv::format(s.rmse.mean) << ','
           << csv::format(s.rmse.halfwidth) << ',' << csv::format(s.regrade_fraction.mean) << ','
           << csv::format(s.regrade_fraction.halfwidth) << '\n';
}

// ---------------------------------------------------------------------------
// Incentive audit

struct AuditConfig {
    CohortShape shape{50, 10, 10};
    ContinuousModelParams generation = ContinuousModelParams::with_reliability_mean(1.0, 16.0, 400.0, 2500.0);
    ContinuousPrior prior{1.0, 16.0};
    std::size_t replications = 2000;
    std::uint64_t master_seed = 0;
    GraderId designated = 0;
    std::vector<Deviation> deviations{Deviation::ConstantPrior, Deviation::OwnScore, Deviation::UniformNoise};
    /// Pass threshold in standard errors.
    double z = 3.0;
    std::size_t jobs = 1;
};

struct EpirReport {
    std::vector<MeanCi> per_grader;
    MeanCi population;
    double worst_z = 0.0; // min over graders of mean / SE
    bool all_graders_pass = false;
    bool population_positive = false;

    bool pass() const noexcept { return all_graders_pass && population_positive; }
};

struct EiicRow {
    Deviation deviation;
    MeanCi truthful;
    MeanCi deviating;
    double combined_se = 0.0;
    MeanCi paired_difference; // truthful - deviating, per replication
    bool pass = false;
};

struct AuditReport {
    AuditConfig config;
    EpirReport epir;
    std::vector<EiicRow> eiic;

    bool pass() const
    {
        return epir.pass() && std::all_of(eiic.begin(), eiic.end(), [](const EiicRow& r) { return r.pass; });
    }
};

/// Monte-Carlo check of the participation and truthfulness guarantees.
/// Each replication draws a fresh cohort with truthful graders; the designated
/// grader's transfer is then recomputed with each unilateral deviation applied
/// to their non-probe reports, on the same world.
inline AuditReport run_audit(const AuditConfig& cfg)
{
    cfg.generation.validate();
    if (cfg.replications < 2)
        throw ConfigError("audit needs at least 2 replications");
    if (cfg.designated >= cfg.shape.n)
        throw ConfigError("designated grader out of range");
    const ContinuousScoring model(cfg.prior);
    const std::size_t n = cfg.shape.n;
    const std::size_t nd = cfg.deviations.size();

    std::vector<std::vector<double>> transfers(cfg.replications);
    std::vector<std::vector<double>> deviating(cfg.replications);
    parallel_for(cfg.replications, cfg.jobs, [&](std::size_t r) {
        const World w = generate_world(cfg.shape, cfg.generation, derive_seed(cfg.master_seed, {r}));
        const auto truthful = run_trupeqa(w.plan, w.observations, w.truths, model);
        transfers[r] = truthful.transfers;
        deviating[r].resize(nd);
        for (std::size_t d = 0; d < nd; ++d) {
            GradeMatrix g = w.observations;
            apply_deviation(g, w.plan, cfg.designated, cfg.deviations[d], w.truths, cfg.prior.mu, cfg.prior.gamma,
                            derive_seed(cfg.master_seed, {r, stream::deviation, d}));
            deviating[r][d] = run_trupeqa(w.plan, g, w.truths, model).transfers[cfg.designated];
        }
    });

    AuditReport report;
    report.config = cfg;
    std::vector<double> column(cfg.replications), all;
    all.reserve(cfg.replications * n);
    report.epir.all_graders_pass = true;
    report.epir.worst_z = std::numeric_limits<double>::infinity();
    for (GraderId i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < cfg.replications; ++r) {
            column[r] = transfers[r][i];
            all.push_back(column[r]);
        }
        const MeanCi s = mean_ci(column);
        report.epir.per_grader.push_back(s);
        if (s.mean < -cfg.z * s.std_error)
            report.epir.all_graders_pass = false;
        if (s.std_error > 0.0)
            report.epir.worst_z = std::min(report.epir.worst_z, s.mean / s.std_error);
    }
    report.epir.population = mean_ci(all);
    report.epir.population_positive = report.epir.population.mean > 0.0;

    for (std::size_t r = 0; r < cfg.replications; ++r)
        column[r] = transfers[r][cfg.designated];
    const MeanCi truthful = mean_ci(column);
    for (std::size_t d = 0; d < nd; ++d) {
        std::vector<double> dev(cfg.replications), diff(cfg.replications);
        for (std::size_t r = 0; r < cfg.replications; ++r) {
            dev[r] = deviating[r][d];
            diff[r] = column[r] - dev[r];
        }
        EiicRow row{cfg.deviations[d], truthful, mean_ci(dev), 0.0, mean_ci(diff), false};
        row.combined_se = std::sqrt(row.truthful.std_error * row.truthful.std_error +
                                    row.deviating.std_error * row.deviating.std_error);
        row.pass = row.truthful.mean >= row.deviating.mean - cfg.z * row.combined_se;
        report.eiic.push_back(row);
    }
    return report;
}

inline void write_audit_header(std::ostream& os)
{
    os << "check,strategy,seed,truthful_mean,deviation_mean,difference,se,verdict\n";
}

inline void write_audit_rows(std::ostream& os, const AuditReport& report)
{
    const std::string seed = std::to_string(report.config.master_seed);
    os << "epir_min_grader,truthful," << seed << ',';
    const auto worst = std::min_element(report.epir.per_grader.begin(), report.epir.per_grader.end(),
                                        [](const MeanCi& a, const MeanCi& b) { return a.mean < b.mean; });
    os << csv::format(worst->mean) << ",,," << csv::format(worst->std_error) << ','
       << (report.epir.all_graders_pass ? "pass" : "fail") << '\n';
    os << "epir_population,truthful," << seed << ',' << csv::format(report.epir.population.mean) << ",,,"
       << csv::format(report.epir.population.std_error) << ',' << (report.epir.population_positive ? "pass" : "fail")
       << '\n';
    for (const auto& row : report.eiic)
        os << "eiic_truthful_ge_deviation," << to_string(row.deviation) << ',' << seed << ','
           << csv::format(row.truthful.mean) << ',' << csv::format(row.deviating.mean) << ','
           << csv::format(row.paired_difference.mean) << ',' << csv::format(row.combined_se) << ','
           << (row.pass ? "pass" : "fail") << '\n';
}

} // namespace peermech
