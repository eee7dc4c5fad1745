#pragma once

#include <peermech/assignment.hpp>
#include <peermech/baselines.hpp>
#include <peermech/csv.hpp>
#include <peermech/errors.hpp>
#include <peermech/experiment.hpp>
#include <peermech/grades.hpp>
#include <peermech/mechanism.hpp>
#include <peermech/model.hpp>
#include <peermech/random.hpp>
#include <peermech/simulation.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace peermech {

/// Raw grades in the dataset are 1..5; internally they are shifted to 0..4.
inline constexpr int dataset_raw_min = 1;
inline constexpr int dataset_raw_max = 5;
inline constexpr int dataset_m = dataset_raw_max - dataset_raw_min;

inline constexpr std::string_view dataset_header = "paper_id,grader_id,peer_grade,true_grade,order";

/// One row of the dataset file. An empty peer grade means the paper was
/// assigned but never graded.
struct DatasetRecord {
    std::string paper_id;
    std::string grader_id;
    std::optional<int> peer_grade; // raw 1..5
    int true_grade = 0;            // raw 1..5
    long order = 0;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

/// The dataset adapted to mechanism inputs. Each grader's first
/// `probe_per_grader` papers (by grading order) are their probes, the rest
/// are non-probe. Scores are on the shifted 0..4 scale.
struct DatasetBundle {
    AssignmentPlan plan;
    GradeMatrix grades;
    TrueScores truths;
    std::vector<std::string> paper_labels;
    std::vector<std::string> grader_labels;
    std::vector<std::string> warnings;
    int m = dataset_m;

    friend bool operator==(const DatasetBundle& a, const DatasetBundle& b)
    {
        return a.plan == b.plan && a.grades == b.grades && a.truths == b.truths && a.paper_labels == b.paper_labels &&
               a.grader_labels == b.grader_labels && a.m == b.m;
    }
};

namespace detail {

inline bool all_digits(std::string_view s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

/// Numeric labels sort numerically, others lexicographically; numeric first.
inline bool label_less(const std::string& a, const std::string& b)
{
    const bool da = all_digits(a), db = all_digits(b);
    if (da && db) {
        const std::string_view sa = std::string_view(a).substr(std::min(a.find_first_not_of('0'), a.size()));
        const std::string_view sb = std::string_view(b).substr(std::min(b.find_first_not_of('0'), b.size()));
        if (sa.size() != sb.size())
            return sa.size() < sb.size();
        if (sa != sb)
            return sa < sb;
        return a < b;
    }
    if (da != db)
        return da;
    return a < b;
}

template <class T>
bool parse_number(std::string_view s, T& out)
{
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

} // namespace detail

/// Parses the dataset CSV into records. The header is mandatory and must
/// include the `order` column.
inline std::vector<DatasetRecord> read_dataset_records(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line))
        throw ParseError(1, "empty dataset file");
    const auto header = csv::chomp(line);
    if (header != dataset_header) {
        const auto cols = csv::split(header);
        if (std::find(cols.begin(), cols.end(), "order") == cols.end())
            throw ParseError(1, "missing 'order' column; grading order is required to pick probe papers");
        throw ParseError(1, "expected header '" + std::string(dataset_header) + "'");
    }
    std::vector<DatasetRecord> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        const auto text = csv::chomp(line);
        if (text.empty())
            continue;
        const auto f = csv::split(text);
        if (f.size() != 5)
            throw ParseError(lineno, "expected 5 fields, got " + std::to_string(f.size()));
        DatasetRecord r;
        r.paper_id = f[0];
        r.grader_id = f[1];
        if (r.paper_id.empty() || r.grader_id.empty())
            throw ParseError(lineno, "empty paper or grader id");
        if (!f[2].empty()) {
            int g = 0;
            if (!detail::parse_number(f[2], g))
                throw ParseError(lineno, "peer_grade is not an integer: '" + f[2] + "'");
            if (g < dataset_raw_min || g > dataset_raw_max)
                throw ParseError(lineno, "peer_grade " + f[2] + " outside 1..5");
            r.peer_grade = g;
        }
        if (!detail::parse_number(f[3], r.true_grade))
            throw ParseError(lineno, "true_grade is not an integer: '" + f[3] + "'");
        if (r.true_grade < dataset_raw_min || r.true_grade > dataset_raw_max)
            throw ParseError(lineno, "true_grade " + f[3] + " outside 1..5");
        if (!detail::parse_number(f[4], r.order))
            throw ParseError(lineno, "order is not an integer: '" + f[4] + "'");
        out.push_back(std::move(r));
    }
    return out;
}

/// Builds mechanism inputs from records.
inline DatasetBundle build_dataset(const std::vector<DatasetRecord>& records, std::size_t probe_per_grader = 5)
{
    if (probe_per_grader < 1)
        throw ConfigError("probe_per_grader must be >= 1");
    // Line numbers for errors are record index + 2 (header is line 1).
    std::map<std::string, int, decltype(&detail::label_less)> paper_truth(&detail::label_less);
    std::map<std::string, std::vector<std::size_t>, decltype(&detail::label_less)> by_grader(&detail::label_less);
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& r = records[k];
        auto [it, inserted] = paper_truth.emplace(r.paper_id, r.true_grade);
        if (!inserted && it->second != r.true_grade)
            throw ParseError(k + 2, "paper " + r.paper_id + " has conflicting true grades");
        if (!seen.emplace(r.grader_id, r.paper_id).second)
            throw ParseError(k + 2, "grader " + r.grader_id + " graded paper " + r.paper_id + " twice");
        by_grader[r.grader_id].push_back(k);
    }

    DatasetBundle b;
    std::map<std::string, PaperId> paper_index;
    for (const auto& [label, truth] : paper_truth) {
        paper_index.emplace(label, static_cast<PaperId>(b.paper_labels.size()));
        b.paper_labels.push_back(label);
        b.truths.push_back(static_cast<double>(truth - dataset_raw_min));
    }

    std::vector<GraderLoad> loads;
    for (auto& [label, rows] : by_grader) {
        std::vector<std::size_t> graded;
        for (std::size_t k : rows)
            if (records[k].peer_grade)
                graded.push_back(k);
        if (graded.empty()) {
            b.warnings.push_back("grader " + label + " has no graded papers; skipped");
            continue;
        }
        std::sort(graded.begin(), graded.end(), [&](std::size_t x, std::size_t y) {
            const auto& a = records[x];
            const auto& c = records[y];
            if (a.order != c.order)
                return a.order < c.order;
            return detail::label_less(a.paper_id, c.paper_id);
        });
        const GraderId gid = static_cast<GraderId>(b.grader_labels.size());
        b.grader_labels.push_back(label);
        GraderLoad load;
        for (std::size_t pos = 0; pos < graded.size(); ++pos) {
            const auto& r = records[graded[pos]];
            const PaperId pid = paper_index.at(r.paper_id);
            const bool probe = pos < probe_per_grader;
            (probe ? load.probes : load.nonprobes).push_back(pid);
            b.grades.set(gid, pid, static_cast<double>(*r.peer_grade - dataset_raw_min), probe);
        }
        loads.push_back(std::move(load));
    }
    b.plan = AssignmentPlan(b.paper_labels.size(), std::move(loads), {}, 0, false);
    return b;
}

inline DatasetBundle load_dataset(std::istream& is, std::size_t probe_per_grader = 5)
{
    return build_dataset(read_dataset_records(is), probe_per_grader);
}

inline DatasetBundle load_dataset(const std::string& path, std::size_t probe_per_grader = 5)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open dataset file '" + path + "'");
    return load_dataset(in, probe_per_grader);
}

/// Writes the bundle back in dataset format. `order` is the position in the
/// grader's sequence, so reloading with the same probe count gives the same bundle.
inline void write_dataset(std::ostream& os, const DatasetBundle& b)
{
    os << dataset_header << '\n';
    for (GraderId i = 0; i < b.plan.num_graders(); ++i) {
        const GraderLoad& l = b.plan.load(i);
        long order = 1;
        auto emit = [&](PaperId j) {
            os << b.paper_labels[j] << ',' << b.grader_labels[i] << ','
               << static_cast<int>(b.grades.score(i, j)) + dataset_raw_min << ','
               << static_cast<int>(b.truths[j]) + dataset_raw_min << ',' << order++ << '\n';
        };
        for (PaperId j : l.probes)
            emit(j);
        for (PaperId j : l.nonprobes)
            emit(j);
    }
}

/// Frequency of each score 0..m among the true scores.
inline std::vector<double> empirical_prior(const TrueScores& truths, int m)
{
    if (truths.empty())
        throw InputError("empirical_prior: no true scores");
    std::vector<double> pmf(static_cast<std::size_t>(m) + 1, 0.0);
    for (double y : truths) {
        if (std::floor(y) != y || y < 0 || y > m)
            throw DomainError("empirical_prior: score outside {0.." + std::to_string(m) + "}");
        pmf[static_cast<std::size_t>(y)] += 1.0;
    }
    for (double& p : pmf)
        p /= static_cast<double>(truths.size());
    return pmf;
}

// ---------------------------------------------------------------------------
// Synthetic stand-in with the shape of the course dataset

struct SyntheticDatasetShape {
    std::size_t papers = 60;
    std::size_t graders = 150;
    std::size_t grades = 1347;
    std::size_t min_load = 5;
    std::size_t max_load = 14;
};

/// Records drawn from the discrete model: true grades from a skewed PMF, grader
/// accuracies uniform on [1, 10], and each grader's papers in random order.
inline std::vector<DatasetRecord> generate_synthetic_dataset(std::uint64_t seed, const SyntheticDatasetShape& shape = {})
{
    if (shape.graders * shape.min_load > shape.grades || shape.graders * shape.max_load < shape.grades ||
        shape.max_load > shape.papers)
        throw ConfigError("synthetic dataset: grade count not reachable with the given loads");
    Rng rng(seed);
    const std::vector<double> truth_pmf{0.05, 0.10, 0.25, 0.35, 0.25};
    std::discrete_distribution<int> truth_dist(truth_pmf.begin(), truth_pmf.end());
    std::vector<int> truths(shape.papers);
    for (auto& t : truths)
        t = truth_dist(rng);

    std::vector<std::size_t> loads(shape.graders, shape.min_load);
    std::size_t remaining = shape.grades - shape.graders * shape.min_load;
    std::uniform_int_distribution<std::size_t> pick(0, shape.graders - 1);
    while (remaining > 0) {
        const std::size_t g = pick(rng);
        if (loads[g] < shape.max_load) {
            ++loads[g];
            --remaining;
        }
    }

    std::uniform_real_distribution<double> accuracy(1.0, 10.0);
    std::vector<PaperId> all(shape.papers);
    for (PaperId j = 0; j < shape.papers; ++j)
        all[j] = j;
    auto label = [](char prefix, std::size_t k) {
        std::string s = std::to_string(k + 1);
        return std::string(1, prefix) + std::string(3 - std::min<std::size_t>(3, s.size()), '0') + s;
    };

    std::vector<DatasetRecord> out;
    out.reserve(shape.grades);
    for (std::size_t g = 0; g < shape.graders; ++g) {
        const double q = accuracy(rng);
        std::shuffle(all.begin(), all.end(), rng);
        for (std::size_t pos = 0; pos < loads[g]; ++pos) {
            const PaperId j = all[pos];
            std::vector<double> pmf(dataset_m + 1);
            for (int o = 0; o <= dataset_m; ++o)
                pmf[static_cast<std::size_t>(o)] = discrete_error_pmf(o, truths[j], q, dataset_m);
            std::discrete_distribution<int> obs(pmf.begin(), pmf.end());
            DatasetRecord r;
            r.paper_id = label('p', j);
            r.grader_id = label('g', g);
            r.peer_grade = obs(rng) + dataset_raw_min;
            r.true_grade = truths[j] + dataset_raw_min;
            r.order = static_cast<long>(pos + 1);
            out.push_back(std::move(r));
        }
    }
    return out;
}

inline void write_dataset_records(std::ostream& os, const std::vector<DatasetRecord>& records)
{
    os << dataset_header << '\n';
    for (const auto& r : records)
        os << r.paper_id << ',' << r.grader_id << ',' << (r.peer_grade ? std::to_string(*r.peer_grade) : "") << ','
           << r.true_grade << ',' << r.order << '\n';
}

// ---------------------------------------------------------------------------
// Running the four mechanisms on the dataset

enum class PriorMode { Uniform, Empirical };

inline std::string_view to_string(PriorMode p) noexcept { return p == PriorMode::Uniform ? "uniform" : "empirical"; }

inline PriorMode parse_prior_mode(std::string_view s)
{
    if (s == "uniform")
        return PriorMode::Uniform;
    if (s == "empirical")
        return PriorMode::Empirical;
    throw ConfigError("unknown prior mode '" + std::string(s) + "' (expected uniform|empirical)");
}

struct DatasetRunConfig {
    PriorMode prior = PriorMode::Uniform;
    std::size_t repeats = 10;
    std::size_t grid_points = 100;
    double q_max = 16.0;
    std::size_t gibbs_iterations = 1000;
    std::size_t gibbs_burn_in = 200;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct DatasetMechanismResult {
    MechanismKind mechanism;
    /// Empty confidence intervals for mechanisms without randomness.
    bool randomized = false;
    MeanCi rmse;
    MeanCi regrade_fraction;
    /// Scores from the first run.
    PaperScores scores;
};

struct DatasetRunResult {
    DiscreteModelParams model;
    std::vector<DatasetMechanismResult> mechanisms;
    MechanismOutcome<DiscreteAccuracy> trupeqa;
};

inline DiscreteModelParams dataset_model(const DatasetBundle& b, const DatasetRunConfig& cfg)
{
    DiscreteModelParams p = DiscreteModelParams::uniform(b.m, cfg.grid_points, cfg.q_max);
    if (cfg.prior == PriorMode::Empirical)
        p.score_prior = empirical_prior(b.truths, b.m);
    p.validate();
    return p;
}

inline DatasetRunResult run_dataset(const DatasetBundle& b, const DatasetRunConfig& cfg)
{
    if (cfg.repeats < 1)
        throw ConfigError("repeats must be >= 1");
    DatasetRunResult out;
    out.model = dataset_model(b, cfg);
    const RegradeRule rule = RegradeRule::rounded();
    const DiscreteScoring scoring(out.model);

    // TRUPEQA has no randomness: one run, repeated in the summary.
    out.trupeqa = run_trupeqa(b.plan, b.grades, b.truths, scoring);
    std::vector<ScoreMetrics> trupeqa_runs(cfg.repeats, compute_metrics(out.trupeqa.scores, b.truths, rule));
    std::vector<ScoreMetrics> gibbs_runs(cfg.repeats);
    std::vector<PaperScores> gibbs_scores(cfg.repeats);
    parallel_for(cfg.repeats, cfg.jobs, [&](std::size_t r) {
        const GibbsConfig gc{cfg.gibbs_iterations, cfg.gibbs_burn_in, derive_seed(cfg.seed, {r, stream::gibbs})};
        gibbs_scores[r] = gibbs_discrete(b.plan, b.grades, out.model, gc);
        gibbs_runs[r] = compute_metrics(gibbs_scores[r], b.truths, rule);
    });

    auto summarize = [&](MechanismKind m, const std::vector<ScoreMetrics>& runs, PaperScores first) {
        std::vector<double> rmse, frac;
        for (const auto& s : runs) {
            rmse.push_back(s.rmse);
            frac.push_back(s.regrade_fraction);
        }
        return DatasetMechanismResult{m, true, mean_ci(rmse), mean_ci(frac), std::move(first)};
    };
    out.mechanisms.push_back(summarize(MechanismKind::Trupeqa, trupeqa_runs, out.trupeqa.scores));

    for (MechanismKind m : {MechanismKind::Mean, MechanismKind::Median}) {
        PaperScores s = m == MechanismKind::Mean ? mean_scores(b.plan, b.grades) : median_scores(b.plan, b.grades);
        const ScoreMetrics metrics = compute_metrics(s, b.truths, rule);
        DatasetMechanismResult row{m, false, {}, {}, std::move(s)};
        row.rmse.mean = metrics.rmse;
        row.rmse.count = 1;
        row.regrade_fraction.mean = metrics.regrade_fraction;
        row.regrade_fraction.count = 1;
        out.mechanisms.push_back(std::move(row));
    }
    out.mechanisms.push_back(summarize(MechanismKind::Gibbs, gibbs_runs, gibbs_scores.front()));
    return out;
}

inline void write_dataset_metrics_csv(std::ostream& os, const DatasetRunResult& r, PriorMode prior)
{
    os << "mechanism,prior,rmse,rmse_ci,regrade_fraction,frac_ci\n";
    for (const auto& m : r.mechanisms) {
        os << to_string(m.mechanism) << ',' << to_string(prior) << ',' << csv::format(m.rmse.mean) << ','
           << (m.randomized ? csv::format(m.rmse.halfwidth) : "") << ',' << csv::format(m.regrade_fraction.mean) << ','
           << (m.randomized ? csv::format(m.regrade_fraction.halfwidth) : "") << '\n';
    }
}

/// paper_id,score_given,true_score on the shifted 0..4 scale.
inline void write_dataset_scores_csv(std::ostream& os, const DatasetBundle& b, const PaperScores& scores)
{
    os << "paper_id,score_given,true_score\n";
    for (const auto& [j, x] : scores)
        os << b.paper_labels[j] << ',' << csv::format(x) << ',' << csv::format(b.truths[j]) << '\n';
}

inline void write_dataset_transfers_csv(std::ostream& os, const DatasetBundle& b,
                                        const MechanismOutcome<DiscreteAccuracy>& outcome, double scale = 1.0)
{
    os << "grader_id,transfer\n";
    for (GraderId i = 0; i < outcome.transfers.size(); ++i)
        os << b.grader_labels[i] << ',' << csv::format(scale * outcome.transfers[i]) << '\n';
}

} // namespace peermech
