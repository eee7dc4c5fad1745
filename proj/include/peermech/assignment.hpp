#pragma once

#include <peermech/errors.hpp>
#include <peermech/model.hpp>
#include <peermech/random.hpp>

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace peermech {

/// Papers one grader is asked to grade, split into probe and non-probe batches.
struct GraderLoad {
    std::vector<PaperId> probes;
    std::vector<PaperId> nonprobes;

    friend bool operator==(const GraderLoad&, const GraderLoad&) = default;
};

struct PlanEdge {
    GraderId grader;
    PaperId paper;
    bool probe;

    friend auto operator<=>(const PlanEdge&, const PlanEdge&) = default;
};

/// Grader <-> paper bipartite structure with the derived index sets
/// G(j), G^-1(i) and the co-grader sets CG_i.
///
/// Two flavours exist. Synthetic plans share one id space between graders and
/// papers (students grade each other), have a global probe set and a fixed
/// per-grader load K. Dataset plans have separate id spaces, per-grader probe
/// sets and variable loads (`k() == 0`).
class AssignmentPlan {
public:
    AssignmentPlan() = default;

    AssignmentPlan(std::size_t num_papers, std::vector<GraderLoad> per_grader, std::vector<PaperId> probe_ids,
                   std::size_t k, bool shared_identity)
        : num_papers_(num_papers), k_(k), shared_identity_(shared_identity), probe_ids_(std::move(probe_ids)),
          per_grader_(std::move(per_grader))
    {
        std::sort(probe_ids_.begin(), probe_ids_.end());
        derive();
    }

    std::size_t num_graders() const noexcept { return per_grader_.size(); }
    std::size_t num_papers() const noexcept { return num_papers_; }
    /// Papers per grader, or 0 when loads vary.
    std::size_t k() const noexcept { return k_; }
    bool shared_identity() const noexcept { return shared_identity_; }

    const std::vector<PaperId>& probe_ids() const noexcept { return probe_ids_; }
    bool is_global_probe(PaperId j) const { return std::binary_search(probe_ids_.begin(), probe_ids_.end(), j); }

    const GraderLoad& load(GraderId i) const { return per_grader_.at(i); }
    const std::vector<GraderLoad>& loads() const noexcept { return per_grader_; }

    /// G(j): every grader assigned paper j, sorted.
    const std::vector<GraderId>& graders(PaperId j) const { return graders_.at(j); }
    /// Graders for whom j is a non-probe paper; these reports decide the score of j.
    const std::vector<GraderId>& nonprobe_graders(PaperId j) const { return nonprobe_graders_.at(j); }
    /// Papers with at least one non-probe report, sorted. These are the papers the mechanisms score.
    const std::vector<PaperId>& scored_papers() const noexcept { return scored_papers_; }
    /// CG_i: union of nonprobe_graders(j) over j in NP_i. Contains i whenever NP_i is non-empty.
    const std::vector<GraderId>& cograders(GraderId i) const { return cograders_.at(i); }

    /// All edges sorted by (grader, paper).
    std::vector<PlanEdge> edges() const
    {
        std::vector<PlanEdge> out;
        for (GraderId i = 0; i < per_grader_.size(); ++i) {
            for (PaperId j : per_grader_[i].probes)
                out.push_back({i, j, true});
            for (PaperId j : per_grader_[i].nonprobes)
                out.push_back({i, j, false});
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    std::size_t num_edges() const noexcept
    {
        std::size_t total = 0;
        for (const auto& l : per_grader_)
            total += l.probes.size() + l.nonprobes.size();
        return total;
    }

    friend bool operator==(const AssignmentPlan& a, const AssignmentPlan& b)
    {
        return a.num_papers_ == b.num_papers_ && a.k_ == b.k_ && a.shared_identity_ == b.shared_identity_ &&
               a.probe_ids_ == b.probe_ids_ && a.per_grader_ == b.per_grader_;
    }

private:
    void derive()
    {
        graders_.assign(num_papers_, {});
        nonprobe_graders_.assign(num_papers_, {});
        for (GraderId i = 0; i < per_grader_.size(); ++i) {
            auto check = [&](PaperId j) {
                if (j >= num_papers_)
                    throw InputError("paper id " + std::to_string(j) + " out of range for grader " + std::to_string(i));
            };
            for (PaperId j : per_grader_[i].probes) {
                check(j);
                graders_[j].push_back(i);
            }
            for (PaperId j : per_grader_[i].nonprobes) {
                check(j);
                graders_[j].push_back(i);
                nonprobe_graders_[j].push_back(i);
            }
        }
        scored_papers_.clear();
        for (PaperId j = 0; j < num_papers_; ++j) {
            std::sort(graders_[j].begin(), graders_[j].end());
            if (!nonprobe_graders_[j].empty())
                scored_papers_.push_back(j);
        }
        cograders_.assign(per_grader_.size(), {});
        for (GraderId i = 0; i < per_grader_.size(); ++i) {
            std::set<GraderId> cg;
            for (PaperId j : per_grader_[i].nonprobes)
                cg.insert(nonprobe_graders_[j].begin(), nonprobe_graders_[j].end());
            cograders_[i].assign(cg.begin(), cg.end());
        }
    }

    std::size_t num_papers_ = 0;
    std::size_t k_ = 0;
    bool shared_identity_ = true;
    std::vector<PaperId> probe_ids_;
    std::vector<GraderLoad> per_grader_;

    std::vector<std::vector<GraderId>> graders_;
    std::vector<std::vector<GraderId>> nonprobe_graders_;
    std::vector<PaperId> scored_papers_;
    std::vector<std::vector<GraderId>> cograders_;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
    SelfGrading,
    DuplicatePaper,
    ProbeCount,
    NonProbeCount,
    MissingProbe,
    MissingNonProbe,
    ProbeNotInProbeSet,
    NonProbeInProbeSet,
    EmptyPaper,
    NonProbeLoad,
    ProbeLoad,
    CograderSet,
};

inline const char* to_string(ViolationKind k) noexcept
{
    switch (k) {
    case ViolationKind::SelfGrading: return "self-grading";
    case ViolationKind::DuplicatePaper: return "duplicate-paper";
    case ViolationKind::ProbeCount: return "probe-count";
    case ViolationKind::NonProbeCount: return "nonprobe-count";
    case ViolationKind::MissingProbe: return "missing-probe";
    case ViolationKind::MissingNonProbe: return "missing-nonprobe";
    case ViolationKind::ProbeNotInProbeSet: return "probe-not-in-probe-set";
    case ViolationKind::NonProbeInProbeSet: return "nonprobe-in-probe-set";
    case ViolationKind::EmptyPaper: return "empty-paper";
    case ViolationKind::NonProbeLoad: return "nonprobe-load";
    case ViolationKind::ProbeLoad: return "probe-load";
    case ViolationKind::CograderSet: return "cograder-set";
    }
    return "unknown";
}

struct Violation {
    ViolationKind kind;
    std::optional<GraderId> grader;
    std::optional<PaperId> paper;
    std::string message;
};

/// Lists every violated plan invariant. An empty result means the plan is valid.
inline std::vector<Violation> validate(const AssignmentPlan& plan)
{
    std::vector<Violation> out;
    const std::size_t half = plan.k() / 2;
    const bool fixed_load = plan.k() > 0;
    const bool global_probes = !plan.probe_ids().empty();

    for (GraderId i = 0; i < plan.num_graders(); ++i) {
        const GraderLoad& l = plan.load(i);
        std::set<PaperId> seen;
        auto visit = [&](PaperId j) {
            if (plan.shared_identity() && j == i)
                out.push_back({ViolationKind::SelfGrading, i, j,
                               "grader " + std::to_string(i) + " grades own paper " + std::to_string(j)});
            if (!seen.insert(j).second)
                out.push_back({ViolationKind::DuplicatePaper, i, j,
                               "grader " + std::to_string(i) + " assigned paper " + std::to_string(j) + " twice"});
        };
        for (PaperId j : l.probes) {
            visit(j);
            if (global_probes && !plan.is_global_probe(j))
                out.push_back({ViolationKind::ProbeNotInProbeSet, i, j,
                               "paper " + std::to_string(j) + " used as probe for grader " + std::to_string(i) +
                                   " but not in the probe set"});
        }
        for (PaperId j : l.nonprobes) {
            visit(j);
            if (global_probes && plan.is_global_probe(j))
                out.push_back({ViolationKind::NonProbeInProbeSet, i, j,
                               "probe paper " + std::to_string(j) + " listed as non-probe for grader " +
                                   std::to_string(i)});
        }
        if (l.probes.empty())
            out.push_back({ViolationKind::MissingProbe, i, std::nullopt, "grader " + std::to_string(i) + " has no probe paper"});
        if (l.nonprobes.empty())
            out.push_back({ViolationKind::MissingNonProbe, i, std::nullopt,
                           "grader " + std::to_string(i) + " has no non-probe paper"});
        if (fixed_load && l.probes.size() != half)
            out.push_back({ViolationKind::ProbeCount, i, std::nullopt,
                           "grader " + std::to_string(i) + " has " + std::to_string(l.probes.size()) +
                               " probe papers, expected " + std::to_string(half)});
        if (fixed_load && l.nonprobes.size() != half)
            out.push_back({ViolationKind::NonProbeCount, i, std::nullopt,
                           "grader " + std::to_string(i) + " has " + std::to_string(l.nonprobes.size()) +
                               " non-probe papers, expected " + std::to_string(half)});

        const auto& cg = plan.cograders(i);
        if (!l.nonprobes.empty() && !std::binary_search(cg.begin(), cg.end(), i))
            out.push_back({ViolationKind::CograderSet, i, std::nullopt,
                           "grader " + std::to_string(i) + " missing from own co-grader set"});
    }

    for (PaperId j = 0; j < plan.num_papers(); ++j) {
        if (plan.graders(j).empty())
            out.push_back({ViolationKind::EmptyPaper, std::nullopt, j, "paper " + std::to_string(j) + " has no grader"});
    }

    if (fixed_load && global_probes) {
        const std::size_t n = plan.num_graders();
        const std::size_t nonprobe_papers = plan.num_papers() - plan.probe_ids().size();
        if (nonprobe_papers > 0) {
            const std::size_t slots = n * half;
            const std::size_t lo = slots / nonprobe_papers;
            const std::size_t hi = lo + (slots % nonprobe_papers != 0 ? 1 : 0);
            for (PaperId j = 0; j < plan.num_papers(); ++j) {
                if (plan.is_global_probe(j))
                    continue;
                const std::size_t load = plan.graders(j).size();
                if (load < lo || load > hi)
                    out.push_back({ViolationKind::NonProbeLoad, std::nullopt, j,
                                   "non-probe paper " + std::to_string(j) + " has " + std::to_string(load) +
                                       " graders, expected " + std::to_string(lo) + ".." + std::to_string(hi)});
            }
        }
        const std::size_t probe_slots = n * half;
        const std::size_t plo = probe_slots / plan.probe_ids().size();
        const std::size_t phi = plo + (probe_slots % plan.probe_ids().size() != 0 ? 1 : 0);
        for (PaperId j : plan.probe_ids()) {
            const std::size_t load = plan.graders(j).size();
            if (load < plo || load > phi)
                out.push_back({ViolationKind::ProbeLoad, std::nullopt, j,
                               "probe paper " + std::to_string(j) + " has " + std::to_string(load) +
                                   " graders, expected " + std::to_string(plo) + ".." + std::to_string(phi)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Construction

namespace detail {

/// Fills `lists[g]` (for each grader g in `order`) with `per_grader` papers taken
/// cyclically from `papers`, then swaps slots until nobody grades their own paper.
/// Returns false if the repair pass cannot find a legal swap.
inline bool fill_block(const std::vector<GraderId>& order, const std::vector<PaperId>& papers, std::size_t per_grader,
                       std::vector<std::vector<PaperId>>& lists)
{
    const std::size_t pool = papers.size();
    std::size_t slot = 0;
    for (GraderId g : order) {
        auto& l = lists[g];
        l.clear();
        for (std::size_t t = 0; t < per_grader; ++t, ++slot)
            l.push_back(papers[slot % pool]);
    }

    auto contains = [](const std::vector<PaperId>& l, PaperId p) { return std::find(l.begin(), l.end(), p) != l.end(); };

    const std::size_t n = order.size();
    for (std::size_t a = 0; a < n; ++a) {
        const GraderId g = order[a];
        for (std::size_t t = 0; t < per_grader; ++t) {
            if (lists[g][t] != g)
                continue;
            bool fixed = false;
            for (std::size_t step = 1; step < n && !fixed; ++step) {
                const GraderId h = order[(a + step) % n];
                if (contains(lists[h], g))
                    continue;
                for (std::size_t u = 0; u < per_grader; ++u) {
                    const PaperId candidate = lists[h][u];
                    if (candidate == g || contains(lists[g], candidate))
                        continue;
                    lists[h][u] = g;
                    lists[g][t] = candidate;
                    fixed = true;
                    break;
                }
            }
            if (!fixed)
                return false;
        }
    }
    return true;
}

} // namespace detail

struct AssignmentOptions {
    /// Require every non-probe paper to receive the same number of graders
    /// instead of loads differing by at most one.
    bool strict_uniform_load = false;
    /// Reshuffle attempts when the self-grading repair gets stuck.
    int max_attempts = 64;
};

/// Builds a balanced assignment of n students: `probe_count` probe papers,
/// every grader gets k/2 probe and k/2 non-probe papers, never their own.
inline AssignmentPlan build_assignment(std::size_t n, std::size_t probe_count, std::size_t k, std::uint64_t seed,
                                       const AssignmentOptions& options = {})
{
    if (n < 2)
        throw ConfigError("build_assignment: n must be >= 2");
    if (k < 2 || k % 2 != 0)
        throw ConfigError("build_assignment: K must be even and >= 2 (got " + std::to_string(k) + ")");
    if (probe_count < 1 || probe_count >= n)
        throw ConfigError("build_assignment: probe count must satisfy 1 <= l < n");
    const std::size_t half = k / 2;
    const std::size_t nonprobe_count = n - probe_count;
    // A probe paper's owner needs K/2 probes other than their own; same for non-probe owners.
    if (half > probe_count - 1)
        throw ConfigError("build_assignment: K/2 <= l - 1 violated (K/2=" + std::to_string(half) +
                          ", l=" + std::to_string(probe_count) + "): a probe owner cannot get K/2 other probe papers");
    if (half > nonprobe_count - 1)
        throw ConfigError("build_assignment: K/2 <= n - l - 1 violated (K/2=" + std::to_string(half) +
                          ", n-l=" + std::to_string(nonprobe_count) +
                          "): a non-probe owner cannot get K/2 other non-probe papers");
    if (n * half < nonprobe_count)
        throw ConfigError("build_assignment: n*K/2 >= n - l violated: some non-probe paper would have no grader");
    if (options.strict_uniform_load && (n * half) % nonprobe_count != 0)
        throw ConfigError("build_assignment: strict load requested but n*K/2=" + std::to_string(n * half) +
                          " is not divisible by n-l=" + std::to_string(nonprobe_count));

    Rng rng(seed);
    std::vector<PaperId> students(n);
    for (PaperId s = 0; s < n; ++s)
        students[s] = s;

    for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
        std::vector<PaperId> shuffled = students;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        std::vector<PaperId> probes(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(probe_count));
        std::vector<PaperId> nonprobes(shuffled.begin() + static_cast<std::ptrdiff_t>(probe_count), shuffled.end());

        std::vector<GraderId> order(students.begin(), students.end());
        std::shuffle(order.begin(), order.end(), rng);

        std::vector<std::vector<PaperId>> probe_lists(n), nonprobe_lists(n);
        if (!detail::fill_block(order, probes, half, probe_lists))
            continue;
        std::shuffle(order.begin(), order.end(), rng);
        if (!detail::fill_block(order, nonprobes, half, nonprobe_lists))
            continue;

        std::vector<GraderLoad> loads(n);
        for (GraderId i = 0; i < n; ++i) {
            loads[i].probes = std::move(probe_lists[i]);
            loads[i].nonprobes = std::move(nonprobe_lists[i]);
            std::sort(loads[i].probes.begin(), loads[i].probes.end());
            std::sort(loads[i].nonprobes.begin(), loads[i].nonprobes.end());
        }
        return AssignmentPlan(n, std::move(loads), std::move(probes), k, true);
    }
    throw ConfigError("build_assignment: self-grading repair failed after " + std::to_string(options.max_attempts) +
                      " attempts");
}

// ---------------------------------------------------------------------------
// CSV: grader_id,paper_id,is_probe

inline void write_plan_csv(std::ostream& os, const AssignmentPlan& plan)
{
    os << "grader_id,paper_id,is_probe\n";
    for (const PlanEdge& e : plan.edges())
        os << e.grader << ',' << e.paper << ',' << (e.probe ? 1 : 0) << '\n';
}

/// Reads a plan written by write_plan_csv. Ids are treated as students of one
/// cohort (shared id space); K is recovered when every grader has the same load.
inline AssignmentPlan read_plan_csv(std::istream& is)
{
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line))
        throw ParseError(1, "empty plan file");
    ++lineno;
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != "grader_id,paper_id,is_probe")
        throw ParseError(1, "expected header grader_id,paper_id,is_probe");

    std::vector<PlanEdge> edges;
    std::size_t max_id = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
            throw ParseError(lineno, "expected 3 fields");
        try {
            std::size_t pos = 0;
            const unsigned long g = std::stoul(a, &pos);
            if (pos != a.size())
                throw ParseError(lineno, "bad grader id");
            const unsigned long p = std::stoul(b, &pos);
            if (pos != b.size())
                throw ParseError(lineno, "bad paper id");
            if (c != "0" && c != "1")
                throw ParseError(lineno, "is_probe must be 0 or 1");
            edges.push_back({static_cast<GraderId>(g), static_cast<PaperId>(p), c == "1"});
            max_id = std::max<std::size_t>(max_id, std::max(g, p));
        } catch (const std::logic_error&) {
            throw ParseError(lineno, "non-numeric id");
        }
    }
    const std::size_t n = edges.empty() ? 0 : max_id + 1;
    std::vector<GraderLoad> loads(n);
    std::set<PaperId> probe_set;
    for (const PlanEdge& e : edges) {
        (e.probe ? loads[e.grader].probes : loads[e.grader].nonprobes).push_back(e.paper);
        if (e.probe)
            probe_set.insert(e.paper);
    }
    std::size_t k = loads.empty() ? 0 : loads[0].probes.size() + loads[0].nonprobes.size();
    for (auto& l : loads) {
        std::sort(l.probes.begin(), l.probes.end());
        std::sort(l.nonprobes.begin(), l.nonprobes.end());
        if (l.probes.size() + l.nonprobes.size() != k)
            k = 0;
    }
    return AssignmentPlan(n, std::move(loads), std::vector<PaperId>(probe_set.begin(), probe_set.end()), k, true);
}

} // namespace peermech
