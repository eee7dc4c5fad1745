#pragma once

#include <peermech/errors.hpp>
#include <peermech/model.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace peermech {

/// True score per paper, indexed by paper id.
using TrueScores = std::vector<double>;

struct GradeEntry {
    double score = 0.0;
    bool probe = false;

    friend bool operator==(const GradeEntry&, const GradeEntry&) = default;
};

/// Sparse (grader, paper) -> reported score, each entry tagged probe or non-probe.
class GradeMatrix {
public:
    using Key = std::pair<GraderId, PaperId>;
    using Storage = std::map<Key, GradeEntry>;

    void set(GraderId grader, PaperId paper, double score, bool probe)
    {
        entries_[{grader, paper}] = GradeEntry{score, probe};
    }

    /// Replaces the score of an existing entry, keeping its probe flag.
    void update_score(GraderId grader, PaperId paper, double score)
    {
        auto it = entries_.find({grader, paper});
        if (it == entries_.end())
            throw InputError("no grade for grader " + std::to_string(grader) + " on paper " + std::to_string(paper));
        it->second.score = score;
    }

    const GradeEntry* find(GraderId grader, PaperId paper) const
    {
        auto it = entries_.find({grader, paper});
        return it == entries_.end() ? nullptr : &it->second;
    }

    double score(GraderId grader, PaperId paper) const
    {
        const GradeEntry* e = find(grader, paper);
        if (e == nullptr)
            throw InputError("no grade for grader " + std::to_string(grader) + " on paper " + std::to_string(paper));
        return e->score;
    }

    bool contains(GraderId grader, PaperId paper) const { return entries_.count({grader, paper}) != 0; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    const Storage& entries() const noexcept { return entries_; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    friend bool operator==(const GradeMatrix&, const GradeMatrix&) = default;

private:
    Storage entries_;
};

} // namespace peermech
