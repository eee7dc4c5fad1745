#pragma once

#include <stdexcept>
#include <string>

namespace peermech {

/// Input outside the mathematical domain of an operation (non-finite score,
/// score outside S, empty report set, grader not assigned to a paper).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Infeasible or inconsistent configuration (assignment sizes, Gibbs
/// iteration counts, model parameters).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Not enough probe data to estimate a grader's accuracy.
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mechanism inputs that do not line up with the assignment (missing grades,
/// mismatched paper sets).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. The message carries the offending line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace peermech
