#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace scout {

/// Input outside the mathematical domain of a function.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// A matrix that must be positive definite was not.
struct NotPositiveDefinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap before meeting its tolerance.
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Threshold calibration asked for a statistic of an empty sample.
struct EmptyDistribution : std::runtime_error {
    EmptyDistribution() : std::runtime_error("empirical distribution is empty") {}
};

/// Configuration failed validation. `field` names the offending key.
struct ValidationError : std::invalid_argument {
    ValidationError(std::string field_name, const std::string& what)
        : std::invalid_argument(field_name + ": " + what), field(std::move(field_name)) {}
    std::string field;
};

/// Error raised while simulating a round; carries the round index.
struct RoundError : std::runtime_error {
    RoundError(std::int64_t round_index, const std::string& what)
        : std::runtime_error("round " + std::to_string(round_index) + ": " + what), round(round_index) {}
    std::int64_t round;
};

}  // namespace scout
