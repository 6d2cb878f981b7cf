#pragma once

#include <stdexcept>
#include <string>

namespace thinlab {

/// Invalid distribution or family parameters (prob outside [0,1], shape <= 0, ...).
struct ParamError : std::invalid_argument {
    explicit ParamError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Invalid fold plan: weights outside (0,1), wrong sum, non-integer eps*r, M < 2.
struct PlanError : std::invalid_argument {
    explicit PlanError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Data outside the family support, non-PSD covariance, draws exceeding population.
struct DomainError : std::domain_error {
    explicit DomainError(const std::string& msg) : std::domain_error(msg) {}
};

/// Incompatible option combinations (e.g. rowwise thinning of a univariate family).
struct UsageError : std::invalid_argument {
    explicit UsageError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// File parse or write failures; message carries row/column where known.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace thinlab
