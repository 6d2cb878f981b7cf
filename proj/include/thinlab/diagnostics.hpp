#pragma once

#include <Eigen/Dense>
#include <optional>
#include <variant>
#include <vector>

#include "thinlab/family.hpp"
#include "thinlab/rng.hpp"

namespace thinlab::diag {

// Thinning with a wrong nuisance value: the true generating law plus the
// value actually plugged into the conditional draw.

struct GaussianMismatch {
    double mean;
    double var_true;      // sigma^2
    double var_assumed;   // sigma~^2
    double epsilon;
    GaussianMismatch(double mean, double var_true, double var_assumed, double epsilon);
};

struct NegBinMismatch {
    double size_true;     // r
    double prob;          // p
    double size_assumed;  // r~
    double epsilon;
    NegBinMismatch(double size_true, double prob, double size_assumed, double epsilon);
};

struct GammaMismatch {
    double shape_true;     // alpha
    double rate;           // beta
    double shape_assumed;  // alpha~
    double epsilon;
    GammaMismatch(double shape_true, double rate, double shape_assumed, double epsilon);
};

using MismatchSpec = std::variant<GaussianMismatch, NegBinMismatch, GammaMismatch>;

struct MismatchMoments {
    double var1;
    double var2;
    double cov;
    double corr;
};

/// Closed-form fold moments under a misspecified nuisance parameter.
MismatchMoments mismatch_moments(const MismatchSpec& spec);

struct FoldStats {
    double corr_hat;
    double mean1_hat;
    double mean2_hat;
};

/// Simulates X from the true law, thins with the assumed nuisance, and
/// returns the empirical fold statistics.
FoldStats empirical_fold_stats(const MismatchSpec& spec, int n_reps, RandomStream& stream);

struct SweepRow {
    double nuisance;
    double corr_theory;
    double corr_hat;
};

/// One row per grid value of the assumed nuisance: theoretical correlation
/// next to the Monte Carlo estimate.
std::vector<SweepRow> mismatch_sweep(const MismatchSpec& base,
                                     const std::vector<double>& nuisance_grid, int n_reps,
                                     RandomStream& stream);

/// Grid of length `points` covering [0.4, 2.0] x true_value and containing
/// the true value exactly.
std::vector<double> nuisance_grid_around(double true_value, int points);

/// Parameters Fisher information can be queried about.  The last four are
/// nuisance parameters that must be known during thinning, so the allocation
/// result does not apply to them.
enum class Parameter {
    poisson_rate,
    binomial_prob,
    gaussian_mean,
    gaussian_var,
    binomial_trials,
    negative_binomial_size,
    gamma_shape,
};

struct FisherQuery {
    Family family;
    Parameter target;
    double value;  // parameter value where the information is evaluated
    std::vector<double> epsilons;
};

/// Per-fold Fisher information eps_m * I_X(theta); throws UsageError when the
/// target is a known-at-thinning nuisance parameter (no claim applies).
Eigen::VectorXd fisher_allocation(const FisherQuery& query);

struct SplitInfo {
    double train_dt;
    double test_dt;
    // Empty when eps * n is not an integer (sample splitting inapplicable).
    std::optional<double> train_ss;
    std::optional<double> test_ss;
};

/// Train/test information totals for data thinning vs sample splitting.  The
/// splitting assignment puts the first eps*n observations in the train set;
/// callers permute per_obs_informations to realize other assignments.
SplitInfo splitting_information(int n, double epsilon,
                                const std::vector<double>& per_obs_informations);

}  // namespace thinlab::diag
