#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "thinlab/errors.hpp"

namespace thinlab {

namespace fam {

// Convolution-closed families thinnable in closed form.  Fields are the
// nuisance parameters that must be known at thinning time; the convolution
// parameter itself stays unknown.

struct Poisson {};

struct Gaussian {
    double var;  // sigma^2, known
    explicit Gaussian(double var);
};

struct MultivariateGaussian {
    Eigen::MatrixXd cov;  // Sigma, known, PSD
    explicit MultivariateGaussian(Eigen::MatrixXd cov);
};

struct NegativeBinomial {
    double size;  // r, known
    explicit NegativeBinomial(double size);
};

struct Gamma {
    double shape;  // alpha, known
    explicit Gamma(double shape);
};

// Thinned as Gamma with known shape 1.
struct Exponential {};

struct Binomial {
    std::int64_t trials;  // r, known; eps * r must be an integer
    explicit Binomial(std::int64_t trials);
};

struct Multinomial {
    std::int64_t trials;  // r, known; eps * r must be an integer
    int dims;             // k
    Multinomial(std::int64_t trials, int dims);
};

}  // namespace fam

using Family = std::variant<fam::Poisson, fam::Gaussian, fam::MultivariateGaussian,
                            fam::NegativeBinomial, fam::Gamma, fam::Exponential,
                            fam::Binomial, fam::Multinomial>;

/// True for MultivariateGaussian and Multinomial, whose observations are
/// vectors (dataset rows) rather than scalars (dataset cells).
bool is_multivariate(const Family& family);

std::string family_name(const Family& family);

/// Fold weights eps_1..eps_M.  Construction enforces M >= 2, every weight in
/// (0,1), and a unit sum to 1e-12; family-specific integer constraints are
/// checked by validate_plan.
struct ThinPlan {
    std::vector<double> epsilons;

    explicit ThinPlan(std::vector<double> epsilons);

    /// Two-fold plan (eps, 1 - eps).
    static ThinPlan two_fold(double eps);

    /// M equal weights 1/M.
    static ThinPlan equal(int folds);

    int folds() const { return static_cast<int>(epsilons.size()); }
};

/// Throws PlanError when the plan is invalid for the family (non-integer
/// eps_m * r for binomial/multinomial).
void validate_plan(const Family& family, const ThinPlan& plan);
void validate_epsilon(const Family& family, double epsilon);

/// Output of dataset-level thinning: M matrices of the input's shape that sum
/// elementwise to the input, with the plan/family/seed needed to re-run.
struct FoldSet {
    std::vector<Eigen::MatrixXd> folds;
    ThinPlan plan;
    Family family;
    std::uint64_t seed = 0;

    int fold_count() const { return static_cast<int>(folds.size()); }
};

}  // namespace thinlab
