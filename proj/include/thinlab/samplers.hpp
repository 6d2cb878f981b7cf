#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <variant>

#include "thinlab/errors.hpp"
#include "thinlab/rng.hpp"

namespace thinlab::dist {

// Parameter-validated distribution descriptors.  Constructors throw
// ParamError on out-of-domain parameters.

struct Binomial {
    std::int64_t trials;
    double prob;
    Binomial(std::int64_t trials, double prob);
};

struct Beta {
    double a;
    double b;
    Beta(double a, double b);
};

struct Gamma {
    double shape;
    double rate;
    Gamma(double shape, double rate);
};

struct Hypergeometric {
    std::int64_t successes;
    std::int64_t failures;
    std::int64_t draws;
    Hypergeometric(std::int64_t successes, std::int64_t failures, std::int64_t draws);
};

struct Normal {
    double mean;
    double var;  // var == 0 degenerates to a point mass at mean
    Normal(double mean, double var);
};

struct BetaBinomial {
    std::int64_t trials;
    double a;
    double b;
    BetaBinomial(std::int64_t trials, double a, double b);
};

using PrimitiveDist = std::variant<Binomial, Beta, Gamma, Hypergeometric, Normal, BetaBinomial>;

struct Dirichlet {
    Eigen::VectorXd alphas;
    explicit Dirichlet(Eigen::VectorXd alphas);
};

struct Multinomial {
    std::int64_t trials;
    Eigen::VectorXd probs;  // simplex vector
    Multinomial(std::int64_t trials, Eigen::VectorXd probs);
};

struct MultivariateHypergeometric {
    Eigen::VectorXd bin_counts;  // non-negative integers
    std::int64_t draws;
    MultivariateHypergeometric(Eigen::VectorXd bin_counts, std::int64_t draws);
};

struct DirichletMultinomial {
    std::int64_t trials;
    Eigen::VectorXd alphas;
    DirichletMultinomial(std::int64_t trials, Eigen::VectorXd alphas);
};

struct MultivariateNormal {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric PSD
    MultivariateNormal(Eigen::VectorXd mean, Eigen::MatrixXd cov);
};

using VectorDist = std::variant<Dirichlet, Multinomial, MultivariateHypergeometric,
                                DirichletMultinomial, MultivariateNormal>;

/// One variate from a scalar distribution; integer supports are returned as
/// exactly-integral doubles.
double draw(const PrimitiveDist& dist, RandomStream& stream);

/// One variate from a vector distribution.
Eigen::VectorXd draw_vector(const VectorDist& dist, RandomStream& stream);

// Scalar sampling primitives used by draw() and by the thinning recipes and
// simulation generators.  All consume only the given stream.

double sample_normal(double mean, double var, RandomStream& stream);
double sample_gamma(double shape, double rate, RandomStream& stream);
double sample_beta(double a, double b, RandomStream& stream);
std::int64_t sample_binomial(std::int64_t trials, double prob, RandomStream& stream);
std::int64_t sample_poisson(double rate, RandomStream& stream);
std::int64_t sample_beta_binomial(std::int64_t trials, double a, double b, RandomStream& stream);

/// Classic urn parameterization: number of marked items among `draws` taken
/// without replacement from successes + failures.  Populations up to
/// `inversion_limit` use exact CDF inversion; larger ones a ratio-of-uniforms
/// rejection sampler.
std::int64_t sample_hypergeometric(std::int64_t successes, std::int64_t failures,
                                   std::int64_t draws, RandomStream& stream,
                                   std::int64_t inversion_limit = 1000000);

/// Gamma-Poisson mixture; size may be non-integer.
std::int64_t sample_negative_binomial(double size, double prob, RandomStream& stream);

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alphas, RandomStream& stream);
Eigen::VectorXd sample_multinomial(std::int64_t trials, const Eigen::VectorXd& probs,
                                   RandomStream& stream);
Eigen::VectorXd sample_multivariate_hypergeometric(const Eigen::VectorXd& bin_counts,
                                                   std::int64_t draws, RandomStream& stream);
Eigen::VectorXd sample_multivariate_normal(const Eigen::VectorXd& mean,
                                           const Eigen::MatrixXd& cov, RandomStream& stream);

}  // namespace thinlab::dist
