#include "thinlab/samplers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace thinlab::dist {

namespace {

bool is_integral(double x) { return std::isfinite(x) && x == std::floor(x); }

void require(bool ok, const char* msg) {
    if (!ok) throw ParamError(msg);
}

double log_factorial(double n) { return std::lgamma(n + 1.0); }

}  // namespace

Binomial::Binomial(std::int64_t trials_, double prob_) : trials(trials_), prob(prob_) {
    require(trials >= 0, "binomial: trials must be >= 0");
    require(prob >= 0.0 && prob <= 1.0, "binomial: prob must lie in [0, 1]");
}

Beta::Beta(double a_, double b_) : a(a_), b(b_) {
    require(a > 0.0 && b > 0.0, "beta: shapes must be > 0");
}

Gamma::Gamma(double shape_, double rate_) : shape(shape_), rate(rate_) {
    require(shape > 0.0 && rate > 0.0, "gamma: shape and rate must be > 0");
}

Hypergeometric::Hypergeometric(std::int64_t successes_, std::int64_t failures_,
                               std::int64_t draws_)
    : successes(successes_), failures(failures_), draws(draws_) {
    require(successes >= 0 && failures >= 0 && draws >= 0,
            "hypergeometric: counts must be >= 0");
    if (draws > successes + failures)
        throw DomainError("hypergeometric: draws exceed population");
}

Normal::Normal(double mean_, double var_) : mean(mean_), var(var_) {
    require(std::isfinite(mean), "normal: mean must be finite");
    require(var >= 0.0, "normal: variance must be >= 0");
}

BetaBinomial::BetaBinomial(std::int64_t trials_, double a_, double b_)
    : trials(trials_), a(a_), b(b_) {
    require(trials >= 0, "beta-binomial: trials must be >= 0");
    require(a > 0.0 && b > 0.0, "beta-binomial: shapes must be > 0");
}

Dirichlet::Dirichlet(Eigen::VectorXd alphas_) : alphas(std::move(alphas_)) {
    require(alphas.size() >= 1, "dirichlet: needs at least one component");
    require((alphas.array() > 0.0).all(), "dirichlet: alphas must be > 0");
}

Multinomial::Multinomial(std::int64_t trials_, Eigen::VectorXd probs_)
    : trials(trials_), probs(std::move(probs_)) {
    require(trials >= 0, "multinomial: trials must be >= 0");
    require(probs.size() >= 1, "multinomial: needs at least one category");
    require((probs.array() >= 0.0).all() && (probs.array() <= 1.0).all(),
            "multinomial: probs must lie in [0, 1]");
    require(std::abs(probs.sum() - 1.0) <= 1e-12, "multinomial: probs must sum to 1");
}

MultivariateHypergeometric::MultivariateHypergeometric(Eigen::VectorXd bin_counts_,
                                                       std::int64_t draws_)
    : bin_counts(std::move(bin_counts_)), draws(draws_) {
    require(bin_counts.size() >= 1, "mv hypergeometric: needs at least one bin");
    double total = 0.0;
    for (Eigen::Index i = 0; i < bin_counts.size(); ++i) {
        require(is_integral(bin_counts[i]) && bin_counts[i] >= 0.0,
                "mv hypergeometric: bin counts must be non-negative integers");
        total += bin_counts[i];
    }
    require(draws >= 0, "mv hypergeometric: draws must be >= 0");
    if (static_cast<double>(draws) > total)
        throw DomainError("mv hypergeometric: draws exceed population");
}

DirichletMultinomial::DirichletMultinomial(std::int64_t trials_, Eigen::VectorXd alphas_)
    : trials(trials_), alphas(std::move(alphas_)) {
    require(trials >= 0, "dirichlet-multinomial: trials must be >= 0");
    require(alphas.size() >= 1, "dirichlet-multinomial: needs at least one component");
    require((alphas.array() > 0.0).all(), "dirichlet-multinomial: alphas must be > 0");
}

MultivariateNormal::MultivariateNormal(Eigen::VectorXd mean_, Eigen::MatrixXd cov_)
    : mean(std::move(mean_)), cov(std::move(cov_)) {
    require(mean.size() >= 1, "mv normal: needs at least one dimension");
    require(cov.rows() == mean.size() && cov.cols() == mean.size(),
            "mv normal: covariance shape mismatch");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
            "mv normal: covariance must be symmetric");
}

double sample_normal(double mean, double var, RandomStream& stream) {
    if (var == 0.0) return mean;
    return mean + std::sqrt(var) * stream.next_normal();
}

// Marsaglia-Tsang for shape >= 1; shapes below 1 use the boosting identity
// G(a) = G(a+1) * U^{1/a}, which stays accurate for the tiny shapes eps*alpha
// produced by multifold thinning.
double sample_gamma(double shape, double rate, RandomStream& stream) {
    if (shape < 1.0) {
        const double boosted = sample_gamma(shape + 1.0, rate, stream);
        const double u = stream.next_uniform();
        const double value = boosted * std::exp(std::log(u) / shape);
        return std::max(value, std::numeric_limits<double>::denorm_min());
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = stream.next_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = stream.next_uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

double sample_beta(double a, double b, RandomStream& stream) {
    const double x = sample_gamma(a, 1.0, stream);
    const double y = sample_gamma(b, 1.0, stream);
    return x / (x + y);
}

std::int64_t sample_binomial(std::int64_t trials, double prob, RandomStream& stream) {
    if (trials == 0 || prob <= 0.0) return 0;
    if (prob >= 1.0) return trials;
    if (prob > 0.5) return trials - sample_binomial(trials, 1.0 - prob, stream);
    // Keep (1-p)^n representable; binomial additivity lets us split the trials.
    const double log_q = static_cast<double>(trials) * std::log1p(-prob);
    if (log_q < -700.0) {
        const std::int64_t half = trials / 2;
        return sample_binomial(half, prob, stream) +
               sample_binomial(trials - half, prob, stream);
    }
    // CDF inversion via the pmf recurrence.
    const double u = stream.next_uniform();
    double pmf = std::exp(log_q);
    double cum = pmf;
    std::int64_t k = 0;
    const double ratio = prob / (1.0 - prob);
    while (u > cum && k < trials) {
        ++k;
        pmf *= static_cast<double>(trials - k + 1) / static_cast<double>(k) * ratio;
        cum += pmf;
    }
    return k;
}

namespace {

// Knuth's product-of-uniforms method; only sensible for small rates.
std::int64_t poisson_small(double rate, RandomStream& stream) {
    const double threshold = std::exp(-rate);
    std::int64_t k = 0;
    double product = stream.next_uniform();
    while (product > threshold) {
        ++k;
        product *= stream.next_uniform();
    }
    return k;
}

// Hormann's PTRS transformed-rejection sampler, exact for rate >= 10.
std::int64_t poisson_ptrs(double rate, RandomStream& stream) {
    const double log_rate = std::log(rate);
    const double b = 0.931 + 2.53 * std::sqrt(rate);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = stream.next_uniform() - 0.5;
        const double v = stream.next_uniform();
        const double us = 0.5 - std::abs(u);
        const double kf = std::floor((2.0 * a / us + b) * u + rate + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            kf * log_rate - rate - std::lgamma(kf + 1.0)) {
            return static_cast<std::int64_t>(kf);
        }
    }
}

}  // namespace

std::int64_t sample_poisson(double rate, RandomStream& stream) {
    if (rate < 0.0) throw ParamError("poisson: rate must be >= 0");
    if (rate == 0.0) return 0;
    return rate < 30.0 ? poisson_small(rate, stream) : poisson_ptrs(rate, stream);
}

std::int64_t sample_beta_binomial(std::int64_t trials, double a, double b,
                                  RandomStream& stream) {
    const double p = sample_beta(a, b, stream);
    return sample_binomial(trials, p, stream);
}

namespace {

std::int64_t hypergeometric_inversion(std::int64_t successes, std::int64_t failures,
                                      std::int64_t draws, RandomStream& stream) {
    const std::int64_t lo = std::max<std::int64_t>(0, draws - failures);
    const std::int64_t hi = std::min(draws, successes);
    if (lo == hi) return lo;
    // pmf at the lower support point, then walk the recurrence upward.
    const double n = static_cast<double>(successes + failures);
    auto log_choose = [](double top, double bottom) {
        return log_factorial(top) - log_factorial(bottom) - log_factorial(top - bottom);
    };
    const double log_p_lo = log_choose(static_cast<double>(successes), static_cast<double>(lo)) +
                            log_choose(static_cast<double>(failures),
                                       static_cast<double>(draws - lo)) -
                            log_choose(n, static_cast<double>(draws));
    double pmf = std::exp(log_p_lo);
    double cum = pmf;
    std::int64_t k = lo;
    const double u = stream.next_uniform();
    while (u > cum && k < hi) {
        const double kd = static_cast<double>(k);
        pmf *= (static_cast<double>(successes) - kd) * (static_cast<double>(draws) - kd) /
               ((kd + 1.0) * (static_cast<double>(failures) - static_cast<double>(draws) + kd + 1.0));
        ++k;
        cum += pmf;
    }
    return k;
}

// Stadlober's HRUA ratio-of-uniforms rejection; O(1) per draw for the huge
// populations where inversion would crawl.
std::int64_t hypergeometric_hrua(std::int64_t successes, std::int64_t failures,
                                 std::int64_t draws, RandomStream& stream) {
    const double d1 = 1.7155277699214135;
    const double d2 = 0.8989161620588988;

    const std::int64_t good = successes;
    const std::int64_t bad = failures;
    const std::int64_t popsize = good + bad;
    const std::int64_t mingoodbad = std::min(good, bad);
    const std::int64_t maxgoodbad = std::max(good, bad);
    const std::int64_t m = std::min(draws, popsize - draws);

    const double d4 = static_cast<double>(mingoodbad) / static_cast<double>(popsize);
    const double d5 = 1.0 - d4;
    const double d6 = static_cast<double>(m) * d4 + 0.5;
    const double d7 = std::sqrt(static_cast<double>(popsize - m) * static_cast<double>(draws) *
                                    d4 * d5 / static_cast<double>(popsize - 1) +
                                0.5);
    const double d8 = d1 * d7 + d2;
    const std::int64_t d9 = static_cast<std::int64_t>(
        std::floor(static_cast<double>(m + 1) * static_cast<double>(mingoodbad + 1) /
                   static_cast<double>(popsize + 2)));
    const double d10 = log_factorial(static_cast<double>(d9)) +
                       log_factorial(static_cast<double>(mingoodbad - d9)) +
                       log_factorial(static_cast<double>(m - d9)) +
                       log_factorial(static_cast<double>(maxgoodbad - m + d9));
    const double d11 = std::min(static_cast<double>(std::min<std::int64_t>(m, mingoodbad)) + 1.0,
                                std::floor(d6 + 16.0 * d7));

    std::int64_t z = 0;
    for (;;) {
        const double x = stream.next_uniform();
        const double y = stream.next_uniform();
        const double w = d6 + d8 * (y - 0.5) / x;
        if (w < 0.0 || w >= d11) continue;
        z = static_cast<std::int64_t>(std::floor(w));
        const double t = d10 - (log_factorial(static_cast<double>(z)) +
                                log_factorial(static_cast<double>(mingoodbad - z)) +
                                log_factorial(static_cast<double>(m - z)) +
                                log_factorial(static_cast<double>(maxgoodbad - m + z)));
        if (x * (4.0 - x) - 3.0 <= t) break;
        if (x * (x - t) >= 1.0) continue;
        if (2.0 * std::log(x) <= t) break;
    }
    if (good > bad) z = m - z;
    if (m < draws) z = good - z;
    return z;
}

}  // namespace

std::int64_t sample_hypergeometric(std::int64_t successes, std::int64_t failures,
                                   std::int64_t draws, RandomStream& stream,
                                   std::int64_t inversion_limit) {
    [[maybe_unused]] Hypergeometric params(successes, failures, draws);  // validates
    const std::int64_t popsize = successes + failures;
    if (popsize == 0) return 0;
    const std::int64_t lo = std::max<std::int64_t>(0, draws - failures);
    const std::int64_t hi = std::min(draws, successes);
    if (lo == hi) return lo;
    if (popsize <= inversion_limit) {
        return hypergeometric_inversion(successes, failures, draws, stream);
    }
    return hypergeometric_hrua(successes, failures, draws, stream);
}

std::int64_t sample_negative_binomial(double size, double prob, RandomStream& stream) {
    if (size <= 0.0 || prob <= 0.0 || prob > 1.0)
        throw ParamError("negative binomial: size must be > 0 and prob in (0, 1]");
    if (prob == 1.0) return 0;
    const double mixing_rate = sample_gamma(size, prob / (1.0 - prob), stream);
    return sample_poisson(mixing_rate, stream);
}

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alphas, RandomStream& stream) {
    Eigen::VectorXd parts(alphas.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < alphas.size(); ++i) {
        parts[i] = sample_gamma(alphas[i], 1.0, stream);
        total += parts[i];
    }
    return parts / total;
}

Eigen::VectorXd sample_multinomial(std::int64_t trials, const Eigen::VectorXd& probs,
                                   RandomStream& stream) {
    const Eigen::Index k = probs.size();
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    std::int64_t remaining_trials = trials;
    double remaining_mass = 1.0;
    for (Eigen::Index i = 0; i + 1 < k; ++i) {
        if (remaining_trials == 0) break;
        double conditional = remaining_mass > 0.0 ? probs[i] / remaining_mass : 1.0;
        conditional = std::clamp(conditional, 0.0, 1.0);
        const std::int64_t c = sample_binomial(remaining_trials, conditional, stream);
        counts[i] = static_cast<double>(c);
        remaining_trials -= c;
        remaining_mass -= probs[i];
    }
    counts[k - 1] = static_cast<double>(remaining_trials);
    return counts;
}

Eigen::VectorXd sample_multivariate_hypergeometric(const Eigen::VectorXd& bin_counts,
                                                   std::int64_t draws, RandomStream& stream) {
    const Eigen::Index k = bin_counts.size();
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    std::int64_t remaining_population = 0;
    for (Eigen::Index i = 0; i < k; ++i)
        remaining_population += static_cast<std::int64_t>(bin_counts[i]);
    std::int64_t remaining_draws = draws;
    for (Eigen::Index i = 0; i + 1 < k; ++i) {
        const std::int64_t bin = static_cast<std::int64_t>(bin_counts[i]);
        const std::int64_t c = sample_hypergeometric(bin, remaining_population - bin,
                                                     remaining_draws, stream);
        counts[i] = static_cast<double>(c);
        remaining_population -= bin;
        remaining_draws -= c;
    }
    counts[k - 1] = static_cast<double>(remaining_draws);
    return counts;
}

Eigen::VectorXd sample_multivariate_normal(const Eigen::VectorXd& mean,
                                           const Eigen::MatrixXd& cov, RandomStream& stream) {
    const Eigen::Index d = mean.size();
    Eigen::MatrixXd factor;
    const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() == Eigen::Success) {
        factor = llt.matrixL();
    } else {
        // Semi-definite covariance: factor through the eigendecomposition and
        // clamp round-off negatives to zero.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
        const Eigen::VectorXd vals = eig.eigenvalues();
        const double max_eig = std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
        if (vals.minCoeff() < -1e-8 * max_eig)
            throw DomainError("mv normal: covariance is not positive semi-definite");
        factor = eig.eigenvectors() * vals.cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = stream.next_normal();
    return mean + factor * z;
}

double draw(const PrimitiveDist& dist, RandomStream& stream) {
    return std::visit(
        [&stream](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Binomial>) {
                return static_cast<double>(sample_binomial(d.trials, d.prob, stream));
            } else if constexpr (std::is_same_v<T, Beta>) {
                return sample_beta(d.a, d.b, stream);
            } else if constexpr (std::is_same_v<T, Gamma>) {
                return sample_gamma(d.shape, d.rate, stream);
            } else if constexpr (std::is_same_v<T, Hypergeometric>) {
                return static_cast<double>(
                    sample_hypergeometric(d.successes, d.failures, d.draws, stream));
            } else if constexpr (std::is_same_v<T, Normal>) {
                return sample_normal(d.mean, d.var, stream);
            } else {
                return static_cast<double>(sample_beta_binomial(d.trials, d.a, d.b, stream));
            }
        },
        dist);
}

Eigen::VectorXd draw_vector(const VectorDist& dist, RandomStream& stream) {
    return std::visit(
        [&stream](const auto& d) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Dirichlet>) {
                return sample_dirichlet(d.alphas, stream);
            } else if constexpr (std::is_same_v<T, Multinomial>) {
                return sample_multinomial(d.trials, d.probs, stream);
            } else if constexpr (std::is_same_v<T, MultivariateHypergeometric>) {
                return sample_multivariate_hypergeometric(d.bin_counts, d.draws, stream);
            } else if constexpr (std::is_same_v<T, DirichletMultinomial>) {
                const Eigen::VectorXd p = sample_dirichlet(d.alphas, stream);
                return sample_multinomial(d.trials, p, stream);
            } else {
                return sample_multivariate_normal(d.mean, d.cov, stream);
            }
        },
        dist);
}

}  // namespace thinlab::dist
