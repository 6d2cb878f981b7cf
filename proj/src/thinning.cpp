#include "thinlab/thinning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "thinlab/parallel.hpp"
#include "thinlab/samplers.hpp"

namespace thinlab {

namespace fam {

Gaussian::Gaussian(double var_) : var(var_) {
    if (!(var > 0.0)) throw ParamError("gaussian family: variance must be > 0");
}

MultivariateGaussian::MultivariateGaussian(Eigen::MatrixXd cov_) : cov(std::move(cov_)) {
    if (cov.rows() < 1 || cov.rows() != cov.cols())
        throw ParamError("mv gaussian family: covariance must be square");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ParamError("mv gaussian family: covariance must be symmetric");
}

NegativeBinomial::NegativeBinomial(double size_) : size(size_) {
    if (!(size > 0.0)) throw ParamError("negative binomial family: size must be > 0");
}

Gamma::Gamma(double shape_) : shape(shape_) {
    if (!(shape > 0.0)) throw ParamError("gamma family: shape must be > 0");
}

Binomial::Binomial(std::int64_t trials_) : trials(trials_) {
    if (trials < 1) throw ParamError("binomial family: trials must be >= 1");
}

Multinomial::Multinomial(std::int64_t trials_, int dims_) : trials(trials_), dims(dims_) {
    if (trials < 1) throw ParamError("multinomial family: trials must be >= 1");
    if (dims < 2) throw ParamError("multinomial family: needs >= 2 categories");
}

}  // namespace fam

bool is_multivariate(const Family& family) {
    return std::holds_alternative<fam::MultivariateGaussian>(family) ||
           std::holds_alternative<fam::Multinomial>(family);
}

std::string family_name(const Family& family) {
    return std::visit(
        [](const auto& f) -> std::string {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, fam::Poisson>) return "poisson";
            if constexpr (std::is_same_v<T, fam::Gaussian>) return "gaussian";
            if constexpr (std::is_same_v<T, fam::MultivariateGaussian>) return "mvgaussian";
            if constexpr (std::is_same_v<T, fam::NegativeBinomial>) return "negative_binomial";
            if constexpr (std::is_same_v<T, fam::Gamma>) return "gamma";
            if constexpr (std::is_same_v<T, fam::Exponential>) return "exponential";
            if constexpr (std::is_same_v<T, fam::Binomial>) return "binomial";
            if constexpr (std::is_same_v<T, fam::Multinomial>) return "multinomial";
        },
        family);
}

ThinPlan::ThinPlan(std::vector<double> epsilons_) : epsilons(std::move(epsilons_)) {
    if (epsilons.size() < 2) throw PlanError("thin plan: needs at least 2 folds");
    double sum = 0.0;
    for (double e : epsilons) {
        if (!(e > 0.0 && e < 1.0)) throw PlanError("thin plan: weights must lie in (0, 1)");
        sum += e;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw PlanError("thin plan: weights must sum to 1");
}

ThinPlan ThinPlan::two_fold(double eps) { return ThinPlan({eps, 1.0 - eps}); }

ThinPlan ThinPlan::equal(int folds) {
    if (folds < 2) throw PlanError("thin plan: needs at least 2 folds");
    return ThinPlan(std::vector<double>(folds, 1.0 / folds));
}

namespace {

std::int64_t integer_share(double eps, std::int64_t trials, const char* family) {
    const double exact = eps * static_cast<double>(trials);
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-9) {
        std::ostringstream msg;
        msg << family << " family: eps * r = " << exact << " is not an integer";
        throw PlanError(msg.str());
    }
    const auto share = static_cast<std::int64_t>(rounded);
    if (share < 1) throw PlanError("thin plan: eps * r must be a positive integer");
    return share;
}

void check_integer_shares(const Family& family, const std::vector<double>& epsilons) {
    std::int64_t trials = 0;
    const char* name = nullptr;
    if (const auto* b = std::get_if<fam::Binomial>(&family)) {
        trials = b->trials;
        name = "binomial";
    } else if (const auto* m = std::get_if<fam::Multinomial>(&family)) {
        trials = m->trials;
        name = "multinomial";
    } else {
        return;
    }
    std::int64_t total = 0;
    for (double e : epsilons) total += integer_share(e, trials, name);
    if (total != trials) throw PlanError("thin plan: integer shares do not add up to r");
}

}  // namespace

void validate_plan(const Family& family, const ThinPlan& plan) {
    check_integer_shares(family, plan.epsilons);
}

void validate_epsilon(const Family& family, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw PlanError("thin: epsilon must lie in (0, 1)");
    check_integer_shares(family, {epsilon, 1.0 - epsilon});
}

namespace {

double require_count(double x, const char* what) {
    if (!(x >= 0.0) || x != std::floor(x)) {
        std::ostringstream msg;
        msg << what << ": observation " << x << " is not a non-negative integer";
        throw DomainError(msg.str());
    }
    return x;
}

std::int64_t as_count(double x, const char* what) {
    return static_cast<std::int64_t>(require_count(x, what));
}

double gamma_shape_of(const Family& family) {
    if (const auto* g = std::get_if<fam::Gamma>(&family)) return g->shape;
    return 1.0;  // exponential
}

// Keeps a positive-support fold strictly inside (0, x): extreme fold weights
// can make x*z round to 0 or to x, and both endpoints leave the gamma
// support.  The shift is at most one ulp, far inside the 1e-9 relative
// additivity tolerance for continuous families.
double clamp_inside(double value, double x) {
    if (!(value > 0.0)) return std::numeric_limits<double>::min();
    if (!(value < x)) return std::nextafter(x, 0.0);
    return value;
}

// Table-2 conditional draw of the first summand given the total.
double thin_scalar_once(double x, const Family& family, double eps, RandomStream& stream) {
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, fam::Poisson>) {
                return static_cast<double>(
                    dist::sample_binomial(as_count(x, "poisson thin"), eps, stream));
            } else if constexpr (std::is_same_v<T, fam::Gaussian>) {
                return dist::sample_normal(eps * x, eps * (1.0 - eps) * f.var, stream);
            } else if constexpr (std::is_same_v<T, fam::NegativeBinomial>) {
                return static_cast<double>(dist::sample_beta_binomial(
                    as_count(x, "negative binomial thin"), eps * f.size,
                    (1.0 - eps) * f.size, stream));
            } else if constexpr (std::is_same_v<T, fam::Gamma> ||
                                 std::is_same_v<T, fam::Exponential>) {
                if (!(x > 0.0)) throw DomainError("gamma thin: observation must be > 0");
                double alpha = 1.0;
                if constexpr (std::is_same_v<T, fam::Gamma>) alpha = f.shape;
                const double z = dist::sample_beta(eps * alpha, (1.0 - eps) * alpha, stream);
                return clamp_inside(x * z, x);
            } else if constexpr (std::is_same_v<T, fam::Binomial>) {
                const std::int64_t count = as_count(x, "binomial thin");
                if (count > f.trials)
                    throw DomainError("binomial thin: observation exceeds trials");
                const std::int64_t share = static_cast<std::int64_t>(
                    std::llround(eps * static_cast<double>(f.trials)));
                return static_cast<double>(dist::sample_hypergeometric(
                    share, f.trials - share, count, stream));
            } else {
                throw UsageError("thin: vector observation required for " +
                                 family_name(Family(f)));
            }
        },
        family);
}

void check_multinomial_obs(const Eigen::VectorXd& x, const fam::Multinomial& f) {
    if (x.size() != f.dims)
        throw DomainError("multinomial thin: observation has wrong dimension");
    std::int64_t total = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        total += as_count(x[i], "multinomial thin");
    if (total != f.trials)
        throw DomainError("multinomial thin: observation categories must sum to r");
}

}  // namespace

std::pair<double, double> thin(double x, const Family& family, double epsilon,
                               RandomStream& stream) {
    if (is_multivariate(family))
        throw UsageError("thin: " + family_name(family) + " requires a vector observation");
    validate_epsilon(family, epsilon);
    const double x1 = thin_scalar_once(x, family, epsilon, stream);
    return {x1, x - x1};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> thin(const Eigen::VectorXd& x,
                                                 const Family& family, double epsilon,
                                                 RandomStream& stream) {
    validate_epsilon(family, epsilon);
    if (const auto* g = std::get_if<fam::MultivariateGaussian>(&family)) {
        if (x.size() != g->cov.rows())
            throw DomainError("mv gaussian thin: observation has wrong dimension");
        const Eigen::VectorXd x1 = dist::sample_multivariate_normal(
            epsilon * x, epsilon * (1.0 - epsilon) * g->cov, stream);
        return {x1, x - x1};
    }
    if (const auto* m = std::get_if<fam::Multinomial>(&family)) {
        check_multinomial_obs(x, *m);
        const std::int64_t share = static_cast<std::int64_t>(
            std::llround(epsilon * static_cast<double>(m->trials)));
        const Eigen::VectorXd x1 =
            dist::sample_multivariate_hypergeometric(x, share, stream);
        return {x1, x - x1};
    }
    throw UsageError("thin: " + family_name(family) + " takes a scalar observation");
}

namespace {

std::vector<double> multithin_scalar(double x, const Family& family, const ThinPlan& plan,
                                     RandomStream& stream) {
    const int m_folds = plan.folds();
    const auto& eps = plan.epsilons;
    std::vector<double> folds(m_folds, 0.0);

    if (std::holds_alternative<fam::Poisson>(family)) {
        Eigen::Map<const Eigen::VectorXd> weights(eps.data(), m_folds);
        const Eigen::VectorXd counts = dist::sample_multinomial(
            as_count(x, "poisson multithin"), weights, stream);
        for (int m = 0; m < m_folds; ++m) folds[m] = counts[m];
        return folds;
    }
    if (const auto* nb = std::get_if<fam::NegativeBinomial>(&family)) {
        Eigen::VectorXd alphas(m_folds);
        for (int m = 0; m < m_folds; ++m) alphas[m] = eps[m] * nb->size;
        const Eigen::VectorXd p = dist::sample_dirichlet(alphas, stream);
        const Eigen::VectorXd counts = dist::sample_multinomial(
            as_count(x, "negative binomial multithin"), p, stream);
        for (int m = 0; m < m_folds; ++m) folds[m] = counts[m];
        return folds;
    }
    if (std::holds_alternative<fam::Gamma>(family) ||
        std::holds_alternative<fam::Exponential>(family)) {
        if (!(x > 0.0)) throw DomainError("gamma multithin: observation must be > 0");
        const double alpha = gamma_shape_of(family);
        Eigen::VectorXd alphas(m_folds);
        for (int m = 0; m < m_folds; ++m) alphas[m] = eps[m] * alpha;
        const Eigen::VectorXd z = dist::sample_dirichlet(alphas, stream);
        // Last fold is the remainder so the folds sum to x at bit level.
        double consumed = 0.0;
        for (int m = 0; m + 1 < m_folds; ++m) {
            folds[m] = clamp_inside(x * z[m], x);
            consumed += folds[m];
        }
        folds[m_folds - 1] = clamp_inside(x - consumed, x);
        return folds;
    }
    if (const auto* b = std::get_if<fam::Binomial>(&family)) {
        const std::int64_t count = as_count(x, "binomial multithin");
        if (count > b->trials)
            throw DomainError("binomial multithin: observation exceeds trials");
        Eigen::VectorXd bins(m_folds);
        for (int m = 0; m < m_folds; ++m)
            bins[m] = std::round(eps[m] * static_cast<double>(b->trials));
        const Eigen::VectorXd counts =
            dist::sample_multivariate_hypergeometric(bins, count, stream);
        for (int m = 0; m < m_folds; ++m) folds[m] = counts[m];
        return folds;
    }
    if (const auto* g = std::get_if<fam::Gaussian>(&family)) {
        // Recursive two-fold composition: thin the remainder with weight
        // eps_m / (1 - sum of earlier weights); distributionally identical to
        // the joint degenerate-MVN draw.
        double remainder = x;
        double remaining_weight = 1.0;
        for (int m = 0; m + 1 < m_folds; ++m) {
            const double w = eps[m] / remaining_weight;
            const double var_rem = remaining_weight * g->var;
            folds[m] = dist::sample_normal(w * remainder, w * (1.0 - w) * var_rem, stream);
            remainder -= folds[m];
            remaining_weight -= eps[m];
        }
        folds[m_folds - 1] = remainder;
        return folds;
    }
    throw UsageError("multithin: vector observation required for " + family_name(family));
}

std::vector<Eigen::VectorXd> multithin_vector(const Eigen::VectorXd& x, const Family& family,
                                              const ThinPlan& plan, RandomStream& stream) {
    const int m_folds = plan.folds();
    const auto& eps = plan.epsilons;
    std::vector<Eigen::VectorXd> folds(m_folds);

    if (const auto* g = std::get_if<fam::MultivariateGaussian>(&family)) {
        if (x.size() != g->cov.rows())
            throw DomainError("mv gaussian multithin: observation has wrong dimension");
        Eigen::VectorXd remainder = x;
        double remaining_weight = 1.0;
        for (int m = 0; m + 1 < m_folds; ++m) {
            const double w = eps[m] / remaining_weight;
            folds[m] = dist::sample_multivariate_normal(
                w * remainder, w * (1.0 - w) * remaining_weight * g->cov, stream);
            remainder -= folds[m];
            remaining_weight -= eps[m];
        }
        folds[m_folds - 1] = remainder;
        return folds;
    }
    if (const auto* mn = std::get_if<fam::Multinomial>(&family)) {
        check_multinomial_obs(x, *mn);
        // Fold m drawn from the counts left after folds 1..m-1.
        Eigen::VectorXd remaining = x;
        for (int m = 0; m + 1 < m_folds; ++m) {
            const std::int64_t share = static_cast<std::int64_t>(
                std::llround(eps[m] * static_cast<double>(mn->trials)));
            folds[m] = dist::sample_multivariate_hypergeometric(remaining, share, stream);
            remaining -= folds[m];
        }
        folds[m_folds - 1] = remaining;
        return folds;
    }
    throw UsageError("multithin: " + family_name(family) + " takes a scalar observation");
}

}  // namespace

std::vector<double> multithin(double x, const Family& family, const ThinPlan& plan,
                              RandomStream& stream) {
    if (is_multivariate(family))
        throw UsageError("multithin: " + family_name(family) +
                         " requires a vector observation");
    validate_plan(family, plan);
    return multithin_scalar(x, family, plan, stream);
}

std::vector<Eigen::VectorXd> multithin(const Eigen::VectorXd& x, const Family& family,
                                       const ThinPlan& plan, RandomStream& stream) {
    validate_plan(family, plan);
    return multithin_vector(x, family, plan, stream);
}

FoldSet thin_dataset(const Eigen::MatrixXd& X, const Family& family, const ThinPlan& plan,
                     ThinMode mode, const RandomStream& stream) {
    validate_plan(family, plan);
    const bool multivariate = is_multivariate(family);
    if (mode == ThinMode::rowwise && !multivariate)
        throw UsageError("thin_dataset: rowwise mode needs a multivariate family");
    if (mode == ThinMode::elementwise && multivariate)
        throw UsageError("thin_dataset: elementwise mode needs a univariate family");

    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const int m_folds = plan.folds();
    FoldSet fs{std::vector<Eigen::MatrixXd>(m_folds, Eigen::MatrixXd::Zero(n, d)), plan,
               family, stream.master_seed()};

    if (mode == ThinMode::elementwise) {
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
            RandomStream row_stream = stream.substream(static_cast<std::uint64_t>(i));
            for (Eigen::Index j = 0; j < d; ++j) {
                RandomStream cell_stream = row_stream.substream(static_cast<std::uint64_t>(j));
                const std::vector<double> cell =
                    multithin_scalar(X(static_cast<Eigen::Index>(i), j), family, plan,
                                     cell_stream);
                for (int m = 0; m < m_folds; ++m)
                    fs.folds[m](static_cast<Eigen::Index>(i), j) = cell[m];
            }
        });
    } else {
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
            RandomStream row_stream = stream.substream(static_cast<std::uint64_t>(i));
            const std::vector<Eigen::VectorXd> row_folds = multithin_vector(
                X.row(static_cast<Eigen::Index>(i)).transpose(), family, plan, row_stream);
            for (int m = 0; m < m_folds; ++m)
                fs.folds[m].row(static_cast<Eigen::Index>(i)) = row_folds[m].transpose();
        });
    }
    return fs;
}

Eigen::MatrixXd fold_complement(const FoldSet& fs, int m) {
    if (m < 1 || m > fs.fold_count())
        throw UsageError("fold_complement: fold index out of range");
    Eigen::MatrixXd total =
        Eigen::MatrixXd::Zero(fs.folds[0].rows(), fs.folds[0].cols());
    for (int j = 0; j < fs.fold_count(); ++j) {
        if (j != m - 1) total += fs.folds[j];
    }
    return total;
}

}  // namespace thinlab
