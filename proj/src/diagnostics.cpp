#include "thinlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "thinlab/parallel.hpp"
#include "thinlab/samplers.hpp"
#include "thinlab/thinning.hpp"

namespace thinlab::diag {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw ParamError(msg);
}

}  // namespace

GaussianMismatch::GaussianMismatch(double mean_, double var_true_, double var_assumed_,
                                   double epsilon_)
    : mean(mean_), var_true(var_true_), var_assumed(var_assumed_), epsilon(epsilon_) {
    require(var_true > 0.0 && var_assumed > 0.0, "mismatch: variances must be > 0");
    require(epsilon > 0.0 && epsilon < 1.0, "mismatch: epsilon must lie in (0, 1)");
}

NegBinMismatch::NegBinMismatch(double size_true_, double prob_, double size_assumed_,
                               double epsilon_)
    : size_true(size_true_), prob(prob_), size_assumed(size_assumed_), epsilon(epsilon_) {
    require(size_true > 0.0 && size_assumed > 0.0, "mismatch: sizes must be > 0");
    require(prob > 0.0 && prob < 1.0, "mismatch: prob must lie in (0, 1)");
    require(epsilon > 0.0 && epsilon < 1.0, "mismatch: epsilon must lie in (0, 1)");
}

GammaMismatch::GammaMismatch(double shape_true_, double rate_, double shape_assumed_,
                             double epsilon_)
    : shape_true(shape_true_), rate(rate_), shape_assumed(shape_assumed_),
      epsilon(epsilon_) {
    require(shape_true > 0.0 && rate > 0.0 && shape_assumed > 0.0,
            "mismatch: shapes and rate must be > 0");
    require(epsilon > 0.0 && epsilon < 1.0, "mismatch: epsilon must lie in (0, 1)");
}

MismatchMoments mismatch_moments(const MismatchSpec& spec) {
    MismatchMoments out{};
    if (const auto* g = std::get_if<GaussianMismatch>(&spec)) {
        const double e = g->epsilon;
        out.var1 = e * e * g->var_true + e * (1.0 - e) * g->var_assumed;
        out.var2 = (1.0 - e) * (1.0 - e) * g->var_true + e * (1.0 - e) * g->var_assumed;
        out.cov = e * (1.0 - e) * (g->var_true - g->var_assumed);
    } else if (const auto* nb = std::get_if<NegBinMismatch>(&spec)) {
        const double e = nb->epsilon;
        const double r = nb->size_true;
        const double p = nb->prob;
        const double rt = nb->size_assumed;
        const double mean_x = r * (1.0 - p) / p;
        const double var_x = r * (1.0 - p) / (p * p);
        const double shared =
            e * (1.0 - e) / (rt + 1.0) * (rt * mean_x + var_x + mean_x * mean_x);
        out.var1 = shared + e * e * var_x;
        out.var2 = shared + (1.0 - e) * (1.0 - e) * var_x;
        out.cov = e * (1.0 - e) * r * ((1.0 - p) / p) * ((1.0 - p) / p) *
                  (1.0 - (r + 1.0) / (rt + 1.0));
    } else {
        const auto& gm = std::get<GammaMismatch>(spec);
        const double e = gm.epsilon;
        const double a = gm.shape_true;
        const double b = gm.rate;
        const double at = gm.shape_assumed;
        const double mean_x = a / b;
        const double var_x = a / (b * b);
        const double shared = e * (1.0 - e) / (at + 1.0) * (var_x + mean_x * mean_x);
        out.var1 = shared + e * e * var_x;
        out.var2 = shared + (1.0 - e) * (1.0 - e) * var_x;
        out.cov = e * (1.0 - e) * (a / (b * b)) * (1.0 - (a + 1.0) / (at + 1.0));
    }
    out.corr = out.cov / std::sqrt(out.var1 * out.var2);
    return out;
}

namespace {

// One replicate: draw X from the true law, thin it with the assumed nuisance.
std::pair<double, double> simulate_mismatched_thin(const MismatchSpec& spec,
                                                   RandomStream& stream) {
    if (const auto* g = std::get_if<GaussianMismatch>(&spec)) {
        const double x = dist::sample_normal(g->mean, g->var_true, stream);
        const double x1 = dist::sample_normal(
            g->epsilon * x, g->epsilon * (1.0 - g->epsilon) * g->var_assumed, stream);
        return {x1, x - x1};
    }
    if (const auto* nb = std::get_if<NegBinMismatch>(&spec)) {
        const auto x = dist::sample_negative_binomial(nb->size_true, nb->prob, stream);
        const auto x1 = dist::sample_beta_binomial(
            x, nb->epsilon * nb->size_assumed, (1.0 - nb->epsilon) * nb->size_assumed,
            stream);
        return {static_cast<double>(x1), static_cast<double>(x - x1)};
    }
    const auto& gm = std::get<GammaMismatch>(spec);
    const double x = dist::sample_gamma(gm.shape_true, gm.rate, stream);
    const double z = dist::sample_beta(gm.epsilon * gm.shape_assumed,
                                       (1.0 - gm.epsilon) * gm.shape_assumed, stream);
    return {x * z, x * (1.0 - z)};
}

MismatchSpec with_assumed(const MismatchSpec& base, double nuisance) {
    if (const auto* g = std::get_if<GaussianMismatch>(&base))
        return GaussianMismatch(g->mean, g->var_true, nuisance, g->epsilon);
    if (const auto* nb = std::get_if<NegBinMismatch>(&base))
        return NegBinMismatch(nb->size_true, nb->prob, nuisance, nb->epsilon);
    const auto& gm = std::get<GammaMismatch>(base);
    return GammaMismatch(gm.shape_true, gm.rate, nuisance, gm.epsilon);
}

}  // namespace

FoldStats empirical_fold_stats(const MismatchSpec& spec, int n_reps, RandomStream& stream) {
    if (n_reps < 2) throw UsageError("empirical_fold_stats: needs n_reps >= 2");
    double s1 = 0.0, s2 = 0.0, s11 = 0.0, s22 = 0.0, s12 = 0.0;
    for (int rep = 0; rep < n_reps; ++rep) {
        RandomStream rep_stream = stream.substream(static_cast<std::uint64_t>(rep));
        const auto [x1, x2] = simulate_mismatched_thin(spec, rep_stream);
        s1 += x1;
        s2 += x2;
        s11 += x1 * x1;
        s22 += x2 * x2;
        s12 += x1 * x2;
    }
    const double n = static_cast<double>(n_reps);
    const double m1 = s1 / n;
    const double m2 = s2 / n;
    const double v1 = s11 / n - m1 * m1;
    const double v2 = s22 / n - m2 * m2;
    const double cov = s12 / n - m1 * m2;
    return {cov / std::sqrt(v1 * v2), m1, m2};
}

std::vector<SweepRow> mismatch_sweep(const MismatchSpec& base,
                                     const std::vector<double>& nuisance_grid, int n_reps,
                                     RandomStream& stream) {
    if (nuisance_grid.empty()) throw UsageError("mismatch_sweep: grid must be non-empty");
    std::vector<SweepRow> rows(nuisance_grid.size());
    parallel_for(nuisance_grid.size(), [&](std::size_t i) {
        const MismatchSpec spec = with_assumed(base, nuisance_grid[i]);
        RandomStream grid_stream = stream.substream(static_cast<std::uint64_t>(i));
        const FoldStats stats = empirical_fold_stats(spec, n_reps, grid_stream);
        rows[i] = {nuisance_grid[i], mismatch_moments(spec).corr, stats.corr_hat};
    });
    return rows;
}

std::vector<double> nuisance_grid_around(double true_value, int points) {
    if (points < 2 || !(true_value > 0.0))
        throw UsageError("nuisance_grid_around: needs points >= 2 and true_value > 0");
    std::vector<double> grid;
    grid.reserve(points);
    for (int i = 0; i < points - 1; ++i) {
        const double f = 0.4 + 1.6 * static_cast<double>(i) / static_cast<double>(points - 2);
        grid.push_back(true_value * f);
    }
    grid.push_back(true_value);
    std::sort(grid.begin(), grid.end());
    return grid;
}

Eigen::VectorXd fisher_allocation(const FisherQuery& query) {
    if (query.epsilons.empty())
        throw UsageError("fisher_allocation: needs at least one fold weight");
    double unit_information = 0.0;
    switch (query.target) {
        case Parameter::poisson_rate: {
            if (!std::holds_alternative<fam::Poisson>(query.family))
                throw UsageError("fisher_allocation: rate target needs a poisson family");
            if (!(query.value > 0.0)) throw ParamError("fisher_allocation: rate must be > 0");
            unit_information = 1.0 / query.value;
            break;
        }
        case Parameter::binomial_prob: {
            const auto* b = std::get_if<fam::Binomial>(&query.family);
            if (b == nullptr)
                throw UsageError("fisher_allocation: prob target needs a binomial family");
            if (!(query.value > 0.0 && query.value < 1.0))
                throw ParamError("fisher_allocation: prob must lie in (0, 1)");
            unit_information =
                static_cast<double>(b->trials) / (query.value * (1.0 - query.value));
            break;
        }
        case Parameter::gaussian_mean: {
            const auto* g = std::get_if<fam::Gaussian>(&query.family);
            if (g == nullptr)
                throw UsageError("fisher_allocation: mean target needs a gaussian family");
            unit_information = 1.0 / g->var;
            break;
        }
        default:
            throw UsageError(
                "fisher_allocation: no claim applies to a parameter that must be known "
                "during thinning");
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(query.epsilons.size()));
    for (Eigen::Index m = 0; m < out.size(); ++m)
        out[m] = query.epsilons[static_cast<std::size_t>(m)] * unit_information;
    return out;
}

SplitInfo splitting_information(int n, double epsilon,
                                const std::vector<double>& per_obs_informations) {
    if (static_cast<int>(per_obs_informations.size()) != n)
        throw UsageError("splitting_information: informations length must equal n");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw UsageError("splitting_information: epsilon must lie in (0, 1)");
    double total = 0.0;
    for (double info : per_obs_informations) total += info;

    SplitInfo out{epsilon * total, (1.0 - epsilon) * total, std::nullopt, std::nullopt};

    const double train_size_exact = epsilon * static_cast<double>(n);
    const double rounded = std::round(train_size_exact);
    if (std::abs(train_size_exact - rounded) <= 1e-9) {
        const int train_size = static_cast<int>(rounded);
        double train = 0.0;
        for (int i = 0; i < train_size; ++i) train += per_obs_informations[i];
        out.train_ss = train;
        out.test_ss = total - train;
    }
    return out;
}

}  // namespace thinlab::diag
