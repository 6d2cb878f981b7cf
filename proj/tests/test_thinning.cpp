#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "stat_utils.hpp"
#include "thinlab/samplers.hpp"
#include "thinlab/thinning.hpp"

using namespace thinlab;

TEST_CASE("plan validation") {
    CHECK_THROWS_AS(ThinPlan({0.5}), PlanError);
    CHECK_THROWS_AS(ThinPlan({0.5, 0.6}), PlanError);
    CHECK_THROWS_AS(ThinPlan({1.0, 0.0}), PlanError);
    CHECK_NOTHROW(ThinPlan({0.2, 0.2, 0.2, 0.2, 0.2}));

    RandomStream s(1);
    // eps * r = 2.5 is not an integer.
    CHECK_THROWS_AS(thin(5.0, fam::Binomial(10), 0.25, s), PlanError);
    CHECK_NOTHROW(thin(5.0, fam::Binomial(10), 0.2, s));
    CHECK_THROWS_AS(validate_plan(fam::Multinomial(10, 3), ThinPlan({0.15, 0.85})),
                    PlanError);
}

TEST_CASE("observations outside the family support are rejected") {
    RandomStream s(2);
    CHECK_THROWS_AS(thin(-1.0, fam::Poisson{}, 0.5, s), DomainError);
    CHECK_THROWS_AS(thin(2.5, fam::Poisson{}, 0.5, s), DomainError);
    CHECK_THROWS_AS(thin(12.0, fam::Binomial(10), 0.5, s), DomainError);
    CHECK_THROWS_AS(thin(0.0, fam::Gamma(3.0), 0.5, s), DomainError);
    Eigen::VectorXd bad_row(3);
    bad_row << 4.0, 4.0, 4.0;  // sums to 12, r = 10
    CHECK_THROWS_AS(thin(bad_row, fam::Multinomial(10, 3), 0.5, s), DomainError);
}

TEST_CASE("poisson thinning keeps the summation constraint") {
    RandomStream s(3);
    for (int rep = 0; rep < 200; ++rep) {
        const auto [x1, x2] = thin(5.0, fam::Poisson{}, 0.5, s);
        CHECK(x1 >= 0.0);
        CHECK(x1 <= 5.0);
        CHECK(x1 + x2 == 5.0);
        CHECK(x1 == std::floor(x1));
    }
}

TEST_CASE("gaussian thinning: linear expectation and independence") {
    RandomStream s(4);
    const Family family = fam::Gaussian(5.0);
    const int n = 100000;
    std::vector<double> fold1(n), fold2(n);
    for (int i = 0; i < n; ++i) {
        const double x = dist::sample_normal(7.0, 5.0, s);
        const auto [x1, x2] = thin(x, family, 0.44, s);
        fold1[i] = x1;
        fold2[i] = x2;
    }
    const auto m1 = testutil::moments(fold1);
    CHECK(std::abs(m1.mean - 0.44 * 7.0) < 3.0 * m1.se_mean);
    CHECK(std::abs(testutil::pearson(fold1, fold2)) < 0.01);
    // Fold-1 marginal is N(eps*mu, eps*sigma^2).
    const boost::math::normal_distribution<> ref(0.44 * 7.0, std::sqrt(0.44 * 5.0));
    CHECK(testutil::ks_statistic(fold1, [&](double x) { return cdf(ref, x); }) < 0.01);
}

TEST_CASE("gamma multithin sums exactly and stays positive") {
    RandomStream s(5);
    const ThinPlan plan({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
    const auto folds = multithin(2.4, fam::Gamma(3.0), plan, s);
    REQUIRE(folds.size() == 3);
    CHECK(folds[0] + folds[1] + folds[2] == 2.4);  // last fold is the remainder
    for (double f : folds) CHECK(f > 0.0);
}

TEST_CASE("poisson multithin of zero gives zero folds") {
    RandomStream s(6);
    const auto folds = multithin(0.0, fam::Poisson{}, ThinPlan::equal(4), s);
    for (double f : folds) CHECK(f == 0.0);
}

TEST_CASE("gaussian multifold: marginal independence and variances") {
    RandomStream s(7);
    const ThinPlan plan({0.2, 0.3, 0.5});
    const int n = 100000;
    std::vector<std::vector<double>> folds(3, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
        const double x = s.next_normal();  // N(0, 1)
        const auto f = multithin(x, fam::Gaussian(1.0), plan, s);
        for (int m = 0; m < 3; ++m) folds[m][i] = f[m];
    }
    for (int m = 0; m < 3; ++m) {
        const auto mm = testutil::moments(folds[m]);
        CHECK(std::abs(mm.mean) < 4.0 * mm.se_mean);
        CHECK(std::abs(mm.var - plan.epsilons[m]) < 4.0 * mm.se_var);
    }
    CHECK(std::abs(testutil::pearson(folds[0], folds[1])) < 0.01);
    CHECK(std::abs(testutil::pearson(folds[0], folds[2])) < 0.01);
    CHECK(std::abs(testutil::pearson(folds[1], folds[2])) < 0.01);
}

namespace {

// Example-6 style oracle: joint conditional draw of all folds given X = x
// from the degenerate multivariate normal with covariance
// sigma^2 (diag(eps) - eps eps^T), sampled through its eigendecomposition.
std::vector<double> degenerate_mvn_folds(double x, double var,
                                         const std::vector<double>& eps,
                                         RandomStream& stream) {
    const int m = static_cast<int>(eps.size());
    Eigen::VectorXd e(m);
    for (int i = 0; i < m; ++i) e[i] = eps[i];
    const Eigen::MatrixXd cov =
        var * (Eigen::MatrixXd(e.asDiagonal()) - e * e.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::MatrixXd factor =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    Eigen::VectorXd z(m);
    for (int i = 0; i < m; ++i) z[i] = stream.next_normal();
    const Eigen::VectorXd draw = x * e + factor * z;
    return {draw.data(), draw.data() + m};
}

struct FoldMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

FoldMoments fold_moments(const std::vector<std::vector<double>>& folds) {
    const int m = static_cast<int>(folds.size());
    const int n = static_cast<int>(folds[0].size());
    FoldMoments out;
    out.mean = Eigen::VectorXd::Zero(m);
    out.cov = Eigen::MatrixXd::Zero(m, m);
    for (int a = 0; a < m; ++a)
        for (int i = 0; i < n; ++i) out.mean[a] += folds[a][i];
    out.mean /= n;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                acc += (folds[a][i] - out.mean[a]) * (folds[b][i] - out.mean[b]);
            out.cov(a, b) = acc / n;
        }
    return out;
}

}  // namespace

TEST_CASE("recursive gaussian multithin matches the degenerate-MVN oracle") {
    const double x = 1.7;
    const double var = 2.0;
    const std::vector<double> eps = {0.2, 0.3, 0.5};
    const int n = 100000;

    RandomStream s_impl(8);
    RandomStream s_oracle(9);
    std::vector<std::vector<double>> impl(3, std::vector<double>(n));
    std::vector<std::vector<double>> oracle(3, std::vector<double>(n));
    const ThinPlan plan(eps);
    for (int i = 0; i < n; ++i) {
        const auto f = multithin(x, fam::Gaussian(var), plan, s_impl);
        const auto g = degenerate_mvn_folds(x, var, eps, s_oracle);
        for (int m = 0; m < 3; ++m) {
            impl[m][i] = f[m];
            oracle[m][i] = g[m];
        }
    }
    const FoldMoments mi = fold_moments(impl);
    const FoldMoments mo = fold_moments(oracle);
    for (int a = 0; a < 3; ++a) {
        // Conditional mean eps_a * x and variance eps_a (1 - eps_a) sigma^2.
        const double want_mean = eps[a] * x;
        const double want_var = eps[a] * (1.0 - eps[a]) * var;
        const double se_mean = std::sqrt(want_var / n);
        CHECK(std::abs(mi.mean[a] - want_mean) < 4.0 * se_mean);
        CHECK(std::abs(mo.mean[a] - want_mean) < 4.0 * se_mean);
        const double se_var = want_var * std::sqrt(2.0 / n);  // normal fourth moment
        CHECK(std::abs(mi.cov(a, a) - want_var) < 4.0 * se_var);
        CHECK(std::abs(mo.cov(a, a) - want_var) < 4.0 * se_var);
        for (int b = a + 1; b < 3; ++b) {
            const double want_cov = -eps[a] * eps[b] * var;
            const double se_cov = std::sqrt(
                (mi.cov(a, a) * mi.cov(b, b) + want_cov * want_cov) / n);
            CHECK(std::abs(mi.cov(a, b) - want_cov) < 4.0 * se_cov);
            CHECK(std::abs(mo.cov(a, b) - want_cov) < 4.0 * se_cov);
        }
    }
}

TEST_CASE("equal-weight multithin fold matches single thin at eps = 1/M") {
    const int n = 100000;
    RandomStream s1(10), s2(11);
    std::vector<double> single(n), multi(n);
    const ThinPlan plan = ThinPlan::equal(5);
    for (int i = 0; i < n; ++i) {
        const double xa = dist::sample_gamma(7.0, 5.0, s1);
        single[i] = thin(xa, fam::Gamma(7.0), 0.2, s1).first;
        const double xb = dist::sample_gamma(7.0, 5.0, s2);
        multi[i] = multithin(xb, fam::Gamma(7.0), plan, s2)[0];
    }
    // Both marginals are Gamma(7/5, 5).
    const boost::math::gamma_distribution<> ref(1.4, 1.0 / 5.0);
    CHECK(testutil::ks_statistic(single, [&](double v) { return cdf(ref, v); }) < 0.01);
    CHECK(testutil::ks_statistic(multi, [&](double v) { return cdf(ref, v); }) < 0.01);
}

TEST_CASE("negative binomial and binomial multithin keep supports and sums") {
    RandomStream s(12);
    const ThinPlan plan({0.2, 0.3, 0.5});
    const int n = 30000;
    std::vector<double> nb_fold1(n);
    for (int i = 0; i < n; ++i) {
        const double x =
            static_cast<double>(dist::sample_negative_binomial(7.0, 0.7, s));
        const auto folds = multithin(x, fam::NegativeBinomial(7.0), plan, s);
        double sum = 0.0;
        for (double f : folds) {
            CHECK(f >= 0.0);
            CHECK(f == std::floor(f));
            sum += f;
        }
        CHECK(sum == x);
        nb_fold1[i] = folds[0];
    }
    // E[fold 1] = eps_1 * r (1-p)/p = 0.2 * 3.
    const auto m = testutil::moments(nb_fold1);
    CHECK(std::abs(m.mean - 0.6) < 4.0 * m.se_mean);

    for (int i = 0; i < 2000; ++i) {
        const double x = static_cast<double>(dist::sample_binomial(10, 0.35, s));
        const auto folds = multithin(x, fam::Binomial(10), plan, s);
        CHECK(folds[0] <= 2.0);
        CHECK(folds[1] <= 3.0);
        CHECK(folds[2] <= 5.0);
        CHECK(folds[0] + folds[1] + folds[2] == x);
    }
}

TEST_CASE("multinomial thinning: category structure preserved") {
    RandomStream s(13);
    Eigen::VectorXd probs(3);
    probs << 0.2, 0.3, 0.5;
    const Family family = fam::Multinomial(10, 3);
    const int n = 30000;
    std::vector<double> fold1_cat0(n);
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd x = dist::sample_multinomial(10, probs, s);
        const auto [x1, x2] = thin(x, family, 0.5, s);
        CHECK(x1.sum() == 5.0);
        CHECK(x2.sum() == 5.0);
        CHECK(((x1 + x2) - x).cwiseAbs().maxCoeff() == 0.0);
        for (int j = 0; j < 3; ++j) CHECK(x1[j] <= x[j]);
        fold1_cat0[i] = x1[0];
    }
    // Fold 1 ~ Multinomial(5, p), so category 0 has mean 5 * 0.2.
    const auto m = testutil::moments(fold1_cat0);
    CHECK(std::abs(m.mean - 1.0) < 4.0 * m.se_mean);

    const auto folds = multithin(dist::sample_multinomial(10, probs, s), family,
                                 ThinPlan({0.2, 0.3, 0.5}), s);
    CHECK(folds[0].sum() == 2.0);
    CHECK(folds[1].sum() == 3.0);
    CHECK(folds[2].sum() == 5.0);
}

TEST_CASE("multivariate gaussian thinning: conditional moments") {
    RandomStream s(14);
    Eigen::MatrixXd cov(2, 2);
    cov << 2.0, 0.5, 0.5, 1.0;
    Eigen::VectorXd x(2);
    x << 1.0, -2.0;
    const Family family = fam::MultivariateGaussian(cov);
    const double eps = 0.3;
    const int n = 30000;
    std::vector<std::vector<double>> fold1(2, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
        const auto [x1, x2] = thin(x, family, eps, s);
        CHECK((x1 + x2 - x).cwiseAbs().maxCoeff() < 1e-12);
        fold1[0][i] = x1[0];
        fold1[1][i] = x1[1];
    }
    const FoldMoments fm = fold_moments(fold1);
    const Eigen::MatrixXd want_cov = eps * (1.0 - eps) * cov;
    for (int a = 0; a < 2; ++a) {
        CHECK(std::abs(fm.mean[a] - eps * x[a]) < 4.0 * std::sqrt(want_cov(a, a) / n));
        CHECK(std::abs(fm.cov(a, a) - want_cov(a, a)) <
              4.0 * want_cov(a, a) * std::sqrt(2.0 / n));
    }
    const double se_cov =
        std::sqrt((want_cov(0, 0) * want_cov(1, 1) + want_cov(0, 1) * want_cov(0, 1)) / n);
    CHECK(std::abs(fm.cov(0, 1) - want_cov(0, 1)) < 4.0 * se_cov);
}

TEST_CASE("discrete fold marginals match the analytic law in total variation") {
    const int n = 100000;

    // Negative binomial: fold 1 of NB(7, 0.7) at eps = 0.4 is NB(2.8, 0.7).
    {
        RandomStream s(25);
        std::vector<int> counts(60, 0);
        for (int i = 0; i < n; ++i) {
            const double x =
                static_cast<double>(dist::sample_negative_binomial(7.0, 0.7, s));
            const double x1 = thin(x, fam::NegativeBinomial(7.0), 0.4, s).first;
            if (x1 < 60.0) counts[static_cast<std::size_t>(x1)] += 1;
        }
        const double r = 0.4 * 7.0, p = 0.7;
        double tv = 0.0;
        for (int k = 0; k < 60; ++k) {
            const double log_pmf = std::lgamma(k + r) - std::lgamma(r) -
                                   std::lgamma(k + 1.0) + r * std::log(p) +
                                   k * std::log(1.0 - p);
            tv += std::abs(counts[static_cast<std::size_t>(k)] / double(n) -
                           std::exp(log_pmf));
        }
        CHECK(tv / 2.0 < 0.01);
    }

    // Binomial: fold 1 of Binomial(10, 0.35) at eps = 0.5 is Binomial(5, 0.35).
    {
        RandomStream s(26);
        std::vector<int> counts(6, 0);
        for (int i = 0; i < n; ++i) {
            const double x = static_cast<double>(dist::sample_binomial(10, 0.35, s));
            const double x1 = thin(x, fam::Binomial(10), 0.5, s).first;
            counts[static_cast<std::size_t>(x1)] += 1;
        }
        double tv = 0.0;
        for (int k = 0; k <= 5; ++k) {
            const double log_pmf = std::lgamma(6.0) - std::lgamma(k + 1.0) -
                                   std::lgamma(6.0 - k) + k * std::log(0.35) +
                                   (5.0 - k) * std::log(0.65);
            tv += std::abs(counts[static_cast<std::size_t>(k)] / double(n) -
                           std::exp(log_pmf));
        }
        CHECK(tv / 2.0 < 0.01);
    }
}

TEST_CASE("exponential thinning is gamma thinning with unit shape") {
    RandomStream s(15);
    const int n = 100000;
    std::vector<double> fold1(n);
    for (int i = 0; i < n; ++i) {
        const double x = dist::sample_gamma(1.0, 2.0, s);
        fold1[i] = thin(x, fam::Exponential{}, 0.3, s).first;
    }
    const boost::math::gamma_distribution<> ref(0.3, 1.0 / 2.0);
    CHECK(testutil::ks_statistic(fold1, [&](double v) { return cdf(ref, v); }) < 0.01);
}

TEST_CASE("fold_complement basics and distribution") {
    RandomStream s(16);
    const Eigen::MatrixXd X =
        (Eigen::MatrixXd(2, 2) << 3.0, 0.0, 7.0, 2.0).finished();
    const FoldSet fs =
        thin_dataset(X, fam::Poisson{}, ThinPlan::two_fold(0.4), ThinMode::elementwise, s);
    CHECK((fold_complement(fs, 1) - fs.folds[1]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fold_complement(fs, 2) - fs.folds[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fold_complement(fs, 1) + fs.folds[0] - X).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(fold_complement(fs, 0), UsageError);
    CHECK_THROWS_AS(fold_complement(fs, 3), UsageError);

    // M = 5 equal plan on Poisson(3): complement of fold 1 has mean 0.8 * 3.
    const int n = 30000;
    std::vector<double> comp(n);
    RandomStream s2(17);
    for (int i = 0; i < n; ++i) {
        const double x = static_cast<double>(dist::sample_poisson(3.0, s2));
        const auto folds = multithin(x, fam::Poisson{}, ThinPlan::equal(5), s2);
        comp[i] = x - folds[0];
    }
    const auto m = testutil::moments(comp);
    CHECK(std::abs(m.mean - 2.4) < 3.0 * m.se_mean);
}

TEST_CASE("thin_dataset: trivial cases, support and additivity") {
    RandomStream s(18);
    const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(2, 2);
    const FoldSet zero_fs =
        thin_dataset(zeros, fam::Poisson{}, ThinPlan::two_fold(0.5), ThinMode::elementwise, s);
    CHECK(zero_fs.folds[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero_fs.folds[1].cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd gamma_data(3, 4);
    RandomStream gen(19);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) gamma_data(i, j) = dist::sample_gamma(5.0, 2.0, gen);
    const FoldSet fs = thin_dataset(gamma_data, fam::Gamma(5.0), ThinPlan::equal(3),
                                    ThinMode::elementwise, s);
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(3, 4);
    for (const auto& f : fs.folds) {
        CHECK((f.array() > 0.0).all());
        total += f;
    }
    CHECK(((total - gamma_data).cwiseAbs().array() /
           gamma_data.cwiseAbs().array())
              .maxCoeff() < 1e-9);
}

TEST_CASE("thin_dataset: mode/family mismatches are usage errors") {
    RandomStream s(20);
    const Eigen::MatrixXd X = Eigen::MatrixXd::Constant(2, 3, 1.0);
    CHECK_THROWS_AS(
        thin_dataset(X, fam::Poisson{}, ThinPlan::two_fold(0.5), ThinMode::rowwise, s),
        UsageError);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(thin_dataset(X, fam::MultivariateGaussian(cov), ThinPlan::two_fold(0.5),
                                 ThinMode::elementwise, s),
                    UsageError);
}

TEST_CASE("thin_dataset is deterministic across thread counts") {
    RandomStream s(21);
    Eigen::MatrixXd X(40, 7);
    RandomStream gen(22);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 7; ++j)
            X(i, j) = static_cast<double>(dist::sample_poisson(4.0, gen));

    setenv("THINLAB_THREADS", "1", 1);
    const FoldSet serial =
        thin_dataset(X, fam::Poisson{}, ThinPlan::equal(3), ThinMode::elementwise, s);
    setenv("THINLAB_THREADS", "4", 1);
    const FoldSet threaded =
        thin_dataset(X, fam::Poisson{}, ThinPlan::equal(3), ThinMode::elementwise, s);
    unsetenv("THINLAB_THREADS");
    for (int m = 0; m < 3; ++m)
        CHECK((serial.folds[m] - threaded.folds[m]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("thinning a submatrix reproduces the corresponding cells") {
    RandomStream s(23);
    Eigen::MatrixXd X(5, 4);
    RandomStream gen(24);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j)
            X(i, j) = static_cast<double>(dist::sample_poisson(6.0, gen));

    const FoldSet full =
        thin_dataset(X, fam::Poisson{}, ThinPlan::two_fold(0.5), ThinMode::elementwise, s);
    const FoldSet sub = thin_dataset(X.topLeftCorner(3, 2), fam::Poisson{},
                                     ThinPlan::two_fold(0.5), ThinMode::elementwise, s);
    CHECK((full.folds[0].topLeftCorner(3, 2) - sub.folds[0]).cwiseAbs().maxCoeff() == 0.0);
}
