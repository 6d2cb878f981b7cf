#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <map>
#include <vector>

#include "stat_utils.hpp"
#include "thinlab/samplers.hpp"

using namespace thinlab;
using namespace thinlab::dist;

namespace {

std::vector<double> draws(const PrimitiveDist& d, int n, std::uint64_t seed) {
    RandomStream s(seed);
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = draw(d, s);
    return xs;
}

void check_moments(const PrimitiveDist& d, double mean, double var, std::uint64_t seed) {
    const auto m = testutil::moments(draws(d, 100000, seed));
    CHECK(std::abs(m.mean - mean) < 4.0 * m.se_mean);
    CHECK(std::abs(m.var - var) < 4.0 * std::max(m.se_var, 1e-12));
}

}  // namespace

TEST_CASE("degenerate parameters give deterministic draws") {
    RandomStream s(1);
    CHECK(draw(Binomial(10, 0.0), s) == 0.0);
    CHECK(draw(Binomial(10, 1.0), s) == 10.0);
    CHECK(draw(Hypergeometric(3, 0, 2), s) == 2.0);  // population all successes
    CHECK(draw(Normal(4.5, 0.0), s) == 4.5);
}

TEST_CASE("gamma mean over 1e5 draws sits within 3 standard errors of alpha/beta") {
    const auto m = testutil::moments(draws(Gamma(7.0, 5.0), 100000, 10));
    CHECK(std::abs(m.mean - 1.4) < 3.0 * m.se_mean);
}

TEST_CASE("scalar moments match analytic values over 1e5 draws") {
    check_moments(Gamma(7.0, 5.0), 7.0 / 5.0, 7.0 / 25.0, 11);
    check_moments(Gamma(0.2, 1.0), 0.2, 0.2, 12);  // boosted small-shape path
    check_moments(Beta(2.0, 3.0), 0.4, 6.0 / 150.0, 13);
    check_moments(Binomial(20, 0.3), 6.0, 4.2, 14);
    check_moments(Normal(-2.0, 9.0), -2.0, 9.0, 15);
    // Hypergeometric(K=7, N-K=13, n=5): mean nK/N, var with the fpc factor.
    check_moments(Hypergeometric(7, 13, 5), 1.75, 5.0 * 0.35 * 0.65 * 15.0 / 19.0, 16);
    // BetaBinomial(15, 2, 3): mean na/(a+b), var nab(a+b+n)/((a+b)^2 (a+b+1)).
    check_moments(BetaBinomial(15, 2.0, 3.0), 6.0, 12.0, 17);
}

TEST_CASE("poisson and negative binomial helpers match analytic moments") {
    RandomStream s(23);
    const int n = 100000;
    std::vector<double> small(n), big(n), nb(n);
    for (int i = 0; i < n; ++i) {
        small[i] = static_cast<double>(sample_poisson(3.0, s));
        big[i] = static_cast<double>(sample_poisson(50.0, s));  // PTRS branch
        nb[i] = static_cast<double>(sample_negative_binomial(7.0, 0.7, s));
    }
    auto ms = testutil::moments(small);
    CHECK(std::abs(ms.mean - 3.0) < 4.0 * ms.se_mean);
    CHECK(std::abs(ms.var - 3.0) < 4.0 * ms.se_var);
    auto mb = testutil::moments(big);
    CHECK(std::abs(mb.mean - 50.0) < 4.0 * mb.se_mean);
    CHECK(std::abs(mb.var - 50.0) < 4.0 * mb.se_var);
    auto mn = testutil::moments(nb);
    CHECK(std::abs(mn.mean - 3.0) < 4.0 * mn.se_mean);
    CHECK(std::abs(mn.var - 3.0 / 0.7) < 4.0 * mn.se_var);
}

TEST_CASE("KS distance to the analytic CDF is below 0.01") {
    const int n = 100000;
    const boost::math::beta_distribution<> beta_ref(2.0, 3.0);
    CHECK(testutil::ks_statistic(draws(Beta(2.0, 3.0), n, 31), [&](double x) {
              return cdf(beta_ref, x);
          }) < 0.01);
    const boost::math::gamma_distribution<> gamma_ref(7.0, 1.0 / 5.0);
    CHECK(testutil::ks_statistic(draws(Gamma(7.0, 5.0), n, 32), [&](double x) {
              return cdf(gamma_ref, x);
          }) < 0.01);
    const boost::math::gamma_distribution<> gamma_small_ref(0.2, 1.0);
    CHECK(testutil::ks_statistic(draws(Gamma(0.2, 1.0), n, 33), [&](double x) {
              return cdf(gamma_small_ref, x);
          }) < 0.01);
    const boost::math::normal_distribution<> normal_ref(1.0, 2.0);
    CHECK(testutil::ks_statistic(draws(Normal(1.0, 4.0), n, 34), [&](double x) {
              return cdf(normal_ref, x);
          }) < 0.01);
}

TEST_CASE("integer draws respect support bounds exactly") {
    RandomStream s(41);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::int64_t successes = static_cast<std::int64_t>(s.next_uniform() * 20.0);
        const std::int64_t failures = static_cast<std::int64_t>(s.next_uniform() * 20.0);
        const std::int64_t total = successes + failures;
        const std::int64_t draws_n =
            std::min<std::int64_t>(total, static_cast<std::int64_t>(s.next_uniform() * 25.0));
        const std::int64_t h = sample_hypergeometric(successes, failures, draws_n, s);
        CHECK(h >= std::max<std::int64_t>(0, draws_n - failures));
        CHECK(h <= std::min(draws_n, successes));

        const std::int64_t b = sample_binomial(12, s.next_uniform(), s);
        CHECK(b >= 0);
        CHECK(b <= 12);
    }
}

TEST_CASE("vector distributions: degenerate cases are exact") {
    RandomStream s(51);
    Eigen::VectorXd one(1);
    one << 2.5;
    const Eigen::VectorXd d = draw_vector(Dirichlet(one), s);
    CHECK(d.size() == 1);
    CHECK(d[0] == 1.0);

    Eigen::VectorXd point(3);
    point << 1.0, 0.0, 0.0;
    const Eigen::VectorXd m = draw_vector(Multinomial(7, point), s);
    CHECK(m[0] == 7.0);
    CHECK(m[1] == 0.0);
    CHECK(m[2] == 0.0);
}

TEST_CASE("vector moments match analytic values") {
    RandomStream s(52);
    const int n = 100000;

    SUBCASE("dirichlet-multinomial component means are (10, 10)") {
        Eigen::VectorXd alphas(2);
        alphas << 2.0, 2.0;
        const DirichletMultinomial dm(20, alphas);
        std::vector<double> c0(n), c1(n);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd v = draw_vector(dm, s);
            c0[i] = v[0];
            c1[i] = v[1];
            CHECK(v[0] + v[1] == 20.0);
        }
        const auto m0 = testutil::moments(c0);
        const auto m1 = testutil::moments(c1);
        // Var = n p (1-p) (n + a0) / (1 + a0) = 20 * 0.25 * 24 / 5 = 24.
        CHECK(std::abs(m0.mean - 10.0) < 3.0 * m0.se_mean);
        CHECK(std::abs(m1.mean - 10.0) < 3.0 * m1.se_mean);
        CHECK(std::abs(m0.var - 24.0) < 4.0 * m0.se_var);
    }

    SUBCASE("dirichlet means are alpha_i / alpha_0") {
        Eigen::VectorXd alphas(3);
        alphas << 2.0, 3.0, 5.0;
        std::vector<double> c0(n);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd v = draw_vector(Dirichlet(alphas), s);
            CHECK(std::abs(v.sum() - 1.0) < 1e-12);
            c0[i] = v[0];
        }
        const auto m0 = testutil::moments(c0);
        CHECK(std::abs(m0.mean - 0.2) < 4.0 * m0.se_mean);
        // Var = a(a0-a) / (a0^2 (a0+1)) = 2*8/(100*11).
        CHECK(std::abs(m0.var - 16.0 / 1100.0) < 4.0 * m0.se_var);
    }

    SUBCASE("multivariate hypergeometric componentwise means") {
        Eigen::VectorXd bins(3);
        bins << 3.0, 4.0, 5.0;
        std::vector<double> c0(n), c2(n);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd v =
                draw_vector(MultivariateHypergeometric(bins, 6), s);
            CHECK(v.sum() == 6.0);
            CHECK(v[0] <= 3.0);
            c0[i] = v[0];
            c2[i] = v[2];
        }
        const auto m0 = testutil::moments(c0);
        const auto m2 = testutil::moments(c2);
        CHECK(std::abs(m0.mean - 6.0 * 3.0 / 12.0) < 4.0 * m0.se_mean);
        CHECK(std::abs(m2.mean - 6.0 * 5.0 / 12.0) < 4.0 * m2.se_mean);
    }

    SUBCASE("multivariate normal mean and covariance") {
        Eigen::VectorXd mean(2);
        mean << 1.0, -2.0;
        Eigen::MatrixXd cov(2, 2);
        cov << 2.0, 0.6, 0.6, 1.0;
        std::vector<double> c0(n), c1(n);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd v = draw_vector(MultivariateNormal(mean, cov), s);
            c0[i] = v[0];
            c1[i] = v[1];
        }
        const auto m0 = testutil::moments(c0);
        const auto m1 = testutil::moments(c1);
        CHECK(std::abs(m0.mean - 1.0) < 4.0 * m0.se_mean);
        CHECK(std::abs(m1.mean + 2.0) < 4.0 * m1.se_mean);
        CHECK(std::abs(m0.var - 2.0) < 4.0 * m0.se_var);
        double cov_hat = 0.0;
        for (int i = 0; i < n; ++i) cov_hat += (c0[i] - m0.mean) * (c1[i] - m1.mean);
        cov_hat /= n;
        CHECK(std::abs(cov_hat - 0.6) < 0.03);
    }

    SUBCASE("semi-definite covariance falls back to the eigendecomposition") {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
        Eigen::MatrixXd cov(2, 2);
        cov << 1.0, 1.0, 1.0, 1.0;  // rank 1
        std::vector<double> diff(10000);
        for (int i = 0; i < 10000; ++i) {
            const Eigen::VectorXd v = draw_vector(MultivariateNormal(mean, cov), s);
            diff[i] = v[0] - v[1];
        }
        const auto m = testutil::moments(diff);
        CHECK(std::abs(m.mean) < 1e-9);
        CHECK(m.var < 1e-18);
    }
}

TEST_CASE("hypergeometric rejection sampler agrees with inversion") {
    // Force the rejection path at a small population and compare histograms.
    RandomStream s(61);
    const int n = 20000;
    std::map<std::int64_t, int> hist_rejection, hist_inversion;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
        const std::int64_t v = sample_hypergeometric(50, 80, 40, s, /*inversion_limit=*/0);
        hist_rejection[v] += 1;
        xs[i] = static_cast<double>(v);
    }
    for (int i = 0; i < n; ++i) hist_inversion[sample_hypergeometric(50, 80, 40, s)] += 1;

    double tv = 0.0;
    for (std::int64_t k = 0; k <= 40; ++k) {
        const double pa = hist_rejection.count(k) ? hist_rejection[k] / double(n) : 0.0;
        const double pb = hist_inversion.count(k) ? hist_inversion[k] / double(n) : 0.0;
        tv += std::abs(pa - pb);
    }
    CHECK(tv / 2.0 < 0.05);

    const auto m = testutil::moments(xs);
    const double mean = 40.0 * 50.0 / 130.0;
    const double var = 40.0 * (50.0 / 130.0) * (80.0 / 130.0) * (90.0 / 129.0);
    CHECK(std::abs(m.mean - mean) < 4.0 * m.se_mean);
    CHECK(std::abs(m.var - var) < 4.0 * m.se_var);
}

TEST_CASE("a draw from a huge population uses the rejection path") {
    RandomStream s(62);
    const std::int64_t successes = 1200000, failures = 900000, take = 5000;
    std::vector<double> xs(20000);
    for (auto& x : xs)
        x = static_cast<double>(sample_hypergeometric(successes, failures, take, s));
    const auto m = testutil::moments(xs);
    const double nn = static_cast<double>(successes + failures);
    const double p = static_cast<double>(successes) / nn;
    const double mean = static_cast<double>(take) * p;
    const double var =
        static_cast<double>(take) * p * (1.0 - p) * (nn - static_cast<double>(take)) / (nn - 1.0);
    CHECK(std::abs(m.mean - mean) < 4.0 * m.se_mean);
    CHECK(std::abs(m.var - var) < 4.0 * m.se_var);
}

TEST_CASE("invalid parameters are rejected") {
    RandomStream s(71);
    CHECK_THROWS_AS(Binomial(5, 1.2), ParamError);
    CHECK_THROWS_AS(Binomial(-1, 0.5), ParamError);
    CHECK_THROWS_AS(Beta(0.0, 1.0), ParamError);
    CHECK_THROWS_AS(Gamma(1.0, -2.0), ParamError);
    CHECK_THROWS_AS(Normal(std::nan(""), 1.0), ParamError);
    CHECK_THROWS_AS(Hypergeometric(3, 2, 7), DomainError);  // draws exceed population

    Eigen::VectorXd bins(2);
    bins << 2.0, 2.0;
    CHECK_THROWS_AS(MultivariateHypergeometric(bins, 5), DomainError);

    Eigen::VectorXd probs(2);
    probs << 0.7, 0.4;  // sums to 1.1
    CHECK_THROWS_AS(Multinomial(5, probs), ParamError);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd bad_cov(2, 2);
    bad_cov << 1.0, 2.0, 2.0, 1.0;  // indefinite
    CHECK_THROWS_AS(draw_vector(MultivariateNormal(mean, bad_cov), s), DomainError);

    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.5, 0.1, 1.0;
    CHECK_THROWS_AS(MultivariateNormal(mean, asym), ParamError);
}
