#include "thinlab/model_eval.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/polygamma.hpp>
#include <cmath>
#include <limits>

#include "thinlab/errors.hpp"
#include "thinlab/samplers.hpp"
#include "thinlab/thinning.hpp"

namespace thinlab::eval {

namespace {

constexpr double kShapeCap = 1e6;

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double log_binomial_coefficient(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

void check_counts_in_range(const Eigen::MatrixXd& X, std::int64_t trials, const char* what) {
    const double r = static_cast<double>(trials);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const double x = X(i, j);
            if (!(x >= 0.0 && x <= r) || x != std::floor(x))
                throw DomainError(std::string(what) +
                                  ": entries must be integer counts in [0, trials]");
        }
    }
}

}  // namespace

Eigen::VectorXd min_max_rescale(const Eigen::VectorXd& values) {
    const double lo = values.minCoeff();
    const double hi = values.maxCoeff();
    if (hi <= lo) return Eigen::VectorXd::Zero(values.size());
    return (values.array() - lo) / (hi - lo);
}

LossCurve rescale_curve(LossCurve curve) {
    curve.mean_loss = min_max_rescale(curve.mean_loss);
    curve.rescaled = true;
    return curve;
}

PcaFit fit_binomial_pca(const Eigen::MatrixXd& X_train, std::int64_t trials_train, int K) {
    const Eigen::Index n = X_train.rows();
    const Eigen::Index d = X_train.cols();
    if (K < 1 || K > std::min(n, d))
        throw UsageError("fit_binomial_pca: K out of range");
    check_counts_in_range(X_train, trials_train, "fit_binomial_pca");

    const double denom = static_cast<double>(trials_train) + 0.002;
    const Eigen::ArrayXXd frac = (X_train.array() + 0.001) / denom;
    const Eigen::MatrixXd logit = (frac / (1.0 - frac)).log().matrix();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(logit, Eigen::ComputeThinU | Eigen::ComputeThinV);

    PcaFit fit;
    fit.u = svd.matrixU();
    fit.singular_values = svd.singularValues();
    fit.v = svd.matrixV();
    fit.rank = K;
    fit.logits = fit.u.leftCols(K) * fit.singular_values.head(K).asDiagonal() *
                 fit.v.leftCols(K).transpose();
    fit.probs = (1.0 / (1.0 + (-fit.logits.array()).exp())).matrix();
    return fit;
}

double loss_binomial(const Eigen::MatrixXd& X_test, std::int64_t trials_test,
                     const PcaFit& fit, LossKind kind) {
    if (X_test.rows() != fit.logits.rows() || X_test.cols() != fit.logits.cols())
        throw UsageError("loss_binomial: shape mismatch");
    check_counts_in_range(X_test, trials_test, "loss_binomial");
    const double r = static_cast<double>(trials_test);

    if (kind == LossKind::mse) {
        const Eigen::ArrayXXd resid = X_test.array() - r * fit.probs.array();
        return resid.square().sum() / static_cast<double>(X_test.size());
    }
    // log p and log(1 - p) through softplus of the logits: stable even where
    // expit would round to exactly 0 or 1.
    double nll = 0.0;
    for (Eigen::Index j = 0; j < X_test.cols(); ++j) {
        for (Eigen::Index i = 0; i < X_test.rows(); ++i) {
            const double x = X_test(i, j);
            const double theta = fit.logits(i, j);
            nll += x * softplus(-theta) + (r - x) * softplus(theta);
            nll -= log_binomial_coefficient(r, x);
        }
    }
    return nll;
}

namespace {

// Squared distances from every row of X to every center: |x|^2 - 2 x.c + |c|^2.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& X, const Eigen::VectorXd& row_norms,
                                  const Eigen::MatrixXd& centers) {
    const Eigen::VectorXd center_norms = centers.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = -2.0 * (X * centers.transpose());
    d2.colwise() += row_norms;
    d2.rowwise() += center_norms.transpose();
    return d2.cwiseMax(0.0);
}

// Greedy k-means++: each new center is the best of ~2+log2(K) candidates
// sampled proportionally to the current squared distances, judged by the
// resulting potential.
Eigen::MatrixXd kmeans_pp_seed(const Eigen::MatrixXd& X, int K, RandomStream& stream) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd centers(K, X.cols());
    const Eigen::Index first =
        std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(stream.next_uniform() *
                                                                static_cast<double>(n)));
    centers.row(0) = X.row(first);
    Eigen::VectorXd min_d2 =
        (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
    const int candidates = 2 + static_cast<int>(std::log2(std::max(K, 2)));
    for (int k = 1; k < K; ++k) {
        const double total = min_d2.sum();
        Eigen::Index best_pick = 0;
        double best_potential = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_d2;
        for (int c = 0; c < candidates; ++c) {
            Eigen::Index pick;
            if (total > 0.0) {
                double target = stream.next_uniform() * total;
                pick = n - 1;
                for (Eigen::Index i = 0; i < n; ++i) {
                    target -= min_d2[i];
                    if (target <= 0.0) {
                        pick = i;
                        break;
                    }
                }
            } else {
                // All points coincide with existing centers.
                pick = std::min<Eigen::Index>(
                    n - 1, static_cast<Eigen::Index>(stream.next_uniform() *
                                                     static_cast<double>(n)));
            }
            const Eigen::VectorXd cand_d2 = min_d2.cwiseMin(
                (X.rowwise() - X.row(pick)).rowwise().squaredNorm());
            const double potential = cand_d2.sum();
            if (potential < best_potential) {
                best_potential = potential;
                best_pick = pick;
                best_d2 = cand_d2;
            }
        }
        centers.row(k) = X.row(best_pick);
        min_d2 = best_d2;
    }
    return centers;
}

// Hartigan-style polish: move single points between clusters whenever the
// exact SSE change (with the n/(n-1) and n/(n+1) factors) is negative.
// Escapes the partition-level local optima Lloyd gets stuck in.
void hartigan_refine(const Eigen::MatrixXd& X, int K, Eigen::VectorXi& assignments) {
    constexpr int kMaxPasses = 25;
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, X.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(assignments[i]) += X.row(i);
        counts[assignments[i]] += 1;
    }
    for (int pass = 0; pass < kMaxPasses; ++pass) {
        bool moved = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int a = assignments[i];
            if (counts[a] <= 1) continue;
            const double ca = static_cast<double>(counts[a]);
            const double da =
                (X.row(i) - sums.row(a) / ca).squaredNorm();
            const double removal_gain = ca / (ca - 1.0) * da;
            int best_b = -1;
            double best_cost = removal_gain;
            for (int b = 0; b < K; ++b) {
                if (b == a) continue;
                const double cb = static_cast<double>(counts[b]);
                const double db = (X.row(i) - sums.row(b) / cb).squaredNorm();
                const double add_cost = cb / (cb + 1.0) * db;
                if (add_cost < best_cost) {
                    best_cost = add_cost;
                    best_b = b;
                }
            }
            if (best_b >= 0) {
                sums.row(a) -= X.row(i);
                counts[a] -= 1;
                sums.row(best_b) += X.row(i);
                counts[best_b] += 1;
                assignments[i] = best_b;
                moved = true;
            }
        }
        if (!moved) break;
    }
}

KmeansResult kmeans_single_run(const Eigen::MatrixXd& X, const Eigen::VectorXd& row_norms,
                               int K, RandomStream& stream,
                               const Eigen::MatrixXd* initial_centers) {
    constexpr int kMaxIterations = 100;
    const Eigen::Index n = X.rows();

    Eigen::MatrixXd centers =
        initial_centers != nullptr ? *initial_centers : kmeans_pp_seed(X, K, stream);
    Eigen::VectorXi assignments = Eigen::VectorXi::Constant(n, -1);

    for (int iter = 0; iter < kMaxIterations; ++iter) {
        const Eigen::MatrixXd d2 = squared_distances(X, row_norms, centers);
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best;
            d2.row(i).minCoeff(&best);
            if (assignments[i] != static_cast<int>(best)) {
                assignments[i] = static_cast<int>(best);
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        centers.setZero();
        Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
        for (Eigen::Index i = 0; i < n; ++i) {
            centers.row(assignments[i]) += X.row(i);
            counts[assignments[i]] += 1;
        }
        for (int k = 0; k < K; ++k) {
            if (counts[k] > 0) {
                centers.row(k) /= static_cast<double>(counts[k]);
            } else {
                // Re-seat an emptied cluster at the point farthest from its
                // current center.
                const Eigen::MatrixXd cur = squared_distances(X, row_norms, centers);
                Eigen::Index farthest = 0;
                double worst = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double dist = cur(i, assignments[i]);
                    if (dist > worst) {
                        worst = dist;
                        farthest = i;
                    }
                }
                centers.row(k) = X.row(farthest);
            }
        }
    }

    hartigan_refine(X, K, assignments);

    KmeansResult result{assignments, Eigen::MatrixXd::Zero(K, X.cols()), 0.0};
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) {
        result.centers.row(assignments[i]) += X.row(i);
        counts[assignments[i]] += 1;
    }
    for (int k = 0; k < K; ++k)
        if (counts[k] > 0) result.centers.row(k) /= static_cast<double>(counts[k]);
    for (Eigen::Index i = 0; i < n; ++i)
        result.wcss += (X.row(i) - result.centers.row(assignments[i])).squaredNorm();
    return result;
}

}  // namespace

KmeansResult kmeans(const Eigen::MatrixXd& X, int K, int restarts, RandomStream& stream,
                    const Eigen::MatrixXd* warm_start) {
    if (K < 1 || K > X.rows()) throw UsageError("kmeans: K must lie in [1, n]");
    if (restarts < 1) throw UsageError("kmeans: restarts must be >= 1");
    const Eigen::VectorXd row_norms = X.rowwise().squaredNorm();
    KmeansResult best;
    best.wcss = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        RandomStream run_stream = stream.substream(static_cast<std::uint64_t>(r));
        KmeansResult run = kmeans_single_run(X, row_norms, K, run_stream, nullptr);
        if (run.wcss < best.wcss) best = std::move(run);
    }
    if (warm_start != nullptr && warm_start->cols() == X.cols() &&
        (warm_start->rows() == K || warm_start->rows() == K - 1)) {
        Eigen::MatrixXd seed(K, X.cols());
        seed.topRows(warm_start->rows()) = *warm_start;
        if (warm_start->rows() == K - 1) {
            // One extra center, D^2-sampled against the warm centers: it
            // lands where the K-1 solution fits worst.
            Eigen::VectorXd min_d2 =
                (X.rowwise() - warm_start->row(0)).rowwise().squaredNorm();
            for (Eigen::Index c = 1; c < warm_start->rows(); ++c)
                min_d2 = min_d2.cwiseMin(
                    (X.rowwise() - warm_start->row(c)).rowwise().squaredNorm());
            RandomStream pick_stream = stream.substream(static_cast<std::uint64_t>(restarts));
            const double total = min_d2.sum();
            Eigen::Index pick = X.rows() - 1;
            if (total > 0.0) {
                double target = pick_stream.next_uniform() * total;
                for (Eigen::Index i = 0; i < X.rows(); ++i) {
                    target -= min_d2[i];
                    if (target <= 0.0) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = 0;
            }
            seed.row(K - 1) = X.row(pick);
        }
        RandomStream warm_stream = stream.substream(static_cast<std::uint64_t>(restarts + 1));
        KmeansResult run = kmeans_single_run(X, row_norms, K, warm_stream, &seed);
        if (run.wcss < best.wcss) best = std::move(run);
    }
    return best;
}

GammaMle gamma_mle(double mean, double mean_log, double count) {
    if (!(mean > 0.0) || count < 1.0)
        throw DomainError("gamma_mle: needs positive mean and count >= 1");
    const double spread = std::log(mean) - mean_log;  // >= 0 by Jensen
    GammaMle out;
    if (!(spread > 1e-12)) {
        out.shape = kShapeCap;
        out.rate = kShapeCap / mean;
        out.capped = true;
        return out;
    }
    double shape = (3.0 - spread + std::sqrt((spread - 3.0) * (spread - 3.0) + 24.0 * spread)) /
                   (12.0 * spread);
    for (int iter = 0; iter < 20; ++iter) {
        const double score = std::log(shape) - boost::math::digamma(shape) - spread;
        const double slope = 1.0 / shape - boost::math::polygamma(1, shape);
        const double next = shape - score / slope;
        if (!(next > 0.0)) break;
        const bool converged = std::abs(next - shape) <= 1e-10 * shape;
        shape = next;
        if (converged) break;
    }
    if (shape >= kShapeCap) {
        out.shape = kShapeCap;
        out.capped = true;
    } else {
        out.shape = std::max(shape, 1e-8);
    }
    out.rate = out.shape / mean;
    return out;
}

ClusterFit fit_gamma_clusters(const Eigen::MatrixXd& X_train, double eps_train, int K,
                              int restarts, RandomStream& stream,
                              const Eigen::MatrixXd* warm_start) {
    const Eigen::Index n = X_train.rows();
    const Eigen::Index d = X_train.cols();
    if ((X_train.array() <= 0.0).any())
        throw DomainError("fit_gamma_clusters: entries must be > 0");

    const KmeansResult km = kmeans(X_train, K, restarts, stream, warm_start);

    ClusterFit fit;
    fit.assignments = km.assignments;
    fit.centers = km.centers;
    fit.shape.resize(K, d);
    fit.rate.resize(K, d);
    fit.shape_capped = Eigen::MatrixXi::Zero(K, d);
    fit.cluster_sizes = Eigen::VectorXi::Zero(K);
    fit.train_eps = eps_train;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, d);
    Eigen::MatrixXd log_sums = Eigen::MatrixXd::Zero(K, d);
    const Eigen::ArrayXXd logs = X_train.array().log();
    for (Eigen::Index i = 0; i < n; ++i) {
        const int k = km.assignments[i];
        fit.cluster_sizes[k] += 1;
        sums.row(k) += X_train.row(i);
        log_sums.row(k) += logs.row(i).matrix();
    }

    // Pooled per-dimension statistics back empty clusters.
    const Eigen::RowVectorXd pooled_mean = X_train.colwise().mean();
    const Eigen::RowVectorXd pooled_mean_log =
        logs.colwise().mean().matrix();

    for (int k = 0; k < K; ++k) {
        const bool empty = fit.cluster_sizes[k] == 0;
        if (empty) fit.empty_clusters.push_back(k);
        const double count = empty ? static_cast<double>(n)
                                   : static_cast<double>(fit.cluster_sizes[k]);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double mean = empty ? pooled_mean[j] : sums(k, j) / count;
            const double mean_log = empty ? pooled_mean_log[j] : log_sums(k, j) / count;
            const GammaMle mle = gamma_mle(mean, mean_log, count);
            fit.shape(k, j) = mle.shape;
            fit.rate(k, j) = mle.rate;
            fit.shape_capped(k, j) = mle.capped ? 1 : 0;
        }
    }
    return fit;
}

double loss_gamma(const Eigen::MatrixXd& X_test, const ClusterFit& fit, double eps_test,
                  double eps_train, LossKind kind) {
    const Eigen::Index n = X_test.rows();
    const Eigen::Index d = X_test.cols();
    if (fit.assignments.size() != n)
        throw UsageError("loss_gamma: assignments must cover all test rows");
    if (fit.shape.cols() != d) throw UsageError("loss_gamma: dimension mismatch");
    if (!(eps_test > 0.0) || !(eps_train > 0.0))
        throw UsageError("loss_gamma: fold weights must be > 0");
    if ((X_test.array() <= 0.0).any())
        throw DomainError("loss_gamma: entries must be > 0");

    const double ratio = eps_test / eps_train;
    const int K = static_cast<int>(fit.shape.rows());

    if (kind == LossKind::mse) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int k = fit.assignments[i];
            for (Eigen::Index j = 0; j < d; ++j) {
                const double mu = fit.shape(k, j) / fit.rate(k, j);
                const double resid = X_test(i, j) - ratio * mu;
                total += resid * resid;
            }
        }
        return total / static_cast<double>(n * d);
    }

    // Per-(cluster, dim) constants of the gamma log-density.
    Eigen::MatrixXd shape_test(K, d), log_rate(K, d), lgamma_shape(K, d);
    for (int k = 0; k < K; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) {
            shape_test(k, j) = fit.shape(k, j) * ratio;
            log_rate(k, j) = std::log(fit.rate(k, j));
            lgamma_shape(k, j) = std::lgamma(shape_test(k, j));
        }
    }
    double nll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int k = fit.assignments[i];
        for (Eigen::Index j = 0; j < d; ++j) {
            const double x = X_test(i, j);
            const double a = shape_test(k, j);
            nll -= a * log_rate(k, j) + (a - 1.0) * std::log(x) - fit.rate(k, j) * x -
                   lgamma_shape(k, j);
        }
    }
    return nll;
}

CvMethod CvMethod::naive() { return {Kind::naive, 1.0, 1}; }

CvMethod CvMethod::single(double eps_train) {
    if (!(eps_train > 0.0 && eps_train < 1.0))
        throw PlanError("cv method: eps_train must lie in (0, 1)");
    return {Kind::single, eps_train, 1};
}

CvMethod CvMethod::multifold(int folds) {
    if (folds < 2) throw PlanError("cv method: multifold needs M >= 2");
    return {Kind::multifold, 0.0, folds};
}

namespace {

struct FoldData {
    const Eigen::MatrixXd* train;
    const Eigen::MatrixXd* test;
    double eps_train;
    double eps_test;
};

// Evaluates every candidate K on one train/test pair for all loss kinds.
// Fits are computed once and shared across losses.
void evaluate_pca_fold(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test,
                       std::int64_t trials_train, std::int64_t trials_test,
                       const std::vector<int>& candidates,
                       const std::vector<LossKind>& losses,
                       std::vector<Eigen::VectorXd>& fold_losses) {
    const double denom = static_cast<double>(trials_train) + 0.002;
    const Eigen::ArrayXXd frac = (train.array() + 0.001) / denom;
    const Eigen::MatrixXd logit = (frac / (1.0 - frac)).log().matrix();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(logit, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXd& u = svd.matrixU();
    const Eigen::MatrixXd& v = svd.matrixV();
    const Eigen::VectorXd& sv = svd.singularValues();

    const double r_test = static_cast<double>(trials_test);
    double log_coeff_sum = 0.0;
    const bool wants_nll = std::find(losses.begin(), losses.end(), LossKind::nll) !=
                            losses.end();
    if (wants_nll) {
        for (Eigen::Index j = 0; j < test.cols(); ++j)
            for (Eigen::Index i = 0; i < test.rows(); ++i)
                log_coeff_sum += log_binomial_coefficient(r_test, test(i, j));
    }

    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(train.rows(), train.cols());
    int built_rank = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const int K = candidates[c];
        while (built_rank < K) {
            theta.noalias() += sv[built_rank] * u.col(built_rank) *
                               v.col(built_rank).transpose();
            ++built_rank;
        }
        for (std::size_t l = 0; l < losses.size(); ++l) {
            if (losses[l] == LossKind::mse) {
                const Eigen::ArrayXXd probs = 1.0 / (1.0 + (-theta.array()).exp());
                const Eigen::ArrayXXd resid = test.array() - r_test * probs;
                fold_losses[l][static_cast<Eigen::Index>(c)] =
                    resid.square().sum() / static_cast<double>(test.size());
            } else {
                double nll = -log_coeff_sum;
                for (Eigen::Index j = 0; j < test.cols(); ++j) {
                    for (Eigen::Index i = 0; i < test.rows(); ++i) {
                        const double x = test(i, j);
                        const double t = theta(i, j);
                        nll += x * softplus(-t) + (r_test - x) * softplus(t);
                    }
                }
                fold_losses[l][static_cast<Eigen::Index>(c)] = nll;
            }
        }
    }
}

void evaluate_cluster_fold(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test,
                           double eps_train, double eps_test,
                           const std::vector<int>& candidates,
                           const std::vector<LossKind>& losses, int restarts,
                           RandomStream& fold_stream,
                           std::vector<Eigen::VectorXd>& fold_losses) {
    // Each candidate warm-starts from the previous K's centers.
    Eigen::MatrixXd prev_centers;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        RandomStream k_stream = fold_stream.substream(static_cast<std::uint64_t>(c));
        const Eigen::MatrixXd* warm = prev_centers.size() > 0 ? &prev_centers : nullptr;
        const ClusterFit fit =
            fit_gamma_clusters(train, eps_train, candidates[c], restarts, k_stream, warm);
        prev_centers = fit.centers;
        for (std::size_t l = 0; l < losses.size(); ++l) {
            fold_losses[l][static_cast<Eigen::Index>(c)] =
                loss_gamma(test, fit, eps_test, eps_train, losses[l]);
        }
    }
}

int argmin_smallest_k(const std::vector<int>& candidates, const Eigen::VectorXd& mean_loss) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < mean_loss.size(); ++i) {
        if (mean_loss[i] < mean_loss[best]) best = i;
    }
    return candidates[static_cast<std::size_t>(best)];
}

}  // namespace

std::vector<LossCurve> cv_select_k_losses(const Eigen::MatrixXd& X, const Family& family,
                                          const std::vector<int>& candidates,
                                          const CvMethod& method,
                                          const std::vector<LossKind>& losses, Task task,
                                          RandomStream& stream, int kmeans_restarts) {
    if (candidates.empty()) throw UsageError("cv_select_k: no candidate K values");
    if (losses.empty()) throw UsageError("cv_select_k: no loss kinds");
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (candidates[i] <= candidates[i - 1])
            throw UsageError("cv_select_k: candidates must be strictly increasing");

    std::int64_t trials = 0;
    if (task == Task::pca) {
        const auto* b = std::get_if<fam::Binomial>(&family);
        if (b == nullptr) throw UsageError("cv_select_k: pca task needs a binomial family");
        trials = b->trials;
        check_counts_in_range(X, trials, "cv_select_k");
        const int max_k = static_cast<int>(std::min(X.rows(), X.cols()));
        if (candidates.front() < 1 || candidates.back() > max_k)
            throw UsageError("cv_select_k: pca candidates must lie in [1, min(n, d)]");
    } else {
        if (!std::holds_alternative<fam::Gamma>(family))
            throw UsageError("cv_select_k: cluster task needs a gamma family");
        if (candidates.front() < 1 || candidates.back() > static_cast<int>(X.rows()))
            throw UsageError("cv_select_k: cluster candidates must lie in [1, n]");
    }

    const int n_folds = method.kind == CvMethod::Kind::multifold ? method.folds : 1;
    std::vector<LossCurve> curves(losses.size());
    for (auto& curve : curves) {
        curve.candidate_ks = candidates;
        curve.per_fold_loss.resize(n_folds, static_cast<Eigen::Index>(candidates.size()));
    }
    std::vector<Eigen::VectorXd> fold_losses(
        losses.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(candidates.size())));

    auto run_fold = [&](int fold_row, const Eigen::MatrixXd& train,
                        const Eigen::MatrixXd& test, double eps_train, double eps_test,
                        RandomStream fit_stream) {
        if (task == Task::pca) {
            const auto trials_train =
                static_cast<std::int64_t>(std::llround(eps_train * static_cast<double>(trials)));
            const auto trials_test =
                static_cast<std::int64_t>(std::llround(eps_test * static_cast<double>(trials)));
            evaluate_pca_fold(train, test, trials_train, trials_test, candidates, losses,
                              fold_losses);
        } else {
            evaluate_cluster_fold(train, test, eps_train, eps_test, candidates, losses,
                                  kmeans_restarts, fit_stream, fold_losses);
        }
        for (std::size_t l = 0; l < losses.size(); ++l)
            curves[l].per_fold_loss.row(fold_row) = fold_losses[l].transpose();
    };

    switch (method.kind) {
        case CvMethod::Kind::naive: {
            run_fold(0, X, X, 1.0, 1.0, stream.substream(1));
            break;
        }
        case CvMethod::Kind::single: {
            const ThinPlan plan = ThinPlan::two_fold(method.eps_train);
            const FoldSet fs =
                thin_dataset(X, family, plan, ThinMode::elementwise, stream.substream(0));
            run_fold(0, fs.folds[0], fs.folds[1], method.eps_train, 1.0 - method.eps_train,
                     stream.substream(1));
            break;
        }
        case CvMethod::Kind::multifold: {
            const int M = method.folds;
            const ThinPlan plan = ThinPlan::equal(M);
            const FoldSet fs =
                thin_dataset(X, family, plan, ThinMode::elementwise, stream.substream(0));
            const double eps_test = 1.0 / static_cast<double>(M);
            const double eps_train = 1.0 - eps_test;
            for (int m = 1; m <= M; ++m) {
                const Eigen::MatrixXd train = fold_complement(fs, m);
                run_fold(m - 1, train, fs.folds[static_cast<std::size_t>(m - 1)], eps_train,
                         eps_test, stream.substream(1).substream(static_cast<std::uint64_t>(m)));
            }
            break;
        }
    }

    for (auto& curve : curves) {
        curve.mean_loss = curve.per_fold_loss.colwise().mean().transpose();
        curve.selected_k = argmin_smallest_k(candidates, curve.mean_loss);
    }
    return curves;
}

LossCurve cv_select_k(const Eigen::MatrixXd& X, const Family& family,
                      const std::vector<int>& candidates, const CvMethod& method,
                      LossKind loss, Task task, RandomStream& stream, int kmeans_restarts) {
    return cv_select_k_losses(X, family, candidates, method, {loss}, task, stream,
                              kmeans_restarts)[0];
}

SseCurve sse_curve(const Eigen::MatrixXd& Y, int K_max) {
    const int max_rank = static_cast<int>(std::min(Y.rows(), Y.cols()));
    if (K_max < 1 || K_max > max_rank) throw UsageError("sse_curve: K_max out of range");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SseCurve out;
    out.singular_values = svd.singularValues();
    out.sse.resize(K_max);
    out.identity_sse.resize(K_max);

    const double total_frob2 = Y.squaredNorm();
    Eigen::MatrixXd recon = Eigen::MatrixXd::Zero(Y.rows(), Y.cols());
    double cum_sv2 = 0.0;
    for (int k = 0; k < K_max; ++k) {
        recon.noalias() += out.singular_values[k] * svd.matrixU().col(k) *
                           svd.matrixV().col(k).transpose();
        out.sse[k] = (Y - recon).squaredNorm();
        cum_sv2 += out.singular_values[k] * out.singular_values[k];
        out.identity_sse[k] = total_frob2 - cum_sv2;
    }
    return out;
}

Standardized standardize_columns(const Eigen::MatrixXd& Y) {
    const Eigen::Index n = Y.rows();
    if (n < 2) throw UsageError("standardize_columns: needs at least 2 rows");
    Standardized out;
    out.matrix.resize(n, Y.cols());
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
        const double mean = Y.col(j).mean();
        const Eigen::VectorXd centered = Y.col(j).array() - mean;
        const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n - 1));
        if (sd > 0.0) {
            out.matrix.col(j) = centered / sd;
        } else {
            out.matrix.col(j).setZero();
            out.zero_variance_cols.push_back(static_cast<int>(j));
        }
    }
    return out;
}

}  // namespace thinlab::eval
