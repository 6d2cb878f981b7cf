#include "thinlab/simulations.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "thinlab/errors.hpp"
#include "thinlab/parallel.hpp"
#include "thinlab/samplers.hpp"
#include "thinlab/thinning.hpp"

namespace thinlab::sim {

RegressionSimConfig RegressionSimConfig::iid(double epsilon, int n_reps) {
    RegressionSimConfig cfg;
    cfg.scenario = Scenario::iid;
    cfg.n = 100;
    cfg.p = 20;
    cfg.beta_star = 2.0;
    cfg.epsilon = epsilon;
    cfg.n_reps = n_reps;
    return cfg;
}

RegressionSimConfig RegressionSimConfig::high_leverage(double epsilon, int n_reps) {
    RegressionSimConfig cfg;
    cfg.scenario = Scenario::high_leverage;
    cfg.n = 42;
    cfg.p = 20;
    cfg.beta_star = 0.5;
    cfg.epsilon = epsilon;
    cfg.n_reps = n_reps;
    return cfg;
}

SelectionSimConfig SelectionSimConfig::defaults(SelectionTask task) {
    SelectionSimConfig cfg;
    cfg.task = task;
    cfg.methods = {eval::CvMethod::naive(), eval::CvMethod::single(0.5),
                   eval::CvMethod::single(0.8), eval::CvMethod::multifold(5)};
    cfg.losses = {eval::LossKind::nll};
    int k_max = 0;
    switch (task) {
        case SelectionTask::binomial_pca:
            cfg.true_k = 10;
            k_max = 20;
            break;
        case SelectionTask::gamma_small:
            cfg.true_k = 4;
            k_max = 10;
            break;
        case SelectionTask::gamma_large:
            cfg.true_k = 10;
            k_max = 15;
            break;
    }
    cfg.candidates.resize(k_max);
    std::iota(cfg.candidates.begin(), cfg.candidates.end(), 1);
    return cfg;
}

Eigen::MatrixXd random_orthogonal(int n, int k, RandomStream& stream) {
    if (k > n) throw UsageError("random_orthogonal: k must be <= n");
    Eigen::MatrixXd gauss(n, k);
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < n; ++i) gauss(i, j) = stream.next_normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    const Eigen::VectorXd r_diag = qr.matrixQR().diagonal().head(k);
    for (Eigen::Index j = 0; j < k; ++j)
        if (r_diag[j] < 0.0) q.col(j) = -q.col(j);
    return q;
}

BinomialPcaData gen_binomial_pca_data(int n, int d, std::int64_t trials, int k_star,
                                      RandomStream& stream) {
    if (k_star > std::min(n, d)) throw UsageError("gen_binomial_pca_data: k_star too large");
    BinomialPcaData data;
    data.trials = trials;
    const Eigen::MatrixXd u = random_orthogonal(n, k_star, stream);
    const Eigen::MatrixXd v = random_orthogonal(d, k_star, stream);
    Eigen::VectorXd singular_values(k_star);
    for (int j = 0; j < k_star; ++j) singular_values[j] = 5.0 + static_cast<double>(j);
    data.theta = u * singular_values.asDiagonal() * v.transpose();
    data.probs = (1.0 / (1.0 + (-data.theta.array()).exp())).matrix();
    data.counts.resize(n, d);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            data.counts(i, j) = static_cast<double>(
                dist::sample_binomial(trials, data.probs(i, j), stream));
    return data;
}

GammaClusterData gen_gamma_clusters(SelectionTask task, RandomStream& stream) {
    GammaClusterData data;
    if (task == SelectionTask::gamma_small) {
        data.shape = 20.0;
        data.rates.resize(4, 2);
        data.rates << 0.5, 5.0, 5.0, 0.5, 10.0, 10.0, 0.5, 0.5;
    } else if (task == SelectionTask::gamma_large) {
        data.shape = 2.0;
        const int k_star = 10;
        const int d = 100;
        data.rates = Eigen::MatrixXd::Ones(k_star, d);
        // Clusters 1..9 get a low-rate (high-mean) block of 20 columns;
        // cluster 10 is flat.
        for (int k = 1; k <= 9; ++k)
            for (int j = 10 * k - 9; j <= 10 * k + 10; ++j)
                data.rates(k - 1, j - 1) = 0.1;
    } else {
        throw UsageError("gen_gamma_clusters: task must be a gamma regime");
    }
    const int k_star = static_cast<int>(data.rates.rows());
    const int d = static_cast<int>(data.rates.cols());
    const int per_cluster = 100;
    const int n = per_cluster * k_star;
    data.values.resize(n, d);
    data.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const int c = i / per_cluster;
        data.labels[i] = c;
        for (int j = 0; j < d; ++j)
            data.values(i, j) = dist::sample_gamma(data.shape, data.rates(c, j), stream);
    }
    return data;
}

Eigen::VectorXd regression_beta(const RegressionSimConfig& cfg) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.p);
    for (int j = 0; j < std::min(5, cfg.p); ++j) beta[j] = cfg.beta_star;
    return beta;
}

Eigen::MatrixXd gen_regression_design(const RegressionSimConfig& cfg, RandomStream& stream) {
    Eigen::MatrixXd z(cfg.n, cfg.p);
    for (Eigen::Index j = 0; j < cfg.p; ++j)
        for (Eigen::Index i = 0; i < cfg.n; ++i) z(i, j) = stream.next_normal();
    if (cfg.scenario == Scenario::high_leverage) {
        // One observation with covariates centered at 5 carries most of the
        // information about beta.
        for (Eigen::Index j = 0; j < cfg.p; ++j) z(0, j) = 5.0 + stream.next_normal();
    }
    return z;
}

Eigen::VectorXd gen_regression_response(const Eigen::MatrixXd& design,
                                        const Eigen::VectorXd& beta, RandomStream& stream) {
    Eigen::VectorXd x = design * beta;
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += stream.next_normal();
    return x;
}

RegressionData gen_regression_data(const RegressionSimConfig& cfg,
                                   RandomStream& design_stream,
                                   RandomStream& response_stream) {
    RegressionData data;
    data.beta = regression_beta(cfg);
    data.design = gen_regression_design(cfg, design_stream);
    data.response = gen_regression_response(data.design, data.beta, response_stream);
    return data;
}

namespace {

// Gram-cached least squares over a candidate subset: solve for the
// coefficients of [1, Z_S] and return the residual sum of squares.
struct GramLeastSquares {
    Eigen::MatrixXd gram;  // (p+1) x (p+1), intercept column first
    Eigen::VectorXd xty;   // (p+1)
    double yty = 0.0;
    int n = 0;

    GramLeastSquares(const Eigen::MatrixXd& z, const Eigen::VectorXd& y) {
        const Eigen::Index rows = z.rows();
        const Eigen::Index p = z.cols();
        Eigen::MatrixXd design(rows, p + 1);
        design.col(0).setOnes();
        design.rightCols(p) = z;
        gram = design.transpose() * design;
        xty = design.transpose() * y;
        yty = y.squaredNorm();
        n = static_cast<int>(rows);
    }

    // Returns false when the subsystem is numerically singular.
    bool rss(const std::vector<int>& model, double* rss_out) const {
        const int k = static_cast<int>(model.size()) + 1;
        Eigen::MatrixXd sub(k, k);
        Eigen::VectorXd rhs(k);
        std::vector<int> idx(static_cast<std::size_t>(k));
        idx[0] = 0;
        for (std::size_t t = 0; t < model.size(); ++t) idx[t + 1] = model[t] + 1;
        for (int a = 0; a < k; ++a) {
            rhs[a] = xty[idx[static_cast<std::size_t>(a)]];
            for (int b = 0; b < k; ++b)
                sub(a, b) = gram(idx[static_cast<std::size_t>(a)],
                                 idx[static_cast<std::size_t>(b)]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
        if (!lu.isInvertible()) return false;
        const Eigen::VectorXd coef = lu.solve(rhs);
        *rss_out = std::max(yty - coef.dot(rhs), 0.0);
        return true;
    }
};

double gaussian_aic(double rss, int n, int n_covariates) {
    const double safe_rss = std::max(rss, 1e-300);
    return static_cast<double>(n) * std::log(safe_rss / static_cast<double>(n)) +
           2.0 * static_cast<double>(n_covariates + 1);
}

struct OlsInference {
    Eigen::VectorXd coef;  // intercept first
    Eigen::VectorXd se;
    int df = 0;
    bool ok = false;
};

OlsInference ols_with_intercept(const Eigen::MatrixXd& z_sub, const Eigen::VectorXd& y) {
    const Eigen::Index rows = z_sub.rows();
    const Eigen::Index k = z_sub.cols() + 1;
    OlsInference fit;
    if (rows < k + 1) return fit;  // needs at least one residual df
    Eigen::MatrixXd design(rows, k);
    design.col(0).setOnes();
    design.rightCols(z_sub.cols()) = z_sub;
    const Eigen::MatrixXd gram = design.transpose() * design;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (!lu.isInvertible()) return fit;
    const Eigen::MatrixXd gram_inv = lu.inverse();
    fit.coef = gram_inv * (design.transpose() * y);
    const double rss = (y - design * fit.coef).squaredNorm();
    fit.df = static_cast<int>(rows - k);
    const double sigma2 = rss / static_cast<double>(fit.df);
    fit.se = (sigma2 * gram_inv.diagonal().array()).sqrt();
    fit.ok = true;
    return fit;
}

}  // namespace

std::vector<int> forward_stepwise(const Eigen::MatrixXd& Z, const Eigen::VectorXd& x,
                                  int max_terms) {
    if (max_terms <= 0) return {};
    const int p = static_cast<int>(Z.cols());
    const int n = static_cast<int>(Z.rows());
    const GramLeastSquares ls(Z, x);

    std::vector<int> model;
    double current_rss = 0.0;
    if (!ls.rss(model, &current_rss)) return {};
    double current_aic = gaussian_aic(current_rss, n, 0);

    std::vector<bool> in_model(static_cast<std::size_t>(p), false);
    while (static_cast<int>(model.size()) < std::min(max_terms, p)) {
        const int next_size = static_cast<int>(model.size()) + 1;
        if (n <= next_size + 2) break;  // keep at least one residual df for AIC
        int best_candidate = -1;
        double best_aic = current_aic;
        for (int j = 0; j < p; ++j) {
            if (in_model[static_cast<std::size_t>(j)]) continue;
            model.push_back(j);
            double rss = 0.0;
            const bool solvable = ls.rss(model, &rss);
            model.pop_back();
            if (!solvable) continue;
            const double aic = gaussian_aic(rss, n, next_size);
            if (aic < best_aic) {
                best_aic = aic;
                best_candidate = j;
            }
        }
        if (best_candidate < 0) break;
        model.push_back(best_candidate);
        in_model[static_cast<std::size_t>(best_candidate)] = true;
        current_aic = best_aic;
    }
    std::sort(model.begin(), model.end());
    return model;
}

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& z, const std::vector<int>& cols) {
    Eigen::MatrixXd out(z.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t t = 0; t < cols.size(); ++t) out.col(static_cast<Eigen::Index>(t)) = z.col(cols[t]);
    return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& z, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), z.cols());
    for (std::size_t t = 0; t < rows.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = z.row(rows[t]);
    return out;
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const std::vector<int>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) out[static_cast<Eigen::Index>(t)] = v[rows[t]];
    return out;
}

// Outcome codes per replicate: detected + CI excludes 0 / includes 0,
// not detected, or flagged (refit infeasible).
enum class RepOutcome : int { excluded = 2, included = 1, not_detected = 0, flagged = -1 };

RepOutcome evaluate_arm(const Eigen::MatrixXd& z_train, const Eigen::VectorXd& x_train,
                        const Eigen::MatrixXd& z_test, const Eigen::VectorXd& x_test,
                        int target_covariate) {
    const int max_terms = static_cast<int>(z_train.rows()) - 3;
    if (max_terms <= 0) return RepOutcome::flagged;
    const std::vector<int> selected =
        forward_stepwise(z_train, x_train, std::min<int>(max_terms, static_cast<int>(z_train.cols())));
    const auto pos = std::find(selected.begin(), selected.end(), target_covariate);
    if (pos == selected.end()) return RepOutcome::not_detected;

    const Eigen::MatrixXd z_test_sub = select_columns(z_test, selected);
    if (z_test.rows() < static_cast<Eigen::Index>(selected.size()) + 2)
        return RepOutcome::flagged;  // selected model larger than test capacity
    const OlsInference fit = ols_with_intercept(z_test_sub, x_test);
    if (!fit.ok) return RepOutcome::flagged;
    const Eigen::Index coef_idx = 1 + std::distance(selected.begin(), pos);
    const boost::math::students_t t_dist(fit.df);
    const double t_crit = boost::math::quantile(t_dist, 0.975);
    const double lo = fit.coef[coef_idx] - t_crit * fit.se[coef_idx];
    const double hi = fit.coef[coef_idx] + t_crit * fit.se[coef_idx];
    return (lo > 0.0 || hi < 0.0) ? RepOutcome::excluded : RepOutcome::included;
}

MethodSummary summarize_arm(const std::string& name, const std::vector<RepOutcome>& outcomes) {
    MethodSummary summary;
    summary.method = name;
    summary.loss = "na";  // regression arms report detection/power, not a loss curve
    int detected = 0;
    int excluded = 0;
    int flagged = 0;
    for (RepOutcome o : outcomes) {
        if (o == RepOutcome::flagged) {
            ++flagged;
        } else if (o != RepOutcome::not_detected) {
            ++detected;
            if (o == RepOutcome::excluded) ++excluded;
        }
    }
    const int usable = static_cast<int>(outcomes.size()) - flagged;
    summary.detection = usable > 0 ? static_cast<double>(detected) / usable : 0.0;
    summary.power = detected > 0 ? static_cast<double>(excluded) / detected : 0.0;
    summary.flagged = flagged;
    return summary;
}

}  // namespace

SimReport run_split_comparison(const RegressionSimConfig& cfg, const RandomStream& stream) {
    // The splitting arm needs a whole number of training rows; non-integer
    // eps * n is rounded (the thinning arm uses eps exactly).
    const int n_train =
        static_cast<int>(std::llround(cfg.epsilon * static_cast<double>(cfg.n)));
    if (n_train < 1 || n_train >= cfg.n)
        throw UsageError("run_split_comparison: degenerate train size");

    const Eigen::VectorXd beta = regression_beta(cfg);
    const int target = 2;  // covariate 3

    // High-leverage design is fixed across replicates.
    Eigen::MatrixXd fixed_design;
    if (cfg.scenario == Scenario::high_leverage) {
        RandomStream design_stream = stream.substream(0);
        fixed_design = gen_regression_design(cfg, design_stream);
    }

    std::vector<RepOutcome> thin_outcomes(cfg.n_reps);
    std::vector<RepOutcome> split_outcomes(cfg.n_reps);

    parallel_for(static_cast<std::size_t>(cfg.n_reps), [&](std::size_t rep) {
        RandomStream rep_stream = stream.substream(1).substream(rep);
        Eigen::MatrixXd design;
        if (cfg.scenario == Scenario::high_leverage) {
            design = fixed_design;
        } else {
            RandomStream design_stream = rep_stream.substream(0);
            design = gen_regression_design(cfg, design_stream);
        }
        RandomStream response_stream = rep_stream.substream(1);
        const Eigen::VectorXd x = gen_regression_response(design, beta, response_stream);

        // Thinning arm: per-observation Gaussian thinning with known unit
        // variance.
        RandomStream thin_stream = rep_stream.substream(2);
        const Family gaussian = fam::Gaussian(1.0);
        Eigen::VectorXd x_train(cfg.n), x_test(cfg.n);
        for (int i = 0; i < cfg.n; ++i) {
            RandomStream cell = thin_stream.substream(static_cast<std::uint64_t>(i));
            const auto [x1, x2] = thin(x[i], gaussian, cfg.epsilon, cell);
            x_train[i] = x1;
            x_test[i] = x2;
        }
        thin_outcomes[rep] = evaluate_arm(design, x_train, design, x_test, target);

        // Splitting arm: random train subset of size eps * n.
        RandomStream split_stream = rep_stream.substream(3);
        std::vector<int> order(static_cast<std::size_t>(cfg.n));
        std::iota(order.begin(), order.end(), 0);
        for (int i = cfg.n - 1; i > 0; --i) {
            const int j = static_cast<int>(split_stream.next_uniform() *
                                           static_cast<double>(i + 1));
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(std::min(j, i))]);
        }
        std::vector<int> train_idx(order.begin(), order.begin() + n_train);
        std::vector<int> test_idx(order.begin() + n_train, order.end());
        split_outcomes[rep] =
            evaluate_arm(select_rows(design, train_idx), select_rows(x, train_idx),
                         select_rows(design, test_idx), select_rows(x, test_idx), target);
    });

    SimReport report;
    report.experiment = cfg.scenario == Scenario::iid ? "split-iid" : "split-leverage";
    report.n_reps = cfg.n_reps;
    report.seed = stream.master_seed();
    std::ostringstream eps_label;
    eps_label << "_eps" << cfg.epsilon;
    report.methods.push_back(summarize_arm("thinning" + eps_label.str(), thin_outcomes));
    report.methods.push_back(summarize_arm("splitting" + eps_label.str(), split_outcomes));
    return report;
}

namespace {

std::string method_label(const eval::CvMethod& method) {
    std::ostringstream out;
    switch (method.kind) {
        case eval::CvMethod::Kind::naive:
            out << "naive";
            break;
        case eval::CvMethod::Kind::single:
            out << "single_eps" << method.eps_train;
            break;
        case eval::CvMethod::Kind::multifold:
            out << "multifold_M" << method.folds;
            break;
    }
    return out.str();
}

std::string loss_label(eval::LossKind loss) {
    return loss == eval::LossKind::nll ? "nll" : "mse";
}

bool non_increasing(const Eigen::VectorXd& curve) {
    for (Eigen::Index i = 1; i < curve.size(); ++i) {
        const double slack = 1e-9 * (std::abs(curve[i - 1]) + 1.0);
        if (curve[i] > curve[i - 1] + slack) return false;
    }
    return true;
}

struct TaskInstance {
    Eigen::MatrixXd data;
    Family family;
    eval::Task task;
};

TaskInstance generate_task_data(SelectionTask task, RandomStream& stream) {
    if (task == SelectionTask::binomial_pca) {
        const BinomialPcaData data = gen_binomial_pca_data(250, 100, 100, 10, stream);
        return {data.counts, fam::Binomial(data.trials), eval::Task::pca};
    }
    const GammaClusterData data = gen_gamma_clusters(task, stream);
    return {data.values, fam::Gamma(data.shape), eval::Task::cluster};
}

}  // namespace

SimReport run_selection_sim(const SelectionSimConfig& cfg, const RandomStream& stream) {
    if (cfg.methods.empty()) throw UsageError("run_selection_sim: no methods");
    if (cfg.losses.empty()) throw UsageError("run_selection_sim: no loss kinds");
    const std::size_t n_methods = cfg.methods.size();
    const std::size_t n_losses = cfg.losses.size();
    const std::size_t n_cells = n_methods * n_losses;
    const auto n_candidates = static_cast<Eigen::Index>(cfg.candidates.size());

    // Per-replicate slots keep aggregation order-independent.
    std::vector<std::vector<int>> selected(n_cells,
                                           std::vector<int>(static_cast<std::size_t>(cfg.n_reps)));
    std::vector<std::vector<char>> monotone(n_cells,
                                            std::vector<char>(static_cast<std::size_t>(cfg.n_reps)));
    std::vector<Eigen::MatrixXd> curves(
        n_cells, Eigen::MatrixXd::Zero(cfg.n_reps, n_candidates));

    parallel_for(static_cast<std::size_t>(cfg.n_reps), [&](std::size_t rep) {
        RandomStream rep_stream = stream.substream(rep);
        RandomStream data_stream = rep_stream.substream(0);
        const TaskInstance instance = generate_task_data(cfg.task, data_stream);
        for (std::size_t mi = 0; mi < n_methods; ++mi) {
            RandomStream method_stream = rep_stream.substream(1 + mi);
            const std::vector<eval::LossCurve> results = eval::cv_select_k_losses(
                instance.data, instance.family, cfg.candidates, cfg.methods[mi], cfg.losses,
                instance.task, method_stream);
            for (std::size_t li = 0; li < n_losses; ++li) {
                const std::size_t cell = mi * n_losses + li;
                selected[cell][rep] = results[li].selected_k;
                monotone[cell][rep] = non_increasing(results[li].mean_loss) ? 1 : 0;
                curves[cell].row(static_cast<Eigen::Index>(rep)) =
                    results[li].mean_loss.transpose();
            }
        }
    });

    SimReport report;
    switch (cfg.task) {
        case SelectionTask::binomial_pca: report.experiment = "pca"; break;
        case SelectionTask::gamma_small: report.experiment = "gamma-small"; break;
        case SelectionTask::gamma_large: report.experiment = "gamma-large"; break;
    }
    report.n_reps = cfg.n_reps;
    report.seed = cfg.seed != 0 ? cfg.seed : stream.master_seed();

    for (std::size_t mi = 0; mi < n_methods; ++mi) {
        for (std::size_t li = 0; li < n_losses; ++li) {
            const std::size_t cell = mi * n_losses + li;
            MethodSummary summary;
            summary.method = method_label(cfg.methods[mi]);
            summary.loss = loss_label(cfg.losses[li]);
            summary.candidate_ks = cfg.candidates;
            int correct = 0;
            int monotone_count = 0;
            for (int rep = 0; rep < cfg.n_reps; ++rep) {
                const int k = selected[cell][static_cast<std::size_t>(rep)];
                summary.histogram[k] += 1;
                if (k == cfg.true_k) ++correct;
                monotone_count += monotone[cell][static_cast<std::size_t>(rep)];
            }
            summary.proportion_correct =
                static_cast<double>(correct) / static_cast<double>(cfg.n_reps);
            summary.monotone_fraction =
                static_cast<double>(monotone_count) / static_cast<double>(cfg.n_reps);
            const Eigen::VectorXd mean_curve =
                curves[cell].colwise().mean().transpose();
            summary.mean_curve = eval::min_max_rescale(mean_curve);
            report.methods.push_back(std::move(summary));
        }
    }
    return report;
}

std::vector<EpsSweepRow> run_eps_sweep(SelectionTask task, const std::vector<double>& eps_grid,
                                       int n_reps, eval::LossKind loss,
                                       const RandomStream& stream) {
    if (eps_grid.empty()) throw UsageError("run_eps_sweep: empty grid");
    std::vector<EpsSweepRow> rows;
    rows.reserve(eps_grid.size());
    SelectionSimConfig base = SelectionSimConfig::defaults(task);
    for (std::size_t g = 0; g < eps_grid.size(); ++g) {
        SelectionSimConfig cfg = base;
        cfg.methods = {eval::CvMethod::single(eps_grid[g])};
        cfg.losses = {loss};
        cfg.n_reps = n_reps;
        const SimReport report = run_selection_sim(cfg, stream.substream(g));
        rows.push_back({eps_grid[g], report.methods[0].proportion_correct});
    }
    return rows;
}

}  // namespace thinlab::sim
