#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "thinlab/model_eval.hpp"
#include "thinlab/rng.hpp"

namespace thinlab::sim {

enum class Scenario { iid, high_leverage };

struct RegressionSimConfig {
    Scenario scenario = Scenario::iid;
    int n = 100;
    int p = 20;
    double beta_star = 0.5;  // first five coefficients
    double epsilon = 0.8;
    int n_reps = 1000;

    static RegressionSimConfig iid(double epsilon, int n_reps = 1000);
    static RegressionSimConfig high_leverage(double epsilon, int n_reps = 1000);
};

enum class SelectionTask { binomial_pca, gamma_small, gamma_large };

struct SelectionSimConfig {
    SelectionTask task = SelectionTask::gamma_small;
    std::vector<eval::CvMethod> methods;
    std::vector<eval::LossKind> losses;
    std::vector<int> candidates;
    int true_k = 0;
    int n_reps = 200;
    std::uint64_t seed = 0;

    /// Task parameters and candidate ranges for the reference experiments;
    /// methods default to {naive, single 0.5, single 0.8, multifold 5}.
    static SelectionSimConfig defaults(SelectionTask task);
};

struct MethodSummary {
    std::string method;
    std::string loss;
    double detection = 0.0;
    double power = 0.0;
    double proportion_correct = 0.0;
    double monotone_fraction = 0.0;  // replicates with non-increasing loss curve
    std::map<int, int> histogram;    // selected K -> replicate count
    std::vector<int> candidate_ks;
    Eigen::VectorXd mean_curve;  // replicate-averaged loss, min-max rescaled
    int flagged = 0;
};

struct SimReport {
    std::string experiment;
    int n_reps = 0;
    std::uint64_t seed = 0;
    std::vector<MethodSummary> methods;
};

struct BinomialPcaData {
    Eigen::MatrixXd counts;
    Eigen::MatrixXd probs;
    Eigen::MatrixXd theta;  // logit(probs), rank k_star
    std::int64_t trials = 0;
};

/// Rank-k* logit matrix U diag(5..4+k*) V^T with Haar-random orthogonal
/// factors; counts drawn Binomial(trials, expit(theta)).
BinomialPcaData gen_binomial_pca_data(int n, int d, std::int64_t trials, int k_star,
                                      RandomStream& stream);

struct GammaClusterData {
    Eigen::MatrixXd values;
    Eigen::VectorXi labels;  // true cluster ids 0..K*-1
    double shape = 0.0;
    Eigen::MatrixXd rates;  // K* x d
};

/// The two gamma clustering regimes: small (n=400, d=2, K*=4, shape 20) and
/// large (n=1000, d=100, K*=10, shape 2 with 20-column low-rate blocks).
GammaClusterData gen_gamma_clusters(SelectionTask task, RandomStream& stream);

/// Haar-uniform n x k orthonormal columns (QR of a Gaussian matrix with the
/// R-diagonal sign fixed).
Eigen::MatrixXd random_orthogonal(int n, int k, RandomStream& stream);

struct RegressionData {
    Eigen::MatrixXd design;    // n x p
    Eigen::VectorXd response;  // n
    Eigen::VectorXd beta;      // p
};

Eigen::MatrixXd gen_regression_design(const RegressionSimConfig& cfg, RandomStream& stream);
Eigen::VectorXd regression_beta(const RegressionSimConfig& cfg);
Eigen::VectorXd gen_regression_response(const Eigen::MatrixXd& design,
                                        const Eigen::VectorXd& beta, RandomStream& stream);
RegressionData gen_regression_data(const RegressionSimConfig& cfg,
                                   RandomStream& design_stream,
                                   RandomStream& response_stream);

/// Greedy forward selection from the intercept-only model over all columns
/// of Z, adding the AIC-minimizing term until no addition lowers AIC or
/// max_terms is reached.  Singular candidate fits are skipped.
std::vector<int> forward_stepwise(const Eigen::MatrixXd& Z, const Eigen::VectorXd& x,
                                  int max_terms);

/// Thinning-vs-splitting comparison: per replicate, split (or thin with
/// known unit variance), run stepwise on the train arm, refit the selected
/// model on the test arm with 95% t-intervals.  Detection and power track
/// covariate 3.
SimReport run_split_comparison(const RegressionSimConfig& cfg, const RandomStream& stream);

/// Selection experiments: per replicate and method, cv_select_k over the
/// candidates; aggregates selection histograms, proportion-correct and
/// averaged rescaled loss curves.
SimReport run_selection_sim(const SelectionSimConfig& cfg, const RandomStream& stream);

struct EpsSweepRow {
    double eps_train;
    double proportion_correct;
};

/// Single-fold proportion-correct as a function of eps_train.
std::vector<EpsSweepRow> run_eps_sweep(SelectionTask task, const std::vector<double>& eps_grid,
                                       int n_reps, eval::LossKind loss,
                                       const RandomStream& stream);

}  // namespace thinlab::sim
