#pragma once

#include <Eigen/Dense>
#include <vector>

#include "thinlab/family.hpp"
#include "thinlab/rng.hpp"

namespace thinlab::eval {

enum class LossKind { nll, mse };
enum class Task { pca, cluster };

/// Per-candidate-K loss values.  selected_k is the argmin of mean_loss with
/// ties broken toward the smallest K.
struct LossCurve {
    std::vector<int> candidate_ks;
    Eigen::MatrixXd per_fold_loss;  // folds x |candidates|
    Eigen::VectorXd mean_loss;
    int selected_k = 0;
    bool rescaled = false;
};

/// Min-max rescale of mean_loss to [0, 1] (flat curves map to zeros).
LossCurve rescale_curve(LossCurve curve);
Eigen::VectorXd min_max_rescale(const Eigen::VectorXd& values);

/// Rank-K binomial PCA fit: thin SVD of the pseudo-count logit matrix plus
/// the rank-K logits and reconstructed probabilities.
struct PcaFit {
    Eigen::MatrixXd u;                // n x min(n,d)
    Eigen::VectorXd singular_values;  // non-increasing
    Eigen::MatrixXd v;                // d x min(n,d)
    int rank = 0;
    Eigen::MatrixXd logits;  // rank-K reconstruction of the logit matrix
    Eigen::MatrixXd probs;   // expit(logits), strictly inside (0, 1)
};

/// SVD of logit((X + 0.001) / (trials + 0.002)); pseudo-counts keep the
/// logits finite at 0 and trials.
PcaFit fit_binomial_pca(const Eigen::MatrixXd& X_train, std::int64_t trials_train, int K);

double loss_binomial(const Eigen::MatrixXd& X_test, std::int64_t trials_test,
                     const PcaFit& fit, LossKind kind);

struct KmeansResult {
    Eigen::VectorXi assignments;  // n, cluster ids 0..K-1
    Eigen::MatrixXd centers;      // K x d
    double wcss = 0.0;
};

/// Lloyd's algorithm with greedy k-means++ seeding and a Hartigan-style
/// single-point polish; best of `restarts` runs by within-cluster sum of
/// squares.  A warm start with K or K-1 rows adds one extra run seeded from
/// those centers (a K-1 start gains one D^2-sampled center), which lets a
/// candidate sweep reuse the previous solution.  Deterministic given the
/// stream.
KmeansResult kmeans(const Eigen::MatrixXd& X, int K, int restarts, RandomStream& stream,
                    const Eigen::MatrixXd* warm_start = nullptr);

/// Shape/rate maximum-likelihood fit from sufficient statistics: Minka's
/// closed-form initializer refined by Newton steps on the digamma score.
/// Degenerate samples (zero log-spread) cap the shape at 1e6 and flag it.
struct GammaMle {
    double shape = 0.0;
    double rate = 0.0;
    bool capped = false;
};
GammaMle gamma_mle(double mean, double mean_log, double count);

/// K-means assignments plus per-(cluster, dimension) gamma parameter
/// estimates on the training scale.
struct ClusterFit {
    Eigen::VectorXi assignments;  // n, cluster ids 0..K-1
    Eigen::MatrixXd centers;      // K x d k-means centers
    Eigen::MatrixXd shape;        // K x d
    Eigen::MatrixXd rate;         // K x d
    Eigen::VectorXi cluster_sizes;
    Eigen::MatrixXi shape_capped;   // 1 where the MLE hit the cap
    std::vector<int> empty_clusters;  // fitted from pooled data instead
    double train_eps = 1.0;
};

ClusterFit fit_gamma_clusters(const Eigen::MatrixXd& X_train, double eps_train, int K,
                              int restarts, RandomStream& stream,
                              const Eigen::MatrixXd* warm_start = nullptr);

/// Test-fold loss with the train-scale shape rescaled by eps_test/eps_train.
double loss_gamma(const Eigen::MatrixXd& X_test, const ClusterFit& fit, double eps_test,
                  double eps_train, LossKind kind);

struct CvMethod {
    enum class Kind { naive, single, multifold };
    Kind kind = Kind::single;
    double eps_train = 0.5;  // single-fold only
    int folds = 5;           // multifold only

    static CvMethod naive();
    static CvMethod single(double eps_train);
    static CvMethod multifold(int folds);
};

/// Candidate-K selection by thinned cross-validation (or the naive re-use of
/// X for both fitting and scoring).  family must be Binomial for the pca
/// task and Gamma for the cluster task.
LossCurve cv_select_k(const Eigen::MatrixXd& X, const Family& family,
                      const std::vector<int>& candidates, const CvMethod& method,
                      LossKind loss, Task task, RandomStream& stream,
                      int kmeans_restarts = 10);

/// Same fits evaluated under several loss kinds at once (fits are shared, so
/// this is much cheaper than separate cv_select_k calls).
std::vector<LossCurve> cv_select_k_losses(const Eigen::MatrixXd& X, const Family& family,
                                          const std::vector<int>& candidates,
                                          const CvMethod& method,
                                          const std::vector<LossKind>& losses, Task task,
                                          RandomStream& stream, int kmeans_restarts = 10);

/// Rank-K reconstruction errors of Y along with the singular values, and the
/// algebraically equivalent ||Y||_F^2 - sum of leading squared singular
/// values, computed independently.
struct SseCurve {
    Eigen::VectorXd sse;              // K = 1..K_max
    Eigen::VectorXd identity_sse;    // ||Y||_F^2 - cumulative D_jj^2
    Eigen::VectorXd singular_values;  // all min(n,d) values
};
SseCurve sse_curve(const Eigen::MatrixXd& Y, int K_max);

/// Column standardization to mean 0 / sample SD 1; zero-variance columns are
/// set to 0 and reported.
struct Standardized {
    Eigen::MatrixXd matrix;
    std::vector<int> zero_variance_cols;
};
Standardized standardize_columns(const Eigen::MatrixXd& Y);

}  // namespace thinlab::eval
