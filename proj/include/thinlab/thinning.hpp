#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "thinlab/family.hpp"
#include "thinlab/rng.hpp"

namespace thinlab {

/// Splits one scalar observation into (x1, x2) with x1 + x2 == x, x1 and x2
/// independent and distributed F_{eps*lambda} and F_{(1-eps)*lambda}.
std::pair<double, double> thin(double x, const Family& family, double epsilon,
                               RandomStream& stream);

/// Vector-observation variant (multivariate Gaussian, multinomial rows).
std::pair<Eigen::VectorXd, Eigen::VectorXd> thin(const Eigen::VectorXd& x,
                                                 const Family& family, double epsilon,
                                                 RandomStream& stream);

/// Splits one scalar observation into plan.folds() mutually independent folds
/// summing to x, fold m distributed F_{eps_m * lambda}.
std::vector<double> multithin(double x, const Family& family, const ThinPlan& plan,
                              RandomStream& stream);

std::vector<Eigen::VectorXd> multithin(const Eigen::VectorXd& x, const Family& family,
                                       const ThinPlan& plan, RandomStream& stream);

enum class ThinMode { elementwise, rowwise };

/// Thins every element (univariate families) or every row (multivariate
/// families) of X with an independent substream per cell/row, so any
/// submatrix of X thins to the corresponding submatrix of each fold and
/// parallel execution matches serial execution exactly.
FoldSet thin_dataset(const Eigen::MatrixXd& X, const Family& family, const ThinPlan& plan,
                     ThinMode mode, const RandomStream& stream);

/// Sum of all folds except fold m (1-based); distributed F_{(1-eps_m)*lambda}.
Eigen::MatrixXd fold_complement(const FoldSet& fs, int m);

}  // namespace thinlab
