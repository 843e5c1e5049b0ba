#pragma once

#include <Eigen/Dense>

#include "lot/common.hpp"

namespace lot {

// A discrete probability measure: n points in R^dim (one per row) with
// strictly positive weights summing to one. Zero-weight points are rejected;
// callers drop them (and remember the surviving indices) before constructing.
class WeightedPointCloud {
 public:
  WeightedPointCloud(Eigen::MatrixXd points, Eigen::VectorXd weights);

  // Equal weights 1/n.
  static WeightedPointCloud uniform(Eigen::MatrixXd points);

  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  const Eigen::MatrixXd& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
};

// Pairwise transport cost c_ij = 0.5 * |x_i - y_j|^2 between cloud rows.
Eigen::MatrixXd squared_euclidean_cost(const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& y);

// Preservation cost between rows of per-attribute scores (one column per
// retained attribute): c_ij = 0.5 * sum_l (1 - gamma_l) (x_il - y_jl)^2.
// Columns with gamma_l = 1 (fully correlated with the edited attribute) drop
// out entirely. Callers remove the edited attribute's column beforehand.
Eigen::MatrixXd attribute_space_cost(const Eigen::MatrixXd& src_attrs,
                                     const Eigen::MatrixXd& tgt_attrs,
                                     const Eigen::VectorXd& gamma_weights);

}  // namespace lot
