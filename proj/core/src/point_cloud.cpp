#include "lot/point_cloud.hpp"

#include <cmath>
#include <string>

namespace lot {

namespace {
constexpr double kWeightSumTol = 1e-9;
}

WeightedPointCloud::WeightedPointCloud(Eigen::MatrixXd points,
                                       Eigen::VectorXd weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.rows() < 1 || points_.cols() < 1)
    throw data_error("WeightedPointCloud: need at least one point and one dimension");
  if (weights_.size() != points_.rows())
    throw data_error("WeightedPointCloud: weight count does not match point count");
  if (!points_.allFinite())
    throw data_error("WeightedPointCloud: points contain NaN or Inf");
  if (!weights_.allFinite())
    throw data_error("WeightedPointCloud: weights contain NaN or Inf");
  if ((weights_.array() <= 0.0).any())
    throw data_error("WeightedPointCloud: weights must be strictly positive; "
                     "drop zero-weight points before construction");
  const double sum = weights_.sum();
  if (std::abs(sum - 1.0) > kWeightSumTol)
    throw data_error("WeightedPointCloud: weights sum to " + format_double(sum) +
                     ", expected 1 within 1e-9");
}

WeightedPointCloud WeightedPointCloud::uniform(Eigen::MatrixXd points) {
  const Eigen::Index n = points.rows();
  if (n < 1) throw data_error("WeightedPointCloud::uniform: empty point set");
  return WeightedPointCloud(std::move(points),
                            Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

Eigen::MatrixXd squared_euclidean_cost(const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& y) {
  if (x.cols() != y.cols())
    throw data_error("squared_euclidean_cost: dimension mismatch");
  // Centering on the joint mean keeps the Gram expansion well conditioned
  // (cost entries are translation invariant, so this changes nothing else).
  Eigen::RowVectorXd center =
      (x.colwise().sum() + y.colwise().sum()) / static_cast<double>(x.rows() + y.rows());
  Eigen::MatrixXd xc = x.rowwise() - center;
  Eigen::MatrixXd yc = y.rowwise() - center;
  Eigen::VectorXd xn = xc.rowwise().squaredNorm();
  Eigen::VectorXd yn = yc.rowwise().squaredNorm();
  Eigen::MatrixXd cost = -xc * yc.transpose();
  cost.colwise() += 0.5 * xn;
  cost.rowwise() += 0.5 * yn.transpose();
  return cost.cwiseMax(0.0);
}

Eigen::MatrixXd attribute_space_cost(const Eigen::MatrixXd& src_attrs,
                                     const Eigen::MatrixXd& tgt_attrs,
                                     const Eigen::VectorXd& gamma_weights) {
  if (src_attrs.cols() != tgt_attrs.cols())
    throw data_error("attribute_space_cost: attribute count mismatch");
  if (gamma_weights.size() != src_attrs.cols())
    throw data_error("attribute_space_cost: one correlation weight per attribute required");
  if ((gamma_weights.array() < 0.0).any() || (gamma_weights.array() > 1.0).any())
    throw data_error("attribute_space_cost: correlation weights must lie in [0, 1]");
  if (src_attrs.cols() == 0)
    return Eigen::MatrixXd::Zero(src_attrs.rows(), tgt_attrs.rows());
  // Scaling each column by sqrt(1 - gamma) turns the weighted sum into a
  // plain squared Euclidean cost in the rescaled score space.
  Eigen::ArrayXd scale = (1.0 - gamma_weights.array()).sqrt();
  Eigen::MatrixXd xs = src_attrs.array().rowwise() * scale.transpose();
  Eigen::MatrixXd ys = tgt_attrs.array().rowwise() * scale.transpose();
  return squared_euclidean_cost(xs, ys);
}

}  // namespace lot
