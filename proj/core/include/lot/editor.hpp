#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "lot/common.hpp"

namespace lot {

// Affine edit direction for one attribute: H(z) = W z + b, applied as
// z' = z + alpha * H(z). alpha is a call-site parameter, not model state.
struct AffineEditor {
  Eigen::MatrixXd W;  // dim x dim
  Eigen::VectorXd b;  // dim
  std::string attribute_name;

  Eigen::Index dim() const { return W.rows(); }

  // H(z) for each row of codes.
  Eigen::MatrixXd direction(const Eigen::MatrixXd& codes) const;

  // Row-wise z + alpha * H(z). alpha may be negative (attribute decrease).
  Eigen::MatrixXd edit(const Eigen::MatrixXd& codes, double alpha) const;

  void validate() const;
};

// Near-identity start: W entries i.i.d. N(0, (0.01/sqrt(dim))^2), b = 0.
AffineEditor init_editor(Eigen::Index dim, std::uint64_t seed);

// JSON model file. training_meta is an opaque JSON object serialized next to
// the parameters (mode, lambda, epsilon, seed, epochs_run, ...).
void save_editor(const std::filesystem::path& path, const AffineEditor& editor,
                 const std::string& training_meta_json = "{}");
AffineEditor load_editor(const std::filesystem::path& path,
                         std::string* training_meta_json = nullptr);

}  // namespace lot
