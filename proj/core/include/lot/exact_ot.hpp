#pragma once

#include <vector>

#include <Eigen/Dense>

#include "lot/common.hpp"

namespace lot {

// Exact optimal transport between two uniform measures of equal size n,
// given the n x n pairwise cost. By Birkhoff's theorem the optimum is a
// permutation, so the value is (1/n) * min_sigma sum_i cost(i, sigma(i)).
struct ExactOtResult {
  double value = 0.0;
  std::vector<Eigen::Index> assignment;  // assignment[i] = matched column of row i

  // The optimal plan as a dense matrix: a permutation scaled by 1/n.
  Eigen::MatrixXd plan() const {
    const auto n = static_cast<Eigen::Index>(assignment.size());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      p(i, assignment[static_cast<std::size_t>(i)]) = 1.0 / static_cast<double>(n);
    return p;
  }
};

// Full enumeration of all n! permutations. Reference oracle, n <= 8.
ExactOtResult exact_ot_permutation(const Eigen::MatrixXd& cost);

// Hungarian algorithm (Jonker-style potentials, O(n^3)), n <= 512.
ExactOtResult exact_ot_assignment(const Eigen::MatrixXd& cost);

}  // namespace lot
