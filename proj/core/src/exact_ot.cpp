#include "lot/exact_ot.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace lot {

namespace {

void validate(const Eigen::MatrixXd& cost, Eigen::Index cap, const char* who) {
  if (cost.rows() < 1 || cost.rows() != cost.cols())
    throw data_error(std::string(who) + ": cost must be square and non-empty");
  if (cost.rows() > cap)
    throw data_error(std::string(who) + ": instance larger than supported size");
  if (!cost.allFinite())
    throw data_error(std::string(who) + ": cost contains NaN or Inf");
}

}  // namespace

ExactOtResult exact_ot_permutation(const Eigen::MatrixXd& cost) {
  validate(cost, 8, "exact_ot_permutation");
  const Eigen::Index n = cost.rows();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);

  ExactOtResult best;
  best.value = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += cost(i, perm[i]);
    if (total < best.value) {
      best.value = total;
      best.assignment = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  best.value /= static_cast<double>(n);
  return best;
}

ExactOtResult exact_ot_assignment(const Eigen::MatrixXd& cost) {
  validate(cost, 512, "exact_ot_assignment");
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();

  // Potentials-based Hungarian algorithm, 1-indexed internally. p[j] is the
  // row currently matched to column j; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  ExactOtResult out;
  out.assignment.assign(static_cast<std::size_t>(n), 0);
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    out.assignment[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    total += cost(p[j] - 1, j - 1);
  }
  out.value = total / static_cast<double>(n);
  return out;
}

}  // namespace lot
