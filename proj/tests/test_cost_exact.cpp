#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "lot/exact_ot.hpp"
#include "lot/point_cloud.hpp"
#include "lot/rng.hpp"
#include "test_util.hpp"

using lot::WeightedPointCloud;

TEST_SUITE_BEGIN("cost_exact");

TEST_CASE("WeightedPointCloud rejects malformed measures") {
  Eigen::MatrixXd pts(2, 2);
  pts << 0, 0, 1, 1;

  CHECK_NOTHROW(WeightedPointCloud(pts, Eigen::Vector2d(0.5, 0.5)));
  CHECK_THROWS_AS(WeightedPointCloud(pts, Eigen::Vector2d(0.6, 0.6)),
                  lot::data_error);  // sums to 1.2
  CHECK_THROWS_AS(WeightedPointCloud(pts, Eigen::Vector2d(1.0, 0.0)),
                  lot::data_error);  // zero weight
  CHECK_THROWS_AS(WeightedPointCloud(pts, Eigen::Vector3d(0.3, 0.3, 0.4)),
                  lot::data_error);  // count mismatch

  Eigen::MatrixXd bad = pts;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(WeightedPointCloud(bad, Eigen::Vector2d(0.5, 0.5)),
                  lot::data_error);

  const auto u = WeightedPointCloud::uniform(pts);
  CHECK(u.size() == 2);
  CHECK(u.dim() == 2);
  CHECK(u.weights()(0) == 0.5);
}

TEST_CASE("squared_euclidean_cost matches the analytic definition") {
  Eigen::MatrixXd x(1, 2), y(1, 2);
  x << 0, 0;
  y << 0, 0;
  CHECK(lot::squared_euclidean_cost(x, y)(0, 0) == 0.0);

  y << 3, 4;
  CHECK(lot::squared_euclidean_cost(x, y)(0, 0) == doctest::Approx(12.5).epsilon(1e-14));

  // Entry-by-entry against the one-line definition on random clouds.
  lot::Rng rng(101);
  const Eigen::MatrixXd a = testutil::random_points(rng, 4, 2, 3.0);
  const Eigen::MatrixXd b = testutil::random_points(rng, 4, 2, 3.0);
  const Eigen::MatrixXd c = lot::squared_euclidean_cost(a, b);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      CHECK(c(i, j) ==
            doctest::Approx(0.5 * (a.row(i) - b.row(j)).squaredNorm()).epsilon(1e-12));

  // Self cost: symmetric with an exactly nonnegative zero diagonal.
  const Eigen::MatrixXd s = lot::squared_euclidean_cost(a, a);
  CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(s.diagonal().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(s.minCoeff() >= 0.0);

  Eigen::MatrixXd wrong(2, 3);
  wrong.setZero();
  CHECK_THROWS_AS(lot::squared_euclidean_cost(a, wrong), lot::data_error);
}

TEST_CASE("attribute_space_cost weights score differences by 1 - gamma") {
  Eigen::MatrixXd u(2, 3), v(2, 3);
  u << 0.2, 0.4, 0.9, 0.1, 0.5, 0.3;
  v = u;
  Eigen::VectorXd gamma(3);
  gamma << 0.0, 0.5, 1.0;

  SUBCASE("identical rows cost nothing") {
    const Eigen::MatrixXd c = lot::attribute_space_cost(u, v, gamma);
    CHECK(c(0, 0) == 0.0);
    CHECK(c(1, 1) == 0.0);
  }

  SUBCASE("a fully correlated attribute is ignored") {
    Eigen::MatrixXd far = v;
    far.col(0).array() += 10.0;
    Eigen::VectorXd one(1);
    one << 1.0;
    const Eigen::MatrixXd c =
        lot::attribute_space_cost(u.leftCols(1), far.leftCols(1), one);
    CHECK(c.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("rows differing by 1.0 in each of three attributes") {
    Eigen::MatrixXd shifted = v;
    shifted.array() += 1.0;
    const Eigen::MatrixXd c = lot::attribute_space_cost(u, shifted, gamma);
    // 0.5 * (1*1 + 0.5*1 + 0*1) = 0.75 on the diagonal pairs.
    CHECK(c(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(c(1, 1) == doctest::Approx(0.75).epsilon(1e-12));
  }

  SUBCASE("validation") {
    CHECK_THROWS_AS(lot::attribute_space_cost(u, v.leftCols(2), gamma),
                    lot::data_error);
    Eigen::VectorXd bad = gamma;
    bad(0) = 1.5;
    CHECK_THROWS_AS(lot::attribute_space_cost(u, v, bad), lot::data_error);
    CHECK_THROWS_AS(lot::attribute_space_cost(u, v, gamma.head(2)),
                    lot::data_error);
  }
}

TEST_CASE("exact_ot_permutation on closed-form instances") {
  lot::Rng rng(77);
  const Eigen::MatrixXd pts = testutil::random_points(rng, 4, 3, 2.0);
  const Eigen::MatrixXd self = lot::squared_euclidean_cost(pts, pts);

  SUBCASE("identical clouds transport for free") {
    const auto r = lot::exact_ot_permutation(self);
    CHECK(std::abs(r.value) <= 1e-12);
    // Identity is among the optima; the returned plan must also cost zero.
    double c = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i)
      c += self(i, r.assignment[static_cast<std::size_t>(i)]);
    CHECK(std::abs(c) <= 1e-12);
  }

  SUBCASE("two crossed points match at zero cost") {
    Eigen::MatrixXd x(2, 2), y(2, 2);
    x << 0, 0, 1, 0;
    y << 1, 0, 0, 0;
    const auto r = lot::exact_ot_permutation(lot::squared_euclidean_cost(x, y));
    CHECK(r.value == 0.0);
    CHECK(r.assignment == std::vector<Eigen::Index>{1, 0});
  }

  SUBCASE("oversized and malformed instances are rejected") {
    CHECK_THROWS_AS(lot::exact_ot_permutation(Eigen::MatrixXd::Zero(9, 9)),
                    lot::data_error);
    CHECK_THROWS_AS(lot::exact_ot_permutation(Eigen::MatrixXd::Zero(3, 4)),
                    lot::data_error);
    Eigen::MatrixXd nan = Eigen::MatrixXd::Zero(2, 2);
    nan(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(lot::exact_ot_permutation(nan), lot::data_error);
  }
}

TEST_CASE("exact_ot_assignment agrees with full enumeration for n <= 8") {
  lot::Rng rng(31);
  for (Eigen::Index n = 1; n <= 8; ++n) {
    for (int rep = 0; rep < 4; ++rep) {
      const Eigen::MatrixXd x = testutil::random_points(rng, n, 2, 2.0);
      const Eigen::MatrixXd y = testutil::random_points(rng, n, 2, 2.0);
      const Eigen::MatrixXd cost = lot::squared_euclidean_cost(x, y);
      const auto hung = lot::exact_ot_assignment(cost);
      const auto brute = lot::exact_ot_permutation(cost);
      CHECK(hung.value == doctest::Approx(brute.value).epsilon(1e-10));
    }
  }
}

TEST_CASE("exact_ot_assignment invariants") {
  SUBCASE("single point") {
    Eigen::MatrixXd c(1, 1);
    c << 3.25;
    CHECK(lot::exact_ot_assignment(c).value == 3.25);
  }

  SUBCASE("clouds equal up to a permutation cost zero") {
    lot::Rng rng(55);
    const Eigen::MatrixXd x = testutil::random_points(rng, 6, 4, 2.0);
    std::vector<Eigen::Index> order = {3, 1, 5, 0, 4, 2};
    Eigen::MatrixXd y(6, 4);
    for (Eigen::Index i = 0; i < 6; ++i)
      y.row(order[static_cast<std::size_t>(i)]) = x.row(i);
    const auto r = lot::exact_ot_assignment(lot::squared_euclidean_cost(x, y));
    CHECK(std::abs(r.value) <= 1e-12);
    CHECK(r.assignment == order);
  }

  SUBCASE("plan is a scaled permutation with exact marginals and value") {
    lot::Rng rng(56);
    const Eigen::MatrixXd x = testutil::random_points(rng, 12, 3, 1.5);
    const Eigen::MatrixXd y = testutil::random_points(rng, 12, 3, 1.5);
    const Eigen::MatrixXd cost = lot::squared_euclidean_cost(x, y);
    const auto r = lot::exact_ot_assignment(cost);
    const Eigen::MatrixXd plan = r.plan();
    CHECK((plan.rowwise().sum().array() - 1.0 / 12).abs().maxCoeff() < 1e-12);
    CHECK((plan.colwise().sum().array() - 1.0 / 12).abs().maxCoeff() < 1e-12);
    CHECK((plan.array() * cost.array()).sum() ==
          doctest::Approx(r.value).epsilon(1e-12));
  }

  SUBCASE("value is a true minimum over sampled permutations") {
    lot::Rng rng(57);
    const Eigen::MatrixXd x = testutil::random_points(rng, 40, 5, 1.0);
    const Eigen::MatrixXd y = testutil::random_points(rng, 40, 5, 1.0);
    const Eigen::MatrixXd cost = lot::squared_euclidean_cost(x, y);
    const auto r = lot::exact_ot_assignment(cost);

    std::vector<Eigen::Index> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    CHECK(r.value <= cost.diagonal().mean() + 1e-12);  // identity is feasible
    for (int rep = 0; rep < 100; ++rep) {
      rng.shuffle(perm);
      double total = 0.0;
      for (Eigen::Index i = 0; i < 40; ++i)
        total += cost(i, perm[static_cast<std::size_t>(i)]);
      CHECK(r.value <= total / 40.0 + 1e-12);
    }
  }
}

TEST_SUITE_END();
