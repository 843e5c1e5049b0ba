#pragma once

#include <Eigen/Dense>

#include "lot/point_cloud.hpp"

namespace lot {

struct SinkhornConfig {
  // Entropic regularization. Non-positive means "resolve automatically" as
  // 0.05 * mean(cost) for the problem at hand.
  double epsilon = 0.0;
  int max_iters = 2000;
  // Stopping rule: sup-norm of the potential updates. Convergence additionally
  // requires the returned plan's marginals to match the inputs within 1e-6.
  double tolerance = 1e-6;
  // Geometric epsilon annealing from max(cost) down to the target value.
  // Forced on whenever the target epsilon is below 1e-3 * mean(cost).
  bool annealing = false;
};

// Dual potentials, reusable as a warm start for a related problem.
struct SinkhornPotentials {
  Eigen::VectorXd f, g;
};

struct SinkhornResult {
  double value = 0.0;       // <plan, cost>, the unregularized transport cost
  double dual_value = 0.0;  // dual objective: the regularized OT value
  Eigen::VectorXd f, g;     // potentials at the stopping point
  Eigen::MatrixXd plan;     // nonnegative coupling with the input marginals
  double epsilon = 0.0;     // regularization actually used
  double marginal_error = 0.0;  // sup-norm violation of both marginals
  int iterations = 0;
  bool converged = false;
};

double resolve_epsilon(const SinkhornConfig& cfg, const Eigen::MatrixXd& cost);

// Log-domain Sinkhorn with Gauss-Seidel potential updates.
SinkhornResult sinkhorn_ot(const WeightedPointCloud& src,
                           const WeightedPointCloud& tgt,
                           const Eigen::MatrixXd& cost,
                           const SinkhornConfig& cfg,
                           const SinkhornPotentials* warm_start = nullptr);

// OT(mu, mu) with symmetric (averaged) updates; the plan is symmetric and the
// two potentials coincide, at roughly half the work of the general solver.
SinkhornResult sinkhorn_self(const WeightedPointCloud& cloud,
                             const Eigen::MatrixXd& cost,
                             const SinkhornConfig& cfg,
                             const Eigen::VectorXd* warm_f = nullptr);

// The three regularized problems making up the debiased divergence
//   S(mu, nu) = OT_eps(mu, nu) - 0.5 OT_eps(mu, mu) - 0.5 OT_eps(nu, nu),
// evaluated through the dual objective so that S(mu, mu) cancels exactly and
// S stays nonnegative up to solver error. One epsilon is shared by all terms
// (resolved from the cross cost when the config leaves it automatic).
struct DivergenceParts {
  SinkhornResult cross, self_src, self_tgt;
  double value = 0.0;
  double epsilon = 0.0;
  bool converged = false;
};

DivergenceParts sinkhorn_divergence_parts(
    const WeightedPointCloud& src, const WeightedPointCloud& tgt,
    const Eigen::MatrixXd& cost_cross, const Eigen::MatrixXd& cost_self_src,
    const Eigen::MatrixXd& cost_self_tgt, const SinkhornConfig& cfg,
    const SinkhornPotentials* warm_cross = nullptr,
    const Eigen::VectorXd* warm_self_src = nullptr,
    const Eigen::VectorXd* warm_self_tgt = nullptr,
    const SinkhornResult* reuse_self_tgt = nullptr);

// Debiased divergence under the 0.5 * |x - y|^2 ground cost.
// Throws numeric_error if any of the underlying solves fails to converge.
double sinkhorn_divergence(const WeightedPointCloud& src,
                           const WeightedPointCloud& tgt,
                           const SinkhornConfig& cfg);

// d S / d x_i by the envelope theorem: row i of (P_self X - P_cross Y).
// Throws numeric_error on non-convergence.
Eigen::MatrixXd divergence_gradient(const WeightedPointCloud& src,
                                    const WeightedPointCloud& tgt,
                                    const SinkhornConfig& cfg);

// Same envelope formula applied to already-computed parts, for callers that
// solve the underlying problems themselves (custom costs, warm starts).
Eigen::MatrixXd gradient_from_parts(const SinkhornResult& cross,
                                    const SinkhornResult& self_src,
                                    const Eigen::MatrixXd& src_points,
                                    const Eigen::MatrixXd& tgt_points);

}  // namespace lot
