#include "lot/sinkhorn.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <string>
#include <vector>

namespace lot {

namespace {

constexpr double kMarginalTol = 1e-6;
constexpr double kAutoEpsFactor = 0.05;
// Cold starts more than two decades below the mean cost sit outside the
// regime the direct loop handles well, so annealing engages automatically.
constexpr double kAnnealTrigger = 1e-2;

void validate_config(const SinkhornConfig& cfg) {
  if (cfg.epsilon > 0.0 && !std::isfinite(cfg.epsilon))
    throw data_error("sinkhorn: epsilon must be finite");
  if (cfg.max_iters < 1) throw data_error("sinkhorn: max_iters must be >= 1");
  if (!(cfg.tolerance > 0.0) || !std::isfinite(cfg.tolerance))
    throw data_error("sinkhorn: tolerance must be positive");
}

void validate_cost(const Eigen::MatrixXd& cost, Eigen::Index rows,
                   Eigen::Index cols) {
  if (cost.rows() != rows || cost.cols() != cols)
    throw data_error("sinkhorn: cost matrix shape does not match the clouds");
  if (!cost.allFinite())
    throw data_error("sinkhorn: cost matrix contains NaN or Inf");
}

// State shared by the update loops. Potentials are stored divided by epsilon
// (the scale in which the softmin runs); scratch holds one n x m buffer that
// is reused across iterations.
struct Solver {
  const Eigen::MatrixXd& cost;
  Eigen::VectorXd loga, logb;
  double eps = 0.0;
  Eigen::MatrixXd scaled_cost;  // cost / eps, rebuilt when eps changes
  Eigen::VectorXd fs, gs;       // f / eps, g / eps
  Eigen::MatrixXd scratch;
  Eigen::VectorXd row_max, row_sum, col_max, col_sum, prev;
  int iterations = 0;

  Solver(const Eigen::MatrixXd& c, const Eigen::VectorXd& a,
         const Eigen::VectorXd& b)
      : cost(c),
        loga(a.array().log()),
        logb(b.array().log()),
        fs(Eigen::VectorXd::Zero(a.size())),
        gs(Eigen::VectorXd::Zero(b.size())) {}

  void set_epsilon(double e) {
    if (eps > 0.0) {
      // Keep the potentials themselves continuous across the change.
      fs *= eps / e;
      gs *= eps / e;
    }
    eps = e;
    scaled_cost = cost / e;
  }

  // fs_i <- -LSE_j(gs_j + logb_j - scaled_cost_ij); returns sup|f_new - f|.
  double update_f() {
    scratch = (-scaled_cost).rowwise() + (gs + logb).transpose();
    row_max = scratch.rowwise().maxCoeff();
    row_sum = (scratch.colwise() - row_max).array().exp().rowwise().sum();
    prev = fs;
    fs = -(row_max.array() + row_sum.array().log());
    return (fs - prev).cwiseAbs().maxCoeff() * eps;
  }

  double update_g() {
    scratch = (-scaled_cost).colwise() + (fs + loga);
    col_max = scratch.colwise().maxCoeff();
    col_sum = (scratch.rowwise() - col_max.transpose()).array().exp().colwise().sum();
    prev = gs;
    gs = -(col_max.array() + col_sum.array().log());
    return (gs - prev).cwiseAbs().maxCoeff() * eps;
  }

  // One evaluation of the composed map T(f): gs <- colsoftmin(fs), then
  // tf <- rowsoftmin(gs). fs itself is left in place so the caller can
  // extrapolate; returns the fixed-point residual sup|tf - fs| * eps. The
  // column marginals of plan() are exact right after this call.
  //
  // tf is re-centred to mean zero before the residual is taken. The pair
  // (f + c, g - c) describes the same plan for any constant c, and without
  // pinning that gauge the residual picks up a constant component that
  // cancels out of every secant difference, which starves the extrapolation
  // of the very direction it needs and lets the iterate drift. The plan,
  // marginals, and dual value are all invariant to the shift.
  double eval_map() {
    scratch = (-scaled_cost).colwise() + (fs + loga);
    col_max = scratch.colwise().maxCoeff();
    col_sum = (scratch.rowwise() - col_max.transpose()).array().exp().colwise().sum();
    gs = -(col_max.array() + col_sum.array().log());
    scratch = (-scaled_cost).rowwise() + (gs + logb).transpose();
    row_max = scratch.rowwise().maxCoeff();
    row_sum = (scratch.colwise() - row_max).array().exp().rowwise().sum();
    tf = -(row_max.array() + row_sum.array().log());
    tf_shift = tf.mean();
    tf.array() -= tf_shift;
    return (tf - fs).cwiseAbs().maxCoeff() * eps;
  }

  // Row-feasible counterpart of plan(): the plan evaluated at (T(f), g),
  // whose rows sum to a exactly. Valid right after eval_map(), which leaves
  // the second softmin's argument in scratch.
  Eigen::MatrixXd row_feasible_plan() const {
    return ((scratch.colwise() + tf).colwise() + loga)
        .array()
        .exp()
        .matrix() *
        std::exp(tf_shift);
  }

  // Symmetric problem: gs tracks fs; one averaged update per iteration.
  double update_symmetric() {
    scratch = (-scaled_cost).rowwise() + (fs + logb).transpose();
    row_max = scratch.rowwise().maxCoeff();
    row_sum = (scratch.colwise() - row_max).array().exp().rowwise().sum();
    prev = fs;
    fs = 0.5 * (fs - (row_max.array() + row_sum.array().log()).matrix());
    gs = fs;
    return (fs - prev).cwiseAbs().maxCoeff() * eps;
  }

  Eigen::VectorXd tf;     // T(fs), re-centred; valid after eval_map()
  double tf_shift = 0.0;  // mean removed from tf by the re-centring

  Eigen::MatrixXd plan() const {
    Eigen::MatrixXd p = (-scaled_cost).colwise() + (fs + loga);
    p.rowwise() += (gs + logb).transpose();
    return p.array().exp().matrix();
  }

  double marginal_error(const Eigen::MatrixXd& p, const Eigen::VectorXd& a,
                        const Eigen::VectorXd& b) const {
    const double row_err = (p.rowwise().sum() - a).cwiseAbs().maxCoeff();
    const double col_err = (p.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
    return std::max(row_err, col_err);
  }
};

// Anneal from max(cost) toward the target, halving each stage. Stages use a
// loose, epsilon-proportional threshold; the final accuracy is reached later
// at the target epsilon.
void run_annealing(Solver& s, double target_eps, double tolerance,
                   int max_iters, bool symmetric) {
  const double top = s.cost.maxCoeff();
  if (top <= target_eps) return;
  std::vector<double> stages;
  for (double e = top; e > target_eps; e *= 0.5) stages.push_back(e);
  for (double e : stages) {
    s.set_epsilon(e);
    const double stage_tol = std::max(tolerance, 1e-3 * e);
    for (int k = 0; k < 50 && s.iterations < max_iters; ++k) {
      ++s.iterations;
      double delta;
      if (symmetric) {
        delta = s.update_symmetric();
      } else {
        delta = s.update_f();
        delta = std::max(delta, s.update_g());
      }
      if (delta <= stage_tol) break;
    }
  }
}

SinkhornResult run(const WeightedPointCloud& src, const WeightedPointCloud& tgt,
                   const Eigen::MatrixXd& cost, const SinkhornConfig& cfg,
                   const SinkhornPotentials* warm, bool symmetric) {
  validate_config(cfg);
  validate_cost(cost, src.size(), tgt.size());

  const Eigen::VectorXd& a = src.weights();
  const Eigen::VectorXd& b = tgt.weights();
  const double eps = resolve_epsilon(cfg, cost);
  const double mean_cost = cost.mean();
  const bool anneal = cfg.annealing || eps < kAnnealTrigger * mean_cost;

  Solver s(cost, a, b);
  if (warm != nullptr && warm->f.size() == a.size() &&
      warm->g.size() == b.size()) {
    s.eps = eps;
    s.scaled_cost = cost / eps;
    s.fs = warm->f / eps;
    s.gs = warm->g / eps;
  } else {
    if (anneal) run_annealing(s, eps, cfg.tolerance, cfg.max_iters, symmetric);
    if (s.eps != eps) s.set_epsilon(eps);
  }

  SinkhornResult out;
  out.epsilon = eps;

  // Asymmetric solves iterate the composed map T(f) with Anderson
  // extrapolation (depth 5). Plain Gauss-Seidel contracts at a rate that
  // approaches 1 as epsilon shrinks below the cost spread, stalling the
  // residual tail; Anderson removes those slow, nearly linear modes. The
  // safeguard tracks the best evaluated iterate: an extrapolated step that
  // regresses past it is rejected, the solve restarts from a plain step off
  // that iterate, and extrapolation pauses for a few sweeps so the history
  // is rebuilt from clean secant pairs. Only extrapolated steps are ever
  // rejected: plain steps may wobble in this metric (re-centring is
  // sup-norm-expansive) but contract the potential oscillation, so they
  // always stand. Symmetric self-solves are already fast and stay plain.
  //
  // Near-degenerate instances (two targets almost tied for the same mass)
  // carry modes whose contraction is so close to 1 that their per-sweep
  // movement falls below double precision, which blinds the secant fit while
  // the residual still sits above tolerance. When the windowed best residual
  // stops improving, a quasi-Newton finisher solves (I - J) d = T(f) - f
  // directly: the composed map's Jacobian at the current plan P is
  // J = diag(1/a) P (P diag(1/b))^T, re-centred like the iterates. That one
  // dense solve removes exactly the modes the extrapolation cannot see, so
  // it is gated to small problems and a few attempts per solve.
  constexpr std::size_t kAndersonDepth = 5;
  constexpr int kPlainCooldown = 3;
  constexpr int kStagnationWindow = 60;
  constexpr double kStagnationFactor = 0.7;
  constexpr int kNewtonSteps = 30;
  constexpr int kPolishBudget = 4;
  constexpr Eigen::Index kNewtonMaxSize = 1024;
  std::vector<Eigen::VectorXd> hist_f, hist_r;  // oldest first
  double best_resid = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_f, best_tf;
  int cooldown = 0;
  int revert_streak = 0;
  bool extrapolated = false;  // whether the current fs came from the LS step
  double window_best = std::numeric_limits<double>::infinity();
  int window_left = kStagnationWindow;
  int polish_attempts = 0;
  bool polish_due = false;

  // Returns true if it moved fs to a strictly better iterate. Leaves
  // (fs, gs, tf) consistent either way.
  auto newton_polish = [&](double ref) {
    bool moved = false;
    for (int k = 0; k < kNewtonSteps && s.iterations + 1 < cfg.max_iters; ++k) {
      ++s.iterations;
      const Eigen::VectorXd r = s.tf - s.fs;
      // The exact Jacobian pairs the row-feasible plan (differentiating the
      // second softmin at T(f)) with the column-feasible one (first softmin
      // at f). Approximating both by the same plan perturbs J by O(residual),
      // which is larger than the eigenvalue gap of the modes being targeted.
      const Eigen::MatrixXd plan = s.plan();
      Eigen::MatrixXd jac =
          (s.row_feasible_plan().array().colwise() / a.array()).matrix() *
          (plan.array().rowwise() / b.transpose().array()).matrix().transpose();
      const Eigen::RowVectorXd col_means = jac.colwise().mean();
      jac.rowwise() -= col_means;  // same gauge pinning as the iterates
      jac = -jac;
      jac.diagonal().array() += 1.0;
      const Eigen::VectorXd step = jac.partialPivLu().solve(r);
      if (!step.allFinite()) break;
      // The tied modes make (I - J) nearly singular, so the full step can
      // overshoot the region where the linearisation holds; backtrack until
      // the residual actually improves.
      const Eigen::VectorXd saved = s.fs;
      double delta = 0.0;
      double t = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 5; ++ls, t *= 0.5) {
        s.fs = saved + t * step;
        delta = s.eval_map();
        if (delta < ref) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        s.fs = saved;
        s.eval_map();  // restore gs and tf for the caller
        break;
      }
      ref = delta;
      moved = true;
      if (delta < best_resid) {
        best_resid = delta;
        best_f = s.fs;
        best_tf = s.tf;
      }
      if (delta <= cfg.tolerance) break;  // main loop confirms and accepts
    }
    return moved;
  };

  while (s.iterations < cfg.max_iters) {
    ++s.iterations;
    double delta;
    if (symmetric) {
      delta = s.update_symmetric();
    } else {
      delta = s.eval_map();
    }
    if (delta <= cfg.tolerance) {
      // The potential criterion alone can leave the row marginals off by
      // roughly delta / eps; accept only once the plan itself is feasible.
      Eigen::MatrixXd p = s.plan();
      const double merr = s.marginal_error(p, a, b);
      if (merr <= kMarginalTol) {
        out.plan = std::move(p);
        out.marginal_error = merr;
        out.converged = true;
        break;
      }
    }
    if (symmetric) continue;

    if (--window_left <= 0) {
      polish_due = polish_due || best_resid > window_best * kStagnationFactor;
      window_best = best_resid;
      window_left = kStagnationWindow;
    }

    if (delta <= best_resid) {
      best_resid = delta;
      best_f = s.fs;
      best_tf = s.tf;
      if (extrapolated) revert_streak = 0;
    } else if (extrapolated) {
      // Back off exponentially when extrapolations keep failing, giving the
      // plain sweeps room to move the iterate before the next attempt.
      s.fs = best_tf;
      extrapolated = false;
      hist_f.clear();
      hist_r.clear();
      revert_streak = std::min(revert_streak + 1, 5);
      cooldown = kPlainCooldown << revert_streak;
      continue;
    }

    // The Newton system is only trustworthy once the iterate is in the
    // near-linear regime; outside it, hold the pending polish rather than
    // waste an attempt on a step the line search would reject anyway.
    if (polish_due && delta <= 1e-2 * eps &&
        polish_attempts < kPolishBudget && a.size() <= kNewtonMaxSize &&
        b.size() <= kNewtonMaxSize) {
      polish_due = false;
      ++polish_attempts;
      if (newton_polish(delta)) {
        extrapolated = false;
        hist_f.clear();
        hist_r.clear();
        cooldown = 0;
        continue;
      }
    }

    const Eigen::VectorXd r = s.tf - s.fs;
    Eigen::VectorXd next = s.tf;
    extrapolated = false;
    const Eigen::Index p = static_cast<Eigen::Index>(hist_f.size());
    if (cooldown > 0) {
      --cooldown;
    } else if (p >= 1) {
      // Walker-Ni form: gamma solves min |dR gamma - r| over the last p
      // residual differences; the extrapolated iterate is
      // (f + r) - (dF + dR) gamma.
      Eigen::MatrixXd dF(s.fs.size(), p), dR(s.fs.size(), p);
      for (Eigen::Index i = 0; i < p; ++i) {
        const Eigen::VectorXd& fi = hist_f[static_cast<std::size_t>(i)];
        const Eigen::VectorXd& ri = hist_r[static_cast<std::size_t>(i)];
        const Eigen::VectorXd& fn = i + 1 < p ? hist_f[static_cast<std::size_t>(i + 1)] : s.fs;
        const Eigen::VectorXd& rn = i + 1 < p ? hist_r[static_cast<std::size_t>(i + 1)] : r;
        dF.col(i) = fn - fi;
        dR.col(i) = rn - ri;
      }
      const Eigen::VectorXd gamma = dR.colPivHouseholderQr().solve(r);
      const Eigen::VectorXd cand = (s.fs + r) - (dF + dR) * gamma;
      if (cand.allFinite() && gamma.allFinite()) {
        next = cand;
        extrapolated = true;
      }
    }
    hist_f.push_back(s.fs);
    hist_r.push_back(r);
    if (hist_f.size() >= kAndersonDepth) {
      hist_f.erase(hist_f.begin());
      hist_r.erase(hist_r.begin());
    }
    s.fs = next;
  }
  if (!out.converged) {
    // The last extrapolated fs was never evaluated; fall back to the best
    // iterate seen and re-derive g from it so the reported potentials and
    // plan stay consistent.
    if (!symmetric && best_f.size() > 0) {
      s.fs = best_f;
      s.eval_map();
    }
    out.plan = s.plan();
    out.marginal_error = s.marginal_error(out.plan, a, b);
  }

  out.f = s.fs * s.eps;
  out.g = s.gs * s.eps;
  out.iterations = s.iterations;
  out.value = (out.plan.array() * cost.array()).sum();
  out.dual_value =
      a.dot(out.f) + b.dot(out.g) - eps * (out.plan.sum() - 1.0);
  return out;
}

}  // namespace

double resolve_epsilon(const SinkhornConfig& cfg, const Eigen::MatrixXd& cost) {
  if (cfg.epsilon > 0.0) return cfg.epsilon;
  return std::max(kAutoEpsFactor * cost.mean(), 1e-12);
}

SinkhornResult sinkhorn_ot(const WeightedPointCloud& src,
                           const WeightedPointCloud& tgt,
                           const Eigen::MatrixXd& cost,
                           const SinkhornConfig& cfg,
                           const SinkhornPotentials* warm_start) {
  return run(src, tgt, cost, cfg, warm_start, /*symmetric=*/false);
}

SinkhornResult sinkhorn_self(const WeightedPointCloud& cloud,
                             const Eigen::MatrixXd& cost,
                             const SinkhornConfig& cfg,
                             const Eigen::VectorXd* warm_f) {
  SinkhornPotentials warm;
  const SinkhornPotentials* warm_ptr = nullptr;
  if (warm_f != nullptr && warm_f->size() == cloud.size()) {
    warm.f = *warm_f;
    warm.g = *warm_f;
    warm_ptr = &warm;
  }
  return run(cloud, cloud, cost, cfg, warm_ptr, /*symmetric=*/true);
}

DivergenceParts sinkhorn_divergence_parts(
    const WeightedPointCloud& src, const WeightedPointCloud& tgt,
    const Eigen::MatrixXd& cost_cross, const Eigen::MatrixXd& cost_self_src,
    const Eigen::MatrixXd& cost_self_tgt, const SinkhornConfig& cfg,
    const SinkhornPotentials* warm_cross, const Eigen::VectorXd* warm_self_src,
    const Eigen::VectorXd* warm_self_tgt, const SinkhornResult* reuse_self_tgt) {
  DivergenceParts parts;
  SinkhornConfig pinned = cfg;
  pinned.epsilon = resolve_epsilon(cfg, cost_cross);
  parts.epsilon = pinned.epsilon;

  parts.cross = sinkhorn_ot(src, tgt, cost_cross, pinned, warm_cross);
  parts.self_src = sinkhorn_self(src, cost_self_src, pinned, warm_self_src);
  if (reuse_self_tgt != nullptr) {
    parts.self_tgt = *reuse_self_tgt;
  } else {
    parts.self_tgt = sinkhorn_self(tgt, cost_self_tgt, pinned, warm_self_tgt);
  }

  parts.value = parts.cross.dual_value - 0.5 * parts.self_src.dual_value -
                0.5 * parts.self_tgt.dual_value;
  parts.converged = parts.cross.converged && parts.self_src.converged &&
                    parts.self_tgt.converged;
  return parts;
}

double sinkhorn_divergence(const WeightedPointCloud& src,
                           const WeightedPointCloud& tgt,
                           const SinkhornConfig& cfg) {
  if (src.dim() != tgt.dim())
    throw data_error("sinkhorn_divergence: dimension mismatch");
  const Eigen::MatrixXd cxy = squared_euclidean_cost(src.points(), tgt.points());
  const Eigen::MatrixXd cxx = squared_euclidean_cost(src.points(), src.points());
  const Eigen::MatrixXd cyy = squared_euclidean_cost(tgt.points(), tgt.points());
  DivergenceParts parts =
      sinkhorn_divergence_parts(src, tgt, cxy, cxx, cyy, cfg);
  if (!parts.converged)
    throw numeric_error("sinkhorn_divergence: solver did not converge in " +
                        std::to_string(cfg.max_iters) + " iterations");
  return parts.value;
}

Eigen::MatrixXd divergence_gradient(const WeightedPointCloud& src,
                                    const WeightedPointCloud& tgt,
                                    const SinkhornConfig& cfg) {
  if (src.dim() != tgt.dim())
    throw data_error("divergence_gradient: dimension mismatch");
  const Eigen::MatrixXd cxy = squared_euclidean_cost(src.points(), tgt.points());
  const Eigen::MatrixXd cxx = squared_euclidean_cost(src.points(), src.points());

  SinkhornConfig pinned = cfg;
  pinned.epsilon = resolve_epsilon(cfg, cxy);
  SinkhornResult cross = sinkhorn_ot(src, tgt, cxy, pinned);
  SinkhornResult self_src = sinkhorn_self(src, cxx, pinned);
  if (!cross.converged || !self_src.converged)
    throw numeric_error("divergence_gradient: solver did not converge in " +
                        std::to_string(cfg.max_iters) + " iterations");
  return gradient_from_parts(cross, self_src, src.points(), tgt.points());
}

Eigen::MatrixXd gradient_from_parts(const SinkhornResult& cross,
                                    const SinkhornResult& self_src,
                                    const Eigen::MatrixXd& src_points,
                                    const Eigen::MatrixXd& tgt_points) {
  // Envelope theorem under c = 0.5|x - y|^2: holding the optimal plans fixed,
  //   dS/dx_i = sum_j P_self_ij (x_i - x_j) - sum_j P_cross_ij (x_i - y_j),
  // and the x_i terms cancel because both plans share the row marginal a_i.
  return self_src.plan * src_points - cross.plan * tgt_points;
}

}  // namespace lot
