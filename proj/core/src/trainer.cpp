#include "lot/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "lot/rng.hpp"

namespace lot {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m,
                          const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

// The preservation term lives in a transformed space: coordinate l of a code
// x is sqrt(1 - gamma_lk) * F_l(x) over the non-target attributes, so the
// attribute-space cost of Eq-style form 0.5 * sum_l (1-gamma_lk) (F_l - F_l)^2
// becomes a plain squared-Euclidean cost between embeddings.
struct AttrSpace {
  std::vector<Eigen::Index> dims;  // attribute indices l != k
  Eigen::VectorXd scale;           // sqrt(1 - gamma_lk)
};

AttrSpace make_attr_space(const AttributeModel& model, Eigen::Index k) {
  AttrSpace sp;
  const Eigen::Index K = model.num_attributes();
  for (Eigen::Index l = 0; l < K; ++l)
    if (l != k) sp.dims.push_back(l);
  sp.scale.resize(static_cast<Eigen::Index>(sp.dims.size()));
  for (std::size_t i = 0; i < sp.dims.size(); ++i)
    sp.scale(static_cast<Eigen::Index>(i)) =
        std::sqrt(std::max(0.0, 1.0 - model.gamma(sp.dims[i], k)));
  return sp;
}

void attr_embed(const AttrSpace& sp, const AttributeModel& model,
                const Eigen::MatrixXd& codes, Eigen::MatrixXd& probs,
                Eigen::MatrixXd& embed) {
  const Eigen::Index L = static_cast<Eigen::Index>(sp.dims.size());
  probs.resize(codes.rows(), L);
  for (Eigen::Index j = 0; j < L; ++j)
    probs.col(j) = model.classifiers[static_cast<std::size_t>(sp.dims[static_cast<std::size_t>(j)])]
                       .predict_proba(codes);
  embed = probs * sp.scale.asDiagonal();
}

// Chain d(loss)/d(embed) back to d(loss)/d(codes) through the logistic
// features (classifier parameters are frozen): dF_l/dx = p(1-p) w_l.
void attr_chain(const AttrSpace& sp, const AttributeModel& model,
                const Eigen::MatrixXd& probs, const Eigen::MatrixXd& g_embed,
                double factor, Eigen::MatrixXd& G) {
  for (std::size_t j = 0; j < sp.dims.size(); ++j) {
    const Eigen::Index jj = static_cast<Eigen::Index>(j);
    const auto& cls = model.classifiers[static_cast<std::size_t>(sp.dims[j])];
    const Eigen::VectorXd coef =
        factor * sp.scale(jj) *
        (g_embed.col(jj).array() * probs.col(jj).array() *
         (1.0 - probs.col(jj).array()))
            .matrix();
    G.noalias() += coef * cls.w.transpose();
  }
}

// Solver state carried across steps of one training run: pinned epsilons,
// cached constant-side self-transport solves, and warm-started potentials.
struct LwCaches {
  SinkhornConfig edit_cfg, pres_cfg;
  bool eps_pinned = false;
  SinkhornResult tgt_self;
  bool has_tgt_self = false;
  SinkhornResult vv_self;
  bool has_vv_self = false;
  SinkhornPotentials edit_cross, pres_cross;
  Eigen::VectorXd edit_self_f, pres_self_f;
  bool has_edit_warm = false, has_pres_warm = false;
};

LossGradients lw_eval(const AffineEditor& editor, const Eigen::MatrixXd& src,
                      const Eigen::VectorXd& w_src, const Eigen::MatrixXd& tgt,
                      const AttributeModel& model, const AttrSpace& sp,
                      const TrainingConfig& cfg, LwCaches& cache,
                      bool want_grad) {
  const double alpha = cfg.alpha_train;
  const Eigen::MatrixXd edited = editor.edit(src, alpha);

  const Eigen::MatrixXd cxy = squared_euclidean_cost(edited, tgt);
  const Eigen::MatrixXd cxx = squared_euclidean_cost(edited, edited);
  if (!cache.eps_pinned && cache.edit_cfg.epsilon <= 0.0)
    cache.edit_cfg.epsilon = resolve_epsilon(cache.edit_cfg, cxy);

  WeightedPointCloud mu_edit(edited, w_src);
  WeightedPointCloud mu_tgt = WeightedPointCloud::uniform(tgt);

  if (!cache.has_tgt_self) {
    const Eigen::MatrixXd cyy = squared_euclidean_cost(tgt, tgt);
    cache.tgt_self = sinkhorn_self(mu_tgt, cyy, cache.edit_cfg);
    if (!cache.tgt_self.converged)
      throw numeric_error("lw_loss: target self-transport did not converge");
    cache.has_tgt_self = true;
  }

  const Eigen::MatrixXd no_cost;  // unused when the self solve is reused
  DivergenceParts pe = sinkhorn_divergence_parts(
      mu_edit, mu_tgt, cxy, cxx, no_cost, cache.edit_cfg,
      cache.has_edit_warm ? &cache.edit_cross : nullptr,
      cache.has_edit_warm ? &cache.edit_self_f : nullptr, nullptr,
      &cache.tgt_self);
  if (!pe.converged)
    throw numeric_error("lw_loss: transport term did not converge within "
                        "max_iters; raise max_iters or epsilon");
  cache.edit_cross.f = pe.cross.f;
  cache.edit_cross.g = pe.cross.g;
  cache.edit_self_f = pe.self_src.f;
  cache.has_edit_warm = true;

  LossGradients out;
  out.edit_term = pe.value;
  Eigen::MatrixXd G;
  if (want_grad)
    G = gradient_from_parts(pe.cross, pe.self_src, edited, tgt);

  if (cfg.lambda > 0.0 && !sp.dims.empty()) {
    Eigen::MatrixXd probs_e, U, probs_s, V;
    attr_embed(sp, model, edited, probs_e, U);
    attr_embed(sp, model, src, probs_s, V);
    const Eigen::MatrixXd cuv = squared_euclidean_cost(U, V);
    const Eigen::MatrixXd cuu = squared_euclidean_cost(U, U);
    if (!cache.eps_pinned && cache.pres_cfg.epsilon <= 0.0) {
      // At the start of training the editor is near-identity, so the observed
      // embedding cost can sit arbitrarily close to zero even though each
      // coordinate may later sweep its full [0, scale_l] range. Pin epsilon
      // from whichever is larger: the first-batch cost or the mean cost of
      // two independent uniform clouds on that box (sum scale_l^2 / 6).
      Eigen::MatrixXd ref(1, 1);
      ref(0, 0) = std::max(cuv.mean(), sp.scale.squaredNorm() / 6.0);
      cache.pres_cfg.epsilon = resolve_epsilon(cache.pres_cfg, ref);
    }

    WeightedPointCloud mu_u = WeightedPointCloud::uniform(U);
    WeightedPointCloud mu_v = WeightedPointCloud::uniform(V);
    if (!cache.has_vv_self) {
      const Eigen::MatrixXd cvv = squared_euclidean_cost(V, V);
      cache.vv_self = sinkhorn_self(mu_v, cvv, cache.pres_cfg);
      if (!cache.vv_self.converged)
        throw numeric_error("lw_loss: source self-transport did not converge");
      cache.has_vv_self = true;
    }
    DivergenceParts pp = sinkhorn_divergence_parts(
        mu_u, mu_v, cuv, cuu, no_cost, cache.pres_cfg,
        cache.has_pres_warm ? &cache.pres_cross : nullptr,
        cache.has_pres_warm ? &cache.pres_self_f : nullptr, nullptr,
        &cache.vv_self);
    if (!pp.converged) {
      std::fprintf(stderr,
                   "[dbg] pres fail: eps=%g cuv mean=%g max=%g cuu max=%g "
                   "cross(conv=%d it=%d err=%g) self_u(conv=%d it=%d err=%g) "
                   "n=%ld m=%ld\n",
                   cache.pres_cfg.epsilon, cuv.mean(), cuv.maxCoeff(),
                   cuu.maxCoeff(), pp.cross.converged, pp.cross.iterations,
                   pp.cross.marginal_error, pp.self_src.converged,
                   pp.self_src.iterations, pp.self_src.marginal_error,
                   static_cast<long>(U.rows()), static_cast<long>(V.rows()));
      throw numeric_error("lw_loss: preservation term did not converge within "
                          "max_iters; raise max_iters or epsilon");
    }
    cache.pres_cross.f = pp.cross.f;
    cache.pres_cross.g = pp.cross.g;
    cache.pres_self_f = pp.self_src.f;
    cache.has_pres_warm = true;

    out.pres_term = cfg.lambda * pp.value;
    if (want_grad) {
      const Eigen::MatrixXd g_embed =
          gradient_from_parts(pp.cross, pp.self_src, U, V);
      attr_chain(sp, model, probs_e, g_embed, cfg.lambda, G);
    }
  }
  cache.eps_pinned = true;

  out.loss = out.edit_term + out.pres_term;
  if (!std::isfinite(out.loss))
    throw numeric_error("lw_loss: loss is not finite");
  if (want_grad) {
    out.dW = alpha * G.transpose() * src;
    out.db = alpha * G.colwise().sum().transpose();
  }
  return out;
}

LossGradients lt_eval(const AffineEditor& editor, const Eigen::MatrixXd& src,
                      const AttributeModel& model, const AttrSpace& sp,
                      Eigen::Index attribute, const TrainingConfig& cfg,
                      bool want_grad) {
  const double alpha = cfg.alpha_train;
  const double n = static_cast<double>(src.rows());
  const Eigen::MatrixXd edited = editor.edit(src, alpha);
  const auto& cls = model.classifiers[static_cast<std::size_t>(attribute)];
  if (cls.w.size() != src.cols())
    throw data_error("lt_loss: classifier dimension mismatch");

  Eigen::VectorXd t = edited * cls.w;
  t.array() += cls.intercept;

  LossGradients out;
  // Cross-entropy toward label 1: mean softplus(-t).
  out.edit_term = t.unaryExpr([](double v) { return softplus(-v); }).mean();
  Eigen::MatrixXd G;
  if (want_grad) {
    const Eigen::VectorXd coef =
        t.unaryExpr([](double v) { return sigmoid(v) - 1.0; }) / n;
    G = coef * cls.w.transpose();
  }

  if (cfg.lambda > 0.0 && !sp.dims.empty()) {
    Eigen::MatrixXd probs_e, U, probs_s, V;
    attr_embed(sp, model, edited, probs_e, U);
    attr_embed(sp, model, src, probs_s, V);
    const Eigen::MatrixXd diff = U - V;
    out.pres_term =
        cfg.lambda * 0.5 * diff.array().square().rowwise().sum().mean();
    if (want_grad) attr_chain(sp, model, probs_e, diff, cfg.lambda / n, G);
  }

  double reg_dW_scale = 0.0;
  Eigen::MatrixXd H;
  if (cfg.l2_reg > 0.0) {
    H = editor.direction(src);
    out.reg_term =
        cfg.l2_reg * alpha * alpha * H.array().square().rowwise().sum().mean();
    reg_dW_scale = cfg.l2_reg * alpha * alpha * 2.0 / n;
  }

  out.loss = out.edit_term + out.pres_term + out.reg_term;
  if (!std::isfinite(out.loss))
    throw numeric_error("lt_loss: loss is not finite");
  if (want_grad) {
    out.dW = alpha * G.transpose() * src;
    out.db = alpha * G.colwise().sum().transpose();
    if (cfg.l2_reg > 0.0) {
      out.dW.noalias() += reg_dW_scale * H.transpose() * src;
      out.db.noalias() += reg_dW_scale * H.colwise().sum().transpose();
    }
  }
  return out;
}

struct AdamState {
  Eigen::MatrixXd mW, vW;
  Eigen::VectorXd mb, vb;
  int t = 0;

  explicit AdamState(Eigen::Index dim)
      : mW(Eigen::MatrixXd::Zero(dim, dim)),
        vW(Eigen::MatrixXd::Zero(dim, dim)),
        mb(Eigen::VectorXd::Zero(dim)),
        vb(Eigen::VectorXd::Zero(dim)) {}

  void update(AffineEditor& e, const LossGradients& g,
              const TrainingConfig& cfg) {
    ++t;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    mW = cfg.adam_beta1 * mW + (1.0 - cfg.adam_beta1) * g.dW;
    vW = cfg.adam_beta2 * vW + (1.0 - cfg.adam_beta2) * g.dW.cwiseProduct(g.dW);
    mb = cfg.adam_beta1 * mb + (1.0 - cfg.adam_beta1) * g.db;
    vb = cfg.adam_beta2 * vb + (1.0 - cfg.adam_beta2) * g.db.cwiseProduct(g.db);
    e.W.array() -=
        cfg.lr * (mW.array() / c1) / ((vW.array() / c2).sqrt() + cfg.adam_eps);
    e.b.array() -=
        cfg.lr * (mb.array() / c1) / ((vb.array() / c2).sqrt() + cfg.adam_eps);
  }
};

}  // namespace

void TrainingConfig::validate() const {
  if (lambda < 0.0 || !std::isfinite(lambda))
    throw data_error("TrainingConfig: lambda must be >= 0");
  if (l2_reg < 0.0 || !std::isfinite(l2_reg))
    throw data_error("TrainingConfig: l2_reg must be >= 0");
  if (!std::isfinite(alpha_train))
    throw data_error("TrainingConfig: alpha_train must be finite");
  if (!(lr > 0.0)) throw data_error("TrainingConfig: lr must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0)
    throw data_error("TrainingConfig: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw data_error("TrainingConfig: adam_eps must be positive");
  if (max_epochs < 0) throw data_error("TrainingConfig: max_epochs must be >= 0");
  if (patience < 1) throw data_error("TrainingConfig: patience must be >= 1");
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
    throw data_error("TrainingConfig: val_fraction must lie in (0, 1)");
}

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
split_source_target(const LatentDataset& data, Eigen::Index attribute) {
  if (attribute < 0 || attribute >= data.num_attributes())
    throw data_error("split_source_target: attribute index out of range");
  std::vector<Eigen::Index> source, target;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (data.labels(i, attribute) != 0)
      target.push_back(i);
    else
      source.push_back(i);
  }
  if (source.empty() || target.empty())
    throw data_error("split_source_target: attribute has an empty side");
  return {std::move(source), std::move(target)};
}

BatchPlan make_batches(Eigen::Index n_source, Eigen::Index n_target,
                       std::uint64_t seed) {
  if (n_source < 1 || n_target < 1)
    throw data_error("make_batches: both sides must be non-empty");

  BatchPlan plan;
  plan.batch_size = std::min(n_source, n_target);
  plan.source_chunked = n_source >= n_target;
  const Eigen::Index big = std::max(n_source, n_target);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(big));
  for (Eigen::Index i = 0; i < big; ++i) order[static_cast<std::size_t>(i)] = i;
  if (big > plan.batch_size) {
    Rng rng = Rng(seed).fork("batch-shuffle");
    rng.shuffle(order);
  }

  const Eigen::Index B = plan.batch_size;
  Eigen::Index start = 0;
  while (start < big) {
    const Eigen::Index len = std::min(B, big - start);
    // Drop a trailing partial batch when it is under half the batch size
    // ("strong imbalance" rule).
    if (len < B && len * 2 < B) break;
    plan.batches.emplace_back(order.begin() + start, order.begin() + start + len);
    start += len;
  }
  return plan;
}

LossGradients lw_loss(const AffineEditor& editor, const Eigen::MatrixXd& src,
                      const Eigen::VectorXd& src_weights,
                      const Eigen::MatrixXd& tgt, const AttributeModel& model,
                      Eigen::Index attribute, const TrainingConfig& cfg) {
  cfg.validate();
  if (attribute < 0 || attribute >= model.num_attributes())
    throw data_error("lw_loss: attribute index out of range");
  const AttrSpace sp = make_attr_space(model, attribute);
  LwCaches cache;
  cache.edit_cfg = cfg.sinkhorn;
  cache.pres_cfg = cfg.sinkhorn;
  return lw_eval(editor, src, src_weights, tgt, model, sp, cfg, cache,
                 /*want_grad=*/true);
}

LossGradients lt_loss(const AffineEditor& editor, const Eigen::MatrixXd& src,
                      const AttributeModel& model, Eigen::Index attribute,
                      const TrainingConfig& cfg) {
  cfg.validate();
  if (attribute < 0 || attribute >= model.num_attributes())
    throw data_error("lt_loss: attribute index out of range");
  const AttrSpace sp = make_attr_space(model, attribute);
  return lt_eval(editor, src, model, sp, attribute, cfg, /*want_grad=*/true);
}

std::pair<AffineEditor, TrainingReport> train(const LatentDataset& data,
                                              Eigen::Index attribute,
                                              const TrainingConfig& cfg,
                                              const AttributeModel* pretrained) {
  cfg.validate();
  data.validate();
  if (attribute < 0 || attribute >= data.num_attributes())
    throw data_error("train: attribute index out of range");

  AttributeModel local_model;
  if (pretrained == nullptr) local_model = train_classifiers(data, cfg.seed);
  const AttributeModel& model = pretrained ? *pretrained : local_model;
  if (model.dim() != data.dim() ||
      model.num_attributes() != data.num_attributes())
    throw data_error("train: attribute model does not match the dataset");

  auto [src_rows, tgt_rows] = split_source_target(data, attribute);

  // Hold-out validation split of both sides, fixed before weighting.
  Rng root(cfg.seed);
  {
    Rng r = root.fork("val-split-source");
    r.shuffle(src_rows);
  }
  {
    Rng r = root.fork("val-split-target");
    r.shuffle(tgt_rows);
  }
  const auto n_val_s = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(src_rows.size())));
  const auto n_val_t = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(tgt_rows.size())));
  if (n_val_s >= src_rows.size() || n_val_t >= tgt_rows.size())
    throw data_error("train: too few samples for the validation split");
  std::vector<Eigen::Index> val_src(src_rows.begin(), src_rows.begin() + static_cast<std::ptrdiff_t>(n_val_s));
  std::vector<Eigen::Index> train_src(src_rows.begin() + static_cast<std::ptrdiff_t>(n_val_s), src_rows.end());
  std::vector<Eigen::Index> val_tgt(tgt_rows.begin(), tgt_rows.begin() + static_cast<std::ptrdiff_t>(n_val_t));
  std::vector<Eigen::Index> train_tgt(tgt_rows.begin() + static_cast<std::ptrdiff_t>(n_val_t), tgt_rows.end());

  // Bias-correcting weights on the training split only. Zero-weight samples
  // (combinations absent from the target) can never contribute and are
  // removed from the pool; the surviving weights already sum to one.
  const bool weighted = cfg.mode == TrainMode::LW && cfg.use_weighting &&
                        data.num_attributes() > 1;
  Eigen::VectorXd pool_weights;
  if (weighted) {
    std::vector<Eigen::Index> conditioning = cfg.conditioning;
    if (conditioning.empty())
      conditioning = default_conditioning(data, attribute);
    const Eigen::VectorXd w = compute_source_weights_rows(
        data, attribute, conditioning, train_src, train_tgt);
    std::vector<Eigen::Index> kept;
    std::vector<double> kept_w;
    for (std::size_t i = 0; i < train_src.size(); ++i) {
      if (w(static_cast<Eigen::Index>(i)) > 0.0) {
        kept.push_back(train_src[i]);
        kept_w.push_back(w(static_cast<Eigen::Index>(i)));
      }
    }
    train_src = std::move(kept);
    pool_weights = Eigen::Map<const Eigen::VectorXd>(
        kept_w.data(), static_cast<Eigen::Index>(kept_w.size()));
  } else {
    pool_weights = Eigen::VectorXd::Constant(
        static_cast<Eigen::Index>(train_src.size()),
        1.0 / static_cast<double>(train_src.size()));
  }
  if (train_src.empty())
    throw data_error("train: weighting removed every source sample");

  const Eigen::MatrixXd train_src_codes = take_rows(data.codes, train_src);
  const Eigen::MatrixXd train_tgt_codes = take_rows(data.codes, train_tgt);
  const Eigen::MatrixXd val_src_codes = take_rows(data.codes, val_src);
  const Eigen::MatrixXd val_tgt_codes = take_rows(data.codes, val_tgt);
  const Eigen::VectorXd val_uniform = Eigen::VectorXd::Constant(
      val_src_codes.rows(), 1.0 / static_cast<double>(val_src_codes.rows()));

  AffineEditor editor = init_editor(data.dim(), cfg.seed);
  editor.attribute_name =
      data.attribute_names[static_cast<std::size_t>(attribute)];

  TrainingReport report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  if (cfg.max_epochs == 0) return {std::move(editor), std::move(report)};

  const AttrSpace sp = make_attr_space(model, attribute);
  LwCaches train_cache, val_cache;
  train_cache.edit_cfg = cfg.sinkhorn;
  train_cache.pres_cfg = cfg.sinkhorn;

  AdamState adam(data.dim());
  AffineEditor best = editor;
  int epochs_since_best = 0;

  const Eigen::Index n_pool_src = static_cast<Eigen::Index>(train_src.size());
  const Eigen::Index n_pool_tgt = static_cast<Eigen::Index>(train_tgt.size());

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed =
        fnv1a64("epoch-" + std::to_string(epoch), cfg.seed);
    const BatchPlan plan = make_batches(n_pool_src, n_pool_tgt, epoch_seed);
    const bool chunk_covers_whole =
        plan.batches.size() == 1 &&
        static_cast<Eigen::Index>(plan.batches.front().size()) ==
            std::max(n_pool_src, n_pool_tgt);

    double train_loss_sum = 0.0;
    int steps = 0;
    for (const auto& batch : plan.batches) {
      Eigen::MatrixXd src_step, tgt_step;
      Eigen::VectorXd w_step;
      if (plan.source_chunked) {
        src_step.resize(static_cast<Eigen::Index>(batch.size()), data.dim());
        w_step.resize(static_cast<Eigen::Index>(batch.size()));
        for (std::size_t i = 0; i < batch.size(); ++i) {
          src_step.row(static_cast<Eigen::Index>(i)) =
              train_src_codes.row(batch[i]);
          w_step(static_cast<Eigen::Index>(i)) = pool_weights(batch[i]);
        }
        w_step /= w_step.sum();
        tgt_step = train_tgt_codes;
        // A fresh source batch invalidates the cached source self-transport.
        if (!chunk_covers_whole) train_cache.has_vv_self = false;
      } else {
        src_step = train_src_codes;
        w_step = pool_weights;
        tgt_step.resize(static_cast<Eigen::Index>(batch.size()), data.dim());
        for (std::size_t i = 0; i < batch.size(); ++i)
          tgt_step.row(static_cast<Eigen::Index>(i)) =
              train_tgt_codes.row(batch[i]);
        if (!chunk_covers_whole) train_cache.has_tgt_self = false;
      }

      LossGradients g;
      if (cfg.mode == TrainMode::LW)
        g = lw_eval(editor, src_step, w_step, tgt_step, model, sp, cfg,
                    train_cache, /*want_grad=*/true);
      else
        g = lt_eval(editor, src_step, model, sp, attribute, cfg,
                    /*want_grad=*/true);
      adam.update(editor, g, cfg);
      train_loss_sum += g.loss;
      ++steps;
    }
    if (steps == 0)
      throw data_error("train: batch plan produced no batches");

    // Validation pass on the held-out split, uniform weights.
    LossGradients v;
    if (cfg.mode == TrainMode::LW) {
      if (!val_cache.eps_pinned) {
        val_cache.edit_cfg = train_cache.edit_cfg;
        val_cache.pres_cfg = train_cache.pres_cfg;
        val_cache.eps_pinned = true;
      }
      v = lw_eval(editor, val_src_codes, val_uniform, val_tgt_codes, model, sp,
                  cfg, val_cache, /*want_grad=*/false);
    } else {
      v = lt_eval(editor, val_src_codes, model, sp, attribute, cfg,
                  /*want_grad=*/false);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss_sum / static_cast<double>(steps);
    stats.val_loss = v.loss;
    stats.edit_term = v.edit_term;
    stats.pres_term = v.pres_term;
    stats.reg_term = v.reg_term;
    report.epochs.push_back(stats);
    report.stopped_epoch = epoch;

    if (v.loss < report.best_val_loss) {
      report.best_val_loss = v.loss;
      report.best_epoch = epoch;
      best = editor;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= cfg.patience) break;
    }
  }

  if (report.best_epoch > 0) {
    const EpochStats& bs =
        report.epochs[static_cast<std::size_t>(report.best_epoch - 1)];
    report.final_edit_term = bs.edit_term;
    report.final_pres_term = bs.pres_term;
    report.final_reg_term = bs.reg_term;
  }
  return {std::move(best), std::move(report)};
}

void save_report_csv(const std::filesystem::path& path,
                     const TrainingReport& report) {
  std::ofstream out(path);
  if (!out) throw data_error("save_report_csv: cannot write " + path.string());
  out << "epoch,train_loss,val_loss,edit_term,pres_term,reg_term\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ','
        << format_double(e.val_loss) << ',' << format_double(e.edit_term) << ','
        << format_double(e.pres_term) << ',' << format_double(e.reg_term)
        << '\n';
  }
  if (!out) throw data_error("save_report_csv: write failed for " + path.string());
}

}  // namespace lot
