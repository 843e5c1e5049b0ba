#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lot/attribute_model.hpp"
#include "lot/dataset.hpp"
#include "lot/editor.hpp"
#include "lot/sinkhorn.hpp"

namespace lot {

enum class TrainMode { LW, LT };

struct TrainingConfig {
  TrainMode mode = TrainMode::LW;
  double lambda = 1.0;      // weight of the attribute-preservation term
  double l2_reg = 0.0;      // LT only: penalty on mean |alpha H(z)|^2
  double alpha_train = 1.0; // edit strength during training
  SinkhornConfig sinkhorn;  // epsilon <= 0 is resolved once per loss term
  double lr = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_epochs = 500;
  int patience = 20;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  bool use_weighting = true;  // bias-correcting source weights (LW only)
  std::vector<Eigen::Index> conditioning;  // empty: default_conditioning

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  // Validation loss components (already scaled by lambda / l2_reg).
  double edit_term = 0.0;
  double pres_term = 0.0;
  double reg_term = 0.0;
};

struct TrainingReport {
  std::vector<EpochStats> epochs;
  int stopped_epoch = 0;  // epochs actually run
  int best_epoch = 0;     // 1-based epoch whose parameters were returned
  double best_val_loss = 0.0;
  double final_edit_term = 0.0;  // components at the best epoch
  double final_pres_term = 0.0;
  double final_reg_term = 0.0;
};

// Row indices of (negatives, positives) for the attribute, in dataset order.
// For a decrease-direction editor the caller swaps the two.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
split_source_target(const LatentDataset& data, Eigen::Index attribute);

// Batch plan for one epoch: B = min(n_source, n_target); the larger side is
// shuffled and chunked into B-sized batches (a trailing batch is dropped iff
// its size < B/2); the smaller side is used whole each step.
struct BatchPlan {
  Eigen::Index batch_size = 0;
  bool source_chunked = false;  // true: batches index the source side
  std::vector<std::vector<Eigen::Index>> batches;  // local indices, chunked side
};
BatchPlan make_batches(Eigen::Index n_source, Eigen::Index n_target,
                       std::uint64_t seed);

struct LossGradients {
  double loss = 0.0;
  double edit_term = 0.0;  // transport / classifier guidance component
  double pres_term = 0.0;  // lambda-scaled attribute preservation component
  double reg_term = 0.0;   // l2_reg-scaled edit-norm component (LT)
  Eigen::MatrixXd dW;
  Eigen::VectorXd db;
};

// Transport objective: S_eps(edited source vs target, Euclidean cost, source
// weights) + lambda * S_eps(edited source vs source, attribute-space cost,
// uniform weights). Gradients w.r.t. editor parameters. Throws numeric_error
// if a Sinkhorn sub-solve fails to converge.
LossGradients lw_loss(const AffineEditor& editor, const Eigen::MatrixXd& src,
                      const Eigen::VectorXd& src_weights,
                      const Eigen::MatrixXd& tgt, const AttributeModel& model,
                      Eigen::Index attribute, const TrainingConfig& cfg);

// Classifier-guidance baseline: mean BCE of F_k(edited) toward label 1
// + lambda * per-sample attribute cost between edited and original codes
// + l2_reg * mean |alpha H(z)|^2.
LossGradients lt_loss(const AffineEditor& editor, const Eigen::MatrixXd& src,
                      const AttributeModel& model, Eigen::Index attribute,
                      const TrainingConfig& cfg);

// Adam training loop with hold-out validation and early stopping; returns the
// parameters of the best validation epoch. Deterministic per (data, cfg).
// When `pretrained` is null the attribute classifiers are trained first.
std::pair<AffineEditor, TrainingReport> train(
    const LatentDataset& data, Eigen::Index attribute,
    const TrainingConfig& cfg, const AttributeModel* pretrained = nullptr);

// CSV: epoch,train_loss,val_loss,edit_term,pres_term,reg_term
void save_report_csv(const std::filesystem::path& path,
                     const TrainingReport& report);

}  // namespace lot
