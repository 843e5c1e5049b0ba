#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lot/dataset.hpp"

namespace lot {

// Binary logistic classifier on latent codes: p = sigmoid(w . z + intercept).
struct LogisticModel {
  Eigen::VectorXd w;
  double intercept = 0.0;

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& codes) const;
};

struct LogisticTrainConfig {
  double lr = 0.1;
  double l2 = 1e-4;       // ridge penalty on w (not the intercept)
  double grad_tol = 1e-5; // stop when ||gradient||_2 <= grad_tol
  int max_steps = 5000;
};

// Full-batch gradient descent on mean cross-entropy + (l2/2)|w|^2 from a
// zero start. Convex, so the result is deterministic.
LogisticModel train_logistic(const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y01,
                             const LogisticTrainConfig& cfg = {});

// One classifier per attribute plus the attribute-correlation matrix used to
// relax disentanglement pressure between naturally correlated attributes.
struct AttributeModel {
  std::vector<LogisticModel> classifiers;   // K
  Eigen::MatrixXd gamma;                    // K x K, |Pearson|, diag 1
  std::vector<std::string> attribute_names; // K

  Eigen::Index num_attributes() const {
    return static_cast<Eigen::Index>(classifiers.size());
  }
  Eigen::Index dim() const {
    return classifiers.empty() ? 0 : classifiers.front().w.size();
  }

  // n x K matrix of probabilities.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& codes) const;
};

AttributeModel train_classifiers(const LatentDataset& data, std::uint64_t seed);

// gamma_lk = |Pearson correlation| of binary label columns l and k.
// Throws on constant columns.
Eigen::MatrixXd compute_gamma(const LabelMatrix& labels);

// Bias-correcting source weights for editing attribute k. Source samples
// (label_k == 0, in dataset row order) get raw weight n_t^A / n_s^A where A
// is the sample's combination over the conditioning attributes and n_t^A,
// n_s^A count that combination in target/source, so the weighted source
// reproduces the target's combination mix; combinations absent from the
// target get weight 0; the result is renormalized to sum to 1.
Eigen::VectorXd compute_source_weights(
    const LatentDataset& data, Eigen::Index edited_attribute,
    const std::vector<Eigen::Index>& conditioning_attributes);

// Same rule restricted to explicit row subsets (e.g. a training split).
// source_rows must all carry label 0 and target_rows label 1 for the edited
// attribute; the returned weights align with source_rows.
Eigen::VectorXd compute_source_weights_rows(
    const LatentDataset& data, Eigen::Index edited_attribute,
    const std::vector<Eigen::Index>& conditioning_attributes,
    const std::vector<Eigen::Index>& source_rows,
    const std::vector<Eigen::Index>& target_rows);

// Default conditioning set: the ceil(K/2) attributes (excluding the edited
// one) with the highest positive rate; ties broken by lower index.
std::vector<Eigen::Index> default_conditioning(const LatentDataset& data,
                                               Eigen::Index edited_attribute);

// Classifier bundle JSON: {format_version, attribute_names, dim,
// classifiers: [{weights, intercept}], gamma (row-major)}.
void save_attribute_model(const std::filesystem::path& path,
                          const AttributeModel& model);
AttributeModel load_attribute_model(const std::filesystem::path& path);

}  // namespace lot
