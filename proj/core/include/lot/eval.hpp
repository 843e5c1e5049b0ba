#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lot/dataset.hpp"
#include "lot/editor.hpp"
#include "lot/synth_bench.hpp"

namespace lot {

struct EvalRow {
  double alpha = 0.0;
  double target_change = 0.0;
  double attribute_preservation = 0.0;
  double identity_preservation = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // one per alpha in the sweep
  double mean_target_change = 0.0;
  double mean_attribute_preservation = 0.0;
  double mean_identity_preservation = 0.0;
  // Diagnostics, NaN when not computed.
  double mean_mahalanobis_to_target = std::numeric_limits<double>::quiet_NaN();
  double adversarial_rate = std::numeric_limits<double>::quiet_NaN();
};

// Fraction of rows whose attribute k moved to `desired` (rows already at the
// desired value do not count as changes).
double target_change_rate(const LabelMatrix& before, const LabelMatrix& after,
                          Eigen::Index k, std::uint8_t desired = 1);

// Mean over samples of the fraction of non-target attributes left unchanged.
double attribute_preservation_rate(const LabelMatrix& before,
                                   const LabelMatrix& after, Eigen::Index k);

// Mean cosine similarity of the identity-subspace projections.
double identity_preservation_rate(const BenchmarkAxes& axes,
                                  const Eigen::MatrixXd& before,
                                  const Eigen::MatrixXd& after);

// Row predicate: which codes currently carry the attribute.
using PositivePredicate =
    std::function<Eigen::Array<bool, Eigen::Dynamic, 1>(const Eigen::MatrixXd&)>;

// Smallest alpha in (0, 100] whose flip rate on val_codes (all initially
// negative) reaches flip_target, by bisection to within 1e-3. Throws
// numeric_error when even alpha = 100 falls short.
double calibrate_d(const AffineEditor& editor, const Eigen::MatrixXd& val_codes,
                   const PositivePredicate& positive, double flip_target = 0.9);

// Evaluates the three metrics at `num_alphas` evenly spaced strengths in
// [d, 2d] against the ground-truth oracle; also fills the sweep means.
EvalReport sweep(const AffineEditor& editor, const Eigen::MatrixXd& test_codes,
                 const BenchmarkAxes& axes, Eigen::Index k, double d,
                 int num_alphas = 10);

// Mean Mahalanobis distance of edited codes under the target empirical
// Gaussian with shrinkage covariance Sigma + (1e-3 * trace/dim) I.
double ood_score(const Eigen::MatrixXd& edited, const Eigen::MatrixXd& target);

// Fraction of codes the guidance classifier claims positive while the
// ground-truth oracle disagrees.
double adversarial_rate(const Eigen::MatrixXd& edited,
                        const LogisticModel& guidance,
                        const BenchmarkAxes& axes, Eigen::Index k);

// CSV: one row per alpha plus a trailing "mean" row.
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);
void write_eval_json(const std::filesystem::path& path, const EvalReport& report);

// Line plot of attribute preservation against target change, one polyline
// per labelled series.
struct SweepSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (target change, preservation)
};
void write_sweep_svg(const std::filesystem::path& path,
                     const std::vector<SweepSeries>& series);

}  // namespace lot
