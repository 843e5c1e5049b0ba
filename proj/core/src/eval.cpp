#include "lot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lot/common.hpp"

namespace lot {

namespace {

void check_label_shapes(const LabelMatrix& before, const LabelMatrix& after,
                        Eigen::Index k, const char* who) {
  if (before.rows() != after.rows() || before.cols() != after.cols())
    throw data_error(std::string(who) + ": shape mismatch");
  if (before.rows() < 1) throw data_error(std::string(who) + ": empty input");
  if (k < 0 || k >= before.cols())
    throw data_error(std::string(who) + ": attribute index out of range");
}

}  // namespace

double target_change_rate(const LabelMatrix& before, const LabelMatrix& after,
                          Eigen::Index k, std::uint8_t desired) {
  check_label_shapes(before, after, k, "target_change_rate");
  Eigen::Index changed = 0;
  for (Eigen::Index i = 0; i < before.rows(); ++i)
    if (before(i, k) != desired && after(i, k) == desired) ++changed;
  return static_cast<double>(changed) / static_cast<double>(before.rows());
}

double attribute_preservation_rate(const LabelMatrix& before,
                                   const LabelMatrix& after, Eigen::Index k) {
  check_label_shapes(before, after, k, "attribute_preservation_rate");
  const Eigen::Index K = before.cols();
  if (K < 2)
    throw data_error("attribute_preservation_rate: needs at least 2 attributes");
  double total = 0.0;
  for (Eigen::Index i = 0; i < before.rows(); ++i) {
    Eigen::Index kept = 0;
    for (Eigen::Index l = 0; l < K; ++l) {
      if (l == k) continue;
      if (before(i, l) == after(i, l)) ++kept;
    }
    total += static_cast<double>(kept) / static_cast<double>(K - 1);
  }
  return total / static_cast<double>(before.rows());
}

double identity_preservation_rate(const BenchmarkAxes& axes,
                                  const Eigen::MatrixXd& before,
                                  const Eigen::MatrixXd& after) {
  return oracle_identity_similarity(axes, before, after).mean();
}

double calibrate_d(const AffineEditor& editor, const Eigen::MatrixXd& val_codes,
                   const PositivePredicate& positive, double flip_target) {
  if (!(flip_target > 0.0) || flip_target > 1.0)
    throw data_error("calibrate_d: flip_target must lie in (0, 1]");
  if (val_codes.rows() < 1) throw data_error("calibrate_d: empty validation set");

  const double n = static_cast<double>(val_codes.rows());
  auto rate = [&](double alpha) {
    const auto flags = positive(editor.edit(val_codes, alpha));
    return static_cast<double>(flags.count()) / n;
  };

  constexpr double kAlphaMax = 100.0;
  const double top = rate(kAlphaMax);
  if (top < flip_target)
    throw numeric_error("calibrate_d: flip rate at alpha=100 is " +
                        format_double(top) + ", below the requested " +
                        format_double(flip_target));

  double lo = 0.0, hi = kAlphaMax;
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (rate(mid) >= flip_target)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

EvalReport sweep(const AffineEditor& editor, const Eigen::MatrixXd& test_codes,
                 const BenchmarkAxes& axes, Eigen::Index k, double d,
                 int num_alphas) {
  if (d < 0.0 || !std::isfinite(d)) throw data_error("sweep: d must be >= 0");
  if (num_alphas < 1) throw data_error("sweep: num_alphas must be >= 1");
  if (k < 0 || k >= axes.attribute_directions.rows())
    throw data_error("sweep: attribute index out of range");

  const LabelMatrix before = oracle_attribute(axes, test_codes);
  EvalReport report;
  for (double alpha : linspace(d, 2.0 * d, num_alphas)) {
    const Eigen::MatrixXd after_codes = editor.edit(test_codes, alpha);
    const LabelMatrix after = oracle_attribute(axes, after_codes);
    EvalRow row;
    row.alpha = alpha;
    row.target_change = target_change_rate(before, after, k);
    row.attribute_preservation =
        before.cols() >= 2 ? attribute_preservation_rate(before, after, k) : 1.0;
    row.identity_preservation =
        axes.identity_basis.rows() > 0
            ? identity_preservation_rate(axes, test_codes, after_codes)
            : 1.0;
    report.rows.push_back(row);
  }
  for (const auto& row : report.rows) {
    report.mean_target_change += row.target_change;
    report.mean_attribute_preservation += row.attribute_preservation;
    report.mean_identity_preservation += row.identity_preservation;
  }
  const double m = static_cast<double>(report.rows.size());
  report.mean_target_change /= m;
  report.mean_attribute_preservation /= m;
  report.mean_identity_preservation /= m;
  return report;
}

double ood_score(const Eigen::MatrixXd& edited, const Eigen::MatrixXd& target) {
  if (edited.cols() != target.cols())
    throw data_error("ood_score: dimension mismatch");
  if (target.rows() < 2)
    throw data_error("ood_score: need at least 2 target samples");
  if (edited.rows() < 1) throw data_error("ood_score: empty edited set");

  const Eigen::Index dim = target.cols();
  const Eigen::RowVectorXd mu = target.colwise().mean();
  const Eigen::MatrixXd centered = target.rowwise() - mu;
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(target.rows());
  const double shrink = std::max(
      1e-3 * cov.trace() / static_cast<double>(dim), 1e-12);
  cov.diagonal().array() += shrink;

  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw numeric_error("ood_score: covariance factorization failed");

  double total = 0.0;
  for (Eigen::Index i = 0; i < edited.rows(); ++i) {
    const Eigen::VectorXd delta = (edited.row(i) - mu).transpose();
    total += std::sqrt(delta.dot(llt.solve(delta)));
  }
  return total / static_cast<double>(edited.rows());
}

double adversarial_rate(const Eigen::MatrixXd& edited,
                        const LogisticModel& guidance,
                        const BenchmarkAxes& axes, Eigen::Index k) {
  if (k < 0 || k >= axes.attribute_directions.rows())
    throw data_error("adversarial_rate: attribute index out of range");
  if (edited.rows() < 1) throw data_error("adversarial_rate: empty input");

  const Eigen::VectorXd p = guidance.predict_proba(edited);
  const LabelMatrix oracle = oracle_attribute(axes, edited);
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < edited.rows(); ++i)
    if (p(i) > 0.5 && oracle(i, k) == 0) ++count;
  return static_cast<double>(count) / static_cast<double>(edited.rows());
}

void write_eval_csv(const std::filesystem::path& path,
                    const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw data_error("write_eval_csv: cannot write " + path.string());
  out << "alpha,target_change,attribute_preservation,identity_preservation\n";
  for (const auto& row : report.rows) {
    out << format_double(row.alpha) << ',' << format_double(row.target_change)
        << ',' << format_double(row.attribute_preservation) << ','
        << format_double(row.identity_preservation) << '\n';
  }
  out << "mean," << format_double(report.mean_target_change) << ','
      << format_double(report.mean_attribute_preservation) << ','
      << format_double(report.mean_identity_preservation) << '\n';
  if (!out) throw data_error("write_eval_csv: write failed for " + path.string());
}

void write_eval_json(const std::filesystem::path& path,
                     const EvalReport& report) {
  nlohmann::json doc;
  doc["rows"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    doc["rows"].push_back({{"alpha", row.alpha},
                           {"target_change", row.target_change},
                           {"attribute_preservation", row.attribute_preservation},
                           {"identity_preservation", row.identity_preservation}});
  }
  doc["mean"] = {{"target_change", report.mean_target_change},
                 {"attribute_preservation", report.mean_attribute_preservation},
                 {"identity_preservation", report.mean_identity_preservation}};
  nlohmann::json diag = nlohmann::json::object();
  if (std::isfinite(report.mean_mahalanobis_to_target))
    diag["mean_mahalanobis_to_target"] = report.mean_mahalanobis_to_target;
  if (std::isfinite(report.adversarial_rate))
    diag["adversarial_rate"] = report.adversarial_rate;
  doc["diagnostics"] = std::move(diag);

  std::ofstream out(path);
  if (!out) throw data_error("write_eval_json: cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw data_error("write_eval_json: write failed for " + path.string());
}

void write_sweep_svg(const std::filesystem::path& path,
                     const std::vector<SweepSeries>& series) {
  constexpr int kW = 640, kH = 480;
  constexpr double kLeft = 70, kRight = 20, kTop = 20, kBottom = 50;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};

  auto sx = [&](double v) { return kLeft + v * plot_w; };
  auto sy = [&](double v) { return kTop + (1.0 - v) * plot_h; };

  std::ofstream out(path);
  if (!out) throw data_error("write_sweep_svg: cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << ' ' << kH
      << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";

  // Gridlines and tick labels every 0.2 on both unit axes.
  for (int i = 0; i <= 5; ++i) {
    const double v = 0.2 * i;
    out << "<line x1=\"" << format_double(sx(v)) << "\" y1=\"" << format_double(sy(0))
        << "\" x2=\"" << format_double(sx(v)) << "\" y2=\"" << format_double(sy(1))
        << "\" stroke=\"#dddddd\"/>\n";
    out << "<line x1=\"" << format_double(sx(0)) << "\" y1=\"" << format_double(sy(v))
        << "\" x2=\"" << format_double(sx(1)) << "\" y2=\"" << format_double(sy(v))
        << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << format_double(sx(v)) << "\" y=\"" << format_double(sy(0) + 20)
        << "\" font-size=\"12\" text-anchor=\"middle\">" << format_double(v)
        << "</text>\n";
    out << "<text x=\"" << format_double(sx(0) - 8) << "\" y=\""
        << format_double(sy(v) + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">" << format_double(v)
        << "</text>\n";
  }
  out << "<rect x=\"" << format_double(kLeft) << "\" y=\"" << format_double(kTop)
      << "\" width=\"" << format_double(plot_w) << "\" height=\""
      << format_double(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << format_double(kLeft + plot_w / 2) << "\" y=\""
      << format_double(kH - 10)
      << "\" font-size=\"14\" text-anchor=\"middle\">target change rate</text>\n";
  out << "<text x=\"16\" y=\"" << format_double(kTop + plot_h / 2)
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << format_double(kTop + plot_h / 2)
      << ")\">attribute preservation</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof(kColors) / sizeof(kColors[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[s].points)
      out << format_double(sx(std::clamp(x, 0.0, 1.0))) << ','
          << format_double(sy(std::clamp(y, 0.0, 1.0))) << ' ';
    out << "\"/>\n";
    for (const auto& [x, y] : series[s].points)
      out << "<circle cx=\"" << format_double(sx(std::clamp(x, 0.0, 1.0)))
          << "\" cy=\"" << format_double(sy(std::clamp(y, 0.0, 1.0)))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << format_double(kLeft + 10) << "\" y=\""
        << format_double(kTop + 18 + 16 * static_cast<double>(s))
        << "\" font-size=\"13\" fill=\"" << color << "\">" << series[s].name
        << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw data_error("write_sweep_svg: write failed for " + path.string());
}

}  // namespace lot
