#include "lot/attribute_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

namespace lot {

namespace {

constexpr int kBundleFormatVersion = 1;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

Eigen::VectorXd LogisticModel::predict_proba(const Eigen::MatrixXd& codes) const {
  if (codes.cols() != w.size())
    throw data_error("LogisticModel: code dimension mismatch");
  Eigen::VectorXd t = codes * w;
  t.array() += intercept;
  return t.unaryExpr([](double v) { return sigmoid(v); });
}

LogisticModel train_logistic(const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y01,
                             const LogisticTrainConfig& cfg) {
  if (X.rows() != y01.size())
    throw data_error("train_logistic: row count mismatch");
  if (X.rows() < 2) throw data_error("train_logistic: need at least 2 samples");
  if (((y01.array() != 0.0) && (y01.array() != 1.0)).any())
    throw data_error("train_logistic: labels must be 0 or 1");

  const double n = static_cast<double>(X.rows());
  LogisticModel m;
  m.w = Eigen::VectorXd::Zero(X.cols());
  m.intercept = 0.0;

  Eigen::VectorXd t, p, resid, gw;
  for (int step = 0; step < cfg.max_steps; ++step) {
    t = X * m.w;
    t.array() += m.intercept;
    p = t.unaryExpr([](double v) { return sigmoid(v); });
    resid = p - y01;
    gw = X.transpose() * resid / n + cfg.l2 * m.w;
    const double gb = resid.sum() / n;
    const double gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
    if (gnorm <= cfg.grad_tol) break;
    m.w -= cfg.lr * gw;
    m.intercept -= cfg.lr * gb;
  }
  return m;
}

Eigen::MatrixXd AttributeModel::predict(const Eigen::MatrixXd& codes) const {
  if (classifiers.empty())
    throw data_error("AttributeModel::predict: no classifiers");
  Eigen::MatrixXd out(codes.rows(), num_attributes());
  for (Eigen::Index k = 0; k < num_attributes(); ++k)
    out.col(k) = classifiers[static_cast<std::size_t>(k)].predict_proba(codes);
  return out;
}

AttributeModel train_classifiers(const LatentDataset& data,
                                 std::uint64_t /*seed*/) {
  // The optimization below is convex with a fixed zero start, so training is
  // deterministic; the seed parameter is kept for interface stability.
  data.validate();
  AttributeModel model;
  model.attribute_names = data.attribute_names;
  model.classifiers.reserve(static_cast<std::size_t>(data.num_attributes()));
  for (Eigen::Index k = 0; k < data.num_attributes(); ++k) {
    const Eigen::VectorXd y =
        data.labels.col(k).cast<double>();
    model.classifiers.push_back(train_logistic(data.codes, y));
  }
  model.gamma = compute_gamma(data.labels);
  return model;
}

Eigen::MatrixXd compute_gamma(const LabelMatrix& labels) {
  const Eigen::Index n = labels.rows();
  const Eigen::Index K = labels.cols();
  if (n < 2 || K < 1) throw data_error("compute_gamma: need n >= 2 and K >= 1");

  const Eigen::MatrixXd y = labels.cast<double>();
  const Eigen::RowVectorXd mean = y.colwise().mean();
  Eigen::MatrixXd centered = y.rowwise() - mean;
  const Eigen::VectorXd sd =
      (centered.array().square().colwise().mean()).sqrt();
  for (Eigen::Index k = 0; k < K; ++k)
    if (sd(k) == 0.0)
      throw data_error("compute_gamma: attribute column " + std::to_string(k) +
                       " is constant");

  Eigen::MatrixXd gamma(K, K);
  for (Eigen::Index l = 0; l < K; ++l) {
    gamma(l, l) = 1.0;
    for (Eigen::Index k = l + 1; k < K; ++k) {
      const double cov = centered.col(l).dot(centered.col(k)) / static_cast<double>(n);
      const double r = std::abs(cov / (sd(l) * sd(k)));
      gamma(l, k) = std::min(r, 1.0);
      gamma(k, l) = gamma(l, k);
    }
  }
  return gamma;
}

Eigen::VectorXd compute_source_weights_rows(
    const LatentDataset& data, Eigen::Index edited_attribute,
    const std::vector<Eigen::Index>& conditioning_attributes,
    const std::vector<Eigen::Index>& source_rows,
    const std::vector<Eigen::Index>& target_rows) {
  const Eigen::Index K = data.num_attributes();
  if (edited_attribute < 0 || edited_attribute >= K)
    throw data_error("compute_source_weights: attribute index out of range");
  if (conditioning_attributes.size() > 60)
    throw data_error("compute_source_weights: too many conditioning attributes");
  for (Eigen::Index c : conditioning_attributes) {
    if (c < 0 || c >= K)
      throw data_error("compute_source_weights: conditioning index out of range");
    if (c == edited_attribute)
      throw data_error("compute_source_weights: conditioning set must exclude "
                       "the edited attribute");
  }
  if (source_rows.empty())
    throw data_error("compute_source_weights: no source (negative) samples");

  // Combination id: bit b set iff conditioning attribute b is positive.
  auto combo_of = [&](Eigen::Index row) {
    std::uint64_t id = 0;
    for (std::size_t b = 0; b < conditioning_attributes.size(); ++b)
      if (data.labels(row, conditioning_attributes[b]) != 0)
        id |= (1ull << b);
    return id;
  };

  std::map<std::uint64_t, double> n_source, n_target;
  for (Eigen::Index i : source_rows) {
    if (data.labels(i, edited_attribute) != 0)
      throw data_error("compute_source_weights: source row carries label 1");
    n_source[combo_of(i)] += 1.0;
  }
  for (Eigen::Index i : target_rows) {
    if (data.labels(i, edited_attribute) == 0)
      throw data_error("compute_source_weights: target row carries label 0");
    n_target[combo_of(i)] += 1.0;
  }

  // Each combination's source samples share that combination's target mass:
  // w_i = n_t^A / n_s^A, so after normalization the weighted source composition
  // over the conditioning attributes equals the target composition, and the
  // transport has no reason to move mass across those attributes' boundaries.
  Eigen::VectorXd w(static_cast<Eigen::Index>(source_rows.size()));
  for (std::size_t i = 0; i < source_rows.size(); ++i) {
    const std::uint64_t id = combo_of(source_rows[i]);
    const auto it = n_target.find(id);
    if (it == n_target.end()) {
      w(static_cast<Eigen::Index>(i)) = 0.0;  // combination absent from target
    } else {
      w(static_cast<Eigen::Index>(i)) = it->second / n_source.at(id);
    }
  }
  const double total = w.sum();
  if (total <= 0.0)
    throw data_error("compute_source_weights: no combination overlap between "
                     "source and target");
  return w / total;
}

Eigen::VectorXd compute_source_weights(
    const LatentDataset& data, Eigen::Index edited_attribute,
    const std::vector<Eigen::Index>& conditioning_attributes) {
  std::vector<Eigen::Index> source_rows, target_rows;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (data.labels(i, edited_attribute) != 0)
      target_rows.push_back(i);
    else
      source_rows.push_back(i);
  }
  return compute_source_weights_rows(data, edited_attribute,
                                     conditioning_attributes, source_rows,
                                     target_rows);
}

std::vector<Eigen::Index> default_conditioning(const LatentDataset& data,
                                               Eigen::Index edited_attribute) {
  const Eigen::Index K = data.num_attributes();
  if (edited_attribute < 0 || edited_attribute >= K)
    throw data_error("default_conditioning: attribute index out of range");

  std::vector<Eigen::Index> order;
  for (Eigen::Index k = 0; k < K; ++k)
    if (k != edited_attribute) order.push_back(k);
  std::vector<double> rate(static_cast<std::size_t>(K), 0.0);
  for (Eigen::Index k = 0; k < K; ++k)
    rate[static_cast<std::size_t>(k)] =
        data.labels.col(k).cast<double>().mean();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return rate[static_cast<std::size_t>(a)] > rate[static_cast<std::size_t>(b)];
  });

  const std::size_t want = static_cast<std::size_t>((K + 1) / 2);
  if (order.size() > want) order.resize(want);
  std::sort(order.begin(), order.end());
  return order;
}

void save_attribute_model(const std::filesystem::path& path,
                          const AttributeModel& model) {
  if (model.classifiers.empty())
    throw data_error("save_attribute_model: empty model");
  nlohmann::json doc;
  doc["format_version"] = kBundleFormatVersion;
  doc["attribute_names"] = model.attribute_names;
  doc["dim"] = model.dim();
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : model.classifiers) {
    nlohmann::json entry;
    entry["weights"] = std::vector<double>(c.w.data(), c.w.data() + c.w.size());
    entry["intercept"] = c.intercept;
    arr.push_back(std::move(entry));
  }
  doc["classifiers"] = std::move(arr);
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(model.gamma.size()));
  for (Eigen::Index i = 0; i < model.gamma.rows(); ++i)
    for (Eigen::Index j = 0; j < model.gamma.cols(); ++j)
      g.push_back(model.gamma(i, j));
  doc["gamma"] = g;

  std::ofstream out(path);
  if (!out) throw data_error("save_attribute_model: cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw data_error("save_attribute_model: write failed for " + path.string());
}

AttributeModel load_attribute_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("load_attribute_model: cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("load_attribute_model: " + path.string() + ": " + e.what());
  }
  if (!doc.contains("format_version") ||
      doc["format_version"].get<int>() != kBundleFormatVersion)
    throw data_error("load_attribute_model: unsupported format_version in " +
                     path.string());

  AttributeModel model;
  model.attribute_names = doc.at("attribute_names").get<std::vector<std::string>>();
  const auto dim = doc.at("dim").get<Eigen::Index>();
  for (const auto& entry : doc.at("classifiers")) {
    LogisticModel c;
    const auto w = entry.at("weights").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != dim)
      throw data_error("load_attribute_model: classifier weight length mismatch");
    c.w = Eigen::Map<const Eigen::VectorXd>(w.data(), dim);
    c.intercept = entry.at("intercept").get<double>();
    model.classifiers.push_back(std::move(c));
  }
  const Eigen::Index K = model.num_attributes();
  if (K < 1 || model.attribute_names.size() != static_cast<std::size_t>(K))
    throw data_error("load_attribute_model: attribute name count mismatch");
  const auto g = doc.at("gamma").get<std::vector<double>>();
  if (g.size() != static_cast<std::size_t>(K * K))
    throw data_error("load_attribute_model: gamma size mismatch");
  model.gamma.resize(K, K);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < K; ++j)
      model.gamma(i, j) = g[static_cast<std::size_t>(i * K + j)];
  return model;
}

}  // namespace lot
