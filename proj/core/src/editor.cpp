#include "lot/editor.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lot/rng.hpp"

namespace lot {

namespace {
constexpr int kEditorFormatVersion = 1;
}

void AffineEditor::validate() const {
  if (W.rows() < 1 || W.rows() != W.cols())
    throw data_error("AffineEditor: weight must be square and non-empty");
  if (b.size() != W.rows())
    throw data_error("AffineEditor: bias length does not match weight");
  if (!W.allFinite() || !b.allFinite())
    throw data_error("AffineEditor: parameters contain NaN or Inf");
}

Eigen::MatrixXd AffineEditor::direction(const Eigen::MatrixXd& codes) const {
  if (codes.cols() != dim())
    throw data_error("AffineEditor::direction: code dimension mismatch");
  return (codes * W.transpose()).rowwise() + b.transpose();
}

Eigen::MatrixXd AffineEditor::edit(const Eigen::MatrixXd& codes,
                                   double alpha) const {
  if (codes.cols() != dim())
    throw data_error("AffineEditor::edit: code dimension mismatch");
  if (alpha == 0.0) return codes;  // identity, bit-exact
  return codes + alpha * direction(codes);
}

AffineEditor init_editor(Eigen::Index dim, std::uint64_t seed) {
  if (dim < 1) throw data_error("init_editor: dim must be >= 1");
  Rng rng(seed);
  Rng stream = rng.fork("editor-init");
  const double sd = 0.01 / std::sqrt(static_cast<double>(dim));
  AffineEditor e;
  e.W.resize(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) e.W(i, j) = sd * stream.normal01();
  e.b = Eigen::VectorXd::Zero(dim);
  return e;
}

void save_editor(const std::filesystem::path& path, const AffineEditor& editor,
                 const std::string& training_meta_json) {
  editor.validate();
  nlohmann::json doc;
  doc["format_version"] = kEditorFormatVersion;
  doc["attribute_name"] = editor.attribute_name;
  doc["dim"] = editor.dim();
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(editor.W.size()));
  for (Eigen::Index i = 0; i < editor.W.rows(); ++i)
    for (Eigen::Index j = 0; j < editor.W.cols(); ++j) w.push_back(editor.W(i, j));
  doc["weight"] = w;
  doc["bias"] = std::vector<double>(editor.b.data(), editor.b.data() + editor.b.size());
  doc["training_meta"] = nlohmann::json::parse(training_meta_json);

  std::ofstream out(path);
  if (!out) throw data_error("save_editor: cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw data_error("save_editor: write failed for " + path.string());
}

AffineEditor load_editor(const std::filesystem::path& path,
                         std::string* training_meta_json) {
  std::ifstream in(path);
  if (!in) throw data_error("load_editor: cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("load_editor: " + path.string() + ": " + e.what());
  }
  if (!doc.contains("format_version") ||
      doc["format_version"].get<int>() != kEditorFormatVersion)
    throw data_error("load_editor: " + path.string() + ": unsupported format_version");

  AffineEditor e;
  const auto dim = doc.at("dim").get<Eigen::Index>();
  const auto w = doc.at("weight").get<std::vector<double>>();
  const auto b = doc.at("bias").get<std::vector<double>>();
  if (dim < 1 || w.size() != static_cast<std::size_t>(dim * dim) ||
      b.size() != static_cast<std::size_t>(dim))
    throw data_error("load_editor: " + path.string() + ": shape mismatch");
  e.attribute_name = doc.value("attribute_name", std::string());
  e.W.resize(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j)
      e.W(i, j) = w[static_cast<std::size_t>(i * dim + j)];
  e.b = Eigen::Map<const Eigen::VectorXd>(b.data(), dim);
  e.validate();
  if (training_meta_json != nullptr)
    *training_meta_json = doc.value("training_meta", nlohmann::json::object()).dump();
  return e;
}

}  // namespace lot
