#include "lot/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lot {

static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian; big-endian hosts unsupported");

namespace {

constexpr char kMagic[4] = {'L', 'O', 'T', 'D'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw data_error(std::string("load_dataset: truncated ") + what);
  return v;
}

}  // namespace

void LatentDataset::validate() const {
  if (codes.rows() < 2)
    throw data_error("LatentDataset: need at least 2 samples");
  if (codes.cols() < 1) throw data_error("LatentDataset: dim must be >= 1");
  if (!codes.allFinite())
    throw data_error("LatentDataset: codes contain NaN or Inf");
  if (labels.rows() != codes.rows())
    throw data_error("LatentDataset: label rows do not match codes");
  if (identity.cols() > 0 && identity.rows() != codes.rows())
    throw data_error("LatentDataset: identity rows do not match codes");
  if (static_cast<Eigen::Index>(attribute_names.size()) != labels.cols())
    throw data_error("LatentDataset: attribute name count does not match labels");
  for (Eigen::Index k = 0; k < labels.cols(); ++k) {
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < labels.rows(); ++i) {
      const std::uint8_t v = labels(i, k);
      if (v != 0 && v != 1)
        throw data_error("LatentDataset: labels must be 0 or 1");
      pos += v;
    }
    if (pos == 0 || pos == labels.rows())
      throw data_error("LatentDataset: attribute '" + attribute_names[static_cast<std::size_t>(k)] +
                       "' has no positive or no negative samples");
  }
}

void save_dataset(const std::filesystem::path& path, const LatentDataset& ds) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("save_dataset: cannot write " + path.string());

  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(ds.size()));
  write_u32(out, static_cast<std::uint32_t>(ds.dim()));
  write_u32(out, static_cast<std::uint32_t>(ds.num_attributes()));
  write_u32(out, static_cast<std::uint32_t>(ds.identity_dim()));

  std::vector<float> row(static_cast<std::size_t>(ds.dim()));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j)
      row[static_cast<std::size_t>(j)] = static_cast<float>(ds.codes(i, j));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    for (Eigen::Index k = 0; k < ds.num_attributes(); ++k)
      out.put(static_cast<char>(ds.labels(i, k)));
  std::vector<float> idrow(static_cast<std::size_t>(ds.identity_dim()));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.identity_dim(); ++j)
      idrow[static_cast<std::size_t>(j)] = static_cast<float>(ds.identity(i, j));
    out.write(reinterpret_cast<const char*>(idrow.data()),
              static_cast<std::streamsize>(idrow.size() * sizeof(float)));
  }

  nlohmann::json trailer;
  trailer["attribute_names"] = ds.attribute_names;
  trailer["spec"] = nlohmann::json::parse(ds.spec_json);
  out << trailer.dump();
  if (!out) throw data_error("save_dataset: write failed for " + path.string());
}

LatentDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("load_dataset: cannot open " + path.string());

  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("load_dataset: " + path.string() + " is not a LOTD file");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion)
    throw data_error("load_dataset: unsupported version " + std::to_string(version));
  const std::uint32_t n = read_u32(in, "sample count");
  const std::uint32_t dim = read_u32(in, "dim");
  const std::uint32_t K = read_u32(in, "attribute count");
  const std::uint32_t id_dim = read_u32(in, "identity dim");
  if (n < 2 || dim < 1)
    throw data_error("load_dataset: " + path.string() + ": degenerate header");

  LatentDataset ds;
  ds.codes.resize(n, dim);
  std::vector<float> row(dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw data_error("load_dataset: truncated codes");
    for (std::uint32_t j = 0; j < dim; ++j) ds.codes(i, j) = row[j];
  }
  ds.labels.resize(n, K);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t k = 0; k < K; ++k) {
      const int c = in.get();
      if (c == std::char_traits<char>::eof())
        throw data_error("load_dataset: truncated labels");
      ds.labels(i, k) = static_cast<std::uint8_t>(c);
    }
  ds.identity.resize(n, id_dim);
  std::vector<float> idrow(id_dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(idrow.data()),
            static_cast<std::streamsize>(idrow.size() * sizeof(float)));
    if (!in && id_dim > 0) throw data_error("load_dataset: truncated identity");
    for (std::uint32_t j = 0; j < id_dim; ++j) ds.identity(i, j) = idrow[j];
  }

  std::stringstream trailer;
  trailer << in.rdbuf();
  const std::string trailer_text = trailer.str();
  if (!trailer_text.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(trailer_text);
    } catch (const nlohmann::json::exception& e) {
      throw data_error("load_dataset: bad JSON trailer: " + std::string(e.what()));
    }
    ds.attribute_names =
        doc.value("attribute_names", std::vector<std::string>{});
    ds.spec_json = doc.value("spec", nlohmann::json::object()).dump();
  }
  if (ds.attribute_names.size() != K) {
    ds.attribute_names.resize(K);
    for (std::uint32_t k = 0; k < K; ++k)
      if (ds.attribute_names[k].empty())
        ds.attribute_names[k] = "attr" + std::to_string(k);
  }

  ds.validate();
  return ds;
}

void save_dataset_csv(const std::filesystem::path& path,
                      const LatentDataset& ds) {
  ds.validate();
  for (const auto& name : ds.attribute_names)
    if (name.find(',') != std::string::npos || name.find('\n') != std::string::npos)
      throw data_error("save_dataset_csv: attribute name '" + name +
                       "' contains a separator");

  std::ofstream out(path);
  if (!out) throw data_error("save_dataset_csv: cannot write " + path.string());
  for (Eigen::Index j = 0; j < ds.dim(); ++j) {
    if (j > 0) out << ',';
    out << "code_" << j;
  }
  for (const auto& name : ds.attribute_names) out << ",attr_" << name;
  for (Eigen::Index j = 0; j < ds.identity_dim(); ++j) out << ",id_" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
      if (j > 0) out << ',';
      out << format_double(ds.codes(i, j));
    }
    for (Eigen::Index k = 0; k < ds.num_attributes(); ++k)
      out << ',' << static_cast<int>(ds.labels(i, k));
    for (Eigen::Index j = 0; j < ds.identity_dim(); ++j)
      out << ',' << format_double(ds.identity(i, j));
    out << '\n';
  }
  if (!out) throw data_error("save_dataset_csv: write failed for " + path.string());
}

LatentDataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("load_dataset_csv: cannot open " + path.string());

  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        out.push_back(line.substr(start));
        break;
      }
      out.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    return out;
  };

  std::string line;
  if (!std::getline(in, line))
    throw data_error("load_dataset_csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split(line);

  std::vector<std::size_t> code_cols, attr_cols, id_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h.rfind("code_", 0) == 0) {
      code_cols.push_back(c);
    } else if (h.rfind("attr_", 0) == 0) {
      attr_cols.push_back(c);
      names.push_back(h.substr(5));
    } else if (h.rfind("id_", 0) == 0) {
      id_cols.push_back(c);
    } else {
      throw data_error("load_dataset_csv: unrecognized column '" + h + "'");
    }
  }
  if (code_cols.empty())
    throw data_error("load_dataset_csv: no code_* columns in " + path.string());

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size())
      throw data_error("load_dataset_csv: row " + std::to_string(rows.size() + 2) +
                       " has " + std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    std::vector<double> vals;
    vals.reserve(cells.size());
    for (const auto& cell : cells) {
      double v = 0.0;
      const auto* begin = cell.data();
      const auto* end = begin + cell.size();
      const auto res = std::from_chars(begin, end, v);
      if (res.ec != std::errc() || res.ptr != end)
        throw data_error("load_dataset_csv: bad number '" + cell + "'");
      vals.push_back(v);
    }
    rows.push_back(std::move(vals));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  LatentDataset ds;
  ds.codes.resize(n, static_cast<Eigen::Index>(code_cols.size()));
  ds.labels.resize(n, static_cast<Eigen::Index>(attr_cols.size()));
  ds.identity.resize(n, static_cast<Eigen::Index>(id_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& vals = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < code_cols.size(); ++j)
      ds.codes(i, static_cast<Eigen::Index>(j)) = vals[code_cols[j]];
    for (std::size_t k = 0; k < attr_cols.size(); ++k) {
      const double v = vals[attr_cols[k]];
      if (v != 0.0 && v != 1.0)
        throw data_error("load_dataset_csv: label values must be 0 or 1");
      ds.labels(i, static_cast<Eigen::Index>(k)) = static_cast<std::uint8_t>(v);
    }
    for (std::size_t j = 0; j < id_cols.size(); ++j)
      ds.identity(i, static_cast<Eigen::Index>(j)) = vals[id_cols[j]];
  }
  ds.attribute_names = names;
  ds.validate();
  return ds;
}

}  // namespace lot
