#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lot/common.hpp"

namespace lot {

using LabelMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Latent codes with binary attribute labels and (for synthetic data with
// known ground truth) per-sample identity coordinates.
struct LatentDataset {
  Eigen::MatrixXd codes;      // N x dim
  LabelMatrix labels;         // N x K, entries in {0,1}
  Eigen::MatrixXd identity;   // N x identity_dim (0 columns when absent)
  std::vector<std::string> attribute_names;  // K entries
  std::string spec_json = "{}";  // generating spec, carried through files

  Eigen::Index size() const { return codes.rows(); }
  Eigen::Index dim() const { return codes.cols(); }
  Eigen::Index num_attributes() const { return labels.cols(); }
  Eigen::Index identity_dim() const { return identity.cols(); }

  // Enforces: N >= 2, finite codes, labels in {0,1}, every attribute column
  // has at least one positive and one negative, name count matches K.
  void validate() const;
};

// Binary dataset file, bit-exact:
//   "LOTD" | u32 version=1 | u32 n | u32 dim | u32 K | u32 identity_dim |
//   n*dim f32 codes | n*K u8 labels | n*identity_dim f32 identity |
//   UTF-8 JSON trailer {attribute_names, spec}
// All integers and floats little-endian; matrices row-major by sample.
void save_dataset(const std::filesystem::path& path, const LatentDataset& ds);
LatentDataset load_dataset(const std::filesystem::path& path);

// CSV with header row: code_0..code_{dim-1}, attr_<name> per attribute,
// id_0..id_{identity_dim-1}. '.' decimal separator, LF line endings.
void save_dataset_csv(const std::filesystem::path& path, const LatentDataset& ds);
LatentDataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace lot
