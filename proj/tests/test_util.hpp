#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "lot/rng.hpp"

namespace testutil {

inline Eigen::MatrixXd random_points(lot::Rng& rng, Eigen::Index n,
                                     Eigen::Index dim, double scale = 1.0) {
  Eigen::MatrixXd m(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = scale * rng.normal01();
  return m;
}

// Unique scratch path under the system temp directory; tests clean up after
// themselves but stale files from a crashed run are harmless.
inline std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lot_test_" + name);
}

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name) : path(temp_file(name)) {}
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
};

}  // namespace testutil
