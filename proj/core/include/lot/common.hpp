#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lot {

// Malformed inputs: bad files, shape mismatches, invalid configuration values.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures: solver non-convergence, degenerate systems.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// FNV-1a 64-bit hash, used for content manifests and seed derivation. The
// raw-buffer form carries a distinct name: with an overload, a string literal
// plus a seed would silently bind to (const void*, size_t).
inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t size,
                                   std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64_bytes(s.data(), s.size(), seed);
}

// Shortest round-trip decimal form of a double, locale independent.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw numeric_error("format_double: to_chars failed");
  return std::string(buf, ptr);
}

// n evenly spaced values from lo to hi inclusive (n >= 2), or {lo} for n == 1.
inline std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw data_error("linspace: n must be >= 1");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  if (n == 1) {
    out.push_back(lo);
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i)
    out.push_back(i == n - 1 ? hi : lo + step * static_cast<double>(i));
  return out;
}

}  // namespace lot
