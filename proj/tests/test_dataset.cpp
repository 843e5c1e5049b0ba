#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lot/dataset.hpp"
#include "lot/rng.hpp"
#include "test_util.hpp"

using lot::LatentDataset;

namespace {

// Codes quantized to f32 so the binary format's f32 storage is lossless here.
LatentDataset small_dataset(std::uint64_t seed, Eigen::Index n = 6,
                            Eigen::Index dim = 3, Eigen::Index k = 2,
                            Eigen::Index id_dim = 2) {
  lot::Rng rng(seed);
  LatentDataset ds;
  ds.codes = testutil::random_points(rng, n, dim)
                 .unaryExpr([](double v) { return double(float(v)); });
  ds.labels.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      ds.labels(i, j) = static_cast<std::uint8_t>((i + j) % 2);
  ds.identity = testutil::random_points(rng, n, id_dim)
                    .unaryExpr([](double v) { return double(float(v)); });
  ds.attribute_names = {"smile", "age"};
  ds.attribute_names.resize(static_cast<std::size_t>(k), "extra");
  ds.spec_json = R"({"note":"test"})";
  return ds;
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("validate enforces the label contract") {
  LatentDataset ds = small_dataset(1);
  CHECK_NOTHROW(ds.validate());

  SUBCASE("labels outside {0,1}") {
    ds.labels(0, 0) = 2;
    CHECK_THROWS_AS(ds.validate(), lot::data_error);
  }
  SUBCASE("an attribute with only one class") {
    ds.labels.col(1).setZero();
    CHECK_THROWS_AS(ds.validate(), lot::data_error);
  }
  SUBCASE("single sample") {
    ds.codes.conservativeResize(1, Eigen::NoChange);
    ds.labels.conservativeResize(1, Eigen::NoChange);
    ds.identity.conservativeResize(1, Eigen::NoChange);
    CHECK_THROWS_AS(ds.validate(), lot::data_error);
  }
  SUBCASE("name count mismatch") {
    ds.attribute_names.pop_back();
    CHECK_THROWS_AS(ds.validate(), lot::data_error);
  }
}

TEST_CASE("binary files round-trip bit for bit") {
  const LatentDataset ds = small_dataset(2);
  testutil::TempFile file("ds.lotd");
  lot::save_dataset(file.path, ds);
  const LatentDataset back = lot::load_dataset(file.path);

  CHECK((back.codes.array() == ds.codes.array()).all());
  CHECK((back.labels.array() == ds.labels.array()).all());
  CHECK((back.identity.array() == ds.identity.array()).all());
  CHECK(back.attribute_names == ds.attribute_names);
  CHECK(back.spec_json.find("\"note\"") != std::string::npos);
}

TEST_CASE("binary layout is header, payload, JSON trailer") {
  const Eigen::Index n = 10, dim = 4, k = 2, id = 3;
  const LatentDataset ds = small_dataset(3, n, dim, k, id);
  testutil::TempFile file("ds_layout.lotd");
  lot::save_dataset(file.path, ds);

  std::ifstream in(file.path, std::ios::binary);
  REQUIRE(in.good());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());

  const std::size_t fixed = 24 + static_cast<std::size_t>(n * dim * 4) +
                            static_cast<std::size_t>(n * k) +
                            static_cast<std::size_t>(n * id * 4);
  REQUIRE(bytes.size() > fixed);
  CHECK(std::string(bytes.data(), 4) == "LOTD");

  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b)
      v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(b)]);
    return v;
  };
  CHECK(u32_at(4) == 1);  // version
  CHECK(u32_at(8) == n);
  CHECK(u32_at(12) == dim);
  CHECK(u32_at(16) == k);
  CHECK(u32_at(20) == id);

  // Everything past the fixed-size payload is one JSON document.
  const std::string trailer(bytes.data() + fixed, bytes.size() - fixed);
  const auto doc = nlohmann::json::parse(trailer);
  CHECK(doc.at("attribute_names").size() == static_cast<std::size_t>(k));
}

TEST_CASE("binary loading rejects corrupted files") {
  const LatentDataset ds = small_dataset(4);
  testutil::TempFile file("ds_bad.lotd");
  lot::save_dataset(file.path, ds);

  SUBCASE("wrong magic") {
    std::fstream f(file.path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_AS(lot::load_dataset(file.path), lot::data_error);
  }
  SUBCASE("truncated payload") {
    std::error_code ec;
    std::filesystem::resize_file(file.path, 40, ec);
    REQUIRE_FALSE(ec);
    CHECK_THROWS_AS(lot::load_dataset(file.path), lot::data_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(lot::load_dataset("/nonexistent/ds.lotd"), lot::data_error);
  }
}

TEST_CASE("CSV files round-trip every double exactly") {
  lot::Rng rng(5);
  LatentDataset ds = small_dataset(5);
  ds.codes = testutil::random_points(rng, 6, 3);  // full-precision doubles
  ds.identity = testutil::random_points(rng, 6, 2);

  testutil::TempFile file("ds.csv");
  lot::save_dataset_csv(file.path, ds);
  const LatentDataset back = lot::load_dataset_csv(file.path);

  CHECK((back.codes.array() == ds.codes.array()).all());
  CHECK((back.labels.array() == ds.labels.array()).all());
  CHECK((back.identity.array() == ds.identity.array()).all());
  CHECK(back.attribute_names == ds.attribute_names);

  // Header names the columns after the attributes themselves.
  std::ifstream in(file.path);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "code_0,code_1,code_2,attr_smile,attr_age,id_0,id_1");
}

TEST_CASE("CSV loading rejects unknown columns and bad labels") {
  testutil::TempFile file("ds_badcsv.csv");

  SUBCASE("unknown column") {
    std::ofstream out(file.path);
    out << "code_0,attr_a,mystery\n0.0,1,2\n1.0,0,3\n";
    out.close();
    CHECK_THROWS_AS(lot::load_dataset_csv(file.path), lot::data_error);
  }
  SUBCASE("label out of range") {
    std::ofstream out(file.path);
    out << "code_0,attr_a\n0.0,2\n1.0,0\n";
    out.close();
    CHECK_THROWS_AS(lot::load_dataset_csv(file.path), lot::data_error);
  }
  SUBCASE("non-numeric cell") {
    std::ofstream out(file.path);
    out << "code_0,attr_a\nabc,1\n1.0,0\n";
    out.close();
    CHECK_THROWS_AS(lot::load_dataset_csv(file.path), lot::data_error);
  }
}

TEST_SUITE_END();
