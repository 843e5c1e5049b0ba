#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <string>

#include <Eigen/Dense>

#include "lot/editor.hpp"
#include "lot/rng.hpp"
#include "test_util.hpp"

using lot::AffineEditor;

TEST_SUITE_BEGIN("editor");

TEST_CASE("edit at zero strength returns the codes bit for bit") {
  lot::Rng rng(1);
  const Eigen::MatrixXd z = testutil::random_points(rng, 5, 4);
  AffineEditor e = lot::init_editor(4, 7);
  const Eigen::MatrixXd out = e.edit(z, 0.0);
  CHECK((out.array() == z.array()).all());
}

TEST_CASE("a zero-weight editor translates every row by its bias") {
  Eigen::VectorXd v(3);
  v << 1.5, -2.0, 0.25;
  AffineEditor e{Eigen::MatrixXd::Zero(3, 3), v, "attr"};
  lot::Rng rng(2);
  const Eigen::MatrixXd z = testutil::random_points(rng, 6, 3);
  const Eigen::MatrixXd out = e.edit(z, 1.0);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    CHECK((out.row(i) - z.row(i) - v.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("edit is affine in alpha") {
  lot::Rng rng(3);
  AffineEditor e = lot::init_editor(5, 11);
  e.W = testutil::random_points(rng, 5, 5);  // arbitrary full-strength map
  e.b = testutil::random_points(rng, 1, 5).row(0).transpose();
  const Eigen::MatrixXd z = testutil::random_points(rng, 4, 5);

  const Eigen::MatrixXd d1 = e.edit(z, 1.0) - z;
  const Eigen::MatrixXd d2 = e.edit(z, 2.0) - z;
  CHECK((d2 - 2.0 * d1).cwiseAbs().maxCoeff() <= 1e-12);

  const Eigen::MatrixXd dm = e.edit(z, -2.0) - z;  // negative strength legal
  CHECK((dm + d2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("init_editor is deterministic and starts near the identity") {
  const AffineEditor a = lot::init_editor(4, 99);
  const AffineEditor b = lot::init_editor(4, 99);
  const AffineEditor c = lot::init_editor(4, 100);
  CHECK((a.W.array() == b.W.array()).all());
  CHECK((a.b.array() == b.b.array()).all());
  CHECK((a.W.array() != c.W.array()).any());
  CHECK(a.b.cwiseAbs().maxCoeff() == 0.0);

  // |H(z)| stays well under |z| = 1 at initialization.
  lot::Rng rng(4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Eigen::MatrixXd z = testutil::random_points(rng, 1, 4);
    z /= z.norm();
    worst = std::max(worst, a.direction(z).norm());
  }
  CHECK(worst < 0.1);
}

TEST_CASE("editor JSON files reproduce edits bitwise") {
  lot::Rng rng(5);
  AffineEditor e = lot::init_editor(6, 3);
  e.W = testutil::random_points(rng, 6, 6, 0.3);
  e.b = testutil::random_points(rng, 1, 6).row(0).transpose();
  e.attribute_name = "smile";

  testutil::TempFile file("editor.json");
  const std::string meta =
      R"({"mode":"lw","lambda":1.0,"epsilon":0.05,"seed":3,"epochs_run":17})";
  lot::save_editor(file.path, e, meta);

  std::string meta_back;
  const AffineEditor r = lot::load_editor(file.path, &meta_back);
  CHECK(r.attribute_name == "smile");
  CHECK((r.W.array() == e.W.array()).all());
  CHECK((r.b.array() == e.b.array()).all());
  CHECK(meta_back.find("\"epochs_run\"") != std::string::npos);

  const Eigen::MatrixXd z = testutil::random_points(rng, 3, 6);
  CHECK((r.edit(z, 1.7).array() == e.edit(z, 1.7).array()).all());
}

TEST_CASE("editor loading rejects malformed files") {
  CHECK_THROWS_AS(lot::load_editor("/nonexistent/editor.json"), lot::data_error);

  testutil::TempFile file("editor_bad.json");
  {
    std::ofstream out(file.path);
    out << R"({"format_version": 999, "attribute_name": "x", "dim": 1,)"
        << R"( "weight": [0.0], "bias": [0.0], "training_meta": {}})";
  }
  CHECK_THROWS_AS(lot::load_editor(file.path), lot::data_error);
}

TEST_CASE("edit rejects dimension mismatches") {
  AffineEditor e = lot::init_editor(4, 1);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 5);
  CHECK_THROWS_AS(e.edit(z, 1.0), lot::data_error);
}

TEST_SUITE_END();
