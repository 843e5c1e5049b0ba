#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lot/attribute_model.hpp"
#include "lot/rng.hpp"
#include "lot/synth_bench.hpp"
#include "lot/trainer.hpp"
#include "test_util.hpp"

using lot::LatentDataset;
using lot::TrainingConfig;
using lot::TrainMode;

namespace {

// Hand-built two-attribute model: smooth, deterministic, no training needed.
lot::AttributeModel fixed_model(Eigen::Index dim) {
  lot::AttributeModel model;
  model.classifiers.resize(2);
  model.classifiers[0].w = Eigen::VectorXd::Zero(dim);
  model.classifiers[0].w(0) = 1.5;
  model.classifiers[0].intercept = 0.1;
  model.classifiers[1].w = Eigen::VectorXd::Zero(dim);
  model.classifiers[1].w(1) = -0.8;
  model.classifiers[1].intercept = -0.2;
  model.gamma = Eigen::MatrixXd::Identity(2, 2);
  model.gamma(0, 1) = model.gamma(1, 0) = 0.3;
  model.attribute_names = {"k", "c"};
  return model;
}

TrainingConfig loss_config(TrainMode mode, double lambda, double l2 = 0.0) {
  TrainingConfig cfg;
  cfg.mode = mode;
  cfg.lambda = lambda;
  cfg.l2_reg = l2;
  cfg.alpha_train = 1.0;
  cfg.sinkhorn.epsilon = 0.3;  // pinned so finite differences see a fixed eps
  cfg.sinkhorn.tolerance = 1e-9;
  cfg.sinkhorn.max_iters = 20000;
  return cfg;
}

struct FdInstance {
  lot::AffineEditor editor;
  Eigen::MatrixXd src, tgt;
  Eigen::VectorXd weights;
  lot::AttributeModel model;
};

FdInstance fd_instance(std::uint64_t seed) {
  lot::Rng rng(seed);
  FdInstance inst;
  inst.src = testutil::random_points(rng, 6, 3);
  inst.tgt = testutil::random_points(rng, 6, 3);
  inst.tgt.col(0).array() += 1.5;
  inst.editor.W = testutil::random_points(rng, 3, 3, 0.2);
  inst.editor.b = testutil::random_points(rng, 1, 3, 0.3).row(0).transpose();
  inst.editor.attribute_name = "k";
  inst.weights = Eigen::VectorXd::LinSpaced(6, 1.0, 6.0);
  inst.weights /= inst.weights.sum();
  inst.model = fixed_model(3);
  return inst;
}

// Max relative error of analytic parameter gradients vs central differences.
template <typename LossFn>
double gradient_fd_error(const FdInstance& inst, const LossFn& loss_at,
                         const lot::LossGradients& grads) {
  const double h = 1e-5;
  const double scale =
      std::max(grads.dW.cwiseAbs().maxCoeff(), grads.db.cwiseAbs().maxCoeff());
  REQUIRE(scale > 0.0);

  double worst = 0.0;
  lot::AffineEditor e = inst.editor;
  for (Eigen::Index i = 0; i < e.W.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.W.cols(); ++j) {
      e.W(i, j) = inst.editor.W(i, j) + h;
      const double up = loss_at(e);
      e.W(i, j) = inst.editor.W(i, j) - h;
      const double dn = loss_at(e);
      e.W(i, j) = inst.editor.W(i, j);
      worst = std::max(worst, std::abs((up - dn) / (2 * h) - grads.dW(i, j)));
    }
  }
  for (Eigen::Index i = 0; i < e.b.size(); ++i) {
    e.b(i) = inst.editor.b(i) + h;
    const double up = loss_at(e);
    e.b(i) = inst.editor.b(i) - h;
    const double dn = loss_at(e);
    e.b(i) = inst.editor.b(i);
    worst = std::max(worst, std::abs((up - dn) / (2 * h) - grads.db(i)));
  }
  return worst / scale;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("split_source_target partitions by the label column") {
  LatentDataset ds;
  ds.codes = Eigen::MatrixXd::Zero(4, 2);
  ds.labels.resize(4, 1);
  ds.labels << 0, 1, 0, 1;
  ds.identity.resize(4, 0);
  ds.attribute_names = {"a"};

  const auto [src, tgt] = lot::split_source_target(ds, 0);
  CHECK(src == std::vector<Eigen::Index>{0, 2});
  CHECK(tgt == std::vector<Eigen::Index>{1, 3});

  ds.labels.setOnes();
  CHECK_THROWS_AS(lot::split_source_target(ds, 0), lot::data_error);
  CHECK_THROWS_AS(lot::split_source_target(ds, 5), lot::data_error);
}

TEST_CASE("make_batches sizes batches by the smaller side") {
  SUBCASE("equal sides form a single full batch") {
    const auto plan = lot::make_batches(100, 100, 1);
    CHECK(plan.batch_size == 100);
    REQUIRE(plan.batches.size() == 1);
    CHECK(plan.batches[0].size() == 100);
  }
  SUBCASE("a half-size trailing batch survives") {
    const auto plan = lot::make_batches(250, 100, 1);
    CHECK(plan.source_chunked);
    REQUIRE(plan.batches.size() == 3);
    CHECK(plan.batches[0].size() == 100);
    CHECK(plan.batches[1].size() == 100);
    CHECK(plan.batches[2].size() == 50);  // 50 >= 100/2, kept
  }
  SUBCASE("an imbalanced trailing batch is dropped") {
    const auto plan = lot::make_batches(249, 100, 1);
    REQUIRE(plan.batches.size() == 2);  // trailing 49 < 50, dropped
  }
  SUBCASE("the larger side may be the target") {
    const auto plan = lot::make_batches(100, 250, 1);
    CHECK_FALSE(plan.source_chunked);
    REQUIRE(plan.batches.size() == 3);
  }
  SUBCASE("plans are deterministic per seed and shuffled across seeds") {
    const auto a = lot::make_batches(250, 100, 7);
    const auto b = lot::make_batches(250, 100, 7);
    const auto c = lot::make_batches(250, 100, 8);
    CHECK(a.batches == b.batches);
    CHECK(a.batches != c.batches);

    // Every index of the chunked side appears at most once.
    std::vector<int> seen(250, 0);
    for (const auto& batch : a.batches)
      for (const Eigen::Index i : batch) ++seen[static_cast<std::size_t>(i)];
    for (int count : seen) CHECK(count <= 1);
  }
}

TEST_CASE("lw_loss is zero when the edit is already the target") {
  lot::Rng rng(30);
  const Eigen::MatrixXd pts = testutil::random_points(rng, 6, 3);
  lot::AffineEditor zero{Eigen::MatrixXd::Zero(3, 3), Eigen::VectorXd::Zero(3),
                         "k"};
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(6, 1.0 / 6.0);

  const TrainingConfig cfg = loss_config(TrainMode::LW, 0.0);
  const auto g = lot::lw_loss(zero, pts, uniform, pts, fixed_model(3), 0, cfg);
  CHECK(std::abs(g.loss) <= 1e-9);
  CHECK(g.pres_term == 0.0);
}

TEST_CASE("lw_loss preservation term vanishes at zero edit strength") {
  const FdInstance inst = fd_instance(31);
  TrainingConfig cfg = loss_config(TrainMode::LW, 1.0);
  cfg.alpha_train = 0.0;
  const auto g = lot::lw_loss(inst.editor, inst.src, inst.weights, inst.tgt,
                              inst.model, 0, cfg);
  CHECK(std::abs(g.pres_term) <= 1e-9);
  CHECK(g.edit_term > 0.0);  // clouds are separated, transport still due
}

TEST_CASE("lw_loss gradients match finite differences") {
  const FdInstance inst = fd_instance(32);
  for (double lambda : {0.0, 1.0}) {
    CAPTURE(lambda);
    const TrainingConfig cfg = loss_config(TrainMode::LW, lambda);
    const auto grads = lot::lw_loss(inst.editor, inst.src, inst.weights,
                                    inst.tgt, inst.model, 0, cfg);
    const auto loss_at = [&](const lot::AffineEditor& e) {
      return lot::lw_loss(e, inst.src, inst.weights, inst.tgt, inst.model, 0,
                          cfg)
          .loss;
    };
    CHECK(gradient_fd_error(inst, loss_at, grads) <= 1e-3);
  }
}

TEST_CASE("lt_loss gradients match finite differences") {
  const FdInstance inst = fd_instance(33);
  const TrainingConfig cfg = loss_config(TrainMode::LT, 1.0, 0.3);
  const auto grads = lot::lt_loss(inst.editor, inst.src, inst.model, 0, cfg);
  const auto loss_at = [&](const lot::AffineEditor& e) {
    return lot::lt_loss(e, inst.src, inst.model, 0, cfg).loss;
  };
  CHECK(gradient_fd_error(inst, loss_at, grads) <= 1e-3);
}

TEST_CASE("lt_loss is near zero when edits are confidently positive") {
  lot::Rng rng(34);
  Eigen::MatrixXd src = testutil::random_points(rng, 8, 3);
  src.col(0).array() += 20.0;  // far on the positive side of classifier 0
  lot::AffineEditor zero{Eigen::MatrixXd::Zero(3, 3), Eigen::VectorXd::Zero(3),
                         "k"};
  const TrainingConfig cfg = loss_config(TrainMode::LT, 0.0);
  const auto g = lot::lt_loss(zero, src, fixed_model(3), 0, cfg);
  CHECK(g.loss <= 1e-9);
}

TEST_CASE("training is deterministic and obeys the early-stopping contract") {
  lot::BenchmarkSpec spec;
  spec.dim = 8;
  spec.K = 2;
  spec.n = 240;
  spec.identity_dim = 4;
  spec.seed = 40;
  const LatentDataset ds = lot::generate(spec);

  TrainingConfig cfg;
  cfg.mode = TrainMode::LW;
  cfg.lambda = 0.0;
  cfg.lr = 0.05;
  cfg.max_epochs = 12;
  cfg.patience = 4;
  cfg.seed = 41;

  const auto [e1, r1] = lot::train(ds, 0, cfg);
  const auto [e2, r2] = lot::train(ds, 0, cfg);
  CHECK((e1.W.array() == e2.W.array()).all());
  CHECK((e1.b.array() == e2.b.array()).all());
  REQUIRE_FALSE(r1.epochs.empty());
  CHECK(r1.stopped_epoch == r2.stopped_epoch);

  double min_val = std::numeric_limits<double>::infinity();
  for (const auto& ep : r1.epochs) min_val = std::min(min_val, ep.val_loss);
  CHECK(r1.best_val_loss == min_val);
  CHECK(r1.epochs[static_cast<std::size_t>(r1.best_epoch - 1)].val_loss ==
        min_val);
  if (r1.stopped_epoch < cfg.max_epochs)
    CHECK(r1.stopped_epoch - r1.best_epoch == cfg.patience);
}

TEST_CASE("transport training drives the edit loss toward zero") {
  lot::BenchmarkSpec spec;
  spec.dim = 8;
  spec.K = 1;
  spec.n = 1200;  // the validation edit term floors at the sampling gap
  spec.identity_dim = 4;
  spec.seed = 42;
  const LatentDataset ds = lot::generate(spec);

  TrainingConfig cfg;
  cfg.mode = TrainMode::LW;
  cfg.lambda = 0.0;
  cfg.lr = 0.1;
  cfg.max_epochs = 150;
  cfg.patience = 30;
  cfg.seed = 43;
  cfg.val_fraction = 0.3;

  const auto [editor, report] = lot::train(ds, 0, cfg);
  REQUIRE_FALSE(report.epochs.empty());
  const double initial = report.epochs.front().val_loss;
  CHECK(report.final_edit_term < 0.05 * initial);

  // The trained map moves the source cluster onto the target side.
  const auto [src_rows, tgt_rows] = lot::split_source_target(ds, 0);
  Eigen::MatrixXd src(static_cast<Eigen::Index>(src_rows.size()), ds.dim());
  for (std::size_t i = 0; i < src_rows.size(); ++i)
    src.row(static_cast<Eigen::Index>(i)) = ds.codes.row(src_rows[i]);
  const lot::LabelMatrix after =
      lot::oracle_attribute(spec, editor.edit(src, 1.0));
  const double flipped = after.col(0).cast<double>().mean();
  CHECK(flipped >= 0.9);
}

TEST_CASE("massive edit-norm regularization pins the editor to zero") {
  lot::BenchmarkSpec spec;
  spec.dim = 6;
  spec.K = 1;
  spec.n = 160;
  spec.identity_dim = 2;
  spec.seed = 44;
  const LatentDataset ds = lot::generate(spec);

  TrainingConfig cfg;
  cfg.mode = TrainMode::LT;
  cfg.lambda = 0.0;
  cfg.l2_reg = 1e4;
  cfg.lr = 0.01;
  cfg.max_epochs = 40;
  cfg.patience = 40;
  cfg.seed = 45;

  const auto [editor, report] = lot::train(ds, 0, cfg);
  const double mean_norm = editor.direction(ds.codes).rowwise().norm().mean();
  CHECK(mean_norm < 0.05);
}

TEST_CASE("max_epochs zero returns the seeded initialization untouched") {
  lot::BenchmarkSpec spec;
  spec.dim = 6;
  spec.K = 1;
  spec.n = 100;
  spec.identity_dim = 2;
  spec.seed = 46;
  const LatentDataset ds = lot::generate(spec);

  TrainingConfig cfg;
  cfg.max_epochs = 0;
  cfg.seed = 47;
  const auto [editor, report] = lot::train(ds, 0, cfg);
  const lot::AffineEditor init = lot::init_editor(6, 47);
  CHECK((editor.W.array() == init.W.array()).all());
  CHECK((editor.b.array() == init.b.array()).all());
  CHECK(report.epochs.empty());
  CHECK(report.stopped_epoch == 0);
}

TEST_CASE("a dataset too small to split is rejected") {
  LatentDataset ds;
  ds.codes = Eigen::MatrixXd::Zero(4, 2);
  ds.codes << 1, 0, 2, 0, 3, 0, 4, 0;
  ds.labels.resize(4, 1);
  ds.labels << 0, 1, 1, 1;  // a single source sample cannot be split
  ds.identity.resize(4, 0);
  ds.attribute_names = {"a"};

  TrainingConfig cfg;
  cfg.max_epochs = 1;
  CHECK_THROWS_AS(lot::train(ds, 0, cfg), lot::data_error);
}

TEST_CASE("training reports serialize to the documented CSV layout") {
  lot::TrainingReport report;
  lot::EpochStats e;
  e.epoch = 1;
  e.train_loss = 1.5;
  e.val_loss = 1.25;
  e.edit_term = 1.0;
  e.pres_term = 0.25;
  e.reg_term = 0.0;
  report.epochs.push_back(e);

  testutil::TempFile file("report.csv");
  lot::save_report_csv(file.path, report);
  std::ifstream in(file.path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_loss,val_loss,edit_term,pres_term,reg_term");
  std::getline(in, line);
  CHECK(line == "1,1.5,1.25,1,0.25,0");
}

TEST_SUITE_END();
