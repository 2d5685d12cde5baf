#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "tsgc/errors.hpp"
#include "tsgc/synth.hpp"
#include "tsgc/training.hpp"

using namespace tsgc;

namespace {

ArchSpec small_arch(std::uint64_t seed) {
  ArchSpec s;
  s.num_teeth = 2;
  s.cells_target = 300;
  s.arch_half_width = 12;
  s.arch_depth = 15;
  s.seed = seed;
  return s;
}

ModelConfig small_model() {
  ModelConfig c;
  c.num_classes = 3;
  c.k = 6;
  c.stream_widths = {6, 6};
  c.fusion_width = 8;
  c.head_widths = {8};
  return c;
}

TrainConfig small_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 2;
  return t;
}

std::vector<TriangleMesh> small_set() { return generate_split(small_arch(1), {1, 2, 3}); }

std::vector<float> flat(TSGCNet<float>& net) {
  std::vector<float> v;
  for (const auto& p : net.parameters()) v.insert(v.end(), p.tensor.value().begin(), p.tensor.value().end());
  for (const auto& b : net.buffers()) v.insert(v.end(), b.values->begin(), b.values->end());
  return v;
}

}  // namespace

TEST_CASE("learning rate halves every decay period") {
  TrainConfig t;
  CHECK(t.learning_rate(0) == 1e-3);
  CHECK(t.learning_rate(19) == 1e-3);
  CHECK(t.learning_rate(20) == 5e-4);
  CHECK(t.learning_rate(39) == 5e-4);
  CHECK(t.learning_rate(40) == 2.5e-4);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = {};
  t.lr = -1;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = {};
  t.decay_every = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("first adam step moves by lr against the gradient sign") {
  auto w = Tensor<double>::full({2}, 1.0, true);
  std::vector<Parameter<double>> params{{"w", w}};
  Eigen::ArrayXd g(2);
  g << 0.5, -3.0;
  sum_all(w * Tensor<double>({2}, g)).backward();
  AdamState<double> state;
  adam_step<double>(params, state, 1e-3);
  CHECK(w.value()[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(w.value()[1] == doctest::Approx(1.0 + 1e-3).epsilon(1e-9));
  CHECK(state.step == 1);
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("second adam step against a hand computation") {
  auto w = Tensor<double>::full({1}, 0.0, true);
  std::vector<Parameter<double>> params{{"w", w}};
  AdamState<double> state;
  const double g1 = 2.0, g2 = -1.0, lr = 0.01;
  for (double g : {g1, g2}) {
    sum_all(w * Tensor<double>::full({1}, g)).backward();
    adam_step<double>(params, state, lr);
  }
  const double m1 = 0.1 * g1, v1 = 0.001 * g1 * g1;
  const double x1 = -lr * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
  const double m2 = 0.9 * m1 + 0.1 * g2, v2 = 0.999 * v1 + 0.001 * g2 * g2;
  const double x2 = x1 - lr * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(w.value()[0] == doctest::Approx(x2).epsilon(1e-12));
}

TEST_CASE("adam refuses to update when a gradient is missing") {
  auto a = Tensor<double>::full({1}, 1.0, true);
  auto b = Tensor<double>::full({1}, 1.0, true);
  std::vector<Parameter<double>> params{{"a", a}, {"b", b}};
  sum_all(a).backward();
  AdamState<double> state;
  try {
    adam_step<double>(params, state, 1e-3);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(a.value()[0] == 1.0);
  CHECK(state.step == 0);
}

TEST_CASE("augmentation is a rigid motion that keeps faces and labels") {
  const TriangleMesh mesh = generate_arch(small_arch(4));
  TrainConfig cfg;
  Rng rng = make_rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    AugmentTransform tf;
    TriangleMesh out = augment(mesh, rng, cfg, &tf);
    CHECK(out.faces == mesh.faces);
    CHECK(out.labels == mesh.labels);
    CHECK(std::abs(tf.angle) <= cfg.rotation_range);
    CHECK(tf.translation.cwiseAbs().maxCoeff() <= cfg.translation_range);
    const Eigen::Matrix3d r = tf.rotation();
    CHECK((r * r.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
    CHECK((r * Eigen::Vector3d::UnitY() - Eigen::Vector3d::UnitY()).norm() < 1e-15);
    for (Index v = 0; v < mesh.num_vertices(); v += 17) {
      const Eigen::Vector3d p = mesh.vertices.row(v).transpose();
      const Eigen::Vector3d expected = r * (p - tf.pivot) + tf.pivot + tf.translation;
      CHECK((out.vertices.row(v).transpose() - expected).norm() < 1e-9);
    }
  }
}

TEST_CASE("augmented features keep the translation after centering") {
  const TriangleMesh mesh = generate_arch(small_arch(5));
  TrainConfig cfg;
  Rng a = make_rng(3), b = make_rng(3);
  AugmentTransform tf;
  CellFeatureMatrix f = augmented_features(mesh, a, cfg, &tf);
  CellFeatureMatrix centered = build_cell_features(augment(mesh, b, cfg), true);
  CHECK((f.normals - centered.normals).cwiseAbs().maxCoeff() == 0.0);
  for (int blk = 0; blk < 4; ++blk) {
    auto d = (f.coords.middleCols<3>(3 * blk) - centered.coords.middleCols<3>(3 * blk)).eval();
    for (Index i = 0; i < d.rows(); ++i) CHECK((d.row(i).transpose() - tf.translation).norm() < 1e-9);
  }
}

TEST_CASE("log lines") {
  std::ostringstream os;
  write_log_header(os);
  write_log_line(os, {3, 0.0005, 1.25, 0.5});
  CHECK(os.str() == "epoch\tlr\tmean_loss\ttrain_oa\n3\t0.0005\t1.25\t0.5\n");
}

TEST_CASE("zero epochs leaves the model untouched") {
  TSGCNet<float> model = build_variant(small_model());
  const auto before = flat(model);
  auto log = train(model, small_set(), small_train(0));
  CHECK(log.empty());
  CHECK(flat(model) == before);
}

TEST_CASE("training reduces the loss and logs every epoch") {
  TSGCNet<float> model = build_variant(small_model());
  TrainConfig cfg = small_train(6);
  cfg.augmentation = AugmentationMode::kNone;
  cfg.lr = 1e-2;
  std::vector<double> steps;
  TrainHooks hooks;
  hooks.on_step = [&](std::uint64_t, double loss) { steps.push_back(loss); };
  auto log = train(model, small_set(), cfg, {}, hooks);
  REQUIRE(log.size() == 6);
  CHECK(steps.size() == 12);
  CHECK(log.back().mean_loss < log.front().mean_loss);
  for (int e = 0; e < 6; ++e) CHECK(log[static_cast<std::size_t>(e)].epoch == e);
}

TEST_CASE("resuming continues the run exactly") {
  const auto meshes = small_set();
  TSGCNet<float> straight = build_variant(small_model());
  Trainer a(straight, meshes, small_train(3));
  auto full_log = a.run();

  TSGCNet<float> first = build_variant(small_model());
  Trainer b(first, meshes, small_train(1));
  b.run();
  const Checkpoint saved = b.checkpoint();

  TSGCNet<float> second = build_variant(small_model());
  Trainer c(second, meshes, small_train(3));
  c.resume(saved);
  CHECK(c.next_epoch() == 1);
  auto rest = c.run();
  REQUIRE(rest.size() == 2);
  CHECK(rest[0] == full_log[1]);
  CHECK(rest[1] == full_log[2]);
  CHECK(c.checkpoint() == a.checkpoint());

  TrainConfig changed = small_train(3);
  changed.lr = 5e-3;
  TSGCNet<float> third = build_variant(small_model());
  Trainer d(third, meshes, changed);
  CHECK_THROWS_AS(d.resume(saved), ConfigError);
}

TEST_CASE("checkpoints at the configured cadence") {
  TempDir dir;
  TSGCNet<float> model = build_variant(small_model());
  TrainConfig cfg = small_train(3);
  cfg.checkpoint_every = 1;
  train(model, small_set(), cfg, dir.path());
  CHECK(std::filesystem::exists(dir / "epoch_1.tsgc"));
  CHECK(std::filesystem::exists(dir / "epoch_2.tsgc"));
  CHECK_FALSE(std::filesystem::exists(dir / "epoch_3.tsgc"));
  CHECK(load_checkpoint(dir / "final.tsgc").training->next_epoch == 3);
}

TEST_CASE("fixed augmentation doubles the training set") {
  TSGCNet<float> model = build_variant(small_model());
  TrainConfig cfg = small_train(1);
  cfg.augmentation = AugmentationMode::kFixed;
  std::size_t steps = 0;
  TrainHooks hooks;
  hooks.on_step = [&](std::uint64_t, double) { ++steps; };
  train(model, small_set(), cfg, {}, hooks);
  CHECK(steps == 3);
}

TEST_CASE("bad training data") {
  TSGCNet<float> model = build_variant(small_model());
  auto meshes = small_set();
  meshes[1].labels[0] = 7;
  CHECK_THROWS_AS(Trainer(model, meshes, small_train(1)), DataError);

  meshes = small_set();
  ArchSpec other = small_arch(1);
  other.cells_target = 360;
  meshes[1] = generate_arch(other);
  TrainConfig cfg = small_train(1);
  cfg.batch_size = 3;
  Trainer t(model, meshes, cfg);
  CHECK_THROWS_AS(t.run_epoch(), DataError);
  CHECK_THROWS_AS(Trainer(model, {}, small_train(1)), DataError);
}

TEST_CASE("batch norm recalibration averages per-mesh statistics") {
  TSGCNet<float> model = build_variant(small_model());
  const auto meshes = small_set();
  std::vector<CellFeatureMatrix> f;
  for (const auto& m : meshes) f.push_back(build_cell_features(m));

  auto stats = [&] {
    std::vector<Eigen::ArrayXf> out;
    for (const auto& b : model.buffers()) out.push_back(*b.values);
    return out;
  };
  recalibrate_batch_norm(model, std::span(f).subspan(0, 1));
  const auto s0 = stats();
  recalibrate_batch_norm(model, std::span(f).subspan(1, 1));
  const auto s1 = stats();
  for (auto* n : model.batch_norms()) n->running_mean.setConstant(42.0f);
  recalibrate_batch_norm(model, std::span(f).subspan(0, 2));
  const auto both = stats();
  for (std::size_t i = 0; i < both.size(); ++i) {
    CHECK(((both[i] - 0.5f * (s0[i] + s1[i])).abs() <= 1e-5f * (1.0f + both[i].abs())).all());
  }
  for (auto* n : model.batch_norms()) CHECK(n->momentum == static_cast<float>(kBatchNormMomentum));
}

TEST_CASE("predict and evaluate") {
  TSGCNet<float> model = build_variant(small_model());
  const auto meshes = small_set();
  const auto p = predict(model, meshes[0]);
  CHECK(p.size() == static_cast<std::size_t>(meshes[0].num_cells()));
  CHECK(predict(model, meshes[0]) == p);
  const ConfusionMatrix cm = evaluate(model, meshes);
  CHECK(cm.total() == 3 * meshes[0].num_cells());
  auto unlabeled = meshes;
  unlabeled[2].labels.clear();
  CHECK_THROWS_AS(evaluate(model, unlabeled), DataError);
}
