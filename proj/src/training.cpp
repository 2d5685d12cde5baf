#include "tsgc/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "tsgc/errors.hpp"

namespace tsgc {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(decay_factor > 0.0)) fail("decay_factor must be positive");
  if (decay_every < 1) fail("decay_every must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(translation_range >= 0.0)) fail("translation_range must be >= 0");
  if (!(rotation_range >= 0.0)) fail("rotation_range must be >= 0");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>> params, AdamState<Scalar>& state, double lr, const AdamHyper& hyper) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw TrainingError("parameter '" + p.name + "' has no gradient");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  const Scalar b1 = static_cast<Scalar>(hyper.beta1);
  const Scalar b2 = static_cast<Scalar>(hyper.beta2);
  for (auto& p : params) {
    auto& value = p.tensor.mutable_value();
    const auto& grad = p.tensor.grad();
    auto& m = state.first_moment[p.name];
    auto& v = state.second_moment[p.name];
    if (m.size() != value.size()) m = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(value.size());
    if (v.size() != value.size()) v = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(value.size());
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.square();
    for (Index i = 0; i < value.size(); ++i) {
      const double m_hat = static_cast<double>(m[i]) / c1;
      const double v_hat = static_cast<double>(v[i]) / c2;
      value[i] = static_cast<Scalar>(static_cast<double>(value[i]) - lr * m_hat / (std::sqrt(v_hat) + hyper.eps));
    }
    p.tensor.zero_grad();
  }
}

template void adam_step<float>(std::span<Parameter<float>>, AdamState<float>&, double, const AdamHyper&);
template void adam_step<double>(std::span<Parameter<double>>, AdamState<double>&, double, const AdamHyper&);

Eigen::Matrix3d AugmentTransform::rotation() const {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

TriangleMesh augment(const TriangleMesh& mesh, Rng& rng, const TrainConfig& config, AugmentTransform* applied) {
  AugmentTransform tf;
  tf.angle = uniform(rng, -config.rotation_range, config.rotation_range);
  for (int a = 0; a < 3; ++a) tf.translation[a] = uniform(rng, -config.translation_range, config.translation_range);
  Eigen::Vector3d pivot = Eigen::Vector3d::Zero();
  for (Index f = 0; f < mesh.num_cells(); ++f) {
    for (int j = 0; j < 3; ++j) pivot += mesh.vertices.row(mesh.faces(f, j)).transpose();
  }
  if (mesh.num_cells() > 0) pivot /= static_cast<double>(3 * mesh.num_cells());
  tf.pivot = pivot;

  const Eigen::Matrix3d r = tf.rotation();
  TriangleMesh out = mesh;
  for (Index i = 0; i < out.num_vertices(); ++i) {
    const Eigen::Vector3d p = mesh.vertices.row(i).transpose();
    out.vertices.row(i) = (r * (p - pivot) + pivot + tf.translation).transpose();
  }
  if (applied) *applied = tf;
  return out;
}

CellFeatureMatrix augmented_features(const TriangleMesh& mesh, Rng& rng, const TrainConfig& config,
                                     AugmentTransform* applied) {
  AugmentTransform tf;
  CellFeatureMatrix f = build_cell_features(augment(mesh, rng, config, &tf), config.center);
  if (config.center) {
    for (int b = 0; b < 4; ++b) f.coords.middleCols<3>(3 * b).rowwise() += tf.translation.transpose();
  }
  if (applied) *applied = tf;
  return f;
}

void write_log_header(std::ostream& os) { os << "epoch\tlr\tmean_loss\ttrain_oa\n"; }

void write_log_line(std::ostream& os, const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\t%.9g\n", r.epoch, r.lr, r.mean_loss, r.train_oa);
  os << buf;
}

namespace {

void check_labels(const TriangleMesh& mesh, std::size_t index, int num_classes) {
  if (!mesh.has_labels()) throw DataError("training mesh " + std::to_string(index) + " has no labels");
  validate(mesh);
  for (int l : mesh.labels) {
    if (l < 0 || l >= num_classes) {
      throw DataError("training mesh " + std::to_string(index) + " has label " + std::to_string(l) +
                      " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

TrainConfig resumable_part(TrainConfig c) {
  c.epochs = 0;
  c.checkpoint_every = 0;
  return c;
}

std::vector<TensorRecord> moment_records(const std::map<std::string, Eigen::ArrayXf>& moments) {
  std::vector<TensorRecord> out;
  for (const auto& [name, values] : moments) {
    out.push_back({name, {values.size()}, std::vector<float>(values.data(), values.data() + values.size())});
  }
  return out;
}

std::map<std::string, Eigen::ArrayXf> moments_from(const std::vector<TensorRecord>& records) {
  std::map<std::string, Eigen::ArrayXf> out;
  for (const auto& r : records) {
    out[r.name] = Eigen::Map<const Eigen::ArrayXf>(r.values.data(), static_cast<Index>(r.values.size()));
  }
  return out;
}

}  // namespace

Trainer::Trainer(TSGCNet<float>& model, std::vector<TriangleMesh> meshes, TrainConfig config)
    : model_(&model), meshes_(std::move(meshes)), config_(std::move(config)) {
  config_.validate();
  num_original_ = meshes_.size();
  if (meshes_.empty() && config_.epochs > 0) throw DataError("training set is empty");
  for (std::size_t i = 0; i < meshes_.size(); ++i) check_labels(meshes_[i], i, model.config().num_classes);

  if (config_.augmentation != AugmentationMode::kOnTheFly) {
    for (const auto& m : meshes_) cached_.push_back(build_cell_features(m, config_.center));
  }
  if (config_.augmentation == AugmentationMode::kFixed) {
    // One augmented copy per mesh, drawn once; the copy keeps the original's labels.
    Rng rng = make_rng(config_.seed, 0);
    const std::size_t n = meshes_.size();
    for (std::size_t i = 0; i < n; ++i) {
      cached_.push_back(augmented_features(meshes_[i], rng, config_));
      meshes_.push_back(meshes_[i]);
    }
  }
}

void Trainer::resume(const Checkpoint& checkpoint) {
  if (!checkpoint.training) throw UsageError("checkpoint has no training state to resume from");
  if (!(checkpoint.config == model_->config())) throw ConfigError("checkpoint model config differs from the model");
  if (!(resumable_part(checkpoint.training->config) == resumable_part(config_))) {
    throw ConfigError("checkpoint training config differs from the current one (only epochs may change)");
  }
  restore(checkpoint, *model_);
  adam_.step = checkpoint.training->adam_step;
  adam_.first_moment = moments_from(checkpoint.training->first_moments);
  adam_.second_moment = moments_from(checkpoint.training->second_moments);
  next_epoch_ = checkpoint.training->next_epoch;
}

std::vector<CellFeatureMatrix> Trainer::epoch_features(Rng& rng) const {
  if (config_.augmentation != AugmentationMode::kOnTheFly) return cached_;
  std::vector<CellFeatureMatrix> out;
  out.reserve(meshes_.size());
  for (const auto& m : meshes_) out.push_back(augmented_features(m, rng, config_));
  return out;
}

EpochRecord Trainer::run_epoch(const TrainHooks& hooks) {
  const int epoch = next_epoch_;
  Rng rng = make_rng(config_.seed, static_cast<std::uint64_t>(epoch) + 1);
  const std::vector<CellFeatureMatrix> features = epoch_features(rng);
  std::vector<std::size_t> order(meshes_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);

  const double lr = config_.learning_rate(epoch);
  auto params = model_->parameters();
  double loss_sum = 0.0;
  std::int64_t cells = 0;
  std::int64_t correct = 0;
  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
    const std::size_t end = std::min(order.size(), start + batch);
    std::vector<CellFeatureMatrix> batch_features;
    std::vector<int> labels;
    const Index m0 = meshes_[order[start]].num_cells();
    for (std::size_t i = start; i < end; ++i) {
      const TriangleMesh& mesh = meshes_[order[i]];
      if (mesh.num_cells() != m0) {
        throw DataError("batch " + std::to_string(b) + " of epoch " + std::to_string(epoch) + " mixes cell counts " +
                        std::to_string(m0) + " and " + std::to_string(mesh.num_cells()) +
                        "; meshes in a batch must share M");
      }
      batch_features.push_back(features[order[i]]);
      labels.insert(labels.end(), mesh.labels.begin(), mesh.labels.end());
    }
    Tensor<float> logits = model_->forward(batch_features, Mode::kTrain);
    Tensor<float> loss = segmentation_loss(logits, labels, config_.loss_reduction);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      std::string ids;
      for (std::size_t i = start; i < end; ++i) ids += (i > start ? "," : "") + std::to_string(order[i]);
      throw TrainingError("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                          " batch " + std::to_string(b) + " (meshes " + ids + ")");
    }
    loss.backward();
    adam_step<float>(params, adam_, lr, {config_.adam_beta1, config_.adam_beta2, config_.adam_eps});
    if (hooks.on_step) hooks.on_step(adam_.step, value);

    const auto n = static_cast<std::int64_t>(labels.size());
    loss_sum += config_.loss_reduction == Reduction::kMean ? value * static_cast<double>(n) : value;
    cells += n;
    const std::vector<int> pred = predict_classes(logits);
    for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
  }
  EpochRecord record{epoch, lr, cells ? loss_sum / static_cast<double>(cells) : 0.0,
                     cells ? static_cast<double>(correct) / static_cast<double>(cells) : 0.0};
  ++next_epoch_;
  if (hooks.on_epoch) hooks.on_epoch(record);
  return record;
}

std::vector<EpochRecord> Trainer::run(const std::filesystem::path& out_dir, const TrainHooks& hooks) {
  std::vector<EpochRecord> log;
  while (next_epoch_ < config_.epochs) {
    log.push_back(run_epoch(hooks));
    if (!out_dir.empty() && config_.checkpoint_every > 0 && next_epoch_ % config_.checkpoint_every == 0 &&
        next_epoch_ < config_.epochs) {
      save_checkpoint(checkpoint(), out_dir / ("epoch_" + std::to_string(next_epoch_) + ".tsgc"));
    }
  }
  if (config_.recalibrate_bn && config_.epochs > 0) {
    std::vector<CellFeatureMatrix> plain;
    plain.reserve(num_original_);
    for (std::size_t i = 0; i < num_original_; ++i) {
      plain.push_back(cached_.empty() ? build_cell_features(meshes_[i], config_.center) : cached_[i]);
    }
    recalibrate_batch_norm(*model_, plain);
  }
  if (!out_dir.empty()) save_checkpoint(checkpoint(), out_dir / "final.tsgc");
  return log;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c = capture(*model_);
  TrainingState t;
  t.next_epoch = next_epoch_;
  t.adam_step = adam_.step;
  t.config = config_;
  t.first_moments = moment_records(adam_.first_moment);
  t.second_moments = moment_records(adam_.second_moment);
  c.training = std::move(t);
  return c;
}

void recalibrate_batch_norm(TSGCNet<float>& model, std::span<const CellFeatureMatrix> features) {
  if (features.empty()) return;
  const std::vector<BatchNormStats<float>*> norms = model.batch_norms();
  std::vector<float> saved;
  for (BatchNormStats<float>* n : norms) saved.push_back(n->momentum);
  // Momentum 1/(i+1) on the i-th pass keeps a running mean of the batch statistics.
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (BatchNormStats<float>* n : norms) n->momentum = 1.0f / static_cast<float>(i + 1);
    model.forward(features[i], Mode::kTrain);
  }
  for (std::size_t j = 0; j < norms.size(); ++j) norms[j]->momentum = saved[j];
}

std::vector<EpochRecord> train(TSGCNet<float>& model, std::vector<TriangleMesh> meshes, const TrainConfig& config,
                               const std::filesystem::path& out_dir, const TrainHooks& hooks) {
  Trainer trainer(model, std::move(meshes), config);
  return trainer.run(out_dir, hooks);
}

std::vector<int> predict(TSGCNet<float>& model, const TriangleMesh& mesh, bool center) {
  validate(mesh);
  const CellFeatureMatrix features = build_cell_features(mesh, center);
  return predict_classes(model.forward(features, Mode::kEval));
}

ConfusionMatrix evaluate(TSGCNet<float>& model, std::span<const TriangleMesh> meshes, bool center) {
  ConfusionMatrix cm(model.config().num_classes);
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    if (!meshes[i].has_labels()) throw DataError("evaluation mesh " + std::to_string(i) + " has no labels");
    cm.accumulate(predict(model, meshes[i], center), meshes[i].labels);
  }
  return cm;
}

}  // namespace tsgc
