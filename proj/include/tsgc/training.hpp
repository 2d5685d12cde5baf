#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tsgc/checkpoint.hpp"
#include "tsgc/layers.hpp"
#include "tsgc/mesh.hpp"
#include "tsgc/metrics.hpp"
#include "tsgc/model.hpp"
#include "tsgc/random.hpp"
#include "tsgc/train_config.hpp"

namespace tsgc {

/// Adam moments keyed by parameter name.
template <typename Scalar>
struct AdamState {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  std::map<std::string, Array> first_moment;
  std::map<std::string, Array> second_moment;
  std::uint64_t step = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter, then clears the
/// gradients. Throws TrainingError naming the first parameter without a
/// gradient (nothing is updated in that case).
template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>> params, AdamState<Scalar>& state, double lr, const AdamHyper& hyper = {});

struct AugmentTransform {
  double angle = 0.0;  // about +y, through `pivot`
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d pivot = Eigen::Vector3d::Zero();

  Eigen::Matrix3d rotation() const;
};

/// Rotation about the y-axis through the mean cell centroid by an angle in
/// [-rotation_range, rotation_range], then a translation drawn per axis from
/// [-translation_range, translation_range]. Faces and labels are untouched.
TriangleMesh augment(const TriangleMesh& mesh, Rng& rng, const TrainConfig& config,
                     AugmentTransform* applied = nullptr);

/// Cell features of an augmented copy. With `config.center` the translation is
/// added back after centering, so it still shifts the coordinate block.
CellFeatureMatrix augmented_features(const TriangleMesh& mesh, Rng& rng, const TrainConfig& config,
                                     AugmentTransform* applied = nullptr);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;  // per cell, averaged over the epoch
  double train_oa = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

/// Tab-separated `epoch lr mean_loss train_oa` with a header line.
void write_log_header(std::ostream& os);
void write_log_line(std::ostream& os, const EpochRecord& record);

struct TrainHooks {
  /// Called after every optimizer step with the batch loss (as optimized).
  std::function<void(std::uint64_t step, double loss)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch trainer over a labeled mesh set. Batches stack meshes with
/// equal cell counts; the shuffle and augmentation of epoch e come from
/// make_rng(seed, e + 1), so a resumed run continues exactly.
class Trainer {
 public:
  Trainer(TSGCNet<float>& model, std::vector<TriangleMesh> meshes, TrainConfig config);

  /// Restores model state, optimizer moments and epoch position.
  void resume(const Checkpoint& checkpoint);

  EpochRecord run_epoch(const TrainHooks& hooks = {});

  /// Runs epochs until config.epochs. With a non-empty `out_dir`, writes
  /// `epoch_<n>.tsgc` every checkpoint_every epochs and `final.tsgc` at the end.
  /// With config.recalibrate_bn the batch-norm statistics are recomputed
  /// before the final checkpoint (skipped when config.epochs is 0).
  std::vector<EpochRecord> run(const std::filesystem::path& out_dir = {}, const TrainHooks& hooks = {});

  Checkpoint checkpoint() const;

  int next_epoch() const { return next_epoch_; }
  const AdamState<float>& adam() const { return adam_; }
  const TrainConfig& config() const { return config_; }

 private:
  std::vector<CellFeatureMatrix> epoch_features(Rng& rng) const;

  TSGCNet<float>* model_;
  std::vector<TriangleMesh> meshes_;
  std::size_t num_original_ = 0;  // meshes_ beyond this are fixed augmented copies
  std::vector<CellFeatureMatrix> cached_;  // features when nothing is drawn per epoch
  TrainConfig config_;
  AdamState<float> adam_;
  int next_epoch_ = 0;
};

/// Replaces every batch-norm running mean and variance with the plain average
/// of the train-mode batch statistics of each feature matrix, one at a time.
/// Parameters are untouched and the result does not depend on the old stats.
void recalibrate_batch_norm(TSGCNet<float>& model, std::span<const CellFeatureMatrix> features);

/// Convenience wrapper: Trainer(model, meshes, config).run(out_dir, hooks).
std::vector<EpochRecord> train(TSGCNet<float>& model, std::vector<TriangleMesh> meshes, const TrainConfig& config,
                               const std::filesystem::path& out_dir = {}, const TrainHooks& hooks = {});

/// Eval-mode predictions for one mesh.
std::vector<int> predict(TSGCNet<float>& model, const TriangleMesh& mesh, bool center = true);

/// Confusion matrix of eval-mode predictions over labeled meshes.
ConfusionMatrix evaluate(TSGCNet<float>& model, std::span<const TriangleMesh> meshes, bool center = true);

extern template void adam_step<float>(std::span<Parameter<float>>, AdamState<float>&, double, const AdamHyper&);
extern template void adam_step<double>(std::span<Parameter<double>>, AdamState<double>&, double, const AdamHyper&);

}  // namespace tsgc
