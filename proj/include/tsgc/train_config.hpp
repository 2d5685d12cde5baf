#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "tsgc/ops.hpp"

namespace tsgc {

enum class AugmentationMode {
  kNone,
  kOnTheFly,  // fresh random transform per mesh per epoch
  kFixed,     // one augmented copy per mesh, drawn once before training
};

/// Optimizer, schedule and augmentation settings. Defaults follow the
/// published protocol: Adam at 1e-3 halved every 20 epochs, batches of 4,
/// 200 epochs, translations in [-10, 10] and y-rotations in [-pi/6, pi/6].
struct TrainConfig {
  int epochs = 200;
  int batch_size = 4;
  double lr = 1e-3;
  double decay_factor = 0.5;
  int decay_every = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double translation_range = 10.0;
  double rotation_range = std::numbers::pi / 6.0;
  AugmentationMode augmentation = AugmentationMode::kOnTheFly;
  bool center = true;
  // Recompute batch-norm running statistics after the last epoch as the mean
  // of per-mesh batch statistics over the un-augmented training meshes.
  bool recalibrate_bn = true;
  Reduction loss_reduction = Reduction::kMean;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 writes only the final one
  std::uint64_t seed = 1;

  /// lr0 * decay_factor^floor(epoch / decay_every)
  double learning_rate(int epoch) const {
    return lr * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
  }

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

}  // namespace tsgc
