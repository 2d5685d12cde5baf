#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "tsgc/metrics.hpp"
#include "tsgc/model.hpp"
#include "tsgc/train_config.hpp"
#include "tsgc/training.hpp"

namespace tsgc {

/// Published architecture at widths that train in minutes on one core:
/// K=16, graph layers 16/32/64, fusion 128, head 128/64/32.
ModelConfig desk_model_config(int num_classes = 8);

/// 20 epochs of single-mesh batches, lr halved every 10, otherwise the
/// published protocol.
TrainConfig desk_train_config();

struct ExperimentResult {
  std::string variant;
  SegmentationMetrics metrics;
  std::vector<EpochRecord> log;
  double seconds = 0.0;
};

/// Trains `variant_config(variant, base)` on `train_set` and evaluates on `test_set`.
ExperimentResult run_experiment(const std::string& variant, const ModelConfig& base, const TrainConfig& train_config,
                                const std::vector<TriangleMesh>& train_set, const std::vector<TriangleMesh>& test_set,
                                const TrainHooks& hooks = {});

/// Aligned text table: variant, OA, mIoU, then one IoU column per class.
void write_ablation_table(std::ostream& os, const std::vector<ExperimentResult>& rows,
                          const std::vector<std::string>& class_names);

/// Same content, tab-separated with a header row.
void write_ablation_tsv(std::ostream& os, const std::vector<ExperimentResult>& rows,
                        const std::vector<std::string>& class_names);

}  // namespace tsgc
