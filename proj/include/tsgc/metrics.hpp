#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tsgc {

/// C x C cell counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit ConfusionMatrix(int num_classes);

  /// Throws DataError on unequal lengths or a class outside [0, C).
  void accumulate(std::span<const int> predicted, std::span<const int> truth);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return static_cast<int>(counts_.rows()); }
  std::int64_t operator()(int truth, int predicted) const { return counts_(truth, predicted); }
  std::int64_t total() const { return counts_.sum(); }
  const Counts& counts() const { return counts_; }

 private:
  Counts counts_;
};

struct SegmentationMetrics {
  double overall_accuracy = 0.0;
  /// TP / (TP + FP + FN); empty for a class absent from truth and prediction.
  std::vector<std::optional<double>> class_iou;
  /// Mean over the defined class IoUs (background included).
  double mean_iou = 0.0;
  bool has_undefined_class = false;
};

/// Throws UsageError on an empty matrix.
SegmentationMetrics compute_metrics(const ConfusionMatrix& cm);

/// "BG", "T1", "T2", ...
std::vector<std::string> default_class_names(int num_classes);

/// Tab-separated report: header, one `class_id name iou` row per class
/// (`nan` when undefined), then `# OA` and `# mIoU` summary lines.
void write_report(std::ostream& os, const SegmentationMetrics& metrics, const std::vector<std::string>& class_names);

}  // namespace tsgc
