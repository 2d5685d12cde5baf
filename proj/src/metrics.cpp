#include "tsgc/metrics.hpp"

#include <iomanip>

#include "tsgc/errors.hpp"

namespace tsgc {

ConfusionMatrix::ConfusionMatrix(int num_classes) {
  if (num_classes < 1) throw UsageError("confusion matrix needs at least one class");
  counts_ = Counts::Zero(num_classes, num_classes);
}

void ConfusionMatrix::accumulate(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw DataError(std::to_string(predicted.size()) + " predictions for " + std::to_string(truth.size()) +
                    " ground-truth labels");
  }
  const int c = num_classes();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= c || predicted[i] < 0 || predicted[i] >= c) {
      throw DataError("cell " + std::to_string(i) + ": class pair (" + std::to_string(truth[i]) + "," +
                      std::to_string(predicted[i]) + ") outside [0," + std::to_string(c) + ")");
    }
  }
  for (std::size_t i = 0; i < truth.size(); ++i) ++counts_(truth[i], predicted[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes() != num_classes()) throw DataError("merging confusion matrices of different class counts");
  counts_ += other.counts_;
}

SegmentationMetrics compute_metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw UsageError("metrics of an empty confusion matrix");
  const auto& counts = cm.counts();
  SegmentationMetrics m;
  m.overall_accuracy = static_cast<double>(counts.trace()) / static_cast<double>(total);
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    const std::int64_t tp = counts(c, c);
    const std::int64_t fn = counts.row(c).sum() - tp;
    const std::int64_t fp = counts.col(c).sum() - tp;
    const std::int64_t denom = tp + fp + fn;
    if (denom == 0) {
      m.class_iou.emplace_back();
      m.has_undefined_class = true;
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    m.class_iou.emplace_back(iou);
    sum += iou;
    ++defined;
  }
  m.mean_iou = defined > 0 ? sum / defined : 0.0;
  return m;
}

std::vector<std::string> default_class_names(int num_classes) {
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) names.push_back(c == 0 ? "BG" : "T" + std::to_string(c));
  return names;
}

void write_report(std::ostream& os, const SegmentationMetrics& metrics, const std::vector<std::string>& class_names) {
  os << "class_id\tname\tiou\n" << std::fixed << std::setprecision(6);
  for (std::size_t c = 0; c < metrics.class_iou.size(); ++c) {
    os << c << '\t' << (c < class_names.size() ? class_names[c] : "C" + std::to_string(c)) << '\t';
    if (metrics.class_iou[c]) {
      os << *metrics.class_iou[c];
    } else {
      os << "nan";
    }
    os << '\n';
  }
  os << "# OA\t" << metrics.overall_accuracy << '\n';
  os << "# mIoU\t" << metrics.mean_iou << (metrics.has_undefined_class ? "\t(undefined classes excluded)" : "") << '\n';
  os.unsetf(std::ios::floatfield);
}

}  // namespace tsgc
