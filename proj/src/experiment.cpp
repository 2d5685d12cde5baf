#include "tsgc/experiment.hpp"

#include <chrono>
#include <cstdio>

namespace tsgc {

ModelConfig desk_model_config(int num_classes) {
  ModelConfig c;
  c.num_classes = num_classes;
  c.k = 16;
  c.stream_widths = {16, 32, 64};
  c.fusion_width = 128;
  c.head_widths = {128, 64, 32};
  return c;
}

TrainConfig desk_train_config() {
  TrainConfig c;
  c.epochs = 20;
  c.batch_size = 1;
  c.decay_every = 10;
  return c;
}

ExperimentResult run_experiment(const std::string& variant, const ModelConfig& base, const TrainConfig& train_config,
                                const std::vector<TriangleMesh>& train_set, const std::vector<TriangleMesh>& test_set,
                                const TrainHooks& hooks) {
  const auto start = std::chrono::steady_clock::now();
  TSGCNet<float> model = build_variant(variant_config(variant, base));
  ExperimentResult result;
  result.variant = variant;
  result.log = train(model, train_set, train_config, {}, hooks);
  result.metrics = compute_metrics(evaluate(model, test_set, train_config.center));
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *v);
  return buf;
}

std::string cell_tsv(const std::optional<double>& v) {
  if (!v) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace

void write_ablation_table(std::ostream& os, const std::vector<ExperimentResult>& rows,
                          const std::vector<std::string>& class_names) {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.variant.size() + 2);
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  std::string line = std::string("Method") + std::string(width - 6, ' ') + pad("OA", 8) + pad("mIoU", 8);
  for (const auto& name : class_names) line += pad(name, 7);
  os << line << '\n' << std::string(line.size(), '-') << '\n';
  for (const auto& r : rows) {
    std::string row = r.variant + std::string(width - r.variant.size(), ' ');
    row += pad(cell(r.metrics.overall_accuracy), 8) + pad(cell(r.metrics.mean_iou), 8);
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      row += pad(c < r.metrics.class_iou.size() ? cell(r.metrics.class_iou[c]) : "n/a", 7);
    }
    os << row << '\n';
  }
  os << "(percent; IoU per class on the test split)\n";
}

void write_ablation_tsv(std::ostream& os, const std::vector<ExperimentResult>& rows,
                        const std::vector<std::string>& class_names) {
  os << "variant\toa\tmiou";
  for (const auto& name : class_names) os << "\tiou_" << name;
  os << "\tseconds\n";
  for (const auto& r : rows) {
    os << r.variant << '\t' << cell_tsv(r.metrics.overall_accuracy) << '\t' << cell_tsv(r.metrics.mean_iou);
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      os << '\t' << (c < r.metrics.class_iou.size() ? cell_tsv(r.metrics.class_iou[c]) : "nan");
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", r.seconds);
    os << '\t' << buf << '\n';
  }
}

}  // namespace tsgc
