#include "tsgc/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>

#include <unistd.h>

#include <Eigen/Geometry>

#include "tsgc/checkpoint.hpp"
#include "tsgc/errors.hpp"
#include "tsgc/experiment.hpp"
#include "tsgc/gradcheck.hpp"
#include "tsgc/knn.hpp"
#include "tsgc/layers.hpp"
#include "tsgc/metrics.hpp"
#include "tsgc/model.hpp"
#include "tsgc/synth.hpp"
#include "tsgc/training.hpp"

namespace tsgc {

namespace {

using Clock = std::chrono::steady_clock;

CheckResult make_check(int id, std::string name, bool passed = false, bool skipped = false, std::string detail = {}) {
  CheckResult r;
  r.id = id;
  r.name = std::move(name);
  r.passed = passed;
  r.skipped = skipped;
  r.detail = std::move(detail);
  return r;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

template <typename Scalar>
Tensor<Scalar> random_tensor(Rng& rng, Shape shape, double scale = 1.0, bool requires_grad = false) {
  typename Tensor<Scalar>::Array values(shape_size(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = static_cast<Scalar>(uniform(rng, -scale, scale));
  return Tensor<Scalar>(std::move(shape), std::move(values), requires_grad);
}

RowMatrix<double> random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  RowMatrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

CellFeatureMatrix random_cells(Rng& rng, Index m) {
  CellFeatureMatrix f;
  f.coords = random_matrix(rng, m, 12);
  f.normals = random_matrix(rng, m, 12);
  for (Index i = 0; i < m; ++i) {
    for (int b = 0; b < 4; ++b) f.normals.block<1, 3>(i, 3 * b).normalize();
  }
  return f;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, int classes) {
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(classes)));
  return out;
}

/// Gradient check of sum(output * R) with respect to the listed tensors.
double check_scalarized(const std::function<Tensor<double>()>& output, std::vector<Tensor<double>> inputs, Rng& rng) {
  const Tensor<double> probe = output();
  const Tensor<double> weights = random_tensor<double>(rng, probe.shape());
  return gradient_check([&] { return sum_all(output() * weights); }, inputs);
}

std::vector<Tensor<double>> tensors_of(const StateRefs<double>& refs) {
  std::vector<Tensor<double>> out;
  for (const auto& p : refs.parameters) out.push_back(p.tensor);
  return out;
}

struct Worst {
  double error = 0.0;
  std::string where;
  std::ostringstream detail;

  void add(const std::string& name, double err) {
    detail << (detail.tellp() > 0 ? ", " : "") << name << " " << num(err);
    if (err > error || where.empty()) {
      error = err;
      where = name;
    }
  }
};

bool bit_equal(const std::vector<Parameter<float>>& a, const std::vector<Parameter<float>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i].tensor.value();
    const auto& y = b[i].tensor.value();
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), sizeof(float) * x.size()) != 0) return false;
  }
  return true;
}

std::filesystem::path make_temp_dir() {
  std::string pattern = (std::filesystem::temp_directory_path() / "tsgc-verify-XXXXXX").string();
  if (!mkdtemp(pattern.data())) throw IoError("cannot create a temporary directory");
  return pattern;
}

}  // namespace

void print_result(std::ostream& os, const CheckResult& r) {
  char head[96];
  std::snprintf(head, sizeof(head), "%s  [%2d] %-32s (%6.1fs)  ", r.skipped ? "SKIP" : (r.passed ? "PASS" : "FAIL"),
                r.id, r.name.c_str(), r.seconds);
  os << head << r.detail << std::endl;
}

CheckResult check_gradients() {
  CheckResult r = make_check(1, "gradient correctness");
  Rng rng = make_rng(101);
  Worst worst;

  {
    Linear<double> layer("lin", 5, 4, rng);
    StateRefs<double> refs;
    layer.collect(refs);
    auto inputs = tensors_of(refs);
    const Tensor<double> x = random_tensor<double>(rng, {7, 5}, 1.0, true);
    inputs.push_back(x);
    worst.add("linear", check_scalarized([&] { return layer(x); }, inputs, rng));
  }
  {
    BatchNorm<double> layer("bn", 4);
    StateRefs<double> refs;
    layer.collect(refs);
    auto inputs = tensors_of(refs);
    const Tensor<double> x = random_tensor<double>(rng, {9, 4}, 2.0, true);
    inputs.push_back(x);
    worst.add("batchnorm", check_scalarized([&] { return layer(x, Mode::kTrain); }, inputs, rng));
  }
  {
    SharedMlp<double> layer("mlp", 6, 5, rng);
    StateRefs<double> refs;
    layer.collect(refs);
    auto inputs = tensors_of(refs);
    const Tensor<double> x = random_tensor<double>(rng, {8, 6}, 1.0, true);
    inputs.push_back(x);
    worst.add("shared_mlp", check_scalarized([&] { return layer(x, Mode::kTrain); }, inputs, rng));
  }
  for (int variant = 0; variant < 3; ++variant) {
    const Index m = 12, d = 5, k = 6;
    const Tensor<double> x = random_tensor<double>(rng, {m, d}, 1.0, true);
    const KnnGraph graph = build_knn_graph(x.matrix(), 4);
    std::unique_ptr<GraphLayer<double>> layer;
    std::string name;
    if (variant == 0) {
      layer = std::make_unique<GraphAttentionLayer<double>>("att", d, k, rng);
      name = "graph_attention";
    } else if (variant == 1) {
      layer = std::make_unique<GraphAttentionLayer<double>>("att", d, k, rng, kLeakySlope, std::vector<Index>{7});
      name = "graph_attention_hidden";
    } else {
      layer = std::make_unique<GraphMaxPoolLayer<double>>("max", d, k, rng);
      name = "graph_maxpool";
    }
    StateRefs<double> refs;
    layer->collect(refs);
    auto inputs = tensors_of(refs);
    inputs.push_back(x);
    worst.add(name, check_scalarized([&] { return layer->forward(x, graph, Mode::kTrain); }, inputs, rng));
  }
  {
    const Tensor<double> logits = random_tensor<double>(rng, {10, 4}, 3.0, true);
    const std::vector<int> labels = random_labels(rng, 10, 4);
    std::vector<Tensor<double>> inputs{logits};
    worst.add("cross_entropy",
              gradient_check([&] { return cross_entropy(logits, labels, Reduction::kSum); }, inputs));
  }

  for (const std::string variant : {"TSGCNet", "L-fusion", "TSGCNet-S"}) {
    ModelConfig config;
    config.num_classes = 3;
    config.k = 3;
    config.stream_widths = {4, 8, 8};
    config.fusion_width = 8;
    config.head_widths = {8, 6};
    config.seed = 7;
    config = variant_config(variant, config);
    TSGCNet<double> model(config);
    for (auto& b : model.buffers()) {
      const bool is_var = b.name.ends_with("running_var");
      for (Index i = 0; i < b.values->size(); ++i) {
        (*b.values)[i] = is_var ? uniform(rng, 0.5, 1.5) : uniform(rng, -0.5, 0.5);
      }
    }
    const std::vector<CellFeatureMatrix> batch{random_cells(rng, 16)};
    const std::vector<int> labels = random_labels(rng, 16, 3);
    typename TSGCNet<double>::Trace trace;
    model.forward(batch, Mode::kEval, &trace);
    const std::vector<KnnGraph> graphs = trace.graphs;
    std::vector<Tensor<double>> inputs;
    for (auto& p : model.parameters()) inputs.push_back(p.tensor);
    worst.add("model:" + variant, gradient_check(
                                      [&] {
                                        return segmentation_loss(model.forward(batch, Mode::kEval, nullptr, &graphs),
                                                                 labels, Reduction::kSum);
                                      },
                                      inputs));
  }

  r.passed = worst.error <= 1e-4;
  r.detail = "max rel err " + num(worst.error) + " (" + worst.where + "); " + worst.detail.str();
  return r;
}

CheckResult check_attention_normalization() {
  CheckResult r = make_check(2, "attention normalization");
  Rng rng = make_rng(202);
  double worst = 0.0;
  for (int pass = 0; pass < 100; ++pass) {
    const Index m = 20 + static_cast<Index>(uniform_index(rng, 61));
    const Index k = 2 + static_cast<Index>(uniform_index(rng, 11));
    const Index d = 3 + static_cast<Index>(uniform_index(rng, 10));
    const Index out = 2 + static_cast<Index>(uniform_index(rng, 15));
    const double scale = uniform(rng, 0.1, 20.0);
    std::vector<Index> hidden;
    if (pass % 3 == 0) hidden.push_back(8);
    GraphAttentionLayer<float> layer("att", d, out, rng, kLeakySlope, hidden);
    const Tensor<float> x = random_tensor<float>(rng, {m, d}, scale);
    const KnnGraph graph = build_knn_graph(x.matrix(), k);
    Tensor<float> alpha;
    layer.forward(x, graph, pass % 2 ? Mode::kEval : Mode::kTrain, &alpha);
    const Tensor<float> sums = sum_axis(alpha, 1);
    for (Index i = 0; i < sums.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(sums.value()[i]) - 1.0));
    }
    if (!(alpha.value() >= 0.0f).all()) worst = std::max(worst, 1.0);
  }
  r.passed = worst <= 1e-5;
  r.detail = "100 passes, max |sum_j alpha - 1| = " + num(worst);
  return r;
}

CheckResult check_aggregation_invariance() {
  CheckResult r = make_check(3, "aggregation invariance");
  Rng rng = make_rng(303);
  bool maxpool_identical = true;
  double attention_diff = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = 60, d = 6, k = 8, out = 12;
    const RowMatrix<double> features = random_matrix(rng, m, d, 2.0);
    const KnnGraph graph = build_knn_graph(features, k);
    KnnGraph permuted = graph;
    for (Index i = 0; i < m; ++i) {
      std::vector<Index> row(graph.indices.row(i).begin(), graph.indices.row(i).end());
      shuffle(row, rng);
      for (Index j = 0; j < k; ++j) permuted.indices(i, j) = row[static_cast<std::size_t>(j)];
    }

    GraphMaxPoolLayer<float> maxpool("max", d, out, rng);
    const auto xf = Tensor<float>::from_matrix(features);
    const Tensor<float> a = maxpool.forward(xf, graph, Mode::kEval);
    const Tensor<float> b = maxpool.forward(xf, permuted, Mode::kEval);
    maxpool_identical = maxpool_identical && std::memcmp(a.value().data(), b.value().data(), sizeof(float) * a.size()) == 0;

    GraphAttentionLayer<double> attention("att", d, out, rng);
    const auto xd = Tensor<double>::from_matrix(features);
    for (Mode mode : {Mode::kEval, Mode::kTrain}) {
      const Tensor<double> p = attention.forward(xd, graph, mode);
      const Tensor<double> q = attention.forward(xd, permuted, mode);
      attention_diff = std::max(attention_diff, (p.value() - q.value()).abs().maxCoeff());
    }
  }
  r.passed = maxpool_identical && attention_diff <= 1e-6;
  r.detail = std::string("max-pool ") + (maxpool_identical ? "bit-identical" : "DIFFERS") +
             ", attention max diff " + num(attention_diff);
  return r;
}

namespace {

/// Full distance rows, stable-sorted by distance; equal distances keep index order.
template <typename Scalar>
IndexMatrix brute_force_knn(const RowMatrix<Scalar>& f, Index begin, Index count, Index k, bool include_self) {
  IndexMatrix out(count, k);
  std::vector<Index> order;
  std::vector<double> dist(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < count; ++j) {
      double s = 0.0;
      for (Index c = 0; c < f.cols(); ++c) {
        const double delta = static_cast<double>(f(begin + i, c)) - static_cast<double>(f(begin + j, c));
        s += delta * delta;
      }
      dist[static_cast<std::size_t>(j)] = s;
    }
    order.clear();
    for (Index j = 0; j < count; ++j) {
      if (j != i || include_self) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
    });
    for (Index j = 0; j < k; ++j) out(i, j) = begin + order[static_cast<std::size_t>(j)];
  }
  return out;
}

}  // namespace

CheckResult check_knn_oracle() {
  CheckResult r = make_check(4, "knn oracle equivalence");
  Rng rng = make_rng(404);
  int mismatches = 0;
  int tie_sets = 0;
  Index largest = 0;
  for (int set = 0; set < 50; ++set) {
    const Index m = set < 5 ? 40 : 2 + static_cast<Index>(uniform_index(rng, 1999));
    const Index d = 1 + static_cast<Index>(uniform_index(rng, 8));
    const bool include_self = set % 4 == 3;
    const Index max_k = std::min<Index>(32, include_self ? m : m - 1);
    const Index k = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(max_k)));
    const bool ties = set % 2 == 0;
    largest = std::max(largest, m);
    RowMatrix<float> f(m, d);
    for (Index i = 0; i < f.size(); ++i) {
      f.data()[i] = ties ? static_cast<float>(uniform_index(rng, 4)) : static_cast<float>(uniform(rng, -1, 1));
    }
    tie_sets += ties;
    if (set % 5 == 4 && m >= 2 * (k + 1)) {
      const Index first = k + 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(m - 2 * (k + 1) + 1)));
      const std::vector<Index> segments{first, m - first};
      const KnnGraph g = build_batched_knn_graph<float>(f, segments, k, include_self);
      IndexMatrix expected(m, k);
      expected.topRows(first) = brute_force_knn(f, 0, first, k, include_self);
      expected.bottomRows(m - first) = brute_force_knn(f, first, m - first, k, include_self);
      mismatches += !(g.indices == expected);
    } else {
      const KnnGraph g = build_knn_graph(f, k, include_self);
      mismatches += !(g.indices == brute_force_knn(f, 0, m, k, include_self));
    }
  }
  r.passed = mismatches == 0;
  r.detail = "50 sets (" + std::to_string(tie_sets) + " with ties, M up to " + std::to_string(largest) + "), " +
             std::to_string(mismatches) + " mismatches";
  return r;
}

CheckResult check_loss_sanity() {
  CheckResult r = make_check(5, "loss sanity");
  Rng rng = make_rng(505);
  const Index m = 257;
  const std::vector<int> labels = random_labels(rng, static_cast<std::size_t>(m), 8);
  const Tensor<float> uniform_logits = Tensor<float>::zeros({m, 8});
  const double per_cell = segmentation_loss(uniform_logits, labels, Reduction::kMean).item();
  const double summed = segmentation_loss(uniform_logits, labels, Reduction::kSum).item() / static_cast<double>(m);

  RowMatrix<float> forcing = RowMatrix<float>::Constant(m, 8, -25.0f);
  for (Index i = 0; i < m; ++i) forcing(i, labels[static_cast<std::size_t>(i)]) = 25.0f;
  const double forced = segmentation_loss(Tensor<float>::from_matrix(forcing), labels, Reduction::kMean).item();

  const double ln8 = std::log(8.0);
  r.passed = std::abs(per_cell - ln8) <= 1e-5 && std::abs(summed - ln8) <= 1e-5 && forced <= 1e-6;
  r.detail = "uniform " + std::to_string(per_cell) + " (ln 8 = " + std::to_string(ln8) + "), one-hot " + num(forced);
  return r;
}

CheckResult check_metric_oracle() {
  CheckResult r = make_check(6, "metric oracle");
  Rng rng = make_rng(606);
  int mismatches = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const int c = 2 + static_cast<int>(uniform_index(rng, 9));
    const std::size_t m = 1 + uniform_index(rng, 10000);
    // Every third pair draws from fewer classes so some are absent everywhere.
    const int used = pair % 3 == 0 ? std::max(1, c - 2) : c;
    const std::vector<int> truth = random_labels(rng, m, used);
    std::vector<int> pred = random_labels(rng, m, used);
    for (std::size_t i = 0; i < m; ++i) {
      if (uniform01(rng) < 0.6) pred[i] = truth[i];
    }
    ConfusionMatrix cm(c);
    cm.accumulate(pred, truth);
    const SegmentationMetrics got = compute_metrics(cm);

    std::size_t equal = 0;
    for (std::size_t i = 0; i < m; ++i) equal += pred[i] == truth[i];
    const double oa = static_cast<double>(equal) / static_cast<double>(m);
    double sum = 0.0;
    int defined = 0;
    bool ok = got.overall_accuracy == oa && got.class_iou.size() == static_cast<std::size_t>(c);
    for (int k = 0; k < c && ok; ++k) {
      std::set<std::size_t> t, p;
      for (std::size_t i = 0; i < m; ++i) {
        if (truth[i] == k) t.insert(i);
        if (pred[i] == k) p.insert(i);
      }
      std::vector<std::size_t> inter, uni;
      std::set_intersection(t.begin(), t.end(), p.begin(), p.end(), std::back_inserter(inter));
      std::set_union(t.begin(), t.end(), p.begin(), p.end(), std::back_inserter(uni));
      if (uni.empty()) {
        ok = !got.class_iou[static_cast<std::size_t>(k)].has_value();
        continue;
      }
      const double iou = static_cast<double>(inter.size()) / static_cast<double>(uni.size());
      ok = got.class_iou[static_cast<std::size_t>(k)] == iou;
      sum += iou;
      ++defined;
    }
    ok = ok && got.mean_iou == sum / defined && got.has_undefined_class == (defined < c);
    mismatches += !ok;
  }

  ConfusionMatrix hand(2);
  const std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  hand.accumulate(pred, truth);
  const SegmentationMetrics h = compute_metrics(hand);
  const bool hand_ok = std::abs(h.overall_accuracy - 0.75) < 1e-12 && std::abs(*h.class_iou[0] - 0.5) < 1e-12 &&
                       std::abs(*h.class_iou[1] - 2.0 / 3.0) < 1e-12 && std::abs(h.mean_iou - 0.5833) < 1e-4;
  r.passed = mismatches == 0 && hand_ok;
  r.detail = "100 random pairs, " + std::to_string(mismatches) + " mismatches; hand example OA " +
             num(h.overall_accuracy) + " mIoU " + std::to_string(h.mean_iou);
  return r;
}

CheckResult check_overfit() {
  CheckResult r = make_check(7, "overfit one arch");
  const auto start = Clock::now();
  ArchSpec spec;
  spec.num_teeth = 4;
  spec.seed = 7;
  const TriangleMesh mesh = generate_arch(spec);
  TSGCNet<float> model = build_variant(desk_model_config(spec.num_classes()));
  TrainConfig config = desk_train_config();
  config.epochs = 300;
  config.batch_size = 1;
  config.decay_every = 300;
  config.augmentation = AugmentationMode::kNone;
  std::vector<double> losses;
  TrainHooks hooks;
  hooks.on_step = [&](std::uint64_t, double loss) { losses.push_back(loss); };
  const std::vector<EpochRecord> log = train(model, {mesh}, config, {}, hooks);

  // Training accuracy is measured on the final weights.
  const std::vector<int> pred = predict(model, mesh);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) agree += pred[i] == mesh.labels[i];
  const double accuracy = static_cast<double>(agree) / static_cast<double>(pred.size());
  int rising_windows = 0;
  for (std::size_t s = 50; s + 50 < losses.size(); ++s) rising_windows += losses[s + 50] >= losses[s];
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();

  r.passed = accuracy >= 0.99 && log.back().train_oa >= 0.99 && rising_windows <= 5 && seconds <= 300.0;
  r.detail = "M=" + std::to_string(mesh.num_cells()) + " C=5, 300 steps: accuracy " + std::to_string(accuracy) +
             " (last epoch in train mode " + std::to_string(log.back().train_oa) + "), loss " + num(losses.front()) +
             " -> " + num(losses.back()) + ", " + std::to_string(rising_windows) + " non-decreasing 50-step windows";
  return r;
}

std::vector<CheckResult> check_synthetic_split(const std::filesystem::path& split_seeds) {
  CheckResult gen = make_check(8, "synthetic generalization");
  CheckResult order = make_check(9, "ablation ordering");
  const SplitSeeds seeds = read_split_seeds(split_seeds);
  const ArchSpec spec;
  const std::vector<TriangleMesh> train_set = generate_split(spec, seeds.train);
  const std::vector<TriangleMesh> test_set = generate_split(spec, seeds.test);
  const ModelConfig base = desk_model_config(spec.num_classes());
  const TrainConfig config = desk_train_config();

  const auto start = Clock::now();
  const ExperimentResult full = run_experiment("TSGCNet", base, config, train_set, test_set);
  gen.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  const double miou = full.metrics.mean_iou;
  const double drift = std::abs(miou - kGeneralizationBaseline);
  gen.passed = miou >= 0.70 && drift <= 1e-4;
  gen.detail = std::to_string(train_set.size()) + " train / " + std::to_string(test_set.size()) + " test arches: mIoU " +
               std::to_string(miou) + ", OA " + std::to_string(full.metrics.overall_accuracy) + "; baseline " +
               std::to_string(kGeneralizationBaseline) + " (drift " + num(drift) + ")";

  const auto start_order = Clock::now();
  const ExperimentResult n = run_experiment("TSGCNet-N", base, config, train_set, test_set);
  const ExperimentResult c = run_experiment("TSGCNet-C", base, config, train_set, test_set);
  order.seconds = std::chrono::duration<double>(Clock::now() - start_order).count();
  order.passed = miou >= n.metrics.mean_iou && miou >= c.metrics.mean_iou;
  order.detail = "mIoU TSGCNet " + std::to_string(miou) + ", TSGCNet-N " + std::to_string(n.metrics.mean_iou) +
                 ", TSGCNet-C " + std::to_string(c.metrics.mean_iou);
  return {gen, order};
}

CheckResult check_determinism() {
  CheckResult r = make_check(10, "determinism and persistence");
  ArchSpec spec;
  spec.num_teeth = 2;
  spec.cells_target = 300;
  spec.arch_half_width = 12;
  spec.arch_depth = 15;
  std::vector<TriangleMesh> meshes;
  for (std::uint64_t s : {11, 12, 13}) {
    spec.seed = s;
    meshes.push_back(generate_arch(spec));
  }
  ModelConfig mc = desk_model_config(spec.num_classes());
  mc.k = 8;
  mc.stream_widths = {8, 8, 8};
  mc.fusion_width = 16;
  mc.head_widths = {16};
  TrainConfig tc = desk_train_config();
  tc.epochs = 4;
  tc.batch_size = 2;
  tc.decay_every = 2;

  TSGCNet<float> a = build_variant(mc);
  const std::vector<EpochRecord> log_a = train(a, meshes, tc);
  TSGCNet<float> b = build_variant(mc);
  const std::vector<EpochRecord> log_b = train(b, meshes, tc);
  const bool same_runs = bit_equal(a.parameters(), b.parameters()) && log_a == log_b;

  TrainConfig half = tc;
  half.epochs = 2;
  TSGCNet<float> c = build_variant(mc);
  Trainer first(c, meshes, half);
  first.run();
  const std::string bytes = encode_checkpoint(first.checkpoint());
  const bool memory_round_trip = encode_checkpoint(decode_checkpoint(bytes)) == bytes;

  const std::filesystem::path dir = make_temp_dir();
  save_checkpoint(decode_checkpoint(bytes), dir / "half.tsgc");
  const bool file_round_trip = encode_checkpoint(load_checkpoint(dir / "half.tsgc")) == bytes;
  std::filesystem::remove_all(dir);

  TSGCNet<float> restored = model_from_checkpoint(decode_checkpoint(bytes));
  const CellFeatureMatrix probe = build_cell_features(meshes[0]);
  const Tensor<float> la = c.forward(probe, Mode::kEval);
  const Tensor<float> lb = restored.forward(probe, Mode::kEval);
  const bool same_logits = std::memcmp(la.value().data(), lb.value().data(), sizeof(float) * la.size()) == 0;

  TSGCNet<float> d = build_variant(mc);
  Trainer second(d, meshes, tc);
  second.resume(decode_checkpoint(bytes));
  const std::vector<EpochRecord> tail = second.run();
  const bool resumed = bit_equal(d.parameters(), a.parameters()) && tail.size() == 2 && tail[0] == log_a[2] &&
                       tail[1] == log_a[3];

  r.passed = same_runs && memory_round_trip && file_round_trip && same_logits && resumed;
  auto yes = [](bool v) { return v ? "yes" : "NO"; };
  r.detail = std::string("equal-seed runs identical ") + yes(same_runs) + ", bytes round-trip " +
             yes(memory_round_trip && file_round_trip) + " (" + std::to_string(bytes.size()) +
             " B), restored logits identical " + yes(same_logits) + ", resume 2->4 identical " + yes(resumed);
  return r;
}

CheckResult check_geometry() {
  CheckResult r = make_check(11, "geometry");
  Rng rng = make_rng(1111);
  ArchSpec spec;
  spec.seed = 5;
  const TriangleMesh mesh = generate_arch(spec);
  const CellFeatureMatrix base = build_cell_features(mesh);

  double rotation_err = 0.0, translation_err = 0.0, augment_err = 0.0;
  bool labels_kept = true;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Matrix3d rot =
        Eigen::Quaterniond(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1))
            .normalized()
            .toRotationMatrix();
    const Eigen::RowVector3d shift(uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, -10, 10));

    TriangleMesh moved = mesh;
    moved.vertices = (mesh.vertices * rot.transpose()).rowwise() + shift;
    const CellFeatureMatrix f = build_cell_features(moved);
    for (int b = 0; b < 4; ++b) {
      const RowMatrix<double> c = base.coords.middleCols<3>(3 * b) * rot.transpose();
      const RowMatrix<double> n = base.normals.middleCols<3>(3 * b) * rot.transpose();
      rotation_err = std::max(rotation_err, (f.coords.middleCols<3>(3 * b) - c).cwiseAbs().maxCoeff());
      rotation_err = std::max(rotation_err, (f.normals.middleCols<3>(3 * b) - n).cwiseAbs().maxCoeff());
    }

    TriangleMesh shifted = mesh;
    shifted.vertices = mesh.vertices.rowwise() + shift;
    const CellFeatureMatrix g = build_cell_features(shifted);
    translation_err = std::max(translation_err, (g.coords - base.coords).cwiseAbs().maxCoeff());
    translation_err = std::max(translation_err, (g.normals - base.normals).cwiseAbs().maxCoeff());

    AugmentTransform tf;
    const TriangleMesh aug = augment(mesh, rng, TrainConfig{}, &tf);
    labels_kept = labels_kept && aug.labels == mesh.labels && aug.faces == mesh.faces;
    const MeshNormals before = compute_normals(mesh);
    const MeshNormals after = compute_normals(aug);
    const Eigen::Matrix3d ry = tf.rotation();
    augment_err = std::max(augment_err, (after.face - before.face * ry.transpose()).cwiseAbs().maxCoeff());
    augment_err = std::max(augment_err, (after.vertex - before.vertex * ry.transpose()).cwiseAbs().maxCoeff());
  }
  r.passed = rotation_err <= 1e-5 && translation_err <= 1e-6 && augment_err <= 1e-5 && labels_kept;
  r.detail = "rotation " + num(rotation_err) + ", translation " + num(translation_err) + ", augmentation normals " +
             num(augment_err) + ", labels/faces " + (labels_kept ? "kept" : "CHANGED");
  return r;
}

std::vector<CheckResult> run_acceptance(const VerifyOptions& options) {
  std::vector<CheckResult> results;
  auto emit = [&](CheckResult r) {
    if (options.on_result) options.on_result(r);
    results.push_back(std::move(r));
  };
  auto timed = [&](int id, const char* name, const std::function<CheckResult()>& check) {
    const auto start = Clock::now();
    CheckResult r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = make_check(id, name, false, false, std::string("error: ") + e.what());
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    emit(std::move(r));
  };

  timed(1, "gradient correctness", check_gradients);
  timed(2, "attention normalization", check_attention_normalization);
  timed(3, "aggregation invariance", check_aggregation_invariance);
  timed(4, "knn oracle equivalence", check_knn_oracle);
  timed(5, "loss sanity", check_loss_sanity);
  timed(6, "metric oracle", check_metric_oracle);
  timed(7, "overfit one arch", check_overfit);
  if (options.quick) {
    emit(make_check(8, "synthetic generalization", true, true, "skipped (quick)"));
    emit(make_check(9, "ablation ordering", true, true, "skipped (quick)"));
  } else {
    std::vector<CheckResult> pair;
    try {
      pair = check_synthetic_split(options.split_seeds);
    } catch (const std::exception& e) {
      const std::string why = std::string("error: ") + e.what();
      pair = {make_check(8, "synthetic generalization", false, false, why),
              make_check(9, "ablation ordering", false, false, why)};
    }
    for (auto& r : pair) emit(std::move(r));
  }
  timed(10, "determinism and persistence", check_determinism);
  timed(11, "geometry", check_geometry);
  return results;
}

}  // namespace tsgc
