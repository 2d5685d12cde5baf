#include "tsgc/model.hpp"

#include <algorithm>
#include <set>

#include "tsgc/errors.hpp"

namespace tsgc {

void ModelConfig::validate() const {
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (k < 1) throw ConfigError("k must be positive");
  if (stream_widths.empty()) throw ConfigError("stream_widths must list at least one layer");
  auto positive = [](const std::vector<Index>& v) { return std::all_of(v.begin(), v.end(), [](Index w) { return w > 0; }); };
  if (!positive(stream_widths) || !positive(head_widths) || !positive(attention_hidden) || fusion_width < 1) {
    throw ConfigError("layer widths must be positive");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in [0, 1)");
  if (streams == StreamSelection::kNormalsOnly && c_stream_agg != Aggregation::kAttention) {
    throw ConfigError("streams=normals_only has no C-stream; c_stream_agg override is contradictory");
  }
  if ((streams == StreamSelection::kCoordsOnly || streams == StreamSelection::kSingleConcat) &&
      n_stream_agg != Aggregation::kMaxPool) {
    throw ConfigError("single-stream variant has no N-stream; n_stream_agg override is contradictory");
  }
  if (fusion_level == FusionLevel::kLow && streams != StreamSelection::kBoth) {
    throw ConfigError("fusion_level=low needs streams=both");
  }
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"TSGCNet", "TSGCNet-C", "TSGCNet-N", "TSGCNet-S", "A+M",
                                                 "M+M",     "A+A",       "M+A",       "H-fusion",  "L-fusion"};
  return names;
}

ModelConfig variant_config(const std::string& name, ModelConfig base) {
  base.streams = StreamSelection::kBoth;
  base.fusion_level = FusionLevel::kHigh;
  base.c_stream_agg = Aggregation::kAttention;
  base.n_stream_agg = Aggregation::kMaxPool;
  if (name == "TSGCNet" || name == "A+M" || name == "H-fusion") return base;
  if (name == "TSGCNet-C") {
    base.streams = StreamSelection::kCoordsOnly;
  } else if (name == "TSGCNet-N") {
    base.streams = StreamSelection::kNormalsOnly;
  } else if (name == "TSGCNet-S") {
    base.streams = StreamSelection::kSingleConcat;
  } else if (name == "M+M") {
    base.c_stream_agg = Aggregation::kMaxPool;
  } else if (name == "A+A") {
    base.n_stream_agg = Aggregation::kAttention;
  } else if (name == "M+A") {
    base.c_stream_agg = Aggregation::kMaxPool;
    base.n_stream_agg = Aggregation::kAttention;
  } else if (name == "L-fusion") {
    base.fusion_level = FusionLevel::kLow;
  } else {
    std::string valid;
    for (const std::string& n : variant_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw UsageError("unknown variant '" + name + "'; valid names: " + valid);
  }
  return base;
}

template <typename Scalar>
TSGCNet<Scalar>::TSGCNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng = make_rng(config_.seed);
  const double slope = config_.leaky_slope;

  struct StreamPlan {
    std::string prefix;
    Index input_width;
    Aggregation aggregation;
  };
  std::vector<StreamPlan> plan;
  switch (config_.streams) {
    case StreamSelection::kBoth:
      plan = {{"c", 12, config_.c_stream_agg}, {"n", 12, config_.n_stream_agg}};
      break;
    case StreamSelection::kCoordsOnly:
      plan = {{"c", 12, config_.c_stream_agg}};
      break;
    case StreamSelection::kNormalsOnly:
      plan = {{"n", 12, config_.n_stream_agg}};
      break;
    case StreamSelection::kSingleConcat:
      plan = {{"s", 24, config_.c_stream_agg}};
      break;
  }
  const bool low_fusion = config_.fusion_level == FusionLevel::kLow;
  const Index layers = static_cast<Index>(config_.stream_widths.size());
  for (const StreamPlan& p : plan) {
    Stream stream;
    Index in = p.input_width;
    Index skip_width = 0;
    for (Index l = 0; l < layers; ++l) {
      const Index out = config_.stream_widths[static_cast<std::size_t>(l)];
      stream.layers.push_back(make_graph_layer<Scalar>(p.aggregation, p.prefix + std::to_string(l + 1), in, out, rng,
                                                       slope, config_.attention_hidden));
      in = low_fusion ? 2 * out : out;
      skip_width += out;
    }
    stream.fusion = SharedMlp<Scalar>("mlp_" + p.prefix, skip_width, config_.fusion_width, rng, true, slope);
    streams_.push_back(std::move(stream));
  }
  Index in = config_.fusion_width * static_cast<Index>(streams_.size());
  for (std::size_t i = 0; i < config_.head_widths.size(); ++i) {
    head_.emplace_back("mlp_pred." + std::to_string(i), in, config_.head_widths[i], rng, true, slope);
    in = config_.head_widths[i];
  }
  head_.emplace_back("mlp_pred." + std::to_string(config_.head_widths.size()), in, config_.num_classes, rng, false,
                     slope);

  std::set<std::string> names;
  for (const Parameter<Scalar>& p : parameters()) {
    if (!names.insert(p.name).second) throw ConfigError("duplicate parameter name " + p.name);
  }
}

template <typename Scalar>
Tensor<Scalar> TSGCNet<Scalar>::stream_input(std::size_t stream, const Tensor<Scalar>& coords,
                                             const Tensor<Scalar>& normals, const Tensor<Scalar>& combined) const {
  switch (config_.streams) {
    case StreamSelection::kBoth:
      return stream == 0 ? coords : normals;
    case StreamSelection::kCoordsOnly:
      return coords;
    case StreamSelection::kNormalsOnly:
      return normals;
    case StreamSelection::kSingleConcat:
      return combined;
  }
  return coords;
}

template <typename Scalar>
Tensor<Scalar> TSGCNet<Scalar>::forward(std::span<const CellFeatureMatrix> batch, Mode mode, Trace* trace,
                                        const std::vector<KnnGraph>* frozen_graphs) {
  if (batch.empty()) throw UsageError("forward on an empty batch");
  std::vector<Index> segments;
  Index total = 0;
  for (const CellFeatureMatrix& f : batch) {
    if (f.num_cells() <= config_.k) {
      throw ConfigError("mesh with " + std::to_string(f.num_cells()) + " cells cannot host K=" +
                        std::to_string(config_.k) + " neighborhoods");
    }
    segments.push_back(f.num_cells());
    total += f.num_cells();
  }
  const bool need_combined = config_.streams == StreamSelection::kSingleConcat;
  RowMatrix<Scalar> coords(total, 12), normals(total, 12), combined;
  if (need_combined) combined.resize(total, 24);
  Index row = 0;
  for (const CellFeatureMatrix& f : batch) {
    if (!f.coords.allFinite() || !f.normals.allFinite()) throw DataError("non-finite cell features");
    coords.middleRows(row, f.num_cells()) = f.coords.template cast<Scalar>();
    normals.middleRows(row, f.num_cells()) = f.normals.template cast<Scalar>();
    if (need_combined) combined.middleRows(row, f.num_cells()) = f.combined().template cast<Scalar>();
    row += f.num_cells();
  }
  const Tensor<Scalar> coords_t = Tensor<Scalar>::from_matrix(coords);
  const Tensor<Scalar> normals_t = Tensor<Scalar>::from_matrix(normals);
  const Tensor<Scalar> combined_t = need_combined ? Tensor<Scalar>::from_matrix(combined) : Tensor<Scalar>();

  const std::size_t num_streams = streams_.size();
  const std::size_t num_layers = config_.stream_widths.size();
  const bool low_fusion = config_.fusion_level == FusionLevel::kLow;
  if (frozen_graphs && frozen_graphs->size() != num_layers) {
    throw UsageError("frozen graph list has " + std::to_string(frozen_graphs->size()) + " entries for " +
                     std::to_string(num_layers) + " layers");
  }

  std::vector<Tensor<Scalar>> inputs;
  for (std::size_t s = 0; s < num_streams; ++s) inputs.push_back(stream_input(s, coords_t, normals_t, combined_t));
  std::vector<std::vector<Tensor<Scalar>>> outputs(num_streams);
  std::vector<KnnGraph> graphs;
  std::vector<Tensor<Scalar>> attention(num_streams * num_layers);

  for (std::size_t l = 0; l < num_layers; ++l) {
    // Every stream shares the graph built on the first stream's layer input.
    KnnGraph graph = frozen_graphs ? (*frozen_graphs)[l]
                                   : build_batched_knn_graph<Scalar>(inputs[0].matrix(), segments, config_.k,
                                                                     config_.include_self);
    for (std::size_t s = 0; s < num_streams; ++s) {
      GraphLayer<Scalar>& layer = *streams_[s].layers[l];
      Tensor<Scalar> out;
      if (auto* att = dynamic_cast<GraphAttentionLayer<Scalar>*>(&layer); att && trace) {
        out = att->forward(inputs[s], graph, mode, &attention[s * num_layers + l]);
      } else {
        out = layer.forward(inputs[s], graph, mode);
      }
      outputs[s].push_back(out);
    }
    if (low_fusion) {
      const Tensor<Scalar> joint = concat_channels<Scalar>({outputs[0][l], outputs[1][l]});
      for (auto& in : inputs) in = joint;
    } else {
      for (std::size_t s = 0; s < num_streams; ++s) inputs[s] = outputs[s][l];
    }
    graphs.push_back(std::move(graph));
  }

  std::vector<Tensor<Scalar>> fused;
  for (std::size_t s = 0; s < num_streams; ++s) fused.push_back(streams_[s].fusion(concat_channels(outputs[s]), mode));
  Tensor<Scalar> x = num_streams == 1 ? fused[0] : concat_channels(fused);
  for (SharedMlp<Scalar>& stage : head_) x = stage(x, mode);

  if (trace) {
    trace->graphs = std::move(graphs);
    trace->layer_outputs = std::move(outputs);
    trace->fused = std::move(fused);
    trace->attention = std::move(attention);
  }
  return x;
}

template <typename Scalar>
Tensor<Scalar> TSGCNet<Scalar>::forward(const CellFeatureMatrix& features, Mode mode, Trace* trace) {
  return forward(std::span<const CellFeatureMatrix>(&features, 1), mode, trace);
}

template <typename Scalar>
std::vector<Parameter<Scalar>> TSGCNet<Scalar>::parameters() {
  StateRefs<Scalar> refs;
  for (Stream& s : streams_) {
    for (auto& layer : s.layers) layer->collect(refs);
    s.fusion.collect(refs);
  }
  for (SharedMlp<Scalar>& stage : head_) stage.collect(refs);
  return refs.parameters;
}

template <typename Scalar>
std::vector<Buffer<Scalar>> TSGCNet<Scalar>::buffers() {
  StateRefs<Scalar> refs;
  for (Stream& s : streams_) {
    for (auto& layer : s.layers) layer->collect(refs);
    s.fusion.collect(refs);
  }
  for (SharedMlp<Scalar>& stage : head_) stage.collect(refs);
  return refs.buffers;
}

template <typename Scalar>
std::vector<BatchNormStats<Scalar>*> TSGCNet<Scalar>::batch_norms() {
  StateRefs<Scalar> refs;
  for (Stream& s : streams_) {
    for (auto& layer : s.layers) layer->collect(refs);
    s.fusion.collect(refs);
  }
  for (SharedMlp<Scalar>& stage : head_) stage.collect(refs);
  return refs.norms;
}

template <typename Scalar>
Index TSGCNet<Scalar>::parameter_count() {
  Index n = 0;
  for (const Parameter<Scalar>& p : parameters()) n += p.tensor.size();
  return n;
}

template <typename Scalar>
Tensor<Scalar> segmentation_loss(const Tensor<Scalar>& logits, std::span<const int> labels, Reduction reduction) {
  return cross_entropy(logits, labels, reduction);
}

template <typename Scalar>
std::vector<int> predict_classes(const Tensor<Scalar>& logits) {
  const auto z = logits.matrix();
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Index i = 0; i < z.rows(); ++i) {
    Index best = 0;
    z.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

template <typename Scalar>
RowMatrix<Scalar> class_probabilities(const Tensor<Scalar>& logits) {
  return softmax_axis(logits.detach(), 1).matrix();
}

TSGCNet<float> build_variant(const ModelConfig& config) { return TSGCNet<float>(config); }

template class TSGCNet<float>;
template class TSGCNet<double>;
template Tensor<float> segmentation_loss(const Tensor<float>&, std::span<const int>, Reduction);
template Tensor<double> segmentation_loss(const Tensor<double>&, std::span<const int>, Reduction);
template std::vector<int> predict_classes(const Tensor<float>&);
template std::vector<int> predict_classes(const Tensor<double>&);
template RowMatrix<float> class_probabilities(const Tensor<float>&);
template RowMatrix<double> class_probabilities(const Tensor<double>&);

}  // namespace tsgc
