#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tsgc/knn.hpp"
#include "tsgc/layers.hpp"
#include "tsgc/mesh.hpp"

namespace tsgc {

enum class StreamSelection { kBoth, kCoordsOnly, kNormalsOnly, kSingleConcat };
enum class FusionLevel { kHigh, kLow };

/// Architecture and ablation switches. Defaults are the published network:
/// attention C-stream, max-pool N-stream, three graph layers of 64/128/256
/// channels on K=32 graphs, 512-wide fusion blocks and a 512/256/128/C head.
struct ModelConfig {
  int num_classes = 8;
  Index k = 32;
  std::vector<Index> stream_widths{64, 128, 256};
  Index fusion_width = 512;
  /// Hidden widths of the prediction head; a final num_classes-wide stage follows.
  std::vector<Index> head_widths{512, 256, 128};
  double leaky_slope = kLeakySlope;
  Aggregation c_stream_agg = Aggregation::kAttention;
  Aggregation n_stream_agg = Aggregation::kMaxPool;
  StreamSelection streams = StreamSelection::kBoth;
  FusionLevel fusion_level = FusionLevel::kHigh;
  bool include_self = false;
  std::vector<Index> attention_hidden{};
  std::uint64_t seed = 1;

  /// Throws ConfigError on invalid or contradictory settings.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Names accepted by variant_config(): TSGCNet, TSGCNet-C, TSGCNet-N,
/// TSGCNet-S, A+M, M+M, A+A, M+A, H-fusion, L-fusion.
const std::vector<std::string>& variant_names();

/// `base` with the architecture switches of the named ablation variant.
ModelConfig variant_config(const std::string& name, ModelConfig base);

/// Two-stream graph network over per-cell coordinate and normal features.
///
/// Graph layer l of every stream aggregates over the same KNN graph, built
/// from the input of the first stream's layer l (the C-stream when both
/// streams run). Each stream's layer outputs are concatenated and fused by
/// a shared MLP; the fused stream features are concatenated and mapped to
/// per-cell class logits by the prediction head.
template <typename Scalar>
class TSGCNet {
 public:
  struct Stream {
    std::vector<std::unique_ptr<GraphLayer<Scalar>>> layers;
    SharedMlp<Scalar> fusion;
  };

  struct Trace {
    std::vector<KnnGraph> graphs;                           // one per layer
    std::vector<std::vector<Tensor<Scalar>>> layer_outputs;  // [stream][layer]
    std::vector<Tensor<Scalar>> fused;                       // [stream]
    std::vector<Tensor<Scalar>> attention;                   // [stream * layers + layer], attention layers only
  };

  explicit TSGCNet(ModelConfig config);
  TSGCNet(TSGCNet&&) noexcept = default;
  TSGCNet& operator=(TSGCNet&&) noexcept = default;

  /// Logits for a batch of meshes stacked along rows ((sum M) x C). Graphs are
  /// built per mesh; pass `frozen_graphs` to reuse a previous trace's graphs.
  Tensor<Scalar> forward(std::span<const CellFeatureMatrix> batch, Mode mode, Trace* trace = nullptr,
                         const std::vector<KnnGraph>* frozen_graphs = nullptr);
  Tensor<Scalar> forward(const CellFeatureMatrix& features, Mode mode, Trace* trace = nullptr);

  const ModelConfig& config() const { return config_; }
  std::vector<Stream>& streams() { return streams_; }
  const std::vector<Stream>& streams() const { return streams_; }
  std::vector<SharedMlp<Scalar>>& head() { return head_; }

  std::vector<Parameter<Scalar>> parameters();
  std::vector<Buffer<Scalar>> buffers();
  std::vector<BatchNormStats<Scalar>*> batch_norms();
  Index parameter_count();

 private:
  Tensor<Scalar> stream_input(std::size_t stream, const Tensor<Scalar>& coords, const Tensor<Scalar>& normals,
                              const Tensor<Scalar>& combined) const;

  ModelConfig config_;
  std::vector<Stream> streams_;
  std::vector<SharedMlp<Scalar>> head_;
};

/// Cross-entropy of logits against labels. kSum is the per-cell sum;
/// kMean divides by the number of cells.
template <typename Scalar>
Tensor<Scalar> segmentation_loss(const Tensor<Scalar>& logits, std::span<const int> labels,
                                 Reduction reduction = Reduction::kSum);

/// Row-wise argmax (ties to the lower class id).
template <typename Scalar>
std::vector<int> predict_classes(const Tensor<Scalar>& logits);

/// Row-wise softmax probabilities.
template <typename Scalar>
RowMatrix<Scalar> class_probabilities(const Tensor<Scalar>& logits);

/// Validated model for `config`.
TSGCNet<float> build_variant(const ModelConfig& config);

extern template class TSGCNet<float>;
extern template class TSGCNet<double>;

}  // namespace tsgc
