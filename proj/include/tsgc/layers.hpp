#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tsgc/knn.hpp"
#include "tsgc/ops.hpp"
#include "tsgc/random.hpp"
#include "tsgc/tensor.hpp"

namespace tsgc {

inline constexpr double kLeakySlope = 0.2;

/// A trainable tensor with its hierarchical name ("c1.calib.weight").
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;
};

/// Non-trainable state saved with a model (batch-norm running statistics).
template <typename Scalar>
struct Buffer {
  std::string name;
  Eigen::Array<Scalar, Eigen::Dynamic, 1>* values;
};

template <typename Scalar>
struct StateRefs {
  std::vector<Parameter<Scalar>> parameters;
  std::vector<Buffer<Scalar>> buffers;
  std::vector<BatchNormStats<Scalar>*> norms;
};

/// Fan-in scaled uniform weights U(-1/sqrt(in), 1/sqrt(in)), zero bias.
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, Index in, Index out, Rng& rng, bool bias = true);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return affine(x, weight_, bias_); }

  Index in_dim() const { return weight_.dim(0); }
  Index out_dim() const { return weight_.dim(1); }
  const Tensor<Scalar>& weight() const { return weight_; }
  const Tensor<Scalar>& bias() const { return bias_; }
  void collect(StateRefs<Scalar>& refs) const;

 private:
  std::string name_;
  Tensor<Scalar> weight_;
  Tensor<Scalar> bias_;
};

template <typename Scalar>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, Index channels);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Mode mode) {
    return batch_norm(x, gamma_, beta_, stats_, mode, Scalar(kBatchNormEps), stats_.momentum);
  }

  const Tensor<Scalar>& gamma() const { return gamma_; }
  const Tensor<Scalar>& beta() const { return beta_; }
  BatchNormStats<Scalar>& stats() { return stats_; }
  const BatchNormStats<Scalar>& stats() const { return stats_; }
  void collect(StateRefs<Scalar>& refs);

 private:
  std::string name_;
  Tensor<Scalar> gamma_;
  Tensor<Scalar> beta_;
  BatchNormStats<Scalar> stats_;
};

/// Per-cell shared block (a width-1 "1D conv"): affine, then optionally
/// batch norm and LeakyReLU. Rows never mix except through BN statistics.
template <typename Scalar>
class SharedMlp {
 public:
  SharedMlp() = default;
  SharedMlp(std::string name, Index in, Index out, Rng& rng, bool norm_act = true, double slope = kLeakySlope);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Mode mode);

  Index in_dim() const { return linear_.in_dim(); }
  Index out_dim() const { return linear_.out_dim(); }
  bool norm_act() const { return norm_act_; }
  const Linear<Scalar>& linear() const { return linear_; }
  BatchNorm<Scalar>& bn() { return bn_; }
  const BatchNorm<Scalar>& bn() const { return bn_; }
  void collect(StateRefs<Scalar>& refs);

 private:
  Linear<Scalar> linear_;
  BatchNorm<Scalar> bn_;
  bool norm_act_ = true;
  Scalar slope_ = Scalar(kLeakySlope);
};

enum class Aggregation { kAttention, kMaxPool };

/// Base for the two neighborhood-aggregation layers. Both calibrate every
/// edge as f_hat_ij = LeakyReLU(BN([f_i, f_ij] W + b)) and differ in how the
/// K calibrated edges of a cell are reduced to one k-vector.
template <typename Scalar>
class GraphLayer {
 public:
  GraphLayer(std::string name, Index in, Index out, Rng& rng, double slope);
  virtual ~GraphLayer() = default;

  virtual Aggregation aggregation() const = 0;
  /// features: M x d; graph: M x K neighbors. Returns M x k.
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode) = 0;

  /// Calibrated edge features, M x K x k.
  Tensor<Scalar> calibrate(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode);

  Index in_dim() const { return in_; }
  Index out_dim() const { return out_; }
  const std::string& name() const { return name_; }
  /// (2d x k) weight applied to f_i (+) f_ij.
  const Tensor<Scalar>& calibrate_weight() const { return calib_weight_; }
  const Tensor<Scalar>& calibrate_bias() const { return calib_bias_; }
  BatchNorm<Scalar>& calibrate_bn() { return calib_bn_; }
  Scalar slope() const { return slope_; }
  virtual void collect(StateRefs<Scalar>& refs);

 protected:
  void check_inputs(const Tensor<Scalar>& features, const KnnGraph& graph) const;

  std::string name_;
  Index in_;
  Index out_;
  Scalar slope_;
  Tensor<Scalar> calib_weight_;
  Tensor<Scalar> calib_bias_;
  BatchNorm<Scalar> calib_bn_;
};

/// Graph attention aggregation: per-channel weights from sigma([f_i - f_ij, f_ij]),
/// softmax-normalized across the K neighbors, then sum_j alpha_ij * f_hat_ij.
template <typename Scalar>
class GraphAttentionLayer final : public GraphLayer<Scalar> {
 public:
  /// `hidden` lists optional intermediate widths of sigma; empty means one affine map.
  GraphAttentionLayer(std::string name, Index in, Index out, Rng& rng, double slope = kLeakySlope,
                      std::vector<Index> hidden = {});

  Aggregation aggregation() const override { return Aggregation::kAttention; }
  Tensor<Scalar> forward(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode) override;
  /// As forward(); also returns the normalized M x K x k attention weights.
  Tensor<Scalar> forward(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode,
                         Tensor<Scalar>* attention);

  /// Raw (pre-softmax) scores, M x K x k.
  Tensor<Scalar> scores(const Tensor<Scalar>& features, const KnnGraph& graph) const;

  /// Weight of the first sigma stage: (2d x width), rows [0,d) act on f_i - f_ij.
  const Tensor<Scalar>& attention_weight() const { return attn_weight_; }
  const Tensor<Scalar>& attention_bias() const { return attn_bias_; }
  void collect(StateRefs<Scalar>& refs) override;

 private:
  Tensor<Scalar> attn_weight_;
  Tensor<Scalar> attn_bias_;
  std::vector<Linear<Scalar>> attn_hidden_;
};

/// Graph max-pooling aggregation: channel-wise max over the K calibrated edges.
template <typename Scalar>
class GraphMaxPoolLayer final : public GraphLayer<Scalar> {
 public:
  GraphMaxPoolLayer(std::string name, Index in, Index out, Rng& rng, double slope = kLeakySlope);

  Aggregation aggregation() const override { return Aggregation::kMaxPool; }
  Tensor<Scalar> forward(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode) override;
};

template <typename Scalar>
std::unique_ptr<GraphLayer<Scalar>> make_graph_layer(Aggregation aggregation, std::string name, Index in, Index out,
                                                     Rng& rng, double slope = kLeakySlope,
                                                     std::vector<Index> attention_hidden = {});

extern template class Linear<float>;
extern template class Linear<double>;
extern template class BatchNorm<float>;
extern template class BatchNorm<double>;
extern template class SharedMlp<float>;
extern template class SharedMlp<double>;
extern template class GraphLayer<float>;
extern template class GraphLayer<double>;
extern template class GraphAttentionLayer<float>;
extern template class GraphAttentionLayer<double>;
extern template class GraphMaxPoolLayer<float>;
extern template class GraphMaxPoolLayer<double>;

}  // namespace tsgc
