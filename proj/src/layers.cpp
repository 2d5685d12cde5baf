#include "tsgc/layers.hpp"

#include <cmath>

#include "tsgc/errors.hpp"

namespace tsgc {

namespace {

template <typename Scalar>
Tensor<Scalar> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> values(shape_size(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = static_cast<Scalar>(uniform(rng, -bound, bound));
  return Tensor<Scalar>(std::move(shape), std::move(values), true);
}

}  // namespace

template <typename Scalar>
Linear<Scalar>::Linear(std::string name, Index in, Index out, Rng& rng, bool bias) : name_(std::move(name)) {
  if (in <= 0 || out <= 0) throw ConfigError(name_ + ": widths must be positive");
  weight_ = uniform_tensor<Scalar>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  if (bias) bias_ = Tensor<Scalar>::zeros({out}, true);
}

template <typename Scalar>
void Linear<Scalar>::collect(StateRefs<Scalar>& refs) const {
  refs.parameters.push_back({name_ + ".weight", weight_});
  if (bias_.defined()) refs.parameters.push_back({name_ + ".bias", bias_});
}

template <typename Scalar>
BatchNorm<Scalar>::BatchNorm(std::string name, Index channels)
    : name_(std::move(name)),
      gamma_(Tensor<Scalar>::full({channels}, Scalar(1), true)),
      beta_(Tensor<Scalar>::zeros({channels}, true)),
      stats_(channels) {}

template <typename Scalar>
void BatchNorm<Scalar>::collect(StateRefs<Scalar>& refs) {
  refs.parameters.push_back({name_ + ".gamma", gamma_});
  refs.parameters.push_back({name_ + ".beta", beta_});
  refs.buffers.push_back({name_ + ".running_mean", &stats_.running_mean});
  refs.buffers.push_back({name_ + ".running_var", &stats_.running_var});
  refs.norms.push_back(&stats_);
}

template <typename Scalar>
SharedMlp<Scalar>::SharedMlp(std::string name, Index in, Index out, Rng& rng, bool norm_act, double slope)
    : linear_(name + ".linear", in, out, rng),
      bn_(norm_act ? BatchNorm<Scalar>(name + ".bn", out) : BatchNorm<Scalar>()),
      norm_act_(norm_act),
      slope_(static_cast<Scalar>(slope)) {}

template <typename Scalar>
Tensor<Scalar> SharedMlp<Scalar>::operator()(const Tensor<Scalar>& x, Mode mode) {
  if (x.cols() != in_dim()) {
    throw DimensionError("shared MLP expects width " + std::to_string(in_dim()) + ", got " + shape_string(x.shape()));
  }
  Tensor<Scalar> y = linear_(x);
  if (!norm_act_) return y;
  return leaky_relu(bn_(y, mode), slope_);
}

template <typename Scalar>
void SharedMlp<Scalar>::collect(StateRefs<Scalar>& refs) {
  linear_.collect(refs);
  if (norm_act_) bn_.collect(refs);
}

template <typename Scalar>
GraphLayer<Scalar>::GraphLayer(std::string name, Index in, Index out, Rng& rng, double slope)
    : name_(std::move(name)),
      in_(in),
      out_(out),
      slope_(static_cast<Scalar>(slope)),
      calib_weight_(uniform_tensor<Scalar>({2 * in, out}, 1.0 / std::sqrt(2.0 * static_cast<double>(in)), rng)),
      calib_bias_(Tensor<Scalar>::zeros({out}, true)),
      calib_bn_(name_ + ".calib.bn", out) {
  if (in <= 0 || out <= 0) throw ConfigError(name_ + ": widths must be positive");
}

template <typename Scalar>
void GraphLayer<Scalar>::check_inputs(const Tensor<Scalar>& features, const KnnGraph& graph) const {
  if (features.ndim() != 2 || features.dim(1) != in_) {
    throw DimensionError(name_ + ": expected M x " + std::to_string(in_) + " features, got " +
                         shape_string(features.shape()));
  }
  if (features.dim(0) != graph.num_cells()) {
    throw DimensionError(name_ + ": " + std::to_string(features.dim(0)) + " cells but graph has " +
                         std::to_string(graph.num_cells()));
  }
}

template <typename Scalar>
Tensor<Scalar> GraphLayer<Scalar>::calibrate(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode) {
  check_inputs(features, graph);
  // [f_i, f_ij] W + b == (f_i W_top + b)[i] + (f_ij W_bottom): two M x k products
  // gathered onto the edges instead of one (M K) x 2d product.
  const Tensor<Scalar> center = affine(features, slice_rows(calib_weight_, 0, in_), calib_bias_);
  const Tensor<Scalar> neighbor = matmul(features, slice_rows(calib_weight_, in_, in_));
  const Tensor<Scalar> edges = gather_rows(center, self_index_table(graph.num_cells(), graph.k())) +
                               gather_rows(neighbor, graph.indices);
  return leaky_relu(calib_bn_(edges, mode), slope_);
}

template <typename Scalar>
void GraphLayer<Scalar>::collect(StateRefs<Scalar>& refs) {
  refs.parameters.push_back({name_ + ".calib.weight", calib_weight_});
  refs.parameters.push_back({name_ + ".calib.bias", calib_bias_});
  calib_bn_.collect(refs);
}

template <typename Scalar>
GraphAttentionLayer<Scalar>::GraphAttentionLayer(std::string name, Index in, Index out, Rng& rng, double slope,
                                                 std::vector<Index> hidden)
    : GraphLayer<Scalar>(std::move(name), in, out, rng, slope) {
  const Index first = hidden.empty() ? out : hidden.front();
  attn_weight_ = uniform_tensor<Scalar>({2 * in, first}, 1.0 / std::sqrt(2.0 * static_cast<double>(in)), rng);
  attn_bias_ = Tensor<Scalar>::zeros({first}, true);
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const Index next = i + 1 < hidden.size() ? hidden[i + 1] : out;
    attn_hidden_.emplace_back(this->name_ + ".attn.hidden" + std::to_string(i), hidden[i], next, rng);
  }
}

template <typename Scalar>
Tensor<Scalar> GraphAttentionLayer<Scalar>::scores(const Tensor<Scalar>& features, const KnnGraph& graph) const {
  this->check_inputs(features, graph);
  const Index d = this->in_;
  // [f_i - f_ij, f_ij] A + b == (f_i A_top + b)[i] + f_ij (A_bottom - A_top).
  const Tensor<Scalar> a_top = slice_rows(attn_weight_, 0, d);
  const Tensor<Scalar> a_bottom = slice_rows(attn_weight_, d, d);
  const Tensor<Scalar> center = affine(features, a_top, attn_bias_);
  const Tensor<Scalar> neighbor = matmul(features, a_bottom - a_top);
  Tensor<Scalar> s = gather_rows(center, self_index_table(graph.num_cells(), graph.k())) +
                     gather_rows(neighbor, graph.indices);
  for (const Linear<Scalar>& stage : attn_hidden_) s = stage(leaky_relu(s, this->slope_));
  return s;
}

template <typename Scalar>
Tensor<Scalar> GraphAttentionLayer<Scalar>::forward(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode) {
  return forward(features, graph, mode, nullptr);
}

template <typename Scalar>
Tensor<Scalar> GraphAttentionLayer<Scalar>::forward(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode,
                                                    Tensor<Scalar>* attention) {
  const Tensor<Scalar> calibrated = this->calibrate(features, graph, mode);
  const Tensor<Scalar> alpha = softmax_axis(scores(features, graph), 1);
  if (attention) *attention = alpha;
  return sum_axis(alpha * calibrated, 1);
}

template <typename Scalar>
void GraphAttentionLayer<Scalar>::collect(StateRefs<Scalar>& refs) {
  GraphLayer<Scalar>::collect(refs);
  refs.parameters.push_back({this->name_ + ".attn.weight", attn_weight_});
  refs.parameters.push_back({this->name_ + ".attn.bias", attn_bias_});
  for (const Linear<Scalar>& stage : attn_hidden_) stage.collect(refs);
}

template <typename Scalar>
GraphMaxPoolLayer<Scalar>::GraphMaxPoolLayer(std::string name, Index in, Index out, Rng& rng, double slope)
    : GraphLayer<Scalar>(std::move(name), in, out, rng, slope) {}

template <typename Scalar>
Tensor<Scalar> GraphMaxPoolLayer<Scalar>::forward(const Tensor<Scalar>& features, const KnnGraph& graph, Mode mode) {
  return max_axis(this->calibrate(features, graph, mode), 1);
}

template <typename Scalar>
std::unique_ptr<GraphLayer<Scalar>> make_graph_layer(Aggregation aggregation, std::string name, Index in, Index out,
                                                     Rng& rng, double slope, std::vector<Index> attention_hidden) {
  if (aggregation == Aggregation::kAttention) {
    return std::make_unique<GraphAttentionLayer<Scalar>>(std::move(name), in, out, rng, slope,
                                                         std::move(attention_hidden));
  }
  return std::make_unique<GraphMaxPoolLayer<Scalar>>(std::move(name), in, out, rng, slope);
}

template class Linear<float>;
template class Linear<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class SharedMlp<float>;
template class SharedMlp<double>;
template class GraphLayer<float>;
template class GraphLayer<double>;
template class GraphAttentionLayer<float>;
template class GraphAttentionLayer<double>;
template class GraphMaxPoolLayer<float>;
template class GraphMaxPoolLayer<double>;
template std::unique_ptr<GraphLayer<float>> make_graph_layer<float>(Aggregation, std::string, Index, Index, Rng&,
                                                                     double, std::vector<Index>);
template std::unique_ptr<GraphLayer<double>> make_graph_layer<double>(Aggregation, std::string, Index, Index, Rng&,
                                                                       double, std::vector<Index>);

}  // namespace tsgc
