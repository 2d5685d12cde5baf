#include "tsgc/ops.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "tsgc/errors.hpp"

namespace tsgc {

namespace debug {
namespace {
std::atomic<bool> g_softmax_fault{false};
}
void set_softmax_fault(bool enabled) { g_softmax_fault = enabled; }
bool softmax_fault() { return g_softmax_fault; }
}  // namespace debug

namespace {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;
template <typename S>
using RowArray = Eigen::Array<S, 1, Eigen::Dynamic>;
template <typename S>
using ArrayMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstArrayMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using MatMap = Eigen::Map<RowMatrix<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMatrix<S>>;

template <typename S>
ArrayX<S>* grad_of(detail::Node<S>& self, std::size_t k) {
  auto& parent = *self.parents[k];
  return parent.requires_grad ? &parent.grad_accumulator() : nullptr;
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
  Shape reduced;
};

AxisSplit split_axis(const Shape& shape, Index axis) {
  const Index n = static_cast<Index>(shape.size());
  const Index a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw UsageError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (Index i = 0; i < n; ++i) {
    const Index e = shape[static_cast<std::size_t>(i)];
    if (i < a) s.outer *= e;
    if (i > a) s.inner *= e;
    if (i != a) s.reduced.push_back(e);
  }
  s.extent = shape[static_cast<std::size_t>(a)];
  if (s.extent == 0) throw EmptyReductionError("reduction over empty axis of shape " + shape_string(shape));
  return s;
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "add");
  return Tensor<S>::make_result(a.shape(), a.value() + b.value(), {a, b}, [](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) *g += self.grad;
    if (auto* g = grad_of(self, 1)) *g += self.grad;
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "sub");
  return Tensor<S>::make_result(a.shape(), a.value() - b.value(), {a, b}, [](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) *g += self.grad;
    if (auto* g = grad_of(self, 1)) *g -= self.grad;
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "mul");
  return Tensor<S>::make_result(a.shape(), a.value() * b.value(), {a, b}, [](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) *g += self.grad * self.parents[1]->value;
    if (auto* g = grad_of(self, 1)) *g += self.grad * self.parents[0]->value;
  });
}

template <typename S>
Tensor<S> concat(std::span<const Tensor<S>> parts, Index axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  const Index nd = parts.front().ndim();
  if (nd == 0 || (axis != -1 && axis != nd - 1)) {
    throw UsageError("concat supports only the channel (last) axis; got axis " + std::to_string(axis) +
                     " for shape " + shape_string(parts.front().shape()));
  }
  const Shape& first = parts.front().shape();
  Index total = 0;
  std::vector<Index> widths;
  for (const Tensor<S>& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw DimensionError("concat: shape mismatch " + shape_string(first) + " vs " + shape_string(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const Index rows = parts.front().rows();
  RowMatrix<S> out(rows, total);
  Index offset = 0;
  for (const Tensor<S>& p : parts) {
    out.middleCols(offset, p.cols()) = p.matrix();
    offset += p.cols();
  }
  Shape shape = first;
  shape.back() = total;
  std::vector<Tensor<S>> parents(parts.begin(), parts.end());
  return Tensor<S>::make_result(shape, Eigen::Map<ArrayX<S>>(out.data(), out.size()), parents,
                                [rows, total, widths](detail::Node<S>& self) {
                                  ConstMatMap<S> g(self.grad.data(), rows, total);
                                  Index off = 0;
                                  for (std::size_t k = 0; k < widths.size(); ++k) {
                                    if (auto* pg = grad_of(self, k)) {
                                      MatMap<S>(pg->data(), rows, widths[k]) += g.middleCols(off, widths[k]);
                                    }
                                    off += widths[k];
                                  }
                                });
}

template <typename S>
Tensor<S> affine(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (weight.ndim() != 2) throw DimensionError("affine: weight must be 2-d, got " + shape_string(weight.shape()));
  if (x.ndim() == 0 || x.cols() != weight.dim(0)) {
    throw DimensionError("affine: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
  }
  const Index rows = x.rows();
  const Index in = weight.dim(0);
  const Index out = weight.dim(1);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.ndim() != 1 || bias.dim(0) != out)) {
    throw DimensionError("affine: bias " + shape_string(bias.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
  }
  RowMatrix<S> y = x.matrix() * weight.matrix();
  if (has_bias) y.rowwise() += bias.matrix().row(0);
  Shape shape = x.shape();
  shape.back() = out;
  std::vector<Tensor<S>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor<S>::make_result(
      shape, Eigen::Map<ArrayX<S>>(y.data(), y.size()), parents, [rows, in, out](detail::Node<S>& self) {
        ConstMatMap<S> gy(self.grad.data(), rows, out);
        ConstMatMap<S> xv(self.parents[0]->value.data(), rows, in);
        ConstMatMap<S> wv(self.parents[1]->value.data(), in, out);
        if (auto* g = grad_of(self, 0)) MatMap<S>(g->data(), rows, in).noalias() += gy * wv.transpose();
        if (auto* g = grad_of(self, 1)) MatMap<S>(g->data(), in, out).noalias() += xv.transpose() * gy;
        if (self.parents.size() > 2) {
          if (auto* g = grad_of(self, 2)) MatMap<S>(g->data(), 1, out) += gy.colwise().sum();
        }
      });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S negative_slope) {
  ArrayX<S> y = (x.value() > S(0)).select(x.value(), negative_slope * x.value());
  return Tensor<S>::make_result(x.shape(), std::move(y), {x}, [negative_slope](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) {
      const auto& xv = self.parents[0]->value;
      *g += (xv > S(0)).select(self.grad, negative_slope * self.grad);
    }
  });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, Index begin, Index count) {
  if (x.ndim() != 2) throw DimensionError("slice_rows: expected 2-d tensor, got " + shape_string(x.shape()));
  if (begin < 0 || count < 0 || begin + count > x.dim(0)) {
    throw IndexError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(x.shape()));
  }
  const Index cols = x.cols();
  ArrayX<S> y = x.value().segment(begin * cols, count * cols);
  return Tensor<S>::make_result({count, cols}, std::move(y), {x}, [begin, count, cols](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) g->segment(begin * cols, count * cols) += self.grad;
  });
}

template <typename S>
Tensor<S> sum_axis(const Tensor<S>& x, Index axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  ArrayX<S> y(s.outer * s.inner);
  for (Index o = 0; o < s.outer; ++o) {
    ConstArrayMap<S> block(x.value().data() + o * s.extent * s.inner, s.extent, s.inner);
    y.segment(o * s.inner, s.inner) = block.colwise().sum().transpose();
  }
  return Tensor<S>::make_result(s.reduced, std::move(y), {x}, [s](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) {
      for (Index o = 0; o < s.outer; ++o) {
        ArrayMap<S> block(g->data() + o * s.extent * s.inner, s.extent, s.inner);
        block.rowwise() += self.grad.segment(o * s.inner, s.inner).transpose();
      }
    }
  });
}

template <typename S>
Tensor<S> mean_axis(const Tensor<S>& x, Index axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  ArrayX<S> y(s.outer * s.inner);
  const S scale = S(1) / S(s.extent);
  for (Index o = 0; o < s.outer; ++o) {
    ConstArrayMap<S> block(x.value().data() + o * s.extent * s.inner, s.extent, s.inner);
    y.segment(o * s.inner, s.inner) = block.colwise().sum().transpose() * scale;
  }
  return Tensor<S>::make_result(s.reduced, std::move(y), {x}, [s, scale](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) {
      for (Index o = 0; o < s.outer; ++o) {
        ArrayMap<S> block(g->data() + o * s.extent * s.inner, s.extent, s.inner);
        block.rowwise() += self.grad.segment(o * s.inner, s.inner).transpose() * scale;
      }
    }
  });
}

template <typename S>
Tensor<S> max_axis(const Tensor<S>& x, Index axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  ArrayX<S> y(s.outer * s.inner);
  std::vector<Index> arg(static_cast<std::size_t>(s.outer * s.inner), 0);
  const S* xv = x.value().data();
  for (Index o = 0; o < s.outer; ++o) {
    S* best = y.data() + o * s.inner;
    Index* best_j = arg.data() + o * s.inner;
    const S* base = xv + o * s.extent * s.inner;
    std::copy(base, base + s.inner, best);
    for (Index j = 1; j < s.extent; ++j) {
      const S* row = base + j * s.inner;
      for (Index c = 0; c < s.inner; ++c) {
        if (row[c] > best[c]) {  // strict: ties keep the lowest index
          best[c] = row[c];
          best_j[c] = j;
        }
      }
    }
  }
  return Tensor<S>::make_result(s.reduced, std::move(y), {x}, [s, arg = std::move(arg)](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) {
      for (Index o = 0; o < s.outer; ++o) {
        for (Index c = 0; c < s.inner; ++c) {
          const Index k = o * s.inner + c;
          (*g)[(o * s.extent + arg[static_cast<std::size_t>(k)]) * s.inner + c] += self.grad[k];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> softmax_axis(const Tensor<S>& x, Index axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  ArrayX<S> y(x.size());
  const bool faulty = debug::softmax_fault();
  for (Index o = 0; o < s.outer; ++o) {
    ConstArrayMap<S> in(x.value().data() + o * s.extent * s.inner, s.extent, s.inner);
    ArrayMap<S> out(y.data() + o * s.extent * s.inner, s.extent, s.inner);
    const RowArray<S> m = in.colwise().maxCoeff();
    out = (in.rowwise() - m).exp();
    if (!faulty) {
      const RowArray<S> z = out.colwise().sum();
      out.rowwise() /= z;
    }
  }
  return Tensor<S>::make_result(x.shape(), std::move(y), {x}, [s](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) {
      for (Index o = 0; o < s.outer; ++o) {
        const Index off = o * s.extent * s.inner;
        ConstArrayMap<S> yv(self.value.data() + off, s.extent, s.inner);
        ConstArrayMap<S> gy(self.grad.data() + off, s.extent, s.inner);
        ArrayMap<S> gx(g->data() + off, s.extent, s.inner);
        const RowArray<S> dot = (gy * yv).colwise().sum();
        gx += yv * (gy.rowwise() - dot);
      }
    }
  });
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  ArrayX<S> y(1);
  y[0] = x.value().sum();
  return Tensor<S>::make_result({}, std::move(y), {x}, [](detail::Node<S>& self) {
    if (auto* g = grad_of(self, 0)) *g += self.grad[0];
  });
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& src, const IndexMatrix& idx) {
  if (src.ndim() != 2) throw DimensionError("gather_rows: source must be 2-d, got " + shape_string(src.shape()));
  const Index m = src.dim(0);
  const Index d = src.dim(1);
  for (Index i = 0; i < idx.rows(); ++i) {
    for (Index j = 0; j < idx.cols(); ++j) {
      const Index r = idx(i, j);
      if (r < 0 || r >= m) {
        throw IndexError("gather_rows: index " + std::to_string(r) + " at (" + std::to_string(i) + "," +
                         std::to_string(j) + ") outside [0," + std::to_string(m) + ")");
      }
    }
  }
  const Index n = idx.size();
  ArrayX<S> y(n * d);
  const S* sv = src.value().data();
  for (Index e = 0; e < n; ++e) {
    const S* row = sv + idx.data()[e] * d;
    std::copy(row, row + d, y.data() + e * d);
  }
  return Tensor<S>::make_result({idx.rows(), idx.cols(), d}, std::move(y), {src},
                                [idx, d](detail::Node<S>& self) {
                                  if (auto* g = grad_of(self, 0)) {
                                    const Index n = idx.size();
                                    for (Index e = 0; e < n; ++e) {
                                      g->segment(idx.data()[e] * d, d) += self.grad.segment(e * d, d);
                                    }
                                  }
                                });
}

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, BatchNormStats<S>& stats,
                     Mode mode, S eps, S momentum) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (gamma.size() != d || beta.size() != d || stats.running_mean.size() != d || stats.running_var.size() != d) {
    throw DimensionError("batch_norm: input " + shape_string(x.shape()) + " vs scale " +
                         shape_string(gamma.shape()) + " / shift " + shape_string(beta.shape()));
  }
  ConstArrayMap<S> xv(x.value().data(), n, d);
  const RowArray<S> g = gamma.value().transpose();
  const RowArray<S> b = beta.value().transpose();

  RowArray<S> inv_std;
  Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xhat;
  if (mode == Mode::kTrain) {
    if (n < 2) throw StatisticsError("batch_norm: train mode needs at least 2 rows, got " + std::to_string(n));
    const RowArray<S> mean = xv.colwise().mean();
    xhat = xv.rowwise() - mean;
    const RowArray<S> var = xhat.square().colwise().mean();
    inv_std = (var + eps).rsqrt();
    xhat.rowwise() *= inv_std;
    stats.running_mean = (S(1) - momentum) * stats.running_mean + momentum * mean.transpose();
    stats.running_var =
        (S(1) - momentum) * stats.running_var + momentum * var.transpose() * (S(n) / S(n - 1));
  } else {
    inv_std = (stats.running_var.transpose() + eps).rsqrt();
    xhat = (xv.rowwise() - stats.running_mean.transpose()).rowwise() * inv_std;
  }
  Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> y = (xhat.rowwise() * g).rowwise() + b;

  const bool train = mode == Mode::kTrain;
  return Tensor<S>::make_result(
      x.shape(), Eigen::Map<ArrayX<S>>(y.data(), y.size()), {x, gamma, beta},
      [n, d, train, inv_std, xhat = std::move(xhat)](detail::Node<S>& self) {
        ConstArrayMap<S> gy(self.grad.data(), n, d);
        if (auto* gg = grad_of(self, 1)) *gg += (gy * xhat).colwise().sum().transpose();
        if (auto* gb = grad_of(self, 2)) *gb += gy.colwise().sum().transpose();
        if (auto* gx = grad_of(self, 0)) {
          const RowArray<S> scale = self.parents[1]->value.transpose();
          ArrayMap<S> out(gx->data(), n, d);
          if (train) {
            const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gxhat = gy.rowwise() * scale;
            const RowArray<S> sum_g = gxhat.colwise().sum();
            const RowArray<S> sum_gx = (gxhat * xhat).colwise().sum();
            out += (((gxhat * S(n)).rowwise() - sum_g) - (xhat.rowwise() * sum_gx)).rowwise() * (inv_std / S(n));
          } else {
            out += gy.rowwise() * (scale * inv_std);
          }
        }
      });
}

template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::span<const int> labels, Reduction reduction) {
  if (logits.ndim() != 2) {
    throw DimensionError("cross_entropy: logits must be 2-d, got " + shape_string(logits.shape()));
  }
  const Index n = logits.dim(0);
  const Index c = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " rows");
  }
  for (Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= c) {
      throw DataError("label " + std::to_string(label) + " of cell " + std::to_string(i) + " outside [0," +
                      std::to_string(c) + ")");
    }
  }
  ConstArrayMap<S> z(logits.value().data(), n, c);
  Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> prob(n, c);
  S total = 0;
  for (Index i = 0; i < n; ++i) {
    const S m = z.row(i).maxCoeff();
    prob.row(i) = (z.row(i) - m).exp();
    const S sum = prob.row(i).sum();
    prob.row(i) /= sum;
    const S lse = m + std::log(sum);
    total += lse - z(i, labels[static_cast<std::size_t>(i)]);
  }
  const S scale = reduction == Reduction::kMean ? S(1) / S(n) : S(1);
  ArrayX<S> y(1);
  y[0] = total * scale;
  std::vector<int> lab(labels.begin(), labels.end());
  return Tensor<S>::make_result({}, std::move(y), {logits},
                                [n, c, scale, prob = std::move(prob), lab = std::move(lab)](detail::Node<S>& self) {
                                  if (auto* g = grad_of(self, 0)) {
                                    ArrayMap<S> gz(g->data(), n, c);
                                    const S up = self.grad[0] * scale;
                                    gz += prob * up;
                                    for (Index i = 0; i < n; ++i) gz(i, lab[static_cast<std::size_t>(i)]) -= up;
                                  }
                                });
}

#define TSGC_INSTANTIATE_OPS(S)                                                                            \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                              \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                              \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                              \
  template Tensor<S> concat(std::span<const Tensor<S>>, Index);                                            \
  template Tensor<S> affine(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> leaky_relu(const Tensor<S>&, S);                                                      \
  template Tensor<S> slice_rows(const Tensor<S>&, Index, Index);                                           \
  template Tensor<S> sum_axis(const Tensor<S>&, Index);                                                    \
  template Tensor<S> mean_axis(const Tensor<S>&, Index);                                                   \
  template Tensor<S> max_axis(const Tensor<S>&, Index);                                                    \
  template Tensor<S> softmax_axis(const Tensor<S>&, Index);                                                \
  template Tensor<S> sum_all(const Tensor<S>&);                                                            \
  template Tensor<S> gather_rows(const Tensor<S>&, const IndexMatrix&);                                    \
  template Tensor<S> batch_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, BatchNormStats<S>&, \
                                Mode, S, S);                                                               \
  template Tensor<S> cross_entropy(const Tensor<S>&, std::span<const int>, Reduction);

TSGC_INSTANTIATE_OPS(float)
TSGC_INSTANTIATE_OPS(double)

}  // namespace tsgc
