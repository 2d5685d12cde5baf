#include "tsgc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tsgc/errors.hpp"

namespace tsgc {

double gradient_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> inputs, double step) {
  for (Tensor<double>& t : inputs) t.zero_grad();
  const Tensor<double> out = f();
  if (out.size() != 1) throw UsageError("gradient_check: function output has shape " + shape_string(out.shape()));
  out.backward();

  double worst = 0.0;
  for (Tensor<double>& t : inputs) {
    const Eigen::ArrayXd analytic = t.has_grad() ? t.grad() : Eigen::ArrayXd::Zero(t.size());
    for (Index k = 0; k < t.size(); ++k) {
      const double saved = t.mutable_value()[k];
      t.mutable_value()[k] = saved + step;
      const double plus = f().item();
      t.mutable_value()[k] = saved - step;
      const double minus = f().item();
      t.mutable_value()[k] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      worst = std::max(worst, std::abs(analytic[k] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace tsgc
