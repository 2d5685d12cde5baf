#pragma once

#include <functional>
#include <span>

#include "tsgc/tensor.hpp"

namespace tsgc {

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// `f` must rebuild its graph from the current values of `inputs` on every
/// call; each input element is perturbed in place by +/- `step` and restored.
/// Returns max over all elements of |analytic - numeric| / max(1, |numeric|).
/// Throws UsageError when `f` does not return a single-element tensor.
double gradient_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> inputs,
                      double step = 1e-5);

}  // namespace tsgc
