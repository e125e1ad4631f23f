#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tensor.hpp"

namespace rdi::testutil {

// Central finite differences of a scalar-valued function w.r.t. one leaf
// input, compared against the analytic gradient. Returns the worst relative
// error over all elements (absolute error where the denominator is tiny).
inline double grad_check(Tensor& input, const std::function<Tensor()>& loss_fn,
                         double h = 1e-5) {
  input.zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<double> analytic(input.grad().begin(), input.grad().end());

  auto data = input.mutable_data();
  double worst = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + h;
    const double fp = loss_fn().item();
    data[i] = orig - h;
    const double fm = loss_fn().item();
    data[i] = orig;
    const double fd = (fp - fm) / (2 * h);
    const double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-3});
    worst = std::max(worst, std::fabs(fd - analytic[i]) / denom);
  }
  return worst;
}

inline Tensor make_rand(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                        double hi = 1.0, bool requires_grad = true) {
  return rand_uniform(std::move(shape), rng, lo, hi, requires_grad);
}

}  // namespace rdi::testutil
