#pragma once

// Central-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ojkd/tensor.hpp"

namespace ojkd {

/// Compares the analytic gradient of a scalar function with respect to every
/// tensor in `wrt` against central differences. `f` is re-evaluated after
/// perturbing one coordinate at a time, so it must rebuild its graph from the
/// current values of `wrt` on every call.
///
/// Returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
inline double finite_difference_check(const std::function<Tensor<double>()>& f,
                                      std::vector<Tensor<double>> wrt, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_check: epsilon must be > 0");
  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const auto y = f();
  if (y.size() != 1) {
    throw ShapeError("finite_difference_check", "function output " + shape_str(y.shape()) +
                                                    " is not scalar");
  }
  backward(y);

  double worst = 0.0;
  for (auto& t : wrt) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + epsilon;
      const double up = f().item();
      values[i] = orig - epsilon;
      const double down = f().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

/// Single-input convenience form.
inline double finite_difference_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                      Tensor<double> x, double epsilon) {
  return finite_difference_check([&] { return f(x); }, std::vector<Tensor<double>>{x}, epsilon);
}

}  // namespace ojkd
