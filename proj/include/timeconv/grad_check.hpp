#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "timeconv/layers.hpp"

namespace tcn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;   // the parameter (or "input") holding the max
};

inline double grad_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Central finite differences against the analytic backward pass, on the
// scalar loss sum(forward(x)). Instantiate the layer with double: the 64-bit
// build mode exists for exactly this. Returns the max relative error over
// every learnable parameter element and every input element, with
// denominator max(|analytic|, |numeric|, 1e-8).
inline GradCheckReport grad_check_report(Layer<double>& layer,
                                         const Tensor<double>& input,
                                         double eps, Mode mode = Mode::train) {
  if (!(eps >= 1e-6 && eps <= 1e-3))
    throw value_error("grad_check: eps must lie in [1e-6, 1e-3]");

  auto params = layer.params();

  // Batchnorm running stats drift as the finite-difference loop re-runs
  // forward; snapshot and restore them so the check is side-effect free.
  std::vector<Tensor<double>> frozen;
  for (auto& p : params)
    if (!p.learnable) frozen.push_back(*p.value);

  layer.zero_grads();
  Tensor<double> y = layer.forward(input, mode);
  Tensor<double> dy = Tensor<double>::ones(y.shape());
  Tensor<double> dx = layer.backward(dy);

  std::vector<Tensor<double>> analytic;
  for (auto& p : params) analytic.push_back(*p.grad);

  Tensor<double> x = input;
  auto loss_at = [&]() {
    Tensor<double> out = layer.forward(x, mode);
    double s = 0;
    for (double v : out) s += v;
    return s;
  };

  GradCheckReport rep;
  auto consider = [&](double a, double n, const std::string& where) {
    if (!std::isfinite(a) || !std::isfinite(n))
      throw numeric_error("grad_check: non-finite gradient at " + where);
    const double e = grad_rel_error(a, n);
    if (e > rep.max_rel_error) {
      rep.max_rel_error = e;
      rep.worst = where;
    }
  };

  for (size_t pi = 0; pi < params.size(); ++pi) {
    if (!params[pi].learnable) continue;
    Tensor<double>& v = *params[pi].value;
    for (size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + eps;
      const double lp = loss_at();
      v[i] = orig - eps;
      const double lm = loss_at();
      v[i] = orig;
      consider(analytic[pi][i], (lp - lm) / (2 * eps),
               params[pi].name + "[" + std::to_string(i) + "]");
    }
  }
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double lp = loss_at();
    x[i] = orig - eps;
    const double lm = loss_at();
    x[i] = orig;
    consider(dx[i], (lp - lm) / (2 * eps), "input[" + std::to_string(i) + "]");
  }

  size_t fi = 0;
  for (auto& p : params)
    if (!p.learnable) *p.value = frozen[fi++];

  return rep;
}

inline double grad_check(Layer<double>& layer, const Tensor<double>& input,
                         double eps, Mode mode = Mode::train) {
  return grad_check_report(layer, input, eps, mode).max_rel_error;
}

}  // namespace tcn
