#pragma once

#include <cmath>
#include <vector>

#include "timeconv/tensor.hpp"

namespace tcn {

template <typename T>
struct LossAndGrad {
  T loss;
  Tensor<T> grad;   // d loss / d logits, already divided by the batch size
};

// Mean categorical cross-entropy over the batch, computed from max-subtracted
// softmax. grad = (softmax - onehot) / B.
template <typename T>
LossAndGrad<T> softmax_cross_entropy(const Tensor<T>& logits,
                                     const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw shape_error("softmax_cross_entropy: expected BxK logits, got " +
                      shape_str(logits.shape()));
  const size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B)
    throw shape_error("softmax_cross_entropy: " + std::to_string(labels.size()) +
                      " labels for batch of " + std::to_string(B));
  Tensor<T> grad({B, K});
  double total = 0;
  for (size_t b = 0; b < B; ++b) {
    const int lab = labels[b];
    if (lab < 0 || size_t(lab) >= K)
      throw value_error("softmax_cross_entropy: label " + std::to_string(lab) +
                        " out of range [0," + std::to_string(K) + ")");
    const T* row = logits.data() + b * K;
    double mx = double(row[0]);
    for (size_t k = 1; k < K; ++k) mx = std::max(mx, double(row[k]));
    double sum = 0;
    for (size_t k = 0; k < K; ++k) sum += std::exp(double(row[k]) - mx);
    const double log_sum = std::log(sum);
    total -= (double(row[lab]) - mx) - log_sum;
    for (size_t k = 0; k < K; ++k) {
      double p = std::exp(double(row[k]) - mx) / sum;
      if (size_t(lab) == k) p -= 1.0;
      grad[b * K + k] = T(p / double(B));
    }
  }
  return {T(total / double(B)), std::move(grad)};
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2)
    throw shape_error("softmax: expected BxK logits");
  const size_t B = logits.dim(0), K = logits.dim(1);
  Tensor<T> out({B, K});
  for (size_t b = 0; b < B; ++b) {
    const T* row = logits.data() + b * K;
    double mx = double(row[0]);
    for (size_t k = 1; k < K; ++k) mx = std::max(mx, double(row[k]));
    double sum = 0;
    for (size_t k = 0; k < K; ++k) sum += std::exp(double(row[k]) - mx);
    for (size_t k = 0; k < K; ++k)
      out[b * K + k] = T(std::exp(double(row[k]) - mx) / sum);
  }
  return out;
}

template <typename T>
int argmax_row(const Tensor<T>& t, size_t row) {
  const size_t K = t.dim(1);
  const T* p = t.data() + row * K;
  int best = 0;
  for (size_t k = 1; k < K; ++k)
    if (p[k] > p[best]) best = int(k);
  return best;
}

}  // namespace tcn
