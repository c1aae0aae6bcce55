#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "timeconv/layers.hpp"

namespace tcn {

// An ordered stack of layers plus the input contract it was built for.
// Immutable during inference; training mutates parameters under a
// single-writer contract.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(std::string arch, Shape sample_shape, size_t num_classes)
      : arch_(std::move(arch)), sample_shape_(std::move(sample_shape)),
        num_classes_(num_classes) {}

  Network& add(LayerPtr<T> l) {
    layers_.push_back(std::move(l));
    return *this;
  }

  const std::string& arch() const { return arch_; }
  const Shape& sample_shape() const { return sample_shape_; }
  size_t num_classes() const { return num_classes_; }
  size_t num_layers() const { return layers_.size(); }
  Layer<T>& layer(size_t i) { return *layers_[i]; }

  // Validates the declared input contract on every call.
  Tensor<T> forward(const Tensor<T>& batch, Mode mode = Mode::eval) {
    if (batch.rank() != sample_shape_.size() + 1)
      contract_error(batch);
    for (size_t i = 0; i < sample_shape_.size(); ++i)
      if (batch.dim(i + 1) != sample_shape_[i]) contract_error(batch);
    Tensor<T> cur = batch;
    for (auto& l : layers_) cur = l->forward(cur, mode);
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& dlogits) {
    Tensor<T> cur = dlogits;
    for (size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur);
    return cur;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->collect_params(
          "L" + std::to_string(i) + "_" + layers_[i]->kind(), out);
    return out;
  }

  void zero_grads() {
    for (auto& p : params()) p.grad->fill(T(0));
  }

  void initialize(Rng& rng) {
    for (auto& l : layers_) l->init_params(rng);
  }

  // Learnable scalars only: weights, biases, gamma, beta. Running statistics
  // are excluded here and reported by count_params_total instead.
  size_t count_params() {
    size_t n = 0;
    for (auto& p : params())
      if (p.learnable) n += p.value->size();
    return n;
  }

  // Learnable plus running statistics; the convention most toolchains print
  // in their model summaries, and the one to use when reconciling published
  // totals.
  size_t count_params_total() {
    size_t n = 0;
    for (auto& p : params()) n += p.value->size();
    return n;
  }

  bool params_finite() {
    for (auto& p : params())
      if (!p.value->all_finite()) return false;
    return true;
  }

 private:
  [[noreturn]] void contract_error(const Tensor<T>& batch) const {
    throw shape_error("network '" + arch_ + "': expected input Bx" +
                      shape_str(sample_shape_) + ", got " +
                      shape_str(batch.shape()));
  }

  std::string arch_;
  Shape sample_shape_;
  size_t num_classes_ = 0;
  std::vector<LayerPtr<T>> layers_;
};

}  // namespace tcn
