#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "timeconv/errors.hpp"
#include "timeconv/rng.hpp"

namespace tcn {

using Shape = std::vector<size_t>;

inline std::string shape_str(const Shape& s) {
  if (s.empty()) return "scalar";
  std::ostringstream os;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  return os.str();
}

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

// Dense N-d array, contiguous row-major. Value semantics: tensors own their
// storage and are never aliased. 32-bit floats are used for training and
// inference; the same code instantiates with double for gradient checking.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_numel(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (shape_numel(shape_) != data_.size())
      throw shape_error("tensor data size " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
  }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

  static Tensor uniform(Shape shape, Rng& rng, T lo = T(-1), T hi = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = T(rng.uniform(double(lo), double(hi)));
    return t;
  }

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t dim(size_t i) const { return shape_.at(i); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  template <typename... Ix>
  T& at(Ix... ix) {
    return data_[offset(ix...)];
  }
  template <typename... Ix>
  const T& at(Ix... ix) const {
    return data_[offset(ix...)];
  }

  // Row-major linear offset of a multi-index.
  template <typename... Ix>
  size_t offset(Ix... ix) const {
    const size_t idx[] = {static_cast<size_t>(ix)...};
    const size_t r = sizeof...(ix);
    if (r != shape_.size())
      throw shape_error("index rank " + std::to_string(r) +
                        " does not match tensor rank " +
                        std::to_string(shape_.size()));
    size_t off = 0;
    for (size_t i = 0; i < r; ++i) off = off * shape_[i] + idx[i];
    return off;
  }

  // Same data, new extents; element count must be preserved.
  Tensor reshaped(Shape shape) const& {
    Tensor t;
    t.shape_ = std::move(shape);
    t.validate_shape();
    if (shape_numel(t.shape_) != data_.size())
      throw shape_error("cannot reshape " + shape_str(shape_) + " to " +
                        shape_str(t.shape_) + ": element counts differ");
    t.data_ = data_;
    return t;
  }
  Tensor reshaped(Shape shape) && {
    if (shape_numel(shape) != data_.size())
      throw shape_error("cannot reshape " + shape_str(shape_) + " to " +
                        shape_str(shape) + ": element counts differ");
    Tensor t;
    t.shape_ = std::move(shape);
    t.validate_shape();
    t.data_ = std::move(data_);
    return t;
  }

  Tensor flattened() const { return reshaped({data_.size()}); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t;
    std::vector<U> d(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
    t = Tensor<U>(shape_, std::move(d));
    return t;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

 private:
  void validate_shape() const {
    for (size_t d : shape_)
      if (d == 0) throw shape_error("zero extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
using EigenRowMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const EigenRowMat<T>> as_matrix(const Tensor<T>& t, size_t rows,
                                           size_t cols) {
  return {t.data(), static_cast<Eigen::Index>(rows),
          static_cast<Eigen::Index>(cols)};
}

template <typename T>
Eigen::Map<EigenRowMat<T>> as_matrix(Tensor<T>& t, size_t rows, size_t cols) {
  return {t.data(), static_cast<Eigen::Index>(rows),
          static_cast<Eigen::Index>(cols)};
}

// Standard matrix product of [M,K] x [K,N]. Delegates to Eigen's blocked
// kernel; run-to-run deterministic for a fixed build. The reference path used
// by the tests accumulates strictly left to right, and this path is required
// to agree with it within 1e-5 relative.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw shape_error("matmul expects rank-2 tensors, got " +
                      shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw shape_error("matmul: inner dimensions disagree: " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out({a.dim(0), b.dim(1)});
  as_matrix(out, a.dim(0), b.dim(1)).noalias() =
      as_matrix(a, a.dim(0), a.dim(1)) * as_matrix(b, b.dim(0), b.dim(1));
  return out;
}

enum class ReduceMode { sum, mean };

// Reduce over the given axes. Reduced extents are dropped, or kept as 1 when
// keepdims is set; reducing every axis yields shape {1}. Accumulation visits
// elements in row-major order.
template <typename T>
Tensor<T> reduce(const Tensor<T>& x, std::vector<size_t> axes, ReduceMode mode,
                 bool keepdims = false) {
  const size_t r = x.rank();
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (size_t a : axes)
    if (a >= r)
      throw shape_error("reduce: axis " + std::to_string(a) +
                        " out of range for shape " + shape_str(x.shape()));

  std::vector<bool> reduced(r, false);
  for (size_t a : axes) reduced[a] = true;

  Shape out_shape;
  for (size_t i = 0; i < r; ++i) {
    if (!reduced[i])
      out_shape.push_back(x.dim(i));
    else if (keepdims)
      out_shape.push_back(1);
  }
  if (out_shape.empty()) out_shape = {1};

  Tensor<T> out(out_shape);
  // Strides of the output in terms of input coordinates.
  std::vector<size_t> out_stride(r, 0);
  size_t stride = 1;
  for (size_t i = r; i-- > 0;) {
    if (!reduced[i]) {
      out_stride[i] = stride;
      stride *= x.dim(i);
    }
  }

  std::vector<size_t> coord(r, 0);
  size_t count = 1;
  for (size_t a : axes) count *= x.dim(a);
  for (size_t lin = 0; lin < x.size(); ++lin) {
    size_t o = 0;
    for (size_t i = 0; i < r; ++i) o += coord[i] * out_stride[i];
    out[o] += x[lin];
    for (size_t i = r; i-- > 0;) {
      if (++coord[i] < x.dim(i)) break;
      coord[i] = 0;
    }
  }
  if (mode == ReduceMode::mean) {
    const T inv = T(1) / T(count);
    for (auto& v : out) v *= inv;
  }
  return out;
}

template <typename T>
T sum_of(const Tensor<T>& x) {
  T s = 0;
  for (const T& v : x) s += v;
  return s;
}

}  // namespace tcn
