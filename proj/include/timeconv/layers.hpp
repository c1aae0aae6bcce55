#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "timeconv/errors.hpp"
#include "timeconv/rng.hpp"
#include "timeconv/tensor.hpp"

namespace tcn {

enum class Mode { train, eval };

// Named view of one parameter tensor and its gradient. Running statistics
// (batchnorm) are carried with learnable=false: they are serialized but not
// trained or counted as learnable.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
  bool learnable;
};

// A layer owns its parameters and the activation state cached by the last
// train-mode forward. Forward passes are pure with respect to inputs;
// eval-mode forwards cache nothing, so concurrent eval calls on distinct
// layer instances are safe. backward() accumulates into parameter gradients
// and returns the input gradient.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect_params(const std::string& prefix,
                              std::vector<ParamRef<T>>& out) {}
  virtual void init_params(Rng& rng) {}

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    collect_params(kind(), out);
    return out;
  }
  void zero_grads() {
    for (auto& p : params()) p.grad->fill(T(0));
  }

 protected:
  [[noreturn]] void no_cache() const {
    throw error(kind() + ": backward called without a train-mode forward");
  }
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

// Fan-in scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
void fan_in_uniform(Tensor<T>& w, size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in));
  for (auto& v : w) v = T(rng.uniform(-limit, limit));
}

template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(size_t in, size_t out, bool bias = true)
      : in_(in), out_(out), has_bias_(bias), w_({in, out}), dw_({in, out}) {
    if (has_bias_) {
      b_ = Tensor<T>({out});
      db_ = Tensor<T>({out});
    }
  }

  std::string kind() const override { return "dense"; }

  void init_params(Rng& rng) override { fan_in_uniform(w_, in_, rng); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw shape_error("dense: expected Bx" + std::to_string(in_) + ", got " +
                        shape_str(x.shape()));
    if (mode == Mode::train) x_ = x;
    has_cache_ = (mode == Mode::train);
    Tensor<T> y = matmul(x, w_);
    if (has_bias_) {
      const size_t B = x.dim(0);
      for (size_t b = 0; b < B; ++b)
        for (size_t j = 0; j < out_; ++j) y[b * out_ + j] += b_[j];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    const size_t B = x_.dim(0);
    auto xm = as_matrix(x_, B, in_);
    auto gm = as_matrix(dy, B, out_);
    as_matrix(dw_, in_, out_).noalias() += xm.transpose() * gm;
    if (has_bias_) {
      for (size_t b = 0; b < B; ++b)
        for (size_t j = 0; j < out_; ++j) db_[j] += dy[b * out_ + j];
    }
    Tensor<T> dx({B, in_});
    as_matrix(dx, B, in_).noalias() = gm * as_matrix(w_, in_, out_).transpose();
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + "/weight", &w_, &dw_, true});
    if (has_bias_) out.push_back({prefix + "/bias", &b_, &db_, true});
  }

 private:
  size_t in_, out_;
  bool has_bias_;
  Tensor<T> w_, dw_, b_, db_;
  Tensor<T> x_;
  bool has_cache_ = false;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y = x;
    for (auto& v : y) v = v > T(0) ? v : T(0);
    if (mode == Mode::train) {
      mask_ = Tensor<T>(x.shape());
      for (size_t i = 0; i < x.size(); ++i) mask_[i] = x[i] > T(0) ? T(1) : T(0);
    }
    has_cache_ = (mode == Mode::train);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
    return dx;
  }

 private:
  Tensor<T> mask_;
  bool has_cache_ = false;
};

// Clipped rectifier, min(max(x,0),6).
template <typename T>
class ReLU6 : public Layer<T> {
 public:
  std::string kind() const override { return "relu6"; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y = x;
    for (auto& v : y) v = v < T(0) ? T(0) : (v > T(6) ? T(6) : v);
    if (mode == Mode::train) {
      mask_ = Tensor<T>(x.shape());
      for (size_t i = 0; i < x.size(); ++i)
        mask_[i] = (x[i] > T(0) && x[i] < T(6)) ? T(1) : T(0);
    }
    has_cache_ = (mode == Mode::train);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
    return dx;
  }

 private:
  Tensor<T> mask_;
  bool has_cache_ = false;
};

// Per-channel normalization over every other axis of a [B,C,...] tensor.
// Train mode normalizes with batch statistics (biased variance) and folds
// them into the running estimates; eval mode applies the running affine map.
template <typename T>
class BatchNorm : public Layer<T> {
 public:
  explicit BatchNorm(size_t channels, double eps = 1e-3, double momentum = 0.99)
      : c_(channels),
        eps_(eps),
        momentum_(momentum),
        gamma_(Tensor<T>::ones({channels})),
        dgamma_({channels}),
        beta_({channels}),
        dbeta_({channels}),
        run_mean_({channels}),
        run_var_(Tensor<T>::ones({channels})),
        run_mean_grad_({channels}),
        run_var_grad_({channels}) {
    if (eps <= 0) throw value_error("batchnorm epsilon must be positive");
  }

  std::string kind() const override { return "batchnorm"; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() < 2 || x.dim(1) != c_)
      throw shape_error("batchnorm: expected channel extent " +
                        std::to_string(c_) + ", got " + shape_str(x.shape()));
    const size_t B = x.dim(0);
    size_t inner = 1;
    for (size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
    const size_t m = B * inner;
    if (mode == Mode::train && m == 0)
      throw value_error("batchnorm: empty batch in train mode");

    Tensor<T> y(x.shape());
    std::vector<double> mean(c_), var(c_), inv_std(c_);
    if (mode == Mode::train) {
      for (size_t c = 0; c < c_; ++c) {
        double s = 0;
        for (size_t b = 0; b < B; ++b) {
          const T* p = x.data() + (b * c_ + c) * inner;
          for (size_t j = 0; j < inner; ++j) s += double(p[j]);
        }
        mean[c] = s / double(m);
        double v = 0;
        for (size_t b = 0; b < B; ++b) {
          const T* p = x.data() + (b * c_ + c) * inner;
          for (size_t j = 0; j < inner; ++j) {
            const double d = double(p[j]) - mean[c];
            v += d * d;
          }
        }
        var[c] = v / double(m);
        run_mean_[c] = T(momentum_ * double(run_mean_[c]) + (1 - momentum_) * mean[c]);
        run_var_[c] = T(momentum_ * double(run_var_[c]) + (1 - momentum_) * var[c]);
      }
    } else {
      for (size_t c = 0; c < c_; ++c) {
        mean[c] = double(run_mean_[c]);
        var[c] = double(run_var_[c]);
      }
    }
    for (size_t c = 0; c < c_; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps_);

    const bool cache = (mode == Mode::train);
    if (cache) xhat_ = Tensor<T>(x.shape());
    for (size_t b = 0; b < B; ++b) {
      for (size_t c = 0; c < c_; ++c) {
        const T* p = x.data() + (b * c_ + c) * inner;
        T* q = y.data() + (b * c_ + c) * inner;
        T* h = cache ? xhat_.data() + (b * c_ + c) * inner : nullptr;
        const double g = double(gamma_[c]), bt = double(beta_[c]);
        for (size_t j = 0; j < inner; ++j) {
          const double xh = (double(p[j]) - mean[c]) * inv_std[c];
          if (cache) h[j] = T(xh);
          q[j] = T(g * xh + bt);
        }
      }
    }
    if (cache) {
      inv_std_ = inv_std;
      group_ = m;
      inner_ = inner;
    }
    has_cache_ = cache;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    const size_t B = dy.dim(0), inner = inner_;
    const double m = double(group_);
    Tensor<T> dx(dy.shape());
    for (size_t c = 0; c < c_; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (size_t b = 0; b < B; ++b) {
        const size_t base = (b * c_ + c) * inner;
        for (size_t j = 0; j < inner; ++j) {
          sum_dy += double(dy[base + j]);
          sum_dy_xhat += double(dy[base + j]) * double(xhat_[base + j]);
        }
      }
      dbeta_[c] += T(sum_dy);
      dgamma_[c] += T(sum_dy_xhat);
      const double k = double(gamma_[c]) * inv_std_[c] / m;
      for (size_t b = 0; b < B; ++b) {
        const size_t base = (b * c_ + c) * inner;
        for (size_t j = 0; j < inner; ++j) {
          dx[base + j] = T(k * (m * double(dy[base + j]) - sum_dy -
                                double(xhat_[base + j]) * sum_dy_xhat));
        }
      }
    }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + "/gamma", &gamma_, &dgamma_, true});
    out.push_back({prefix + "/beta", &beta_, &dbeta_, true});
    out.push_back({prefix + "/running_mean", &run_mean_, &run_mean_grad_, false});
    out.push_back({prefix + "/running_var", &run_var_, &run_var_grad_, false});
  }

 private:
  size_t c_;
  double eps_, momentum_;
  Tensor<T> gamma_, dgamma_, beta_, dbeta_;
  Tensor<T> run_mean_, run_var_;
  Tensor<T> run_mean_grad_, run_var_grad_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  size_t group_ = 0, inner_ = 0;
  bool has_cache_ = false;
};

// Mean over every axis after [B,C]; works for 2D maps and T,H,W volumes.
template <typename T>
class GlobalAvgPool : public Layer<T> {
 public:
  std::string kind() const override { return "global_avg_pool"; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() < 3)
      throw shape_error("global_avg_pool: expected rank >= 3, got " +
                        shape_str(x.shape()));
    const size_t B = x.dim(0), C = x.dim(1);
    size_t inner = 1;
    for (size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
    Tensor<T> y({B, C});
    for (size_t b = 0; b < B; ++b)
      for (size_t c = 0; c < C; ++c) {
        double s = 0;
        const T* p = x.data() + (b * C + c) * inner;
        for (size_t j = 0; j < inner; ++j) s += double(p[j]);
        y[b * C + c] = T(s / double(inner));
      }
    if (mode == Mode::train) in_shape_ = x.shape();
    has_cache_ = (mode == Mode::train);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    const size_t B = in_shape_[0], C = in_shape_[1];
    size_t inner = 1;
    for (size_t i = 2; i < in_shape_.size(); ++i) inner *= in_shape_[i];
    Tensor<T> dx(in_shape_);
    const T scale = T(1) / T(inner);
    for (size_t b = 0; b < B; ++b)
      for (size_t c = 0; c < C; ++c) {
        const T g = dy[b * C + c] * scale;
        T* p = dx.data() + (b * C + c) * inner;
        for (size_t j = 0; j < inner; ++j) p[j] = g;
      }
    return dx;
  }

 private:
  Shape in_shape_;
  bool has_cache_ = false;
};

// 2D max pooling with explicit per-side padding (padding reads as -inf).
template <typename T>
class MaxPool2d : public Layer<T> {
 public:
  MaxPool2d(size_t k, size_t stride, size_t pad_top = 0, size_t pad_bottom = 0,
            size_t pad_left = 0, size_t pad_right = 0)
      : k_(k), s_(stride), pt_(pad_top), pb_(pad_bottom), pl_(pad_left),
        pr_(pad_right) {}

  std::string kind() const override { return "maxpool2d"; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() != 4)
      throw shape_error("maxpool2d: expected BxCxHxW, got " +
                        shape_str(x.shape()));
    const size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const size_t oh = (H + pt_ + pb_ - k_) / s_ + 1;
    const size_t ow = (W + pl_ + pr_ - k_) / s_ + 1;
    Tensor<T> y({B, C, oh, ow});
    if (mode == Mode::train) {
      argmax_.assign(y.size(), size_t(-1));
      in_shape_ = x.shape();
    }
    size_t o = 0;
    for (size_t b = 0; b < B; ++b)
      for (size_t c = 0; c < C; ++c) {
        const T* plane = x.data() + (b * C + c) * H * W;
        for (size_t oy = 0; oy < oh; ++oy)
          for (size_t ox = 0; ox < ow; ++ox, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            size_t best_ix = size_t(-1);
            for (size_t ky = 0; ky < k_; ++ky) {
              const ptrdiff_t iy = ptrdiff_t(oy * s_ + ky) - ptrdiff_t(pt_);
              if (iy < 0 || iy >= ptrdiff_t(H)) continue;
              for (size_t kx = 0; kx < k_; ++kx) {
                const ptrdiff_t ix = ptrdiff_t(ox * s_ + kx) - ptrdiff_t(pl_);
                if (ix < 0 || ix >= ptrdiff_t(W)) continue;
                const T v = plane[size_t(iy) * W + size_t(ix)];
                if (v > best) {
                  best = v;
                  best_ix = (b * C + c) * H * W + size_t(iy) * W + size_t(ix);
                }
              }
            }
            y[o] = best;
            if (mode == Mode::train) argmax_[o] = best_ix;
          }
      }
    has_cache_ = (mode == Mode::train);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    Tensor<T> dx(in_shape_);
    for (size_t o = 0; o < dy.size(); ++o)
      if (argmax_[o] != size_t(-1)) dx[argmax_[o]] += dy[o];
    return dx;
  }

 private:
  size_t k_, s_, pt_, pb_, pl_, pr_;
  std::vector<size_t> argmax_;
  Shape in_shape_;
  bool has_cache_ = false;
};

// Ordered composition of layers.
template <typename T>
class Sequential : public Layer<T> {
 public:
  Sequential() = default;

  std::string kind() const override { return "seq"; }

  Sequential& add(LayerPtr<T> l) {
    layers_.push_back(std::move(l));
    return *this;
  }
  size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  Layer<T>& operator[](size_t i) { return *layers_[i]; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, mode);
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> cur = dy;
    for (size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur);
    return cur;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    for (size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->collect_params(
          prefix + "/" + std::to_string(i) + "_" + layers_[i]->kind(), out);
  }

  void init_params(Rng& rng) override {
    for (auto& l : layers_) l->init_params(rng);
  }

 private:
  std::vector<LayerPtr<T>> layers_;
};

// y = act(main(x) + shortcut(x)); an empty shortcut is the identity.
template <typename T>
class Residual : public Layer<T> {
 public:
  Residual(Sequential<T> main, Sequential<T> shortcut, bool relu_after)
      : main_(std::move(main)), shortcut_(std::move(shortcut)),
        relu_after_(relu_after) {}

  std::string kind() const override { return "residual"; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> m = main_.forward(x, mode);
    Tensor<T> s = shortcut_.empty() ? x : shortcut_.forward(x, mode);
    if (m.shape() != s.shape())
      throw shape_error("residual: branch shapes disagree: " +
                        shape_str(m.shape()) + " vs " + shape_str(s.shape()));
    for (size_t i = 0; i < m.size(); ++i) m[i] += s[i];
    if (relu_after_) {
      if (mode == Mode::train) {
        mask_ = Tensor<T>(m.shape());
        for (size_t i = 0; i < m.size(); ++i)
          mask_[i] = m[i] > T(0) ? T(1) : T(0);
      }
      for (auto& v : m) v = v > T(0) ? v : T(0);
    }
    has_cache_ = (mode == Mode::train);
    return m;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    Tensor<T> g = dy;
    if (relu_after_)
      for (size_t i = 0; i < g.size(); ++i) g[i] *= mask_[i];
    Tensor<T> dm = main_.backward(g);
    if (shortcut_.empty()) {
      for (size_t i = 0; i < dm.size(); ++i) dm[i] += g[i];
      return dm;
    }
    Tensor<T> ds = shortcut_.backward(g);
    if (dm.shape() != ds.shape())
      throw shape_error("residual backward: branch gradients disagree");
    for (size_t i = 0; i < dm.size(); ++i) dm[i] += ds[i];
    return dm;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    main_.collect_params(prefix + "/main", out);
    if (!shortcut_.empty()) shortcut_.collect_params(prefix + "/short", out);
  }

  void init_params(Rng& rng) override {
    main_.init_params(rng);
    shortcut_.init_params(rng);
  }

 private:
  Sequential<T> main_, shortcut_;
  bool relu_after_;
  Tensor<T> mask_;
  bool has_cache_ = false;
};

}  // namespace tcn
