#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "timeconv/layers.hpp"

namespace tcn {

inline size_t conv_out_extent(size_t in, size_t k, size_t pad_lo, size_t pad_hi,
                              size_t stride, const char* what) {
  const size_t padded = in + pad_lo + pad_hi;
  if (padded < k || stride == 0)
    throw shape_error(std::string(what) + ": extent " + std::to_string(in) +
                      " with kernel " + std::to_string(k) + " and padding " +
                      std::to_string(pad_lo) + "+" + std::to_string(pad_hi) +
                      " yields no output");
  return (padded - k) / stride + 1;
}

// Keras/TF "same" rule: output = ceil(in/stride), extra padding goes after.
inline std::pair<size_t, size_t> same_padding(size_t in, size_t k,
                                              size_t stride) {
  const size_t out = (in + stride - 1) / stride;
  const size_t needed = (out - 1) * stride + k;
  const size_t total = needed > in ? needed - in : 0;
  return {total / 2, total - total / 2};
}

struct Conv2dSpec {
  size_t in_c = 1, out_c = 1;
  size_t kh = 3, kw = 3;
  size_t sh = 1, sw = 1;
  size_t pt = 0, pb = 0, pl = 0, pr = 0;
  bool bias = true;

  Conv2dSpec& kernel(size_t k) { kh = kw = k; return *this; }
  Conv2dSpec& stride(size_t s) { sh = sw = s; return *this; }
  Conv2dSpec& pad(size_t p) { pt = pb = pl = pr = p; return *this; }
  Conv2dSpec& same(size_t in_h, size_t in_w) {
    std::tie(pt, pb) = same_padding(in_h, kh, sh);
    std::tie(pl, pr) = same_padding(in_w, kw, sw);
    return *this;
  }
};

template <typename T>
using EigenColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// Cross-correlation (no kernel flip), weights [out_c, in_c, kh, kw]. The
// optimized path lowers patches to a column matrix and runs one GEMM per
// batch; tests hold it to the naive loop oracle within 1e-5 relative.
template <typename T>
class Conv2d : public Layer<T> {
 public:
  explicit Conv2d(Conv2dSpec spec)
      : s_(spec),
        w_({spec.out_c, spec.in_c, spec.kh, spec.kw}),
        dw_({spec.out_c, spec.in_c, spec.kh, spec.kw}) {
    if (s_.bias) {
      b_ = Tensor<T>({s_.out_c});
      db_ = Tensor<T>({s_.out_c});
    }
  }

  std::string kind() const override { return "conv2d"; }
  const Conv2dSpec& spec() const { return s_; }

  void init_params(Rng& rng) override {
    fan_in_uniform(w_, s_.in_c * s_.kh * s_.kw, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    check_input(x);
    const size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
    const size_t oh = conv_out_extent(H, s_.kh, s_.pt, s_.pb, s_.sh, "conv2d");
    const size_t ow = conv_out_extent(W, s_.kw, s_.pl, s_.pr, s_.sw, "conv2d");
    const size_t K = s_.in_c * s_.kh * s_.kw, P = oh * ow;

    EigenColMat<T> col(K, P);
    Tensor<T> y({B, s_.out_c, oh, ow});
    Eigen::Map<const EigenRowMat<T>> wm(w_.data(), s_.out_c, K);
    for (size_t b = 0; b < B; ++b) {
      im2col(x, b, oh, ow, col);
      Eigen::Map<EigenRowMat<T>> ym(y.data() + b * s_.out_c * P, s_.out_c, P);
      ym.noalias() = wm * col;
      if (s_.bias)
        for (size_t co = 0; co < s_.out_c; ++co)
          ym.row(co).array() += b_[co];
    }
    if (mode == Mode::train) x_ = x;
    has_cache_ = (mode == Mode::train);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    const size_t B = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
    const size_t oh = dy.dim(2), ow = dy.dim(3);
    const size_t K = s_.in_c * s_.kh * s_.kw, P = oh * ow;

    Tensor<T> dx(x_.shape());
    EigenColMat<T> col(K, P), dcol(K, P);
    Eigen::Map<const EigenRowMat<T>> wm(w_.data(), s_.out_c, K);
    Eigen::Map<EigenRowMat<T>> dwm(dw_.data(), s_.out_c, K);
    for (size_t b = 0; b < B; ++b) {
      Eigen::Map<const EigenRowMat<T>> gm(dy.data() + b * s_.out_c * P,
                                          s_.out_c, P);
      im2col(x_, b, oh, ow, col);
      dwm.noalias() += gm * col.transpose();
      if (s_.bias)
        for (size_t co = 0; co < s_.out_c; ++co) db_[co] += gm.row(co).sum();
      dcol.noalias() = wm.transpose() * gm;
      col2im(dcol, b, oh, ow, dx);
    }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + "/weight", &w_, &dw_, true});
    if (s_.bias) out.push_back({prefix + "/bias", &b_, &db_, true});
  }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != s_.in_c)
      throw shape_error("conv2d: expected Bx" + std::to_string(s_.in_c) +
                        "xHxW, got " + shape_str(x.shape()));
  }

  void im2col(const Tensor<T>& x, size_t b, size_t oh, size_t ow,
              EigenColMat<T>& col) const {
    const size_t H = x.dim(2), W = x.dim(3);
    for (size_t oy = 0; oy < oh; ++oy)
      for (size_t ox = 0; ox < ow; ++ox) {
        T* out = col.data() + (oy * ow + ox) * col.rows();
        size_t r = 0;
        for (size_t ci = 0; ci < s_.in_c; ++ci) {
          const T* plane = x.data() + (b * s_.in_c + ci) * H * W;
          for (size_t ky = 0; ky < s_.kh; ++ky) {
            const ptrdiff_t iy = ptrdiff_t(oy * s_.sh + ky) - ptrdiff_t(s_.pt);
            for (size_t kx = 0; kx < s_.kw; ++kx, ++r) {
              const ptrdiff_t ix = ptrdiff_t(ox * s_.sw + kx) - ptrdiff_t(s_.pl);
              out[r] = (iy >= 0 && iy < ptrdiff_t(H) && ix >= 0 &&
                        ix < ptrdiff_t(W))
                           ? plane[size_t(iy) * W + size_t(ix)]
                           : T(0);
            }
          }
        }
      }
  }

  void col2im(const EigenColMat<T>& dcol, size_t b, size_t oh, size_t ow,
              Tensor<T>& dx) const {
    const size_t H = dx.dim(2), W = dx.dim(3);
    for (size_t oy = 0; oy < oh; ++oy)
      for (size_t ox = 0; ox < ow; ++ox) {
        const T* in = dcol.data() + (oy * ow + ox) * dcol.rows();
        size_t r = 0;
        for (size_t ci = 0; ci < s_.in_c; ++ci) {
          T* plane = dx.data() + (b * s_.in_c + ci) * H * W;
          for (size_t ky = 0; ky < s_.kh; ++ky) {
            const ptrdiff_t iy = ptrdiff_t(oy * s_.sh + ky) - ptrdiff_t(s_.pt);
            for (size_t kx = 0; kx < s_.kw; ++kx, ++r) {
              const ptrdiff_t ix = ptrdiff_t(ox * s_.sw + kx) - ptrdiff_t(s_.pl);
              if (iy >= 0 && iy < ptrdiff_t(H) && ix >= 0 && ix < ptrdiff_t(W))
                plane[size_t(iy) * W + size_t(ix)] += in[r];
            }
          }
        }
      }
  }

  Conv2dSpec s_;
  Tensor<T> w_, dw_, b_, db_;
  Tensor<T> x_;
  bool has_cache_ = false;
};

struct Conv3dSpec {
  size_t in_c = 1, out_c = 1;
  size_t kt = 3, kh = 3, kw = 3;
  size_t st = 1, sh = 1, sw = 1;
  size_t pf = 0, pk = 0;              // temporal front/back
  size_t pt = 0, pb = 0, pl = 0, pr = 0;
  bool bias = true;

  Conv3dSpec& kernel(size_t t, size_t h, size_t w) {
    kt = t; kh = h; kw = w; return *this;
  }
  Conv3dSpec& stride(size_t t, size_t h, size_t w) {
    st = t; sh = h; sw = w; return *this;
  }
  Conv3dSpec& pad(size_t t, size_t h, size_t w) {
    pf = pk = t; pt = pb = h; pl = pr = w; return *this;
  }
};

// Volumetric cross-correlation on [B,C,T,H,W], weights
// [out_c, in_c, kt, kh, kw]. Same im2col-plus-GEMM lowering as Conv2d with
// the temporal axis folded into the patch.
template <typename T>
class Conv3d : public Layer<T> {
 public:
  explicit Conv3d(Conv3dSpec spec)
      : s_(spec),
        w_({spec.out_c, spec.in_c, spec.kt, spec.kh, spec.kw}),
        dw_({spec.out_c, spec.in_c, spec.kt, spec.kh, spec.kw}) {
    if (s_.bias) {
      b_ = Tensor<T>({s_.out_c});
      db_ = Tensor<T>({s_.out_c});
    }
  }

  std::string kind() const override { return "conv3d"; }
  const Conv3dSpec& spec() const { return s_; }

  void init_params(Rng& rng) override {
    fan_in_uniform(w_, s_.in_c * s_.kt * s_.kh * s_.kw, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    check_input(x);
    const size_t B = x.dim(0), Tn = x.dim(2), H = x.dim(3), W = x.dim(4);
    const size_t ot = conv_out_extent(Tn, s_.kt, s_.pf, s_.pk, s_.st, "conv3d");
    const size_t oh = conv_out_extent(H, s_.kh, s_.pt, s_.pb, s_.sh, "conv3d");
    const size_t ow = conv_out_extent(W, s_.kw, s_.pl, s_.pr, s_.sw, "conv3d");
    const size_t K = s_.in_c * s_.kt * s_.kh * s_.kw, P = ot * oh * ow;

    EigenColMat<T> col(K, P);
    Tensor<T> y({B, s_.out_c, ot, oh, ow});
    Eigen::Map<const EigenRowMat<T>> wm(w_.data(), s_.out_c, K);
    for (size_t b = 0; b < B; ++b) {
      im2col(x, b, ot, oh, ow, col);
      Eigen::Map<EigenRowMat<T>> ym(y.data() + b * s_.out_c * P, s_.out_c, P);
      ym.noalias() = wm * col;
      if (s_.bias)
        for (size_t co = 0; co < s_.out_c; ++co)
          ym.row(co).array() += b_[co];
    }
    if (mode == Mode::train) x_ = x;
    has_cache_ = (mode == Mode::train);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    const size_t B = x_.dim(0);
    const size_t ot = dy.dim(2), oh = dy.dim(3), ow = dy.dim(4);
    const size_t K = s_.in_c * s_.kt * s_.kh * s_.kw, P = ot * oh * ow;

    Tensor<T> dx(x_.shape());
    EigenColMat<T> col(K, P), dcol(K, P);
    Eigen::Map<const EigenRowMat<T>> wm(w_.data(), s_.out_c, K);
    Eigen::Map<EigenRowMat<T>> dwm(dw_.data(), s_.out_c, K);
    for (size_t b = 0; b < B; ++b) {
      Eigen::Map<const EigenRowMat<T>> gm(dy.data() + b * s_.out_c * P,
                                          s_.out_c, P);
      im2col(x_, b, ot, oh, ow, col);
      dwm.noalias() += gm * col.transpose();
      if (s_.bias)
        for (size_t co = 0; co < s_.out_c; ++co) db_[co] += gm.row(co).sum();
      dcol.noalias() = wm.transpose() * gm;
      col2im(dcol, b, ot, oh, ow, dx);
    }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + "/weight", &w_, &dw_, true});
    if (s_.bias) out.push_back({prefix + "/bias", &b_, &db_, true});
  }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 5 || x.dim(1) != s_.in_c)
      throw shape_error("conv3d: expected Bx" + std::to_string(s_.in_c) +
                        "xTxHxW, got " + shape_str(x.shape()));
  }

  template <typename Fn>
  void patch_walk(size_t ot, size_t oh, size_t ow, size_t Tn, size_t H,
                  size_t W, Fn&& fn) const {
    for (size_t oz = 0; oz < ot; ++oz)
      for (size_t oy = 0; oy < oh; ++oy)
        for (size_t ox = 0; ox < ow; ++ox) {
          const size_t q = (oz * oh + oy) * ow + ox;
          size_t r = 0;
          for (size_t ci = 0; ci < s_.in_c; ++ci)
            for (size_t kt = 0; kt < s_.kt; ++kt) {
              const ptrdiff_t it =
                  ptrdiff_t(oz * s_.st + kt) - ptrdiff_t(s_.pf);
              for (size_t ky = 0; ky < s_.kh; ++ky) {
                const ptrdiff_t iy =
                    ptrdiff_t(oy * s_.sh + ky) - ptrdiff_t(s_.pt);
                for (size_t kx = 0; kx < s_.kw; ++kx, ++r) {
                  const ptrdiff_t ix =
                      ptrdiff_t(ox * s_.sw + kx) - ptrdiff_t(s_.pl);
                  const bool in = it >= 0 && it < ptrdiff_t(Tn) && iy >= 0 &&
                                  iy < ptrdiff_t(H) && ix >= 0 &&
                                  ix < ptrdiff_t(W);
                  fn(q, r, ci, in, size_t(it), size_t(iy), size_t(ix));
                }
              }
            }
        }
  }

  void im2col(const Tensor<T>& x, size_t b, size_t ot, size_t oh, size_t ow,
              EigenColMat<T>& col) const {
    const size_t Tn = x.dim(2), H = x.dim(3), W = x.dim(4);
    const T* base = x.data() + b * s_.in_c * Tn * H * W;
    patch_walk(ot, oh, ow, Tn, H, W,
               [&](size_t q, size_t r, size_t ci, bool in, size_t it,
                   size_t iy, size_t ix) {
                 col.data()[q * col.rows() + r] =
                     in ? base[((ci * Tn + it) * H + iy) * W + ix] : T(0);
               });
  }

  void col2im(const EigenColMat<T>& dcol, size_t b, size_t ot, size_t oh,
              size_t ow, Tensor<T>& dx) const {
    const size_t Tn = dx.dim(2), H = dx.dim(3), W = dx.dim(4);
    T* base = dx.data() + b * s_.in_c * Tn * H * W;
    patch_walk(ot, oh, ow, Tn, H, W,
               [&](size_t q, size_t r, size_t ci, bool in, size_t it,
                   size_t iy, size_t ix) {
                 if (in)
                   base[((ci * Tn + it) * H + iy) * W + ix] +=
                       dcol.data()[q * dcol.rows() + r];
               });
  }

  Conv3dSpec s_;
  Tensor<T> w_, dw_, b_, db_;
  Tensor<T> x_;
  bool has_cache_ = false;
};

// Per-channel 2D convolution, weights [C, kh, kw]. Direct loops; the kernels
// are small enough that lowering buys nothing.
template <typename T>
class DepthwiseConv2d : public Layer<T> {
 public:
  DepthwiseConv2d(size_t channels, size_t k, size_t stride, size_t pt,
                  size_t pb, size_t pl, size_t pr, bool bias)
      : c_(channels), k_(k), s_(stride), pt_(pt), pb_(pb), pl_(pl), pr_(pr),
        has_bias_(bias), w_({channels, k, k}), dw_({channels, k, k}) {
    if (has_bias_) {
      b_ = Tensor<T>({channels});
      db_ = Tensor<T>({channels});
    }
  }

  std::string kind() const override { return "depthwise_conv2d"; }

  void init_params(Rng& rng) override { fan_in_uniform(w_, k_ * k_, rng); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() != 4 || x.dim(1) != c_)
      throw shape_error("depthwise_conv2d: expected Bx" + std::to_string(c_) +
                        "xHxW, got " + shape_str(x.shape()));
    const size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
    const size_t oh = conv_out_extent(H, k_, pt_, pb_, s_, "depthwise_conv2d");
    const size_t ow = conv_out_extent(W, k_, pl_, pr_, s_, "depthwise_conv2d");
    Tensor<T> y({B, c_, oh, ow});
    for (size_t b = 0; b < B; ++b)
      for (size_t c = 0; c < c_; ++c) {
        const T* plane = x.data() + (b * c_ + c) * H * W;
        const T* ker = w_.data() + c * k_ * k_;
        T* out = y.data() + (b * c_ + c) * oh * ow;
        for (size_t oy = 0; oy < oh; ++oy)
          for (size_t ox = 0; ox < ow; ++ox) {
            T acc = has_bias_ ? b_[c] : T(0);
            for (size_t ky = 0; ky < k_; ++ky) {
              const ptrdiff_t iy = ptrdiff_t(oy * s_ + ky) - ptrdiff_t(pt_);
              if (iy < 0 || iy >= ptrdiff_t(H)) continue;
              for (size_t kx = 0; kx < k_; ++kx) {
                const ptrdiff_t ix = ptrdiff_t(ox * s_ + kx) - ptrdiff_t(pl_);
                if (ix < 0 || ix >= ptrdiff_t(W)) continue;
                acc += plane[size_t(iy) * W + size_t(ix)] * ker[ky * k_ + kx];
              }
            }
            out[oy * ow + ox] = acc;
          }
      }
    if (mode == Mode::train) x_ = x;
    has_cache_ = (mode == Mode::train);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!has_cache_) this->no_cache();
    const size_t B = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
    const size_t oh = dy.dim(2), ow = dy.dim(3);
    Tensor<T> dx(x_.shape());
    for (size_t b = 0; b < B; ++b)
      for (size_t c = 0; c < c_; ++c) {
        const T* plane = x_.data() + (b * c_ + c) * H * W;
        const T* ker = w_.data() + c * k_ * k_;
        T* dker = dw_.data() + c * k_ * k_;
        T* dplane = dx.data() + (b * c_ + c) * H * W;
        const T* g = dy.data() + (b * c_ + c) * oh * ow;
        for (size_t oy = 0; oy < oh; ++oy)
          for (size_t ox = 0; ox < ow; ++ox) {
            const T go = g[oy * ow + ox];
            if (has_bias_) db_[c] += go;
            for (size_t ky = 0; ky < k_; ++ky) {
              const ptrdiff_t iy = ptrdiff_t(oy * s_ + ky) - ptrdiff_t(pt_);
              if (iy < 0 || iy >= ptrdiff_t(H)) continue;
              for (size_t kx = 0; kx < k_; ++kx) {
                const ptrdiff_t ix = ptrdiff_t(ox * s_ + kx) - ptrdiff_t(pl_);
                if (ix < 0 || ix >= ptrdiff_t(W)) continue;
                dker[ky * k_ + kx] += plane[size_t(iy) * W + size_t(ix)] * go;
                dplane[size_t(iy) * W + size_t(ix)] += ker[ky * k_ + kx] * go;
              }
            }
          }
      }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + "/weight", &w_, &dw_, true});
    if (has_bias_) out.push_back({prefix + "/bias", &b_, &db_, true});
  }

 private:
  size_t c_, k_, s_, pt_, pb_, pl_, pr_;
  bool has_bias_;
  Tensor<T> w_, dw_, b_, db_;
  Tensor<T> x_;
  bool has_cache_ = false;
};

// Depthwise 3x3 (or kxk) followed by a pointwise 1x1 projection. One bias at
// the output when enabled; the depthwise stage never carries one.
template <typename T>
class SeparableConv2d : public Layer<T> {
 public:
  SeparableConv2d(size_t in_c, size_t out_c, size_t k, size_t stride,
                  size_t pt, size_t pb, size_t pl, size_t pr, bool bias)
      : dw_(in_c, k, stride, pt, pb, pl, pr, /*bias=*/false),
        pw_(Conv2dSpec{.in_c = in_c, .out_c = out_c, .kh = 1, .kw = 1,
                       .sh = 1, .sw = 1, .bias = bias}) {}

  std::string kind() const override { return "separable_conv2d"; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    return pw_.forward(dw_.forward(x, mode), mode);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    return dw_.backward(pw_.backward(dy));
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    dw_.collect_params(prefix + "/depthwise", out);
    pw_.collect_params(prefix + "/pointwise", out);
  }

  void init_params(Rng& rng) override {
    dw_.init_params(rng);
    pw_.init_params(rng);
  }

 private:
  DepthwiseConv2d<T> dw_;
  Conv2d<T> pw_;
};

struct Conv2Plus1dSpec {
  size_t in_c = 1, out_c = 1;
  size_t mid_c = 1;                // intermediate channel count M
  size_t k = 3;                    // spatial kernel (1 x k x k)
  size_t kt = 3;                   // temporal kernel (kt x 1 x 1)
  size_t sh = 1, sw = 1, st = 1;
  size_t pt = 0, pb = 0, pl = 0, pr = 0;   // spatial padding
  size_t pf = 0, pk = 0;                   // temporal padding
  bool bias = true;
};

// Factorized spatiotemporal convolution: a 1xkxk spatial convolution to M
// channels, a rectifier, then a ktx1x1 temporal convolution to out_c.
template <typename T>
class Conv2Plus1d : public Layer<T> {
 public:
  explicit Conv2Plus1d(Conv2Plus1dSpec s)
      : spatial_(Conv3dSpec{.in_c = s.in_c, .out_c = s.mid_c, .kt = 1,
                            .kh = s.k, .kw = s.k, .st = 1, .sh = s.sh,
                            .sw = s.sw, .pf = 0, .pk = 0, .pt = s.pt,
                            .pb = s.pb, .pl = s.pl, .pr = s.pr,
                            .bias = s.bias}),
        temporal_(Conv3dSpec{.in_c = s.mid_c, .out_c = s.out_c, .kt = s.kt,
                             .kh = 1, .kw = 1, .st = s.st, .sh = 1, .sw = 1,
                             .pf = s.pf, .pk = s.pk, .bias = s.bias}) {
    if (s.mid_c < 1) throw value_error("conv2plus1d: mid channels must be >= 1");
  }

  std::string kind() const override { return "conv2plus1d"; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    return temporal_.forward(relu_.forward(spatial_.forward(x, mode), mode),
                             mode);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    return spatial_.backward(relu_.backward(temporal_.backward(dy)));
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<T>>& out) override {
    spatial_.collect_params(prefix + "/spatial", out);
    temporal_.collect_params(prefix + "/temporal", out);
  }

  void init_params(Rng& rng) override {
    spatial_.init_params(rng);
    temporal_.init_params(rng);
  }

 private:
  Conv3d<T> spatial_;
  ReLU<T> relu_;
  Conv3d<T> temporal_;
};

}  // namespace tcn
