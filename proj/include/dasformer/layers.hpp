// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dasformer/param_store.hpp"
#include "dasformer/rng.hpp"
#include "dasformer/tensor.hpp"

namespace dasformer {

enum class Mode { kTrain, kEval };

// ---------------------------------------------------------------------------
// Initialization

/// Kaiming-uniform fan-in init: U(-b, b) with b = sqrt(6 / fan_in).
template <typename T>
Tensor<T> kaiming_uniform(std::vector<std::size_t> shape, std::size_t fan_in, RngState& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / double(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(rng.uniform(-bound, bound));
  return t;
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// x * sigmoid(x), applied elementwise; returns the output, input stays as
/// the backward cache.
template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  Tensor<T> y = x;
  T* p = y.data();
  for (std::size_t i = 0; i < y.size(); ++i) p[i] = p[i] * sigmoid(p[i]);
  return y;
}

/// dL/dx for y = silu(x), given the pre-activation x.
template <typename T>
Tensor<T> silu_backward(const Tensor<T>& dy, const Tensor<T>& x) {
  Tensor<T> dx = dy;
  const T* xp = x.data();
  T* dp = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const T s = sigmoid(xp[i]);
    dp[i] = dp[i] * (s * (T(1) + xp[i] * (T(1) - s)));
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Shifted-plane kernels shared by the conv ops. Planes are [rows x cols],
// same padding is realized by clipping the tap's valid region.

namespace detail {

// y[t, f] += w * x[t + dt, f + df] over the region where the shifted index is
// in range.
template <typename T>
inline void shifted_plane_axpy(T w, const T* x, T* y, std::ptrdiff_t rows, std::ptrdiff_t cols,
                               std::ptrdiff_t dt, std::ptrdiff_t df) {
  const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -dt);
  const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(rows, rows - dt);
  const std::ptrdiff_t f0 = std::max<std::ptrdiff_t>(0, -df);
  const std::ptrdiff_t f1 = std::min<std::ptrdiff_t>(cols, cols - df);
  if (f1 <= f0) return;
  for (std::ptrdiff_t t = t0; t < t1; ++t)
    axpy(std::size_t(f1 - f0), w, x + (t + dt) * cols + f0 + df, y + t * cols + f0);
}

// sum over the same region of a[t, f] * b[t + dt, f + df].
template <typename T>
inline double shifted_plane_dot(const T* a, const T* b, std::ptrdiff_t rows, std::ptrdiff_t cols,
                                std::ptrdiff_t dt, std::ptrdiff_t df) {
  const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -dt);
  const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(rows, rows - dt);
  const std::ptrdiff_t f0 = std::max<std::ptrdiff_t>(0, -df);
  const std::ptrdiff_t f1 = std::min<std::ptrdiff_t>(cols, cols - df);
  double s = 0.0;
  if (f1 <= f0) return s;
  for (std::ptrdiff_t t = t0; t < t1; ++t)
    s += dot_d(std::size_t(f1 - f0), a + t * cols + f0, b + (t + dt) * cols + f0 + df);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conv2d

enum class ConvKind { kFull3x3, kPointwise, kDepthwise3x3, kDepthwise1x1 };

inline const char* conv_kind_name(ConvKind k) {
  switch (k) {
    case ConvKind::kFull3x3: return "full3x3";
    case ConvKind::kPointwise: return "pointwise";
    case ConvKind::kDepthwise3x3: return "depthwise3x3";
    default: return "depthwise1x1";
  }
}

/// Stride-1, same-padding 2D convolution over [C, T, F] grids with per-output
/// bias. Weight layout by kind:
///   full3x3      [Cout, Cin, 3, 3]
///   pointwise    [Cout, Cin]
///   depthwise3x3 [C, 3, 3]   (Cout == Cin)
///   depthwise1x1 [C]         (Cout == Cin)
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ConvKind kind, std::size_t in_ch, std::size_t out_ch)
      : kind_(kind), in_ch_(in_ch), out_ch_(out_ch) {
    if (depthwise() && in_ch != out_ch)
      throw std::invalid_argument("conv2d: depthwise requires Cout == Cin");
    if (in_ch == 0 || out_ch == 0) throw std::invalid_argument("conv2d: zero channels");
  }

  bool depthwise() const {
    return kind_ == ConvKind::kDepthwise3x3 || kind_ == ConvKind::kDepthwise1x1;
  }
  bool spatial() const { return kind_ == ConvKind::kFull3x3 || kind_ == ConvKind::kDepthwise3x3; }
  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }

  std::size_t fan_in() const {
    switch (kind_) {
      case ConvKind::kFull3x3: return in_ch_ * 9;
      case ConvKind::kPointwise: return in_ch_;
      case ConvKind::kDepthwise3x3: return 9;
      default: return 1;
    }
  }

  void register_params(ParamStore<T>& store, const std::string& prefix, RngState& rng) {
    std::vector<std::size_t> wshape;
    switch (kind_) {
      case ConvKind::kFull3x3: wshape = {out_ch_, in_ch_, 3, 3}; break;
      case ConvKind::kPointwise: wshape = {out_ch_, in_ch_}; break;
      case ConvKind::kDepthwise3x3: wshape = {out_ch_, 3, 3}; break;
      default: wshape = {out_ch_}; break;
    }
    w_ = store.add(prefix + ".weight", kaiming_uniform<T>(wshape, fan_in(), rng));
    b_ = store.add(prefix + ".bias", Tensor<T>({out_ch_}));
  }

  struct State {
    Tensor<T> input;
  };

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x, State* state) const {
    check_input(x);
    const std::size_t rows = x.dim(1), cols = x.dim(2), plane = rows * cols;
    const Tensor<T>& W = store.value(w_);
    const Tensor<T>& b = store.value(b_);

    Tensor<T> y({out_ch_, rows, cols});
    for (std::size_t co = 0; co < out_ch_; ++co)
      std::fill(y.data() + co * plane, y.data() + (co + 1) * plane, b[co]);

    switch (kind_) {
      case ConvKind::kPointwise:
        for (std::size_t co = 0; co < out_ch_; ++co)
          for (std::size_t ci = 0; ci < in_ch_; ++ci)
            axpy(plane, W[co * in_ch_ + ci], x.data() + ci * plane, y.data() + co * plane);
        break;
      case ConvKind::kDepthwise1x1:
        for (std::size_t c = 0; c < out_ch_; ++c)
          axpy(plane, W[c], x.data() + c * plane, y.data() + c * plane);
        break;
      case ConvKind::kDepthwise3x3:
        for (std::size_t c = 0; c < out_ch_; ++c)
          for (int dt = -1; dt <= 1; ++dt)
            for (int df = -1; df <= 1; ++df)
              detail::shifted_plane_axpy(W[c * 9 + std::size_t(dt + 1) * 3 + std::size_t(df + 1)],
                                         x.data() + c * plane, y.data() + c * plane,
                                         std::ptrdiff_t(rows), std::ptrdiff_t(cols), dt, df);
        break;
      case ConvKind::kFull3x3:
        for (std::size_t co = 0; co < out_ch_; ++co)
          for (std::size_t ci = 0; ci < in_ch_; ++ci)
            for (int dt = -1; dt <= 1; ++dt)
              for (int df = -1; df <= 1; ++df)
                detail::shifted_plane_axpy(
                    W[((co * in_ch_ + ci) * 3 + std::size_t(dt + 1)) * 3 + std::size_t(df + 1)],
                    x.data() + ci * plane, y.data() + co * plane, std::ptrdiff_t(rows),
                    std::ptrdiff_t(cols), dt, df);
        break;
    }
    if (state) state->input = x;
    return y;
  }

  /// Accumulates weight/bias grads into the store, returns dL/dx.
  Tensor<T> backward(ParamStore<T>& store, const State& state, const Tensor<T>& dy) const {
    const Tensor<T>& x = state.input;
    const std::size_t rows = x.dim(1), cols = x.dim(2), plane = rows * cols;
    const Tensor<T>& W = store.value(w_);
    Tensor<T>& dW = store.grad(w_);
    Tensor<T>& db = store.grad(b_);

    Tensor<T> dx(x.shape());
    for (std::size_t co = 0; co < out_ch_; ++co) db[co] += T(sum_d(plane, dy.data() + co * plane));

    const auto r = std::ptrdiff_t(rows), c = std::ptrdiff_t(cols);
    switch (kind_) {
      case ConvKind::kPointwise:
        for (std::size_t co = 0; co < out_ch_; ++co)
          for (std::size_t ci = 0; ci < in_ch_; ++ci) {
            dW[co * in_ch_ + ci] += T(dot_d(plane, dy.data() + co * plane, x.data() + ci * plane));
            axpy(plane, W[co * in_ch_ + ci], dy.data() + co * plane, dx.data() + ci * plane);
          }
        break;
      case ConvKind::kDepthwise1x1:
        for (std::size_t ch = 0; ch < out_ch_; ++ch) {
          dW[ch] += T(dot_d(plane, dy.data() + ch * plane, x.data() + ch * plane));
          axpy(plane, W[ch], dy.data() + ch * plane, dx.data() + ch * plane);
        }
        break;
      case ConvKind::kDepthwise3x3:
        for (std::size_t ch = 0; ch < out_ch_; ++ch)
          for (int dt = -1; dt <= 1; ++dt)
            for (int df = -1; df <= 1; ++df) {
              const std::size_t wi = ch * 9 + std::size_t(dt + 1) * 3 + std::size_t(df + 1);
              dW[wi] += T(detail::shifted_plane_dot(dy.data() + ch * plane, x.data() + ch * plane,
                                                    r, c, dt, df));
              detail::shifted_plane_axpy(W[wi], dy.data() + ch * plane, dx.data() + ch * plane, r,
                                         c, -dt, -df);
            }
        break;
      case ConvKind::kFull3x3:
        for (std::size_t co = 0; co < out_ch_; ++co)
          for (std::size_t ci = 0; ci < in_ch_; ++ci)
            for (int dt = -1; dt <= 1; ++dt)
              for (int df = -1; df <= 1; ++df) {
                const std::size_t wi =
                    ((co * in_ch_ + ci) * 3 + std::size_t(dt + 1)) * 3 + std::size_t(df + 1);
                dW[wi] += T(detail::shifted_plane_dot(dy.data() + co * plane,
                                                      x.data() + ci * plane, r, c, dt, df));
                detail::shifted_plane_axpy(W[wi], dy.data() + co * plane, dx.data() + ci * plane,
                                           r, c, -dt, -df);
              }
        break;
    }
    return dx;
  }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(0) != in_ch_)
      throw std::invalid_argument(std::string("conv2d(") + conv_kind_name(kind_) + "): expected [" +
                                  std::to_string(in_ch_) + " x T x F], got " + x.shape_str());
  }

  ConvKind kind_ = ConvKind::kPointwise;
  std::size_t in_ch_ = 0, out_ch_ = 0;
  std::size_t w_ = 0, b_ = 0;
};

// ---------------------------------------------------------------------------
// BatchNorm over [C, T, F]: statistics over all non-channel dims.

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, double eps = 1e-5, double momentum = 0.9)
      : channels_(channels), eps_(eps), momentum_(momentum) {}

  void register_params(ParamStore<T>& store, const std::string& prefix, RngState&) {
    Tensor<T> ones({channels_});
    ones.fill(T(1));
    gamma_ = store.add(prefix + ".gamma", ones);
    beta_ = store.add(prefix + ".beta", Tensor<T>({channels_}));
    run_mean_ = store.add(prefix + ".running_mean", Tensor<T>({channels_}), /*trainable=*/false);
    Tensor<T> rv({channels_});
    rv.fill(T(1));
    run_var_ = store.add(prefix + ".running_var", rv, /*trainable=*/false);
  }

  struct State {
    Mode mode = Mode::kEval;
    Tensor<T> xhat;
    std::vector<T> inv_std;  // per channel
  };

  /// Train mode normalizes by the batch statistics of `x` and EMA-updates the
  /// running stats in the store (running <- momentum*running + (1-m)*batch);
  /// eval mode uses the stored running stats and leaves the store untouched.
  Tensor<T> forward(ParamStore<T>& store, const Tensor<T>& x, Mode mode, State* state) const {
    if (x.rank() != 3 || x.dim(0) != channels_)
      throw std::invalid_argument("batch_norm: expected [" + std::to_string(channels_) +
                                  " x T x F], got " + x.shape_str());
    const std::size_t plane = x.dim(1) * x.dim(2);
    if (mode == Mode::kTrain && plane < 2)
      throw std::invalid_argument("batch_norm: train mode needs more than one position");

    const Tensor<T>& gamma = store.value(gamma_);
    const Tensor<T>& beta = store.value(beta_);

    Tensor<T> y(x.shape());
    Tensor<T> xhat(x.shape());
    std::vector<T> inv_std(channels_);
    for (std::size_t c = 0; c < channels_; ++c) {
      const T* xc = x.data() + c * plane;
      double mean, var;
      if (mode == Mode::kTrain) {
        mean = sum_d(plane, xc) / double(plane);
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = double(xc[i]) - mean;
          acc += d * d;
        }
        var = acc / double(plane);
        Tensor<T>& rm = store.value(run_mean_);
        Tensor<T>& rv = store.value(run_var_);
        rm[c] = T(momentum_ * double(rm[c]) + (1.0 - momentum_) * mean);
        rv[c] = T(momentum_ * double(rv[c]) + (1.0 - momentum_) * var);
      } else {
        mean = double(store.value(run_mean_)[c]);
        var = double(store.value(run_var_)[c]);
      }
      const T istd = T(1.0 / std::sqrt(var + eps_));
      inv_std[c] = istd;
      T* hc = xhat.data() + c * plane;
      T* yc = y.data() + c * plane;
      const T m = T(mean);
      for (std::size_t i = 0; i < plane; ++i) {
        hc[i] = (xc[i] - m) * istd;
        yc[i] = gamma[c] * hc[i] + beta[c];
      }
    }
    if (state) {
      state->mode = mode;
      state->xhat = std::move(xhat);
      state->inv_std = std::move(inv_std);
    }
    return y;
  }

  Tensor<T> backward(ParamStore<T>& store, const State& state, const Tensor<T>& dy) const {
    const Tensor<T>& xhat = state.xhat;
    const std::size_t plane = xhat.dim(1) * xhat.dim(2);
    const Tensor<T>& gamma = store.value(gamma_);
    Tensor<T>& dgamma = store.grad(gamma_);
    Tensor<T>& dbeta = store.grad(beta_);

    Tensor<T> dx(xhat.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      const T* dyc = dy.data() + c * plane;
      const T* hc = xhat.data() + c * plane;
      T* dxc = dx.data() + c * plane;
      const double sum_dy = sum_d(plane, dyc);
      const double sum_dy_h = dot_d(plane, dyc, hc);
      dbeta[c] += T(sum_dy);
      dgamma[c] += T(sum_dy_h);
      const T g_istd = gamma[c] * state.inv_std[c];
      if (state.mode == Mode::kTrain) {
        const T mean_dy = T(sum_dy / double(plane));
        const T mean_dy_h = T(sum_dy_h / double(plane));
        for (std::size_t i = 0; i < plane; ++i)
          dxc[i] = g_istd * (dyc[i] - mean_dy - hc[i] * mean_dy_h);
      } else {
        for (std::size_t i = 0; i < plane; ++i) dxc[i] = g_istd * dyc[i];
      }
    }
    return dx;
  }

 private:
  std::size_t channels_ = 0;
  double eps_ = 1e-5, momentum_ = 0.9;
  std::size_t gamma_ = 0, beta_ = 0, run_mean_ = 0, run_var_ = 0;
};

// ---------------------------------------------------------------------------
// LayerNorm over the last dim of [rows x D] sequences.

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, double eps = 1e-5) : dim_(dim), eps_(eps) {
    if (dim < 2) throw std::invalid_argument("layer_norm: dim must be >= 2");
  }

  void register_params(ParamStore<T>& store, const std::string& prefix, RngState&) {
    Tensor<T> ones({dim_});
    ones.fill(T(1));
    gamma_ = store.add(prefix + ".gamma", ones);
    beta_ = store.add(prefix + ".beta", Tensor<T>({dim_}));
  }

  struct State {
    Tensor<T> xhat;
    std::vector<T> inv_std;  // per row
  };

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x, State* state) const {
    if (x.rank() != 2 || x.dim(1) != dim_)
      throw std::invalid_argument("layer_norm: expected [S x " + std::to_string(dim_) + "], got " +
                                  x.shape_str());
    const std::size_t rows = x.dim(0);
    const Tensor<T>& gamma = store.value(gamma_);
    const Tensor<T>& beta = store.value(beta_);

    Tensor<T> y(x.shape());
    Tensor<T> xhat(x.shape());
    std::vector<T> inv_std(rows);
    for (std::size_t s = 0; s < rows; ++s) {
      const T* xr = x.data() + s * dim_;
      const double mean = sum_d(dim_, xr) / double(dim_);
      double acc = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double v = double(xr[d]) - mean;
        acc += v * v;
      }
      const T istd = T(1.0 / std::sqrt(acc / double(dim_) + eps_));
      inv_std[s] = istd;
      T* hr = xhat.data() + s * dim_;
      T* yr = y.data() + s * dim_;
      const T m = T(mean);
      for (std::size_t d = 0; d < dim_; ++d) {
        hr[d] = (xr[d] - m) * istd;
        yr[d] = gamma[d] * hr[d] + beta[d];
      }
    }
    if (state) {
      state->xhat = std::move(xhat);
      state->inv_std = std::move(inv_std);
    }
    return y;
  }

  Tensor<T> backward(ParamStore<T>& store, const State& state, const Tensor<T>& dy) const {
    const Tensor<T>& xhat = state.xhat;
    const std::size_t rows = xhat.dim(0);
    const Tensor<T>& gamma = store.value(gamma_);
    Tensor<T>& dgamma = store.grad(gamma_);
    Tensor<T>& dbeta = store.grad(beta_);

    Tensor<T> dx(xhat.shape());
    std::vector<T> dh(dim_);
    for (std::size_t s = 0; s < rows; ++s) {
      const T* dyr = dy.data() + s * dim_;
      const T* hr = xhat.data() + s * dim_;
      T* dxr = dx.data() + s * dim_;
      double sum_dh = 0.0, sum_dh_h = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        dbeta[d] += dyr[d];
        dgamma[d] += dyr[d] * hr[d];
        dh[d] = dyr[d] * gamma[d];
        sum_dh += double(dh[d]);
        sum_dh_h += double(dh[d]) * double(hr[d]);
      }
      const T mean_dh = T(sum_dh / double(dim_));
      const T mean_dh_h = T(sum_dh_h / double(dim_));
      for (std::size_t d = 0; d < dim_; ++d)
        dxr[d] = state.inv_std[s] * (dh[d] - mean_dh - hr[d] * mean_dh_h);
    }
    return dx;
  }

 private:
  std::size_t dim_ = 0;
  double eps_ = 1e-5;
  std::size_t gamma_ = 0, beta_ = 0;
};

// ---------------------------------------------------------------------------
// Squeeze-Excitation channel gating on [C, T, F].

template <typename T>
class SqueezeExcitation {
 public:
  SqueezeExcitation() = default;
  SqueezeExcitation(std::size_t channels, std::size_t hidden) : channels_(channels), hidden_(hidden) {
    if (hidden == 0) throw std::invalid_argument("se: hidden width must be >= 1");
  }

  std::size_t hidden() const { return hidden_; }

  void register_params(ParamStore<T>& store, const std::string& prefix, RngState& rng) {
    w1_ = store.add(prefix + ".fc1.weight", kaiming_uniform<T>({hidden_, channels_}, channels_, rng));
    b1_ = store.add(prefix + ".fc1.bias", Tensor<T>({hidden_}));
    w2_ = store.add(prefix + ".fc2.weight", kaiming_uniform<T>({channels_, hidden_}, hidden_, rng));
    b2_ = store.add(prefix + ".fc2.bias", Tensor<T>({channels_}));
  }

  struct State {
    Tensor<T> input;
    std::vector<T> pooled, z1, h, gate;
  };

  /// y = x * sigmoid(fc2(silu(fc1(mean_{t,f} x)))), gate broadcast per channel.
  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x, State* state) const {
    if (x.rank() != 3 || x.dim(0) != channels_)
      throw std::invalid_argument("se: expected [" + std::to_string(channels_) + " x T x F], got " +
                                  x.shape_str());
    const std::size_t plane = x.dim(1) * x.dim(2);
    const Tensor<T>& W1 = store.value(w1_);
    const Tensor<T>& B1 = store.value(b1_);
    const Tensor<T>& W2 = store.value(w2_);
    const Tensor<T>& B2 = store.value(b2_);

    std::vector<T> pooled(channels_), z1(hidden_), h(hidden_), gate(channels_);
    for (std::size_t c = 0; c < channels_; ++c)
      pooled[c] = T(sum_d(plane, x.data() + c * plane) / double(plane));
    for (std::size_t j = 0; j < hidden_; ++j) {
      z1[j] = B1[j] + dot(channels_, W1.data() + j * channels_, pooled.data());
      h[j] = z1[j] * sigmoid(z1[j]);
    }
    for (std::size_t c = 0; c < channels_; ++c)
      gate[c] = sigmoid(B2[c] + dot(hidden_, W2.data() + c * hidden_, h.data()));

    Tensor<T> y(x.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      const T* xc = x.data() + c * plane;
      T* yc = y.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) yc[i] = xc[i] * gate[c];
    }
    if (state) {
      state->input = x;
      state->pooled = std::move(pooled);
      state->z1 = std::move(z1);
      state->h = std::move(h);
      state->gate = std::move(gate);
    }
    return y;
  }

  Tensor<T> backward(ParamStore<T>& store, const State& st, const Tensor<T>& dy) const {
    const Tensor<T>& x = st.input;
    const std::size_t plane = x.dim(1) * x.dim(2);
    const Tensor<T>& W1 = store.value(w1_);
    const Tensor<T>& W2 = store.value(w2_);
    Tensor<T>& dW1 = store.grad(w1_);
    Tensor<T>& dB1 = store.grad(b1_);
    Tensor<T>& dW2 = store.grad(w2_);
    Tensor<T>& dB2 = store.grad(b2_);

    // direct product path plus the gate path
    Tensor<T> dx(x.shape());
    std::vector<T> dgate(channels_);
    for (std::size_t c = 0; c < channels_; ++c) {
      const T* dyc = dy.data() + c * plane;
      const T* xc = x.data() + c * plane;
      T* dxc = dx.data() + c * plane;
      dgate[c] = T(dot_d(plane, dyc, xc));
      for (std::size_t i = 0; i < plane; ++i) dxc[i] = dyc[i] * st.gate[c];
    }

    std::vector<T> dz2(channels_), dh(hidden_, T(0)), dz1(hidden_), dpooled(channels_, T(0));
    for (std::size_t c = 0; c < channels_; ++c)
      dz2[c] = dgate[c] * st.gate[c] * (T(1) - st.gate[c]);
    for (std::size_t c = 0; c < channels_; ++c) {
      dB2[c] += dz2[c];
      axpy(hidden_, dz2[c], st.h.data(), dW2.data() + c * hidden_);
      axpy(hidden_, dz2[c], W2.data() + c * hidden_, dh.data());
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
      const T s = sigmoid(st.z1[j]);
      dz1[j] = dh[j] * (s * (T(1) + st.z1[j] * (T(1) - s)));
      dB1[j] += dz1[j];
      axpy(channels_, dz1[j], st.pooled.data(), dW1.data() + j * channels_);
      axpy(channels_, dz1[j], W1.data() + j * channels_, dpooled.data());
    }
    for (std::size_t c = 0; c < channels_; ++c) {
      const T g = dpooled[c] / T(double(plane));
      T* dxc = dx.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) dxc[i] += g;
    }
    return dx;
  }

 private:
  std::size_t channels_ = 0, hidden_ = 0;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

// ---------------------------------------------------------------------------
// Multi-head self-attention on [S x D] sequences. No positional encoding,
// no attention dropout; pre-softmax scaling is 1/sqrt(D/H).

template <typename T>
class MultiHeadAttention {
 public:
  /// Called with (head, row-stochastic S x S matrix) when capture is active.
  using CaptureFn = std::function<void(std::size_t, const Tensor<T>&)>;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads) : dim_(dim), heads_(heads) {
    if (heads == 0 || dim % heads != 0)
      throw std::invalid_argument("mhsa: embed dim " + std::to_string(dim) +
                                  " not divisible by heads " + std::to_string(heads));
  }

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }

  void register_params(ParamStore<T>& store, const std::string& prefix, RngState& rng) {
    auto proj = [&](const char* name, std::size_t& w, std::size_t& b) {
      w = store.add(prefix + "." + name + ".weight", kaiming_uniform<T>({dim_, dim_}, dim_, rng));
      b = store.add(prefix + "." + name + ".bias", Tensor<T>({dim_}));
    };
    proj("wq", wq_, bq_);
    proj("wk", wk_, bk_);
    proj("wv", wv_, bv_);
    proj("wo", wo_, bo_);
  }

  struct State {
    Tensor<T> input, q, k, v, ctx;  // [S, D]
    Tensor<T> attn;                 // [H, S, S]
  };

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& seq, State* state,
                    const CaptureFn& capture = nullptr) const {
    if (seq.rank() != 2 || seq.dim(1) != dim_)
      throw std::invalid_argument("mhsa: expected [S x " + std::to_string(dim_) + "], got " +
                                  seq.shape_str());
    Tensor<T> out(seq.shape());
    forward_rows(store, seq.data(), seq.dim(0), out.data(), state, capture);
    if (state) state->input = seq;
    return out;
  }

  /// Raw-pointer path used by the model so slices of a packed row buffer can
  /// be processed without copies. `state->input` is not filled here.
  void forward_rows(const ParamStore<T>& store, const T* rows, std::size_t S, T* out, State* state,
                    const CaptureFn& capture = nullptr) const {
    const std::size_t dh = dim_ / heads_;
    const T inv_scale = T(1.0 / std::sqrt(double(dh)));

    Tensor<T> q({S, dim_}), k({S, dim_}), v({S, dim_});
    linear(store.value(wq_), store.value(bq_), rows, S, q.data());
    linear(store.value(wk_), store.value(bk_), rows, S, k.data());
    linear(store.value(wv_), store.value(bv_), rows, S, v.data());

    Tensor<T> attn({heads_, S, S});
    Tensor<T> ctx({S, dim_});
    for (std::size_t h = 0; h < heads_; ++h) {
      const std::size_t off = h * dh;
      T* a = attn.data() + h * S * S;
      for (std::size_t i = 0; i < S; ++i) {
        T* row = a + i * S;
        double mx = -1e300;
        for (std::size_t j = 0; j < S; ++j) {
          row[j] = inv_scale * dot(dh, q.data() + i * dim_ + off, k.data() + j * dim_ + off);
          mx = std::max(mx, double(row[j]));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          row[j] = T(std::exp(double(row[j]) - mx));
          denom += double(row[j]);
        }
        const T inv = T(1.0 / denom);
        for (std::size_t j = 0; j < S; ++j) row[j] *= inv;
        T* ci = ctx.data() + i * dim_ + off;
        for (std::size_t j = 0; j < S; ++j) axpy(dh, row[j], v.data() + j * dim_ + off, ci);
      }
      if (capture) {
        Tensor<T> m({S, S});
        std::copy(a, a + S * S, m.data());
        capture(h, m);
      }
    }

    linear(store.value(wo_), store.value(bo_), ctx.data(), S, out);
    if (state) {
      state->q = std::move(q);
      state->k = std::move(k);
      state->v = std::move(v);
      state->attn = std::move(attn);
      state->ctx = std::move(ctx);
    }
  }

  Tensor<T> backward(ParamStore<T>& store, const State& state, const Tensor<T>& dy) const {
    Tensor<T> dx(state.input.shape());
    backward_rows(store, state.input.data(), state, dy.data(), dy.dim(0), dx.data());
    return dx;
  }

  /// Raw-pointer mirror of forward_rows; `rows` must be the same buffer the
  /// forward saw. Adds dL/d(rows) into `drows`.
  void backward_rows(ParamStore<T>& store, const T* rows, const State& st, const T* dout,
                     std::size_t S, T* drows) const {
    const std::size_t dh = dim_ / heads_;
    const T inv_scale = T(1.0 / std::sqrt(double(dh)));

    // output projection
    Tensor<T> dctx({S, dim_});
    linear_backward(store, wo_, bo_, st.ctx.data(), dout, S, dctx.data());

    Tensor<T> dq({S, dim_}), dk({S, dim_}), dv({S, dim_});
    std::vector<T> da(S), ds(S);
    for (std::size_t h = 0; h < heads_; ++h) {
      const std::size_t off = h * dh;
      const T* a = st.attn.data() + h * S * S;
      for (std::size_t i = 0; i < S; ++i) {
        const T* arow = a + i * S;
        const T* dc = dctx.data() + i * dim_ + off;
        // dL/d(attn row), then softmax backward
        double dot_da_a = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          da[j] = dot(dh, dc, st.v.data() + j * dim_ + off);
          dot_da_a += double(da[j]) * double(arow[j]);
        }
        for (std::size_t j = 0; j < S; ++j) {
          axpy(dh, arow[j], dc, dv.data() + j * dim_ + off);
          ds[j] = arow[j] * T(double(da[j]) - dot_da_a);
        }
        T* dqi = dq.data() + i * dim_ + off;
        for (std::size_t j = 0; j < S; ++j) {
          const T g = inv_scale * ds[j];
          axpy(dh, g, st.k.data() + j * dim_ + off, dqi);
          axpy(dh, g, st.q.data() + i * dim_ + off, dk.data() + j * dim_ + off);
        }
      }
    }

    linear_backward(store, wq_, bq_, rows, dq.data(), S, drows);
    linear_backward(store, wk_, bk_, rows, dk.data(), S, drows);
    linear_backward(store, wv_, bv_, rows, dv.data(), S, drows);
  }

 private:
  // y[s, :] = W x[s, :] + b, W is [D, D] row-major.
  void linear(const Tensor<T>& W, const Tensor<T>& b, const T* x, std::size_t S, T* y) const {
    for (std::size_t s = 0; s < S; ++s) {
      const T* xr = x + s * dim_;
      T* yr = y + s * dim_;
      for (std::size_t o = 0; o < dim_; ++o) yr[o] = b[o] + dot(dim_, W.data() + o * dim_, xr);
    }
  }

  // Accumulates dW, db into the store and dL/dx into dx.
  void linear_backward(ParamStore<T>& store, std::size_t w, std::size_t b, const T* x,
                       const T* dy, std::size_t S, T* dx) const {
    const Tensor<T>& W = store.value(w);
    Tensor<T>& dW = store.grad(w);
    Tensor<T>& db = store.grad(b);
    for (std::size_t s = 0; s < S; ++s) {
      const T* dyr = dy + s * dim_;
      const T* xr = x + s * dim_;
      T* dxr = dx + s * dim_;
      for (std::size_t o = 0; o < dim_; ++o) {
        db[o] += dyr[o];
        axpy(dim_, dyr[o], xr, dW.data() + o * dim_);
        axpy(dim_, dyr[o], W.data() + o * dim_, dxr);
      }
    }
  }

  std::size_t dim_ = 0, heads_ = 0;
  std::size_t wq_ = 0, bq_ = 0, wk_ = 0, bk_ = 0, wv_ = 0, bv_ = 0, wo_ = 0, bo_ = 0;
};

// ---------------------------------------------------------------------------
// Dropout (inverted scaling). Eval mode and rate 0 are exact identities and
// consume no randomness.

template <typename T>
struct DropoutState {
  Tensor<T> mask;  // empty when dropout was a no-op; otherwise holds 0 or 1/(1-rate)
};

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, RngState& rng,
                  DropoutState<T>* state) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (mode == Mode::kEval || rate == 0.0) {
    if (state) state->mask = Tensor<T>();
    return x;
  }
  const T keep_scale = T(1.0 / (1.0 - rate));
  Tensor<T> mask(x.shape());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.uniform() >= rate ? keep_scale : T(0);
    mask[i] = m;
    y[i] = x[i] * m;
  }
  if (state) state->mask = std::move(mask);
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& dy, const DropoutState<T>& state) {
  if (state.mask.empty()) return dy;
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= state.mask[i];
  return dx;
}

}  // namespace dasformer
