#pragma once

#include <cmath>
#include <type_traits>
#include <vector>

#include "wsfcn/conv.hpp"
#include "wsfcn/tensor.hpp"

namespace wsfcn::ops {

enum class PoolMode { avg, max };
enum class Pointwise { sigmoid, relu };

// ---------------------------------------------------------------- pooling

template <typename T>
Tensor<T> global_pool_spatial(const Tensor<T>& x, PoolMode mode) {
  const auto& s = x.shape();
  Tensor<T> y({s.n, s.c, 1, 1});
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      if (mode == PoolMode::avg) {
        T acc = 0;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
        y.at(n, c, 0, 0) = acc / T(plane);
      } else {
        T best = p[0];
        for (std::int64_t i = 1; i < plane; ++i)
          if (p[i] > best) best = p[i];
        y.at(n, c, 0, 0) = best;
      }
    }
  return y;
}

template <typename T>
void global_pool_spatial_backward(const Tensor<T>& x, PoolMode mode, const Tensor<T>& gy,
                                  Tensor<T>& dx) {
  const auto& s = x.shape();
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T g = gy.at(n, c, 0, 0);
      T* d = dx.data() + dx.idx(n, c, 0, 0);
      const T* p = x.data() + x.idx(n, c, 0, 0);
      if (mode == PoolMode::avg) {
        const T share = g / T(plane);
        for (std::int64_t i = 0; i < plane; ++i) d[i] += share;
      } else {
        std::int64_t arg = 0;  // ties: first occurrence in scan order
        for (std::int64_t i = 1; i < plane; ++i)
          if (p[i] > p[arg]) arg = i;
        d[arg] += g;
      }
    }
}

template <typename T>
Tensor<T> global_pool_channel(const Tensor<T>& x, PoolMode mode) {
  const auto& s = x.shape();
  Tensor<T> y({s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w) {
        if (mode == PoolMode::avg) {
          T acc = 0;
          for (int c = 0; c < s.c; ++c) acc += x.at(n, c, h, w);
          y.at(n, 0, h, w) = acc / T(s.c);
        } else {
          T best = x.at(n, 0, h, w);
          for (int c = 1; c < s.c; ++c) best = std::max(best, x.at(n, c, h, w));
          y.at(n, 0, h, w) = best;
        }
      }
  return y;
}

template <typename T>
void global_pool_channel_backward(const Tensor<T>& x, PoolMode mode, const Tensor<T>& gy,
                                  Tensor<T>& dx) {
  const auto& s = x.shape();
  for (int n = 0; n < s.n; ++n)
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w) {
        const T g = gy.at(n, 0, h, w);
        if (mode == PoolMode::avg) {
          const T share = g / T(s.c);
          for (int c = 0; c < s.c; ++c) dx.at(n, c, h, w) += share;
        } else {
          int arg = 0;
          for (int c = 1; c < s.c; ++c)
            if (x.at(n, c, h, w) > x.at(n, arg, h, w)) arg = c;
          dx.at(n, arg, h, w) += g;
        }
      }
}

// -------------------------------------------------------------- pointwise

template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, Pointwise fn) {
  Tensor<T> y(x.shape());
  const T* p = x.data();
  T* q = y.data();
  const std::int64_t m = x.numel();
  if (fn == Pointwise::sigmoid) {
    for (std::int64_t i = 0; i < m; ++i) q[i] = T(1) / (T(1) + std::exp(-p[i]));
  } else {
    for (std::int64_t i = 0; i < m; ++i) q[i] = p[i] > T(0) ? p[i] : T(0);
  }
  return y;
}

template <typename T>
void pointwise_backward(const Tensor<T>& x, const Tensor<T>& y, Pointwise fn, const Tensor<T>& gy,
                        Tensor<T>& dx) {
  const std::int64_t m = x.numel();
  const T* px = x.data();
  const T* py = y.data();
  const T* g = gy.data();
  T* d = dx.data();
  if (fn == Pointwise::sigmoid) {
    for (std::int64_t i = 0; i < m; ++i) d[i] += g[i] * py[i] * (T(1) - py[i]);
  } else {
    for (std::int64_t i = 0; i < m; ++i) d[i] += px[i] > T(0) ? g[i] : T(0);
  }
}

// Per-pixel channel softmax with max subtraction.
template <typename T>
Tensor<T> softmax_channel(const Tensor<T>& x) {
  const auto& s = x.shape();
  Tensor<T> y(s);
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  const std::int64_t cstride = plane;
  for (int n = 0; n < s.n; ++n) {
    const T* xn = x.data() + x.idx(n, 0, 0, 0);
    T* yn = y.data() + y.idx(n, 0, 0, 0);
    for (std::int64_t p = 0; p < plane; ++p) {
      T m = xn[p];
      for (int c = 1; c < s.c; ++c) m = std::max(m, xn[c * cstride + p]);
      T z = 0;
      for (int c = 0; c < s.c; ++c) {
        const T e = std::exp(xn[c * cstride + p] - m);
        yn[c * cstride + p] = e;
        z += e;
      }
      for (int c = 0; c < s.c; ++c) yn[c * cstride + p] /= z;
    }
  }
  return y;
}

template <typename T>
void softmax_channel_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& dx) {
  const auto& s = y.shape();
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const T* yn = y.data() + y.idx(n, 0, 0, 0);
    const T* gn = gy.data() + gy.idx(n, 0, 0, 0);
    T* dn = dx.data() + dx.idx(n, 0, 0, 0);
    for (std::int64_t p = 0; p < plane; ++p) {
      T dot = 0;
      for (int c = 0; c < s.c; ++c) dot += gn[c * plane + p] * yn[c * plane + p];
      for (int c = 0; c < s.c; ++c)
        dn[c * plane + p] += yn[c * plane + p] * (gn[c * plane + p] - dot);
    }
  }
}

// -------------------------------------------------------------- batchnorm

struct BnStats4 {};  // tag; saved statistics travel as tensors

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Training mode: normalizes with batch statistics over (n, h, w) per channel and
// updates running stats in place. save_mean/save_invstd receive the batch values
// needed by the backward pass.
template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          Tensor<T>& running_mean, Tensor<T>& running_var,
                          std::type_identity_t<Tensor<T>>* save_mean,
                          std::type_identity_t<Tensor<T>>* save_invstd) {
  const auto& s = x.shape();
  check(gamma.shape().c == s.c && beta.shape().c == s.c,
        "batchnorm: affine parameter channels do not match input channels " +
            std::to_string(s.c));
  const std::int64_t N = std::int64_t(s.n) * s.h * s.w;
  check(N > 1, "batchnorm: training-mode statistics need n*h*w > 1 (variance undefined for a "
               "single element)");
  Tensor<T> y(s);
  Tensor<T> mean({1, s.c, 1, 1}), invstd({1, s.c, 1, 1});
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int c = 0; c < s.c; ++c) {
    T acc = 0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
    }
    const T mu = acc / T(N);
    T var = 0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) {
        const T d = p[i] - mu;
        var += d * d;
      }
    }
    var /= T(N);
    const T inv = T(1) / std::sqrt(var + T(kBnEps));
    const T g = gamma.data()[c], b = beta.data()[c];
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      T* q = y.data() + y.idx(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) q[i] = g * (p[i] - mu) * inv + b;
    }
    mean.data()[c] = mu;
    invstd.data()[c] = inv;
    const T unbiased = var * T(N) / T(N - 1);
    running_mean.data()[c] = T(1 - kBnMomentum) * running_mean.data()[c] + T(kBnMomentum) * mu;
    running_var.data()[c] = T(1 - kBnMomentum) * running_var.data()[c] + T(kBnMomentum) * unbiased;
  }
  if (save_mean) *save_mean = mean;
  if (save_invstd) *save_invstd = invstd;
  return y;
}

// Eval mode: pure affine map from running statistics.
template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         const Tensor<T>& running_mean, const Tensor<T>& running_var) {
  const auto& s = x.shape();
  check(gamma.shape().c == s.c && beta.shape().c == s.c,
        "batchnorm: affine parameter channels do not match input channels " +
            std::to_string(s.c));
  Tensor<T> y(s);
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int c = 0; c < s.c; ++c) {
    const T inv = T(1) / std::sqrt(std::max(running_var.data()[c], T(1e-12)));
    const T mu = running_mean.data()[c];
    const T g = gamma.data()[c], b = beta.data()[c];
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      T* q = y.data() + y.idx(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) q[i] = g * (p[i] - mu) * inv + b;
    }
  }
  return y;
}

template <typename T>
void batchnorm_train_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                              const Tensor<T>& save_mean, const Tensor<T>& save_invstd,
                              const Tensor<T>& gy, Tensor<T>* dx, Tensor<T>* dgamma,
                              Tensor<T>* dbeta) {
  const auto& s = x.shape();
  const std::int64_t N = std::int64_t(s.n) * s.h * s.w;
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int c = 0; c < s.c; ++c) {
    const T mu = save_mean.data()[c];
    const T inv = save_invstd.data()[c];
    T sum_g = 0, sum_gx = 0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      const T* g = gy.data() + gy.idx(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * (p[i] - mu) * inv;
      }
    }
    if (dgamma) dgamma->data()[c] += sum_gx;
    if (dbeta) dbeta->data()[c] += sum_g;
    if (dx) {
      const T ga = gamma.data()[c];
      const T mg = sum_g / T(N);
      const T mgx = sum_gx / T(N);
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.data() + x.idx(n, c, 0, 0);
        const T* g = gy.data() + gy.idx(n, c, 0, 0);
        T* d = dx->data() + dx->idx(n, c, 0, 0);
        for (std::int64_t i = 0; i < plane; ++i) {
          const T xhat = (p[i] - mu) * inv;
          d[i] += ga * inv * (g[i] - mg - xhat * mgx);
        }
      }
    }
  }
}

template <typename T>
void batchnorm_eval_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                             const Tensor<T>& running_mean, const Tensor<T>& running_var,
                             const Tensor<T>& gy, Tensor<T>* dx, Tensor<T>* dgamma,
                             Tensor<T>* dbeta) {
  const auto& s = x.shape();
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int c = 0; c < s.c; ++c) {
    const T inv = T(1) / std::sqrt(std::max(running_var.data()[c], T(1e-12)));
    const T mu = running_mean.data()[c];
    const T ga = gamma.data()[c];
    T sum_g = 0, sum_gx = 0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      const T* g = gy.data() + gy.idx(n, c, 0, 0);
      T* d = dx ? dx->data() + dx->idx(n, c, 0, 0) : nullptr;
      for (std::int64_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * (p[i] - mu) * inv;
        if (d) d[i] += g[i] * ga * inv;
      }
    }
    if (dgamma) dgamma->data()[c] += sum_gx;
    if (dbeta) dbeta->data()[c] += sum_g;
  }
}

// ------------------------------------------------------- concat and slice

template <typename T>
Tensor<T> concat_channel(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_channel: needs at least one part");
  const auto& s0 = parts[0].shape();
  int total_c = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    check(s.n == s0.n && s.h == s0.h && s.w == s0.w,
          "concat_channel: part of shape " + s.str() + " does not match leading part " +
              s0.str() + " in batch or spatial extents");
    total_c += s.c;
  }
  Tensor<T> y({s0.n, total_c, s0.h, s0.w});
  const std::int64_t plane = std::int64_t(s0.h) * s0.w;
  for (int n = 0; n < s0.n; ++n) {
    int co = 0;
    for (const auto& p : parts) {
      const std::int64_t chunk = std::int64_t(p.shape().c) * plane;
      std::copy_n(p.data() + p.idx(n, 0, 0, 0), chunk, y.data() + y.idx(n, co, 0, 0));
      co += p.shape().c;
    }
  }
  return y;
}

// Scatters the gradient of a concat output back onto part `index`.
template <typename T>
void concat_channel_backward_part(const Tensor<T>& gy, int channel_offset, Tensor<T>& dpart) {
  const auto& s = dpart.shape();
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  const std::int64_t chunk = std::int64_t(s.c) * plane;
  for (int n = 0; n < s.n; ++n) {
    const T* g = gy.data() + gy.idx(n, channel_offset, 0, 0);
    T* d = dpart.data() + dpart.idx(n, 0, 0, 0);
    for (std::int64_t i = 0; i < chunk; ++i) d[i] += g[i];
  }
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1) {
  const auto& s = x.shape();
  check(0 <= c0 && c0 < c1 && c1 <= s.c, "slice_channels: range [" + std::to_string(c0) + ", " +
                                             std::to_string(c1) + ") invalid for " +
                                             std::to_string(s.c) + " channels");
  Tensor<T> y({s.n, c1 - c0, s.h, s.w});
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    std::copy_n(x.data() + x.idx(n, c0, 0, 0), std::int64_t(c1 - c0) * plane,
                y.data() + y.idx(n, 0, 0, 0));
  return y;
}

template <typename T>
void slice_channels_backward(const Tensor<T>& gy, int c0, Tensor<T>& dx) {
  const auto& s = gy.shape();
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const T* g = gy.data() + gy.idx(n, 0, 0, 0);
    T* d = dx.data() + dx.idx(n, c0, 0, 0);
    for (std::int64_t i = 0; i < std::int64_t(s.c) * plane; ++i) d[i] += g[i];
  }
}

// --------------------------------------------------------- broadcast mul

enum class GateKind { channel, spatial, full };

template <typename T>
GateKind gate_kind(const Shape4& x, const Shape4& g) {
  if (g.n == x.n && g.c == x.c && g.h == 1 && g.w == 1) return GateKind::channel;
  if (g.n == x.n && g.c == 1 && g.h == x.h && g.w == x.w) return GateKind::spatial;
  if (g == x) return GateKind::full;
  throw ValidationError("broadcast_mul: gate shape " + Shape4(g).str() +
                        " matches neither channel (n,c,1,1), spatial (n,1,h,w), nor full " +
                        Shape4(x).str());
}

template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& x, const Tensor<T>& gate) {
  const auto kind = gate_kind<T>(x.shape(), gate.shape());
  const auto& s = x.shape();
  Tensor<T> y(s);
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      T* q = y.data() + y.idx(n, c, 0, 0);
      if (kind == GateKind::channel) {
        const T g = gate.at(n, c, 0, 0);
        for (std::int64_t i = 0; i < plane; ++i) q[i] = p[i] * g;
      } else if (kind == GateKind::spatial) {
        const T* g = gate.data() + gate.idx(n, 0, 0, 0);
        for (std::int64_t i = 0; i < plane; ++i) q[i] = p[i] * g[i];
      } else {
        const T* g = gate.data() + gate.idx(n, c, 0, 0);
        for (std::int64_t i = 0; i < plane; ++i) q[i] = p[i] * g[i];
      }
    }
  return y;
}

template <typename T>
void broadcast_mul_backward(const Tensor<T>& x, const Tensor<T>& gate, const Tensor<T>& gy,
                            Tensor<T>* dx, Tensor<T>* dgate) {
  const auto kind = gate_kind<T>(x.shape(), gate.shape());
  const auto& s = x.shape();
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      const T* g = gy.data() + gy.idx(n, c, 0, 0);
      T* d = dx ? dx->data() + dx->idx(n, c, 0, 0) : nullptr;
      if (kind == GateKind::channel) {
        const T gv = gate.at(n, c, 0, 0);
        T acc = 0;
        for (std::int64_t i = 0; i < plane; ++i) {
          if (d) d[i] += g[i] * gv;
          acc += g[i] * p[i];
        }
        if (dgate) dgate->at(n, c, 0, 0) += acc;
      } else if (kind == GateKind::spatial) {
        const T* gv = gate.data() + gate.idx(n, 0, 0, 0);
        T* dg = dgate ? dgate->data() + dgate->idx(n, 0, 0, 0) : nullptr;
        for (std::int64_t i = 0; i < plane; ++i) {
          if (d) d[i] += g[i] * gv[i];
          if (dg) dg[i] += g[i] * p[i];
        }
      } else {
        const T* gv = gate.data() + gate.idx(n, c, 0, 0);
        T* dg = dgate ? dgate->data() + dgate->idx(n, c, 0, 0) : nullptr;
        for (std::int64_t i = 0; i < plane; ++i) {
          if (d) d[i] += g[i] * gv[i];
          if (dg) dg[i] += g[i] * p[i];
        }
      }
    }
}

// ------------------------------------------------------ elementwise misc

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> y(a.shape());
  const std::int64_t m = a.numel();
  for (std::int64_t i = 0; i < m; ++i) y.data()[i] = a.data()[i] + b.data()[i];
  return y;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "div: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> y(a.shape());
  const std::int64_t m = a.numel();
  for (std::int64_t i = 0; i < m; ++i) y.data()[i] = a.data()[i] / b.data()[i];
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T k) {
  Tensor<T> y(x.shape());
  const std::int64_t m = x.numel();
  for (std::int64_t i = 0; i < m; ++i) y.data()[i] = x.data()[i] * k;
  return y;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T k) {
  Tensor<T> y(x.shape());
  const std::int64_t m = x.numel();
  for (std::int64_t i = 0; i < m; ++i) y.data()[i] = x.data()[i] + k;
  return y;
}

template <typename T>
Tensor<T> log_elem(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const std::int64_t m = x.numel();
  for (std::int64_t i = 0; i < m; ++i) y.data()[i] = std::log(x.data()[i]);
  return y;
}

template <typename T>
Tensor<T> sum_spatial(const Tensor<T>& x) {
  const auto& s = x.shape();
  Tensor<T> y({s.n, s.c, 1, 1});
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      T acc = 0;
      for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      y.at(n, c, 0, 0) = acc;
    }
  return y;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = 0;
  const std::int64_t m = x.numel();
  for (std::int64_t i = 0; i < m; ++i) acc += x.data()[i];
  return Tensor<T>::scalar(acc);
}

template <typename T>
Tensor<T> flip_w(const Tensor<T>& x) {
  const auto& s = x.shape();
  Tensor<T> y(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) y.at(n, c, h, w) = x.at(n, c, h, s.w - 1 - w);
  return y;
}

// ------------------------------------------------------ bilinear sampling

namespace detail {

template <typename T>
struct Tap {
  int lo, hi;
  T frac;
  bool clamped;
};

template <typename T>
Tap<T> make_tap(T pos, int extent) {
  bool clamped = false;
  if (pos < T(0)) {
    pos = T(0);
    clamped = true;
  }
  const T top = T(extent - 1);
  if (pos > top) {
    pos = top;
    clamped = true;
  }
  int lo = int(std::floor(pos));
  if (lo > extent - 1) lo = extent - 1;
  const int hi = (lo + 1 < extent) ? lo + 1 : extent - 1;
  return {lo, hi, pos - T(lo), clamped};
}

}  // namespace detail

// Source position for output index i under the align-corners-false convention.
template <typename T>
T resize_src_pos(int i, T scale) {
  return (T(i) + T(0.5)) / scale - T(0.5);
}

// General bilinear resize (up or down); border clamped.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  const auto& s = x.shape();
  if (out_h == s.h && out_w == s.w) return x.clone();
  Tensor<T> y({s.n, s.c, out_h, out_w});
  const T sh = T(out_h) / T(s.h);
  const T sw = T(out_w) / T(s.w);
  std::vector<detail::Tap<T>> rt(out_h), ct(out_w);
  for (int i = 0; i < out_h; ++i) rt[i] = detail::make_tap(resize_src_pos(i, sh), s.h);
  for (int j = 0; j < out_w; ++j) ct[j] = detail::make_tap(resize_src_pos(j, sw), s.w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.data() + x.idx(n, c, 0, 0);
      T* q = y.data() + y.idx(n, c, 0, 0);
      for (int i = 0; i < out_h; ++i) {
        const auto& r = rt[i];
        for (int j = 0; j < out_w; ++j) {
          const auto& cc = ct[j];
          const T v00 = p[r.lo * s.w + cc.lo], v01 = p[r.lo * s.w + cc.hi];
          const T v10 = p[r.hi * s.w + cc.lo], v11 = p[r.hi * s.w + cc.hi];
          *q++ = (T(1) - r.frac) * ((T(1) - cc.frac) * v00 + cc.frac * v01) +
                 r.frac * ((T(1) - cc.frac) * v10 + cc.frac * v11);
        }
      }
    }
  return y;
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w) {
  check(out_h >= x.shape().h && out_w >= x.shape().w,
        "bilinear_upsample: output extents " + std::to_string(out_h) + "x" +
            std::to_string(out_w) + " must be >= input extents " + std::to_string(x.shape().h) +
            "x" + std::to_string(x.shape().w));
  return bilinear_resize(x, out_h, out_w);
}

template <typename T>
void bilinear_upsample_backward(const Shape4& in_shape, const Tensor<T>& gy, Tensor<T>& dx) {
  const auto& s = in_shape;
  const int out_h = gy.shape().h, out_w = gy.shape().w;
  if (out_h == s.h && out_w == s.w) {
    const std::int64_t m = gy.numel();
    for (std::int64_t i = 0; i < m; ++i) dx.data()[i] += gy.data()[i];
    return;
  }
  const T sh = T(out_h) / T(s.h);
  const T sw = T(out_w) / T(s.w);
  std::vector<detail::Tap<T>> rt(out_h), ct(out_w);
  for (int i = 0; i < out_h; ++i) rt[i] = detail::make_tap(resize_src_pos(i, sh), s.h);
  for (int j = 0; j < out_w; ++j) ct[j] = detail::make_tap(resize_src_pos(j, sw), s.w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      T* d = dx.data() + dx.idx(n, c, 0, 0);
      const T* g = gy.data() + gy.idx(n, c, 0, 0);
      for (int i = 0; i < out_h; ++i) {
        const auto& r = rt[i];
        for (int j = 0; j < out_w; ++j) {
          const auto& cc = ct[j];
          const T gv = g[i * out_w + j];
          d[r.lo * s.w + cc.lo] += gv * (T(1) - r.frac) * (T(1) - cc.frac);
          d[r.lo * s.w + cc.hi] += gv * (T(1) - r.frac) * cc.frac;
          d[r.hi * s.w + cc.lo] += gv * r.frac * (T(1) - cc.frac);
          d[r.hi * s.w + cc.hi] += gv * r.frac * cc.frac;
        }
      }
    }
}

// positions: n x 2 x out_h x out_w; channel 0 holds row coordinates, channel 1
// column coordinates, in the input's continuous frame. Out-of-range positions
// clamp to the border.
template <typename T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& x, const Tensor<T>& positions) {
  const auto& s = x.shape();
  const auto& ps = positions.shape();
  check(ps.n == s.n && ps.c == 2, "grid_sample_bilinear: positions must be n x 2 x oh x ow, got " +
                                      ps.str() + " for input " + s.str());
  const int oh = ps.h, ow = ps.w;
  Tensor<T> y({s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    const T* pr = positions.data() + positions.idx(n, 0, 0, 0);
    const T* pc = positions.data() + positions.idx(n, 1, 0, 0);
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        const auto r = detail::make_tap(pr[i * ow + j], s.h);
        const auto cc = detail::make_tap(pc[i * ow + j], s.w);
        for (int c = 0; c < s.c; ++c) {
          const T* p = x.data() + x.idx(n, c, 0, 0);
          const T v00 = p[r.lo * s.w + cc.lo], v01 = p[r.lo * s.w + cc.hi];
          const T v10 = p[r.hi * s.w + cc.lo], v11 = p[r.hi * s.w + cc.hi];
          y.at(n, c, i, j) = (T(1) - r.frac) * ((T(1) - cc.frac) * v00 + cc.frac * v01) +
                             r.frac * ((T(1) - cc.frac) * v10 + cc.frac * v11);
        }
      }
  }
  return y;
}

template <typename T>
void grid_sample_bilinear_backward(const Tensor<T>& x, const Tensor<T>& positions,
                                   const Tensor<T>& gy, Tensor<T>* dx, Tensor<T>* dpositions) {
  const auto& s = x.shape();
  const auto& ps = positions.shape();
  const int oh = ps.h, ow = ps.w;
  for (int n = 0; n < ps.n; ++n) {
    const T* pr = positions.data() + positions.idx(n, 0, 0, 0);
    const T* pc = positions.data() + positions.idx(n, 1, 0, 0);
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        const auto r = detail::make_tap(pr[i * ow + j], s.h);
        const auto cc = detail::make_tap(pc[i * ow + j], s.w);
        T drow = 0, dcol = 0;
        for (int c = 0; c < s.c; ++c) {
          const T g = gy.at(n, c, i, j);
          const T* p = x.data() + x.idx(n, c, 0, 0);
          const T v00 = p[r.lo * s.w + cc.lo], v01 = p[r.lo * s.w + cc.hi];
          const T v10 = p[r.hi * s.w + cc.lo], v11 = p[r.hi * s.w + cc.hi];
          if (dx) {
            T* d = dx->data() + dx->idx(n, c, 0, 0);
            d[r.lo * s.w + cc.lo] += g * (T(1) - r.frac) * (T(1) - cc.frac);
            d[r.lo * s.w + cc.hi] += g * (T(1) - r.frac) * cc.frac;
            d[r.hi * s.w + cc.lo] += g * r.frac * (T(1) - cc.frac);
            d[r.hi * s.w + cc.hi] += g * r.frac * cc.frac;
          }
          drow += g * ((T(1) - cc.frac) * (v10 - v00) + cc.frac * (v11 - v01));
          dcol += g * ((T(1) - r.frac) * (v01 - v00) + r.frac * (v11 - v10));
        }
        if (dpositions) {
          if (!r.clamped) dpositions->at(n, 0, i, j) += drow;
          if (!cc.clamped) dpositions->at(n, 1, i, j) += dcol;
        }
      }
  }
}

}  // namespace wsfcn::ops
