#pragma once

#include <vector>

#include "wsfcn/ops.hpp"
#include "wsfcn/tape.hpp"

// Taped counterparts of the raw kernels. Each takes slot ids on a Tape,
// computes the forward value eagerly, and records the reverse closure when any
// input participates in differentiation.
namespace wsfcn::ad {

template <typename T>
int conv2d(Tape<T>& t, int x, int w, int b, const ops::Conv2dSpec& sp) {
  const Tensor<T>* bias = b >= 0 ? &t.val(b) : nullptr;
  Tensor<T> y = ops::conv2d(t.val(x), t.val(w), bias, sp);
  const bool ng = t.needs_grad(x) || t.needs_grad(w) || (b >= 0 && t.needs_grad(b));
  const int out = t.push(std::move(y), ng);
  if (ng) {
    t.record([&t, x, w, b, sp, out] {
      Tensor<T>* dx = t.needs_grad(x) ? &t.grad(x) : nullptr;
      Tensor<T>* dw = t.needs_grad(w) ? &t.grad(w) : nullptr;
      Tensor<T>* db = (b >= 0 && t.needs_grad(b)) ? &t.grad(b) : nullptr;
      ops::conv2d_backward(t.val(x), t.val(w), sp, t.grad(out), dx, dw, db);
    });
  }
  return out;
}

template <typename T>
int global_pool_spatial(Tape<T>& t, int x, ops::PoolMode mode) {
  const int out = t.push(ops::global_pool_spatial(t.val(x), mode), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, mode, out] {
      ops::global_pool_spatial_backward(t.val(x), mode, t.grad(out), t.grad(x));
    });
  return out;
}

template <typename T>
int global_pool_channel(Tape<T>& t, int x, ops::PoolMode mode) {
  const int out = t.push(ops::global_pool_channel(t.val(x), mode), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, mode, out] {
      ops::global_pool_channel_backward(t.val(x), mode, t.grad(out), t.grad(x));
    });
  return out;
}

template <typename T>
int pointwise(Tape<T>& t, int x, ops::Pointwise fn) {
  const int out = t.push(ops::pointwise(t.val(x), fn), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, fn, out] {
      ops::pointwise_backward(t.val(x), t.val(out), fn, t.grad(out), t.grad(x));
    });
  return out;
}

template <typename T>
int relu(Tape<T>& t, int x) { return pointwise(t, x, ops::Pointwise::relu); }
template <typename T>
int sigmoid(Tape<T>& t, int x) { return pointwise(t, x, ops::Pointwise::sigmoid); }

template <typename T>
int softmax_channel(Tape<T>& t, int x) {
  const int out = t.push(ops::softmax_channel(t.val(x)), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, out] {
      ops::softmax_channel_backward(t.val(out), t.grad(out), t.grad(x));
    });
  return out;
}

// Running stats are plain buffers owned by the caller, mutated in place during
// training-mode forward; they never carry gradients.
template <typename T>
int batchnorm(Tape<T>& t, int x, int gamma, int beta, Tensor<T>& running_mean,
              Tensor<T>& running_var, bool training) {
  const bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  if (training) {
    Tensor<T> mean, invstd;
    Tensor<T> y = ops::batchnorm_train(t.val(x), t.val(gamma), t.val(beta), running_mean,
                                       running_var, &mean, &invstd);
    const int out = t.push(std::move(y), ng);
    if (ng) {
      t.record([&t, x, gamma, beta, mean, invstd, out] {
        Tensor<T>* dx = t.needs_grad(x) ? &t.grad(x) : nullptr;
        Tensor<T>* dg = t.needs_grad(gamma) ? &t.grad(gamma) : nullptr;
        Tensor<T>* db = t.needs_grad(beta) ? &t.grad(beta) : nullptr;
        ops::batchnorm_train_backward(t.val(x), t.val(gamma), mean, invstd, t.grad(out), dx, dg, db);
      });
    }
    return out;
  }
  Tensor<T> y = ops::batchnorm_eval(t.val(x), t.val(gamma), t.val(beta), running_mean, running_var);
  const int out = t.push(std::move(y), ng);
  if (ng) {
    Tensor<T> rm = running_mean.clone(), rv = running_var.clone();
    t.record([&t, x, gamma, beta, rm, rv, out] {
      Tensor<T>* dx = t.needs_grad(x) ? &t.grad(x) : nullptr;
      Tensor<T>* dg = t.needs_grad(gamma) ? &t.grad(gamma) : nullptr;
      Tensor<T>* db = t.needs_grad(beta) ? &t.grad(beta) : nullptr;
      ops::batchnorm_eval_backward(t.val(x), t.val(gamma), rm, rv, t.grad(out), dx, dg, db);
    });
  }
  return out;
}

template <typename T>
int concat_channel(Tape<T>& t, const std::vector<int>& parts) {
  std::vector<Tensor<T>> vals;
  vals.reserve(parts.size());
  bool ng = false;
  for (int id : parts) {
    vals.push_back(t.val(id));
    ng = ng || t.needs_grad(id);
  }
  const int out = t.push(ops::concat_channel(vals), ng);
  if (ng) {
    t.record([&t, parts, out] {
      int offset = 0;
      for (int id : parts) {
        if (t.needs_grad(id))
          ops::concat_channel_backward_part(t.grad(out), offset, t.grad(id));
        offset += t.val(id).shape().c;
      }
    });
  }
  return out;
}

template <typename T>
int slice_channels(Tape<T>& t, int x, int c0, int c1) {
  const int out = t.push(ops::slice_channels(t.val(x), c0, c1), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, c0, out] { ops::slice_channels_backward(t.grad(out), c0, t.grad(x)); });
  return out;
}

template <typename T>
int broadcast_mul(Tape<T>& t, int x, int gate) {
  const bool ng = t.needs_grad(x) || t.needs_grad(gate);
  const int out = t.push(ops::broadcast_mul(t.val(x), t.val(gate)), ng);
  if (ng) {
    t.record([&t, x, gate, out] {
      Tensor<T>* dx = t.needs_grad(x) ? &t.grad(x) : nullptr;
      Tensor<T>* dg = t.needs_grad(gate) ? &t.grad(gate) : nullptr;
      ops::broadcast_mul_backward(t.val(x), t.val(gate), t.grad(out), dx, dg);
    });
  }
  return out;
}

template <typename T>
int add(Tape<T>& t, int a, int b) {
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int out = t.push(ops::add(t.val(a), t.val(b)), ng);
  if (ng) {
    t.record([&t, a, b, out] {
      const Tensor<T>& g = t.grad(out);
      for (int id : {a, b}) {
        if (!t.needs_grad(id)) continue;
        Tensor<T>& d = t.grad(id);
        for (std::int64_t i = 0; i < g.numel(); ++i) d.data()[i] += g.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
int div(Tape<T>& t, int a, int b) {
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int out = t.push(ops::div(t.val(a), t.val(b)), ng);
  if (ng) {
    t.record([&t, a, b, out] {
      const Tensor<T>& g = t.grad(out);
      const Tensor<T>& av = t.val(a);
      const Tensor<T>& bv = t.val(b);
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        const T gb = g.data()[i] / bv.data()[i];
        if (t.needs_grad(a)) t.grad(a).data()[i] += gb;
        if (t.needs_grad(b)) t.grad(b).data()[i] -= gb * av.data()[i] / bv.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
int scale(Tape<T>& t, int x, T k) {
  const int out = t.push(ops::scale(t.val(x), k), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, k, out] {
      const Tensor<T>& g = t.grad(out);
      Tensor<T>& d = t.grad(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) d.data()[i] += g.data()[i] * k;
    });
  return out;
}

template <typename T>
int add_scalar(Tape<T>& t, int x, T k) {
  const int out = t.push(ops::add_scalar(t.val(x), k), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, out] {
      const Tensor<T>& g = t.grad(out);
      Tensor<T>& d = t.grad(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) d.data()[i] += g.data()[i];
    });
  return out;
}

template <typename T>
int log_elem(Tape<T>& t, int x) {
  const int out = t.push(ops::log_elem(t.val(x)), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, out] {
      const Tensor<T>& g = t.grad(out);
      const Tensor<T>& xv = t.val(x);
      Tensor<T>& d = t.grad(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) d.data()[i] += g.data()[i] / xv.data()[i];
    });
  return out;
}

template <typename T>
int sum_spatial(Tape<T>& t, int x) {
  const int out = t.push(ops::sum_spatial(t.val(x)), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, out] {
      const auto& s = t.val(x).shape();
      const Tensor<T>& g = t.grad(out);
      Tensor<T>& d = t.grad(x);
      const std::int64_t plane = std::int64_t(s.h) * s.w;
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T gv = g.at(n, c, 0, 0);
          T* dp = d.data() + d.idx(n, c, 0, 0);
          for (std::int64_t i = 0; i < plane; ++i) dp[i] += gv;
        }
    });
  return out;
}

template <typename T>
int sum_all(Tape<T>& t, int x) {
  const int out = t.push(ops::sum_all(t.val(x)), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, out] {
      const T gv = t.grad(out).data()[0];
      Tensor<T>& d = t.grad(x);
      for (std::int64_t i = 0; i < d.numel(); ++i) d.data()[i] += gv;
    });
  return out;
}

template <typename T>
int bilinear_upsample(Tape<T>& t, int x, int out_h, int out_w) {
  const int out = t.push(ops::bilinear_upsample(t.val(x), out_h, out_w), t.needs_grad(x));
  if (t.needs_grad(x))
    t.record([&t, x, out] {
      ops::bilinear_upsample_backward(t.val(x).shape(), t.grad(out), t.grad(x));
    });
  return out;
}

template <typename T>
int grid_sample_bilinear(Tape<T>& t, int x, int positions) {
  const bool ng = t.needs_grad(x) || t.needs_grad(positions);
  const int out = t.push(ops::grid_sample_bilinear(t.val(x), t.val(positions)), ng);
  if (ng) {
    t.record([&t, x, positions, out] {
      Tensor<T>* dx = t.needs_grad(x) ? &t.grad(x) : nullptr;
      Tensor<T>* dp = t.needs_grad(positions) ? &t.grad(positions) : nullptr;
      ops::grid_sample_bilinear_backward(t.val(x), t.val(positions), t.grad(out), dx, dp);
    });
  }
  return out;
}

}  // namespace wsfcn::ad
