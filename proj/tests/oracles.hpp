#pragma once

// Independent reference implementations used to pin expected values in tests.
// Everything here is deliberately naive (nested scalar loops) and shares no
// code with the library kernels it checks.

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include "wsfcn/rng.hpp"
#include "wsfcn/tensor.hpp"

namespace oracle {

using wsfcn::Rng;
using wsfcn::Shape4;
using wsfcn::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = T(rng.uniform(lo, hi));
  return t;
}

// Dense convolution by direct summation over all six loops.
template <typename T>
Tensor<T> conv2d_ref(const Tensor<T>& x, const Tensor<T>& w,
                     const std::type_identity_t<Tensor<T>>* bias, int stride,
                     int pad_h, int pad_w, int dilation) {
  const auto& xs = x.shape();
  const int oc = w.shape().n, ic = w.shape().c, kh = w.shape().h, kw = w.shape().w;
  const int oh = (xs.h + 2 * pad_h - dilation * (kh - 1) - 1) / stride + 1;
  const int ow = (xs.w + 2 * pad_w - dilation * (kw - 1) - 1) / stride + 1;
  Tensor<T> y({xs.n, oc, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < oc; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T acc = bias ? bias->data()[o] : T(0);
          for (int ci = 0; ci < ic; ++ci)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj) {
                const int ih = i * stride - pad_h + ki * dilation;
                const int iw = j * stride - pad_w + kj * dilation;
                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                acc += x.at(n, ci, ih, iw) * w.at(o, ci, ki, kj);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

template <typename T>
Tensor<T> pool_spatial_ref(const Tensor<T>& x, bool is_max) {
  const auto& s = x.shape();
  Tensor<T> y({s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      T acc = is_max ? x.at(n, c, 0, 0) : T(0);
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          if (is_max)
            acc = std::max(acc, x.at(n, c, h, w));
          else
            acc += x.at(n, c, h, w);
        }
      y.at(n, c, 0, 0) = is_max ? acc : acc / T(s.h * s.w);
    }
  return y;
}

template <typename T>
Tensor<T> pool_channel_ref(const Tensor<T>& x, bool is_max) {
  const auto& s = x.shape();
  Tensor<T> y({s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w) {
        T acc = is_max ? x.at(n, 0, h, w) : T(0);
        for (int c = 0; c < s.c; ++c) {
          if (is_max)
            acc = std::max(acc, x.at(n, c, h, w));
          else
            acc += x.at(n, c, h, w);
        }
        y.at(n, 0, h, w) = is_max ? acc : acc / T(s.c);
      }
  return y;
}

template <typename T>
Tensor<T> elementwise_mul_ref(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> y(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) y.data()[i] = a.data()[i] * b.data()[i];
  return y;
}

// Direct evaluation of the align-corners-false weight formula at one output
// pixel of a single-channel map.
template <typename T>
T bilinear_at_ref(const Tensor<T>& x, int n, int c, T row, T col) {
  const auto& s = x.shape();
  row = std::clamp(row, T(0), T(s.h - 1));
  col = std::clamp(col, T(0), T(s.w - 1));
  const int r0 = int(std::floor(row)), c0 = int(std::floor(col));
  const int r1 = std::min(r0 + 1, s.h - 1), c1 = std::min(c0 + 1, s.w - 1);
  const T fr = row - T(r0), fc = col - T(c0);
  return (T(1) - fr) * ((T(1) - fc) * x.at(n, c, r0, c0) + fc * x.at(n, c, r0, c1)) +
         fr * ((T(1) - fc) * x.at(n, c, r1, c0) + fc * x.at(n, c, r1, c1));
}

template <typename T>
Tensor<T> bilinear_resize_ref(const Tensor<T>& x, int oh, int ow) {
  const auto& s = x.shape();
  Tensor<T> y({s.n, s.c, oh, ow});
  const T sh = T(oh) / T(s.h), sw = T(ow) / T(s.w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const T row = (T(i) + T(0.5)) / sh - T(0.5);
          const T col = (T(j) + T(0.5)) / sw - T(0.5);
          y.at(n, c, i, j) = bilinear_at_ref(x, n, c, row, col);
        }
  return y;
}

// Mask-weighted pooling of per-class scores, straight from the definition.
template <typename T>
std::vector<T> classification_scores_ref(const Tensor<T>& logits, const Tensor<T>& masks,
                                         T eps) {
  const auto& s = logits.shape();
  std::vector<T> scores;  // foreground classes 1..C, batch-major
  for (int n = 0; n < s.n; ++n)
    for (int c = 1; c < s.c; ++c) {
      T num = 0, den = eps;
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          num += masks.at(n, c, h, w) * logits.at(n, c, h, w);
          den += masks.at(n, c, h, w);
        }
      scores.push_back(num / den);
    }
  return scores;
}

// Per-pixel confusion counting for metric checks.
struct MetricCounts {
  std::vector<std::vector<long long>> cm;
  double miou = 0, pixacc = 0;
  int counted_classes = 0;
};

inline MetricCounts metrics_ref(const std::vector<int>& gt, const std::vector<int>& pred,
                                int num_classes, int ignore) {
  MetricCounts mc;
  mc.cm.assign(num_classes, std::vector<long long>(num_classes, 0));
  long long total = 0, correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == ignore) continue;
    mc.cm[gt[i]][pred[i]]++;
    ++total;
    if (gt[i] == pred[i]) ++correct;
  }
  double iou_sum = 0;
  int used = 0;
  for (int c = 0; c < num_classes; ++c) {
    long long row = 0, col = 0;
    for (int k = 0; k < num_classes; ++k) {
      row += mc.cm[c][k];
      col += mc.cm[k][c];
    }
    const long long uni = row + col - mc.cm[c][c];
    if (uni == 0) continue;
    iou_sum += double(mc.cm[c][c]) / double(uni);
    ++used;
  }
  mc.miou = used ? iou_sum / used : 0.0;
  mc.pixacc = total ? double(correct) / double(total) : 0.0;
  mc.counted_classes = used;
  return mc;
}

// One refinement sweep with uniform affinities (constant image case): the
// mean over the 3x3 neighborhood at each dilation, averaged over dilations,
// with border-clamped neighbor coordinates.
template <typename T>
Tensor<T> uniform_affinity_sweep_ref(const Tensor<T>& masks, const std::vector<int>& dilations) {
  const auto& s = masks.shape();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          T acc_d = 0;
          for (int d : dilations) {
            T acc = 0;
            for (int dh = -1; dh <= 1; ++dh)
              for (int dw = -1; dw <= 1; ++dw) {
                const int hh = std::clamp(h + dh * d, 0, s.h - 1);
                const int ww = std::clamp(w + dw * d, 0, s.w - 1);
                acc += masks.at(n, c, hh, ww);
              }
            acc_d += acc / T(9);
          }
          out.at(n, c, h, w) = acc_d / T(dilations.size());
        }
  return out;
}

}  // namespace oracle
