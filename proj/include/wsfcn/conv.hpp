#pragma once

#include <Eigen/Core>

#include <optional>
#include <type_traits>
#include <vector>

#include "wsfcn/tensor.hpp"

namespace wsfcn::ops {

struct Conv2dSpec {
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;
  int dilation = 1;
};

inline int conv_out_extent(int in, int k, int pad, int stride, int dilation) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Unfolds one sample into a (in_c*kh*kw) x (oh*ow) patch matrix, zero padding.
template <typename T>
void im2col(const T* x, int in_c, int h, int w, int kh, int kw, int oh, int ow,
            const Conv2dSpec& sp, T* col) {
  const std::int64_t plane = std::int64_t(h) * w;
  std::int64_t r = 0;
  for (int ci = 0; ci < in_c; ++ci) {
    const T* xc = x + ci * plane;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj, ++r) {
        T* dst = col + r * (std::int64_t(oh) * ow);
        for (int i = 0; i < oh; ++i) {
          const int ih = i * sp.stride - sp.pad_h + ki * sp.dilation;
          if (ih < 0 || ih >= h) {
            for (int j = 0; j < ow; ++j) *dst++ = T(0);
            continue;
          }
          const T* row = xc + std::int64_t(ih) * w;
          for (int j = 0; j < ow; ++j) {
            const int iw = j * sp.stride - sp.pad_w + kj * sp.dilation;
            *dst++ = (iw < 0 || iw >= w) ? T(0) : row[iw];
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-adds patch-matrix gradients back onto the input.
template <typename T>
void col2im_add(const T* col, int in_c, int h, int w, int kh, int kw, int oh, int ow,
                const Conv2dSpec& sp, T* dx) {
  const std::int64_t plane = std::int64_t(h) * w;
  std::int64_t r = 0;
  for (int ci = 0; ci < in_c; ++ci) {
    T* dxc = dx + ci * plane;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj, ++r) {
        const T* src = col + r * (std::int64_t(oh) * ow);
        for (int i = 0; i < oh; ++i) {
          const int ih = i * sp.stride - sp.pad_h + ki * sp.dilation;
          if (ih < 0 || ih >= h) {
            src += ow;
            continue;
          }
          T* row = dxc + std::int64_t(ih) * w;
          for (int j = 0; j < ow; ++j) {
            const int iw = j * sp.stride - sp.pad_w + kj * sp.dilation;
            if (iw >= 0 && iw < w) row[iw] += *src;
            ++src;
          }
        }
      }
    }
  }
}

template <typename T>
void validate_conv(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                   const Conv2dSpec& sp) {
  check(sp.stride >= 1, "conv2d: stride must be >= 1");
  check(sp.dilation >= 1, "conv2d: dilation must be >= 1");
  check(sp.pad_h >= 0 && sp.pad_w >= 0, "conv2d: padding must be >= 0");
  check(weight.shape().c == x.shape().c,
        "conv2d: weight in_channels " + std::to_string(weight.shape().c) +
            " does not match input channels " + std::to_string(x.shape().c));
  if (bias) {
    check(bias->shape().c == weight.shape().n && bias->numel() == weight.shape().n,
          "conv2d: bias channels " + std::to_string(bias->shape().c) +
              " do not match out_channels " + std::to_string(weight.shape().n));
  }
  const int oh = conv_out_extent(x.shape().h, weight.shape().h, sp.pad_h, sp.stride, sp.dilation);
  const int ow = conv_out_extent(x.shape().w, weight.shape().w, sp.pad_w, sp.stride, sp.dilation);
  check(oh >= 1 && ow >= 1, "conv2d: kernel " + std::to_string(weight.shape().h) + "x" +
                                std::to_string(weight.shape().w) +
                                " does not fit input of spatial size " +
                                std::to_string(x.shape().h) + "x" + std::to_string(x.shape().w));
}

}  // namespace detail

// weight: [out_c, in_c, kh, kw] carried in the n/c/h/w slots; bias: 1 x out_c x 1 x 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const std::type_identity_t<Tensor<T>>* bias, const Conv2dSpec& sp) {
  detail::validate_conv(x, weight, bias, sp);
  const auto& xs = x.shape();
  const int oc = weight.shape().n, ic = weight.shape().c;
  const int kh = weight.shape().h, kw = weight.shape().w;
  const int oh = conv_out_extent(xs.h, kh, sp.pad_h, sp.stride, sp.dilation);
  const int ow = conv_out_extent(xs.w, kw, sp.pad_w, sp.stride, sp.dilation);
  const std::int64_t K = std::int64_t(ic) * kh * kw;
  const std::int64_t P = std::int64_t(oh) * ow;

  Tensor<T> y({xs.n, oc, oh, ow});
  detail::CMapMat<T> wmat(weight.data(), oc, K);
  std::vector<T> col(size_t(K * P));
  const bool skip_unfold = (kh == 1 && kw == 1 && sp.stride == 1 && sp.pad_h == 0 && sp.pad_w == 0);

  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x.data() + x.idx(n, 0, 0, 0);
    detail::MapMat<T> ymat(y.data() + y.idx(n, 0, 0, 0), oc, P);
    if (skip_unfold) {
      detail::CMapMat<T> xmat(xn, K, P);
      ymat.noalias() = wmat * xmat;
    } else {
      detail::im2col(xn, ic, xs.h, xs.w, kh, kw, oh, ow, sp, col.data());
      detail::CMapMat<T> cmat(col.data(), K, P);
      ymat.noalias() = wmat * cmat;
    }
    if (bias) {
      for (int o = 0; o < oc; ++o) ymat.row(o).array() += bias->data()[o];
    }
  }
  return y;
}

// Accumulates gradients for whichever of dx / dweight / dbias is non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Conv2dSpec& sp,
                     const Tensor<T>& gy, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const auto& xs = x.shape();
  const int oc = weight.shape().n, ic = weight.shape().c;
  const int kh = weight.shape().h, kw = weight.shape().w;
  const int oh = gy.shape().h, ow = gy.shape().w;
  const std::int64_t K = std::int64_t(ic) * kh * kw;
  const std::int64_t P = std::int64_t(oh) * ow;
  const bool skip_unfold = (kh == 1 && kw == 1 && sp.stride == 1 && sp.pad_h == 0 && sp.pad_w == 0);

  std::vector<T> col(size_t(K * P));
  std::vector<T> dcol(size_t(K * P));
  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x.data() + x.idx(n, 0, 0, 0);
    detail::CMapMat<T> gmat(gy.data() + gy.idx(n, 0, 0, 0), oc, P);
    if (dweight) {
      detail::MapMat<T> dwmat(dweight->data(), oc, K);
      if (skip_unfold) {
        detail::CMapMat<T> xmat(xn, K, P);
        dwmat.noalias() += gmat * xmat.transpose();
      } else {
        detail::im2col(xn, ic, xs.h, xs.w, kh, kw, oh, ow, sp, col.data());
        detail::CMapMat<T> cmat(col.data(), K, P);
        dwmat.noalias() += gmat * cmat.transpose();
      }
    }
    if (dx) {
      detail::CMapMat<T> wmat(weight.data(), oc, K);
      if (skip_unfold) {
        detail::MapMat<T> dxmat(dx->data() + dx->idx(n, 0, 0, 0), K, P);
        dxmat.noalias() += wmat.transpose() * gmat;
      } else {
        detail::MapMat<T> dcmat(dcol.data(), K, P);
        dcmat.noalias() = wmat.transpose() * gmat;
        detail::col2im_add(dcol.data(), ic, xs.h, xs.w, kh, kw, oh, ow, sp,
                           dx->data() + dx->idx(n, 0, 0, 0));
      }
    }
    if (dbias) {
      for (int o = 0; o < oc; ++o) dbias->data()[o] += gmat.row(o).sum();
    }
  }
}

}  // namespace wsfcn::ops
