#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "wsfcn/common.hpp"

namespace wsfcn {

// Extents of a dense 4-D tensor: batch, channels, height, width.
struct Shape4 {
  int n = 1, c = 1, h = 1, w = 1;

  std::int64_t numel() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
  }
};

// Dense NCHW row-major tensor. Operations treat tensors as immutable values:
// they never write through their inputs, so sharing the underlying buffer
// across threads is safe. Mutable access is intended for construction only.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  Tensor() : shape_{1, 1, 1, 1}, data_(std::make_shared<std::vector<T>>(1, T(0))) {}

  explicit Tensor(Shape4 s) : shape_(s) {
    check(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1,
          "tensor extents must all be >= 1, got " + s.str());
    data_ = std::make_shared<std::vector<T>>(size_t(s.numel()), T(0));
  }

  Tensor(Shape4 s, std::vector<T> values) : shape_(s) {
    check(std::int64_t(values.size()) == s.numel(),
          "tensor data length " + std::to_string(values.size()) +
              " does not match shape " + s.str());
    data_ = std::make_shared<std::vector<T>>(std::move(values));
  }

  static Tensor zeros(Shape4 s) { return Tensor(s); }

  static Tensor full(Shape4 s, T value) {
    Tensor t(s);
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
  }

  static Tensor scalar(T value) { return full({1, 1, 1, 1}, value); }

  const Shape4& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  bool is_scalar() const { return shape_.numel() == 1; }

  const T* data() const { return data_->data(); }
  T* data() { return data_->data(); }
  const std::vector<T>& vec() const { return *data_; }

  T at(int n, int c, int h, int w) const { return (*data_)[idx(n, c, h, w)]; }
  T& at(int n, int c, int h, int w) { return (*data_)[idx(n, c, h, w)]; }

  std::size_t idx(int n, int c, int h, int w) const {
    return ((std::size_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  T item() const {
    check(is_scalar(), "item() on non-scalar tensor of shape " + shape_.str());
    return (*data_)[0];
  }

  // Deep copy with an unshared buffer.
  Tensor clone() const { return Tensor(shape_, *data_); }

  bool same_bits(const Tensor& other) const {
    return shape_ == other.shape_ && *data_ == *other.data_;
  }

  bool all_finite() const {
    for (T v : *data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>((*data_)[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape4 shape_;
  std::shared_ptr<std::vector<T>> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace wsfcn
