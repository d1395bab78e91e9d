#pragma once

#include <map>
#include <string>

#include "wsfcn/rng.hpp"
#include "wsfcn/tensor.hpp"

namespace wsfcn {

// Named trainable tensors with gradient accumulators and per-group learning
// rate multipliers. std::map keeps iteration lexicographic, which pins the
// order of updates and serialization. `buffers` holds non-trainable state
// (batchnorm running statistics); it is checkpointed but never updated by the
// optimizer or visited by gradient checks.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    Tensor<T> grad;
    T lr_multiplier = T(1);
  };

  Entry& add(const std::string& name, Tensor<T> value, T lr_multiplier = T(1)) {
    check(lr_multiplier > T(0), "param '" + name + "': lr_multiplier must be positive");
    check(!entries_.count(name), "param '" + name + "' already registered");
    auto& e = entries_[name];
    e.grad = Tensor<T>::zeros(value.shape());
    e.value = std::move(value);
    e.lr_multiplier = lr_multiplier;
    return e;
  }

  Entry& at(const std::string& name) {
    auto it = entries_.find(name);
    check(it != entries_.end(), "unknown param '" + name + "'");
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = entries_.find(name);
    check(it != entries_.end(), "unknown param '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor<T>& buffer(const std::string& name) {
    auto it = buffers_.find(name);
    check(it != buffers_.end(), "unknown buffer '" + name + "'");
    return it->second;
  }
  void add_buffer(const std::string& name, Tensor<T> value) {
    check(!buffers_.count(name), "buffer '" + name + "' already registered");
    buffers_.emplace(name, std::move(value));
  }
  bool has_buffer(const std::string& name) const { return buffers_.count(name) != 0; }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad = Tensor<T>::zeros(e.value.shape());
  }

  std::int64_t trainable_count() const {
    std::int64_t total = 0;
    for (const auto& [name, e] : entries_) total += e.value.numel();
    return total;
  }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Tensor<T>>& buffers() { return buffers_; }
  const std::map<std::string, Tensor<T>>& buffers() const { return buffers_; }

 private:
  std::map<std::string, Entry> entries_;
  std::map<std::string, Tensor<T>> buffers_;
};

// He-style normal init for conv weights [out_c, in_c, kh, kw].
template <typename T>
Tensor<T> he_init(Shape4 s, Rng& rng) {
  Tensor<T> t(s);
  const double fan_in = double(s.c) * s.h * s.w;
  const double std = std::sqrt(2.0 / fan_in);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = T(rng.normal() * std);
  return t;
}

}  // namespace wsfcn
