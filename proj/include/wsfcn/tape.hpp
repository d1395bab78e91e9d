#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wsfcn/param_store.hpp"
#include "wsfcn/tensor.hpp"

namespace wsfcn {

// Dynamic tape for reverse-mode differentiation. Forward calls push value
// slots and record closures; backward() replays the closures in exact reverse
// execution order, accumulating into per-slot gradient buffers and finally
// into any bound ParamStore entries.
template <typename T>
class Tape {
 public:
  int leaf(Tensor<T> value, bool needs_grad = false) {
    vals_.push_back(std::move(value));
    grads_.emplace_back();
    needs_.push_back(needs_grad);
    return int(vals_.size()) - 1;
  }

  // Leaf bound to a parameter; backward() accumulates into store.grad.
  int param(ParamStore<T>& store, const std::string& name) {
    const int id = leaf(store.at(name).value, true);
    bindings_.emplace_back(id, &store.at(name));
    return id;
  }

  int push(Tensor<T> value, bool needs_grad) {
    return leaf(std::move(value), needs_grad);
  }

  void record(std::function<void()> back) { ops_.push_back(std::move(back)); }

  const Tensor<T>& val(int id) const { return vals_[id]; }
  bool needs_grad(int id) const { return needs_[id]; }

  Tensor<T>& grad(int id) {
    if (grads_[id].numel() != vals_[id].numel() || !(grads_[id].shape() == vals_[id].shape()))
      grads_[id] = Tensor<T>::zeros(vals_[id].shape());
    return grads_[id];
  }

  // Runs one reverse sweep seeded with d(loss)/d(loss) = 1. Each call
  // contributes exactly one copy of the gradient, so repeated calls accumulate
  // additively in the bound ParamStore.
  void backward(int loss_id, ParamStore<T>* store = nullptr) {
    check(vals_[loss_id].is_scalar(),
          "backward: loss must be scalar, got shape " + vals_[loss_id].shape().str());
    for (auto& g : grads_) g = Tensor<T>();
    grad(loss_id).data()[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    if (store) {
      for (auto& [id, entry] : bindings_) {
        const Tensor<T>& g = grad(id);
        T* dst = entry->grad.data();
        const T* src = g.data();
        for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
      }
    }
  }

  std::size_t size() const { return vals_.size(); }

 private:
  std::vector<Tensor<T>> vals_;
  std::vector<Tensor<T>> grads_;
  std::vector<bool> needs_;
  std::vector<std::function<void()>> ops_;
  std::vector<std::pair<int, typename ParamStore<T>::Entry*>> bindings_;
};

}  // namespace wsfcn
