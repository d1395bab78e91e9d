#pragma once

#include <functional>
#include <map>

#include "wsfcn/tape.hpp"

namespace wsfcn {

// Closure contract: build the forward pass on the given tape, registering
// parameters through tape.param(store, name), and return the scalar loss id.
template <typename T>
using TapedClosure = std::function<int(ParamStore<T>&, Tape<T>&)>;

// Central-difference check of backward() against the closure's value, over
// every scalar coordinate of every entry in `params`. Returns the worst
// relative error with denominator max(|analytic|, |numeric|, 1e-8). Buffers
// (running stats) are snapshotted around evaluations so training-mode
// batchnorm inside the closure cannot leak state between probes.
template <typename T>
double finite_diff_check(ParamStore<T>& params, const TapedClosure<T>& closure, T eps) {
  const auto buffer_snapshot = [&] {
    std::map<std::string, Tensor<T>> snap;
    for (auto& [k, v] : params.buffers()) snap.emplace(k, v.clone());
    return snap;
  };
  const auto buffer_restore = [&](const std::map<std::string, Tensor<T>>& snap) {
    for (auto& [k, v] : snap) params.buffer(k) = v.clone();
  };

  const auto evaluate = [&]() -> T {
    const auto snap = buffer_snapshot();
    Tape<T> t;
    const int loss = closure(params, t);
    const T v = t.val(loss).item();
    buffer_restore(snap);
    return v;
  };

  params.zero_grads();
  {
    const auto snap = buffer_snapshot();
    Tape<T> t;
    const int loss = closure(params, t);
    t.backward(loss, &params);
    buffer_restore(snap);
  }

  double worst = 0;
  for (auto& [name, entry] : params.entries()) {
    for (std::int64_t i = 0; i < entry.value.numel(); ++i) {
      const T saved = entry.value.data()[i];
      entry.value.data()[i] = saved + eps;
      const T fp = evaluate();
      entry.value.data()[i] = saved - eps;
      const T fm = evaluate();
      entry.value.data()[i] = saved;
      const double numeric = (double(fp) - double(fm)) / (2.0 * double(eps));
      const double analytic = double(entry.grad.data()[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace wsfcn
