#pragma once

#include <string>

#include "wsfcn/ad.hpp"
#include "wsfcn/rng.hpp"

namespace wsfcn::layers {

// Conv weights live under "<prefix>.weight" (+ ".bias" when with_bias).
template <typename T>
void init_conv(ParamStore<T>& store, const std::string& prefix, int out_c, int in_c, int kh,
               int kw, bool with_bias, Rng& rng, T lr_mult) {
  store.add(prefix + ".weight", he_init<T>({out_c, in_c, kh, kw}, rng), lr_mult);
  if (with_bias) store.add(prefix + ".bias", Tensor<T>::zeros({1, out_c, 1, 1}), lr_mult);
}

template <typename T>
int conv_layer(Tape<T>& t, ParamStore<T>& store, const std::string& prefix, int x,
               const ops::Conv2dSpec& sp) {
  const int w = t.param(store, prefix + ".weight");
  const int b = store.has(prefix + ".bias") ? t.param(store, prefix + ".bias") : -1;
  return ad::conv2d(t, x, w, b, sp);
}

// Feature embedding: 3x3 conv (no bias) + BatchNorm + ReLU under "<prefix>.conv"
// and "<prefix>.bn".
template <typename T>
void init_embed(ParamStore<T>& store, const std::string& prefix, int in_c, int out_c, Rng& rng,
                T lr_mult) {
  store.add(prefix + ".conv.weight", he_init<T>({out_c, in_c, 3, 3}, rng), lr_mult);
  store.add(prefix + ".bn.gamma", Tensor<T>::full({1, out_c, 1, 1}, T(1)), lr_mult);
  store.add(prefix + ".bn.beta", Tensor<T>::zeros({1, out_c, 1, 1}), lr_mult);
  store.add_buffer(prefix + ".bn.running_mean", Tensor<T>::zeros({1, out_c, 1, 1}));
  store.add_buffer(prefix + ".bn.running_var", Tensor<T>::full({1, out_c, 1, 1}, T(1)));
}

template <typename T>
int embed_block(Tape<T>& t, ParamStore<T>& store, const std::string& prefix, int x,
                bool training) {
  const int conv = ad::conv2d(t, x, t.param(store, prefix + ".conv.weight"), -1,
                              {.stride = 1, .pad_h = 1, .pad_w = 1});
  const int bn = ad::batchnorm(t, conv, t.param(store, prefix + ".bn.gamma"),
                               t.param(store, prefix + ".bn.beta"),
                               store.buffer(prefix + ".bn.running_mean"),
                               store.buffer(prefix + ".bn.running_var"), training);
  return ad::relu(t, bn);
}

}  // namespace wsfcn::layers
