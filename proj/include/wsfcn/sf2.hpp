#pragma once

#include <functional>
#include <string>
#include <utility>

#include "wsfcn/layers.hpp"

// Semantically consistent feature fusion: offset-predicting aligned upsampling
// of the deep features, then bidirectional refinement against the shallow ones.
namespace wsfcn::sf2 {

struct Sf2Config {
  int channels = 32;  // d2 for both feature levels
  int stride = 2;     // integer ratio between the low- and high-level grids
};

template <typename T>
void init_params(const Sf2Config& cfg, ParamStore<T>& store, Rng& rng, T lr_mult) {
  check(cfg.stride >= 1, "sf2: stride must be >= 1");
  const int d2 = cfg.channels;
  // Linear 2-channel projection; BN/ReLU would forbid negative offsets.
  layers::init_conv(store, "sf2.offset", 2, 2 * d2, 3, 3, true, rng, lr_mult);
  layers::init_embed(store, "sf2.embed_h", d2, d2, rng, lr_mult);
  layers::init_embed(store, "sf2.embed_l", d2, d2, rng, lr_mult);
  layers::init_embed(store, "sf2.fuse_h", d2, d2, rng, lr_mult);
  layers::init_embed(store, "sf2.fuse_l", d2, d2, rng, lr_mult);
  layers::init_embed(store, "sf2.out", d2, d2, rng, lr_mult);
}

inline int stride_between(const Shape4& high, const Shape4& low) {
  check(low.h % high.h == 0 && low.w % high.w == 0 && low.h / high.h == low.w / high.w,
        "sf2: low-level extents " + std::to_string(low.h) + "x" + std::to_string(low.w) +
            " are not an integer multiple of high-level extents " + std::to_string(high.h) +
            "x" + std::to_string(high.w));
  return low.h / high.h;
}

// Offsets for every low-resolution grid position, in high-resolution pixel
// units, from the concatenation of plainly upsampled deep features with the
// shallow ones.
template <typename T>
int predict_offset(Tape<T>& t, ParamStore<T>& store, int f_h, int f_l) {
  const auto& low = t.val(f_l).shape();
  (void)stride_between(t.val(f_h).shape(), low);
  const int up = ad::bilinear_upsample(t, f_h, low.h, low.w);
  const int cat = ad::concat_channel(t, {up, f_l});
  return layers::conv_layer(t, store, "sf2.offset", cat, {.stride = 1, .pad_h = 1, .pad_w = 1});
}

// Sampling positions (p + 0.5)/s - 0.5 + offset/s in the deep feature frame.
// With zero offsets this reproduces plain bilinear upsampling bit for bit.
template <typename T>
int aligned_upsample(Tape<T>& t, int f_h, int p_offset, int s) {
  const auto& off = t.val(p_offset).shape();
  check(off.c == 2, "sf2: offset field must have 2 channels, got " + std::to_string(off.c));
  Tensor<T> base({off.n, 2, off.h, off.w});
  const T scale = T(s);
  for (int n = 0; n < off.n; ++n)
    for (int i = 0; i < off.h; ++i)
      for (int j = 0; j < off.w; ++j) {
        base.at(n, 0, i, j) = ops::resize_src_pos(i, scale);
        base.at(n, 1, i, j) = ops::resize_src_pos(j, scale);
      }
  const int positions = ad::add(t, t.leaf(std::move(base)), ad::scale(t, p_offset, T(1) / scale));
  return ad::grid_sample_bilinear(t, f_h, positions);
}

// Hook for the feature embedding so tests can swap in an identity surrogate.
template <typename T>
using EmbedFn = std::function<int(Tape<T>&, const std::string&, int)>;

template <typename T>
EmbedFn<T> store_embed(ParamStore<T>& store, bool training) {
  return [&store, training](Tape<T>& t, const std::string& prefix, int x) {
    return layers::embed_block(t, store, prefix, x, training);
  };
}

// Bidirectional fusion; the two inner embeddings are computed once and reused
// by both outputs.
template <typename T>
std::pair<int, int> sf2_fuse_with_embed(Tape<T>& t, ParamStore<T>& store, const Sf2Config& cfg,
                                        int f_h, int f_l, const EmbedFn<T>& embed) {
  const int s = stride_between(t.val(f_h).shape(), t.val(f_l).shape());
  check(s == cfg.stride, "sf2: configured stride " + std::to_string(cfg.stride) +
                             " does not match feature grids (ratio " + std::to_string(s) + ")");
  const int offset = predict_offset(t, store, f_h, f_l);
  const int gamma_h = aligned_upsample(t, f_h, offset, s);
  const int a = embed(t, "sf2.embed_h", gamma_h);
  const int b = embed(t, "sf2.embed_l", f_l);
  const int ab = ad::broadcast_mul(t, a, b);
  const int f_h_prime = embed(t, "sf2.fuse_h", ad::add(t, a, ab));
  const int f_l_prime = embed(t, "sf2.fuse_l", ad::add(t, b, ab));
  return {f_h_prime, f_l_prime};
}

template <typename T>
std::pair<int, int> sf2_fuse(Tape<T>& t, ParamStore<T>& store, const Sf2Config& cfg, int f_h,
                             int f_l, bool training) {
  return sf2_fuse_with_embed(t, store, cfg, f_h, f_l, store_embed(store, training));
}

// Downstream combination: elementwise sum followed by one embedding, keeping a
// single d2-channel map at the low-level resolution.
template <typename T>
int sf2_output(Tape<T>& t, ParamStore<T>& store, int f_h_prime, int f_l_prime, bool training) {
  check(t.val(f_h_prime).shape() == t.val(f_l_prime).shape(),
        "sf2_output: shape mismatch " + t.val(f_h_prime).shape().str() + " vs " +
            t.val(f_l_prime).shape().str());
  return layers::embed_block(t, store, "sf2.out", ad::add(t, f_h_prime, f_l_prime), training);
}

}  // namespace wsfcn::sf2
