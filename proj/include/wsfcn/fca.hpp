#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wsfcn/layers.hpp"

// Flexible context aggregation: four-branch strip-convolution context learning
// with channel attention, followed by spatial recalibration.
namespace wsfcn::fca {

struct FcaConfig {
  std::vector<int> kernel_sizes = {1, 3, 5, 7};
  int in_channels = 64;      // width of the backbone tap feeding the module
  int branch_channels = 32;  // per-branch output width
  bool attention_separate = false;  // untie the two pooled-path 1x1 convs

  void validate() const {
    check(!kernel_sizes.empty(), "fca: kernel_sizes must be non-empty");
    for (int k : kernel_sizes)
      check(k >= 1 && k % 2 == 1,
            "fca: kernel size " + std::to_string(k) + " must be odd and >= 1");
    check(in_channels >= 1 && branch_channels >= 1, "fca: channel widths must be >= 1");
  }
};

inline std::string branch_prefix(int i) { return "fca.branch" + std::to_string(i); }
inline std::string attn_prefix(int i) { return "fca.attn" + std::to_string(i); }

template <typename T>
void init_params(const FcaConfig& cfg, ParamStore<T>& store, Rng& rng, T lr_mult,
                 bool with_srm) {
  cfg.validate();
  const int d1 = cfg.in_channels, d2 = cfg.branch_channels;
  for (std::size_t i = 0; i < cfg.kernel_sizes.size(); ++i) {
    const int k = cfg.kernel_sizes[i];
    const std::string bp = branch_prefix(int(i));
    store.add(bp + ".rc0.weight", he_init<T>({d2, d1, 1, k}, rng), lr_mult);
    store.add(bp + ".rc1.weight", he_init<T>({d2, d2, k, 1}, rng), lr_mult);
    store.add(bp + ".cr0.weight", he_init<T>({d2, d1, k, 1}, rng), lr_mult);
    store.add(bp + ".cr1.weight", he_init<T>({d2, d2, 1, k}, rng), lr_mult);
    const std::string ap = attn_prefix(int(i));
    if (cfg.attention_separate) {
      layers::init_conv(store, ap + ".gap", d2, d2, 1, 1, true, rng, lr_mult);
      layers::init_conv(store, ap + ".gmp", d2, d2, 1, 1, true, rng, lr_mult);
    } else {
      layers::init_conv(store, ap, d2, d2, 1, 1, true, rng, lr_mult);
    }
  }
  layers::init_embed(store, "fca.embed", d2 * int(cfg.kernel_sizes.size()), d2, rng, lr_mult);
  if (with_srm) layers::init_conv(store, "fca.srm", 1, 2, 3, 3, true, rng, lr_mult);
}

// One multi-scale branch: both strip orders, summed. The first conv of each
// order maps d1 -> d2, the second d2 -> d2; strip kernels pad (k-1)/2 on their
// long axis so both orders stay summable at the input's spatial size.
template <typename T>
int mclm_branch(Tape<T>& t, ParamStore<T>& store, const FcaConfig& cfg, int branch, int x) {
  const int k = cfg.kernel_sizes.at(branch);
  const int pad = (k - 1) / 2;
  const std::string bp = branch_prefix(branch);
  const ops::Conv2dSpec row{.stride = 1, .pad_h = 0, .pad_w = pad};
  const ops::Conv2dSpec col{.stride = 1, .pad_h = pad, .pad_w = 0};
  const int path_rc = ad::conv2d(t, ad::conv2d(t, x, t.param(store, bp + ".rc0.weight"), -1, row),
                                 t.param(store, bp + ".rc1.weight"), -1, col);
  const int path_cr = ad::conv2d(t, ad::conv2d(t, x, t.param(store, bp + ".cr0.weight"), -1, col),
                                 t.param(store, bp + ".cr1.weight"), -1, row);
  return ad::add(t, path_rc, path_cr);
}

// Channel gate from both spatially pooled paths through the 1x1 conv(s).
// Returns (gate, gated features).
template <typename T>
std::pair<int, int> channel_attention(Tape<T>& t, ParamStore<T>& store, const FcaConfig& cfg,
                                      int branch, int f_k) {
  const std::string ap = attn_prefix(branch);
  const int gap = ad::global_pool_spatial(t, f_k, ops::PoolMode::avg);
  const int gmp = ad::global_pool_spatial(t, f_k, ops::PoolMode::max);
  int mixed;
  if (cfg.attention_separate) {
    mixed = ad::add(t, layers::conv_layer(t, store, ap + ".gap", gap, {}),
                    layers::conv_layer(t, store, ap + ".gmp", gmp, {}));
  } else {
    const int w = t.param(store, ap + ".weight");
    const int b = t.param(store, ap + ".bias");
    mixed = ad::add(t, ad::conv2d(t, gap, w, b, {}), ad::conv2d(t, gmp, w, b, {}));
  }
  const int gate = ad::sigmoid(t, mixed);
  return {gate, ad::broadcast_mul(t, f_k, gate)};
}

// Multi-scale context learning: all branches, attention-gated, concatenated,
// then one feature embedding back to d2 channels.
template <typename T>
int mclm(Tape<T>& t, ParamStore<T>& store, const FcaConfig& cfg, int x, bool training) {
  check(t.val(x).shape().c == cfg.in_channels,
        "fca: input channels " + std::to_string(t.val(x).shape().c) + " do not match d1 = " +
            std::to_string(cfg.in_channels));
  std::vector<int> gated;
  for (std::size_t i = 0; i < cfg.kernel_sizes.size(); ++i) {
    const int fk = mclm_branch(t, store, cfg, int(i), x);
    gated.push_back(channel_attention(t, store, cfg, int(i), fk).second);
  }
  return layers::embed_block(t, store, "fca.embed", ad::concat_channel(t, gated), training);
}

// Spatial recalibration: gate from channel-pooled context, residual added.
template <typename T>
int srm(Tape<T>& t, ParamStore<T>& store, int f_com) {
  const int pooled = ad::concat_channel(
      t, {ad::global_pool_channel(t, f_com, ops::PoolMode::avg),
          ad::global_pool_channel(t, f_com, ops::PoolMode::max)});
  const int conv = layers::conv_layer(t, store, "fca.srm", pooled,
                                      {.stride = 1, .pad_h = 1, .pad_w = 1});
  const int gate = ad::sigmoid(t, conv);
  return ad::add(t, ad::broadcast_mul(t, f_com, gate), f_com);
}

template <typename T>
int fca_forward(Tape<T>& t, ParamStore<T>& store, const FcaConfig& cfg, int x, bool training,
                bool with_srm = true) {
  const int f_com = mclm(t, store, cfg, x, training);
  return with_srm ? srm(t, store, f_com) : f_com;
}

}  // namespace wsfcn::fca
