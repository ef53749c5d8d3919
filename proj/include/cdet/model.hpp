#pragma once

#include <string>
#include <vector>

#include "cdet/decode.hpp"
#include "cdet/nn_blocks.hpp"

namespace cdet {

template <typename T>
struct BackboneOutputs {
  Var<T> c2, c3, c4, c5;  // strides 4, 8, 16, 32; widths 256..2048
};

template <typename T>
struct HeadOutputs {
  Var<T> heatmap;  // (B, n_classes, Hm, Wm), sigmoid output in (0,1)
  Var<T> offset;   // (B, 2, Hm, Wm)
  Var<T> size;     // (B, 2, Hm, Wm)
};

// 50-layer residual backbone: 7x7/2 stem + maxpool, then four bottleneck
// stages with identity-block counts 2, 3, 5, 2 after each stage's ConvBlock.
// CBAM/ACON apply per block when flagged; the 3x3 convs of stage 4 become
// deformable when flagged.
template <typename T>
struct Backbone {
  Var<T> stem_w, stem_bn_g, stem_bn_b;
  BnRunningStats<T> stem_bn_s;
  std::vector<BottleneckBlock<T>> blocks;

  Backbone() = default;

  Backbone(const AblationFlags& flags, const RngState& rng) {
    stem_w = make_leaf(init::he_conv<T>(rng, "backbone.stem.w", 64, 3, 7, 7), true);
    stem_bn_g = make_leaf(Tensor<T>::full({64}, T(1)), true);
    stem_bn_b = make_leaf(Tensor<T>::zeros({64}), true);
    stem_bn_s = BnRunningStats<T>(64);

    struct StagePlan {
      int stage;
      std::int64_t mid, out;
      std::int64_t stride;
      int n_identity;
    };
    const StagePlan plan[4] = {{1, 64, 256, 1, 2},
                               {2, 128, 512, 2, 3},
                               {3, 256, 1024, 2, 5},
                               {4, 512, 2048, 2, 2}};
    std::int64_t in_ch = 64;
    for (const auto& st : plan) {
      for (int b = 0; b < st.n_identity + 1; ++b) {
        ResidualBlockSpec spec;
        spec.kind = b == 0 ? BlockKind::ConvBlock : BlockKind::IdentityBlock;
        spec.stage = st.stage;
        spec.in_ch = b == 0 ? in_ch : st.out;
        spec.mid_ch = st.mid;
        spec.out_ch = st.out;
        spec.stride = b == 0 ? st.stride : 1;
        spec.cbam = flags.cbam;
        spec.acon = flags.acon;
        spec.dcn = flags.dcn && st.stage == 4;
        const std::string name =
            "backbone.stage" + std::to_string(st.stage) + ".block" + std::to_string(b);
        blocks.emplace_back(spec, rng, name);
      }
      in_ch = st.out;
    }
  }

  BackboneOutputs<T> forward(const Var<T>& image, bool training, bool update_running) {
    Var<T> x = conv2d(image, stem_w, Var<T>(nullptr), 2, 3);
    x = relu(batchnorm2d(x, stem_bn_g, stem_bn_b, stem_bn_s, training, update_running));
    x = maxpool2d(x, 3, 2, 1);
    BackboneOutputs<T> out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      x = blocks[i].forward(x, training, update_running);
      const int stage = blocks[i].spec.stage;
      const bool last_of_stage =
          i + 1 == blocks.size() || blocks[i + 1].spec.stage != stage;
      if (last_of_stage) {
        if (stage == 1) out.c2 = x;
        if (stage == 2) out.c3 = x;
        if (stage == 3) out.c4 = x;
        if (stage == 4) out.c5 = x;
      }
    }
    return out;
  }

  void collect(ParamRegistry<T>& reg) const {
    reg.add("backbone.stem.w", stem_w);
    reg.add("backbone.stem.bn.g", stem_bn_g);
    reg.add("backbone.stem.bn.b", stem_bn_b);
    int i = 0;
    for (const auto& b : blocks) {
      b.collect("backbone.stage" + std::to_string(b.spec.stage) + ".block" +
                    std::to_string(block_index_within_stage(i)),
                reg);
      ++i;
    }
  }

  void collect_stats(std::vector<std::pair<std::string, Tensor<T>>>& out) {
    out.emplace_back("backbone.stem.bn.rmean", stem_bn_s.mean);
    out.emplace_back("backbone.stem.bn.rvar", stem_bn_s.var);
    int i = 0;
    for (auto& b : blocks) {
      b.collect_stats("backbone.stage" + std::to_string(b.spec.stage) + ".block" +
                          std::to_string(block_index_within_stage(i)),
                      out);
      ++i;
    }
  }

 private:
  int block_index_within_stage(int flat_index) const {
    int idx = 0;
    const int stage = blocks[static_cast<std::size_t>(flat_index)].spec.stage;
    for (int j = 0; j < flat_index; ++j)
      if (blocks[static_cast<std::size_t>(j)].spec.stage == stage) ++idx;
    return idx;
  }
};

// Top-down pyramid fusion: 1x1 laterals, x2 bilinear upsampling, pixel adds;
// only the final stride-4 map feeds the heads.
template <typename T>
struct Fpn {
  Var<T> lat2_w, lat2_b, lat3_w, lat3_b, lat4_w, lat4_b, lat5_w, lat5_b;

  Fpn() = default;

  Fpn(std::int64_t channels, const RngState& rng) {
    auto lat = [&](const std::string& name, std::int64_t cin, Var<T>& w, Var<T>& b) {
      w = make_leaf(init::he_conv<T>(rng, name + ".w", channels, cin, 1, 1), true);
      b = make_leaf(Tensor<T>::zeros({channels}), true);
    };
    lat("fpn.lat2", 256, lat2_w, lat2_b);
    lat("fpn.lat3", 512, lat3_w, lat3_b);
    lat("fpn.lat4", 1024, lat4_w, lat4_b);
    lat("fpn.lat5", 2048, lat5_w, lat5_b);
  }

  Var<T> forward(const BackboneOutputs<T>& b) {
    Var<T> p5 = conv2d(b.c5, lat5_w, lat5_b, 1, 0);
    Var<T> p4 = add(conv2d(b.c4, lat4_w, lat4_b, 1, 0), upsample_bilinear2x(p5));
    Var<T> p3 = add(conv2d(b.c3, lat3_w, lat3_b, 1, 0), upsample_bilinear2x(p4));
    return add(conv2d(b.c2, lat2_w, lat2_b, 1, 0), upsample_bilinear2x(p3));
  }

  void collect(ParamRegistry<T>& reg) const {
    reg.add("fpn.lat2.w", lat2_w);
    reg.add("fpn.lat2.b", lat2_b);
    reg.add("fpn.lat3.w", lat3_w);
    reg.add("fpn.lat3.b", lat3_b);
    reg.add("fpn.lat4.w", lat4_w);
    reg.add("fpn.lat4.b", lat4_b);
    reg.add("fpn.lat5.w", lat5_w);
    reg.add("fpn.lat5.b", lat5_b);
  }
};

// Pyramid-off path: the reference decoder of three 4x4/2 transposed convs
// (2048 -> 256 -> 128 -> 64) lifting C5 back to stride 4.
template <typename T>
struct DeconvNeck {
  static constexpr std::int64_t kOutChannels = 64;
  Var<T> w1, w2, w3;
  Var<T> bn1_g, bn1_b, bn2_g, bn2_b, bn3_g, bn3_b;
  BnRunningStats<T> bn1_s, bn2_s, bn3_s;

  DeconvNeck() = default;

  explicit DeconvNeck(const RngState& rng) {
    auto deconv = [&](const std::string& name, std::int64_t cin, std::int64_t cout, Var<T>& w,
                      Var<T>& g, Var<T>& b, BnRunningStats<T>& s) {
      Rng stream = rng.stream("init." + name);
      const T stddev = std::sqrt(T(2) / static_cast<T>(cin * 16));
      w = make_leaf(Tensor<T>::randn({cin, cout, 4, 4}, stream, stddev), true);
      g = make_leaf(Tensor<T>::full({cout}, T(1)), true);
      b = make_leaf(Tensor<T>::zeros({cout}), true);
      s = BnRunningStats<T>(cout);
    };
    deconv("neck.deconv1.w", 2048, 256, w1, bn1_g, bn1_b, bn1_s);
    deconv("neck.deconv2.w", 256, 128, w2, bn2_g, bn2_b, bn2_s);
    deconv("neck.deconv3.w", 128, 64, w3, bn3_g, bn3_b, bn3_s);
  }

  Var<T> forward(const Var<T>& c5, bool training, bool update_running) {
    Var<T> x = conv_transpose2d(c5, w1, Var<T>(nullptr), 2, 1);
    x = relu(batchnorm2d(x, bn1_g, bn1_b, bn1_s, training, update_running));
    x = conv_transpose2d(x, w2, Var<T>(nullptr), 2, 1);
    x = relu(batchnorm2d(x, bn2_g, bn2_b, bn2_s, training, update_running));
    x = conv_transpose2d(x, w3, Var<T>(nullptr), 2, 1);
    x = relu(batchnorm2d(x, bn3_g, bn3_b, bn3_s, training, update_running));
    return x;
  }

  void collect(ParamRegistry<T>& reg) const {
    reg.add("neck.deconv1.w", w1);
    reg.add("neck.bn1.g", bn1_g);
    reg.add("neck.bn1.b", bn1_b);
    reg.add("neck.deconv2.w", w2);
    reg.add("neck.bn2.g", bn2_g);
    reg.add("neck.bn2.b", bn2_b);
    reg.add("neck.deconv3.w", w3);
    reg.add("neck.bn3.g", bn3_g);
    reg.add("neck.bn3.b", bn3_b);
  }

  void collect_stats(std::vector<std::pair<std::string, Tensor<T>>>& out) {
    out.emplace_back("neck.bn1.rmean", bn1_s.mean);
    out.emplace_back("neck.bn1.rvar", bn1_s.var);
    out.emplace_back("neck.bn2.rmean", bn2_s.mean);
    out.emplace_back("neck.bn2.rvar", bn2_s.var);
    out.emplace_back("neck.bn3.rmean", bn3_s.mean);
    out.emplace_back("neck.bn3.rvar", bn3_s.var);
  }
};

// Three heads, each 3x3 conv + ReLU + 1x1 conv. The heatmap head ends in a
// sigmoid with its final bias at -2.19 (prior probability 0.1) so the focal
// loss starts stable.
template <typename T>
struct Heads {
  static constexpr T kHeatmapBiasInit = T(-2.19);
  struct Head {
    Var<T> w1, b1, w2, b2;
  };
  Head hm, off, sz;

  Heads() = default;

  Heads(std::int64_t in_ch, std::int64_t mid_ch, std::int64_t n_classes, const RngState& rng) {
    auto head = [&](const std::string& name, std::int64_t out_ch, T final_bias) {
      Head h;
      h.w1 = make_leaf(init::he_conv<T>(rng, name + ".conv1.w", mid_ch, in_ch, 3, 3), true);
      h.b1 = make_leaf(Tensor<T>::zeros({mid_ch}), true);
      h.w2 = make_leaf(init::he_conv<T>(rng, name + ".conv2.w", out_ch, mid_ch, 1, 1), true);
      h.b2 = make_leaf(Tensor<T>::full({out_ch}, final_bias), true);
      return h;
    };
    hm = head("heads.hm", n_classes, kHeatmapBiasInit);
    off = head("heads.off", 2, T(0));
    sz = head("heads.size", 2, T(0));
  }

  HeadOutputs<T> forward(const Var<T>& p2) {
    auto run = [&](const Head& h) {
      return conv2d(relu(conv2d(p2, h.w1, h.b1, 1, 1)), h.w2, h.b2, 1, 0);
    };
    HeadOutputs<T> out;
    out.heatmap = sigmoid(run(hm));
    out.offset = run(off);
    out.size = run(sz);
    return out;
  }

  void collect(ParamRegistry<T>& reg) const {
    auto add = [&](const std::string& name, const Head& h) {
      reg.add(name + ".conv1.w", h.w1);
      reg.add(name + ".conv1.b", h.b1);
      reg.add(name + ".conv2.w", h.w2);
      reg.add(name + ".conv2.b", h.b2);
    };
    add("heads.hm", hm);
    add("heads.off", off);
    add("heads.size", sz);
  }
};

// The full detector: backbone -> FPN (or deconv neck) -> heads.
template <typename T>
struct Detector {
  ModelConfig cfg;
  Backbone<T> backbone;
  Fpn<T> fpn;
  DeconvNeck<T> neck;
  Heads<T> heads;
  bool backbone_frozen = false;

  Detector() = default;

  Detector(const ModelConfig& cfg_, const RngState& rng) : cfg(validate_config(cfg_)) {
    backbone = Backbone<T>(cfg.ablation, rng);
    const std::int64_t head_in =
        cfg.ablation.fpn ? cfg.fpn_channels : DeconvNeck<T>::kOutChannels;
    if (cfg.ablation.fpn)
      fpn = Fpn<T>(cfg.fpn_channels, rng);
    else
      neck = DeconvNeck<T>(rng);
    heads = Heads<T>(head_in, cfg.head_channels, cfg.n_classes, rng);
  }

  // Freezing stops gradient flow into the backbone and pins its BN stats;
  // normalization still uses batch statistics while training.
  void set_backbone_frozen(bool frozen) {
    backbone_frozen = frozen;
    ParamRegistry<T> reg;
    backbone.collect(reg);
    for (auto& [name, v] : reg.items) {
      v->requires_grad = !frozen;
      v->needs_grad = !frozen;
    }
  }

  HeadOutputs<T> forward(const Var<T>& images, bool training) {
    if (images->value.ndim() != 4 || images->value.dim(1) != 3)
      throw DataError("detector: expects (B,3,H,W) input");
    if (images->value.dim(2) % 32 != 0 || images->value.dim(3) % 32 != 0)
      throw DataError("detector: input dims must be divisible by 32");
    const bool bb_update = training && !backbone_frozen;
    BackboneOutputs<T> b = backbone.forward(images, training, bb_update);
    Var<T> p2 = cfg.ablation.fpn ? fpn.forward(b) : neck.forward(b.c5, training, training);
    return heads.forward(p2);
  }

  ParamRegistry<T> params() const {
    ParamRegistry<T> reg;
    backbone.collect(reg);
    if (cfg.ablation.fpn)
      fpn.collect(reg);
    else
      neck.collect(reg);
    heads.collect(reg);
    return reg;
  }

  std::vector<std::pair<std::string, Tensor<T>>> stats() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    backbone.collect_stats(out);
    if (!cfg.ablation.fpn) neck.collect_stats(out);
    return out;
  }

  std::int64_t param_count() const { return params().total_count(); }
};

// Slices one image's head maps out of a batched forward for the decoder.
template <typename T>
HeadMaps<T> slice_head_maps(const HeadOutputs<T>& outs, std::int64_t n) {
  auto slice = [&](const Tensor<T>& t) {
    const std::int64_t C = t.dim(1), H = t.dim(2), W = t.dim(3);
    Tensor<T> out({C, H, W});
    std::copy_n(t.data() + n * C * H * W, C * H * W, out.data());
    return out;
  };
  return {slice(outs.heatmap->value), slice(outs.offset->value), slice(outs.size->value)};
}

}  // namespace cdet
