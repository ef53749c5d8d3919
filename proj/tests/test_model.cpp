#include <gtest/gtest.h>

#include "cdet/model.hpp"

using namespace cdet;

namespace {

ModelConfig tiny_cfg(AblationFlags flags = {}) {
  ModelConfig cfg;
  cfg.input_h = 64;
  cfg.input_w = 64;
  cfg.n_classes = 5;
  cfg.fpn_channels = 64;
  cfg.head_channels = 32;
  cfg.ablation = flags;
  return cfg;
}

bool tensors_equal(const Tensor<float>& a, const Tensor<float>& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST(Backbone, StrideAndWidthContract) {
  AblationFlags flags{false, true, false, false, false};
  Backbone<float> bb(flags, seed_all(1));
  Rng rng = seed_all(2).stream("x");
  auto x = make_leaf(Tensor<float>::randn({1, 3, 64, 64}, rng, 0.1f));
  auto outs = bb.forward(x, false, false);
  EXPECT_EQ(outs.c2->value.shape(), (std::vector<std::int64_t>{1, 256, 16, 16}));
  EXPECT_EQ(outs.c3->value.shape(), (std::vector<std::int64_t>{1, 512, 8, 8}));
  EXPECT_EQ(outs.c4->value.shape(), (std::vector<std::int64_t>{1, 1024, 4, 4}));
  EXPECT_EQ(outs.c5->value.shape(), (std::vector<std::int64_t>{1, 2048, 2, 2}));
}

TEST(Backbone, PlainFlagsGiveFiftyLayerBlockCounts) {
  AblationFlags flags{false, true, false, false, false};
  Backbone<float> bb(flags, seed_all(1));
  // 3 + 4 + 6 + 3 bottleneck blocks, ConvBlocks included.
  EXPECT_EQ(bb.blocks.size(), 16u);
  int per_stage[5] = {0, 0, 0, 0, 0};
  for (const auto& b : bb.blocks) ++per_stage[b.spec.stage];
  EXPECT_EQ(per_stage[1], 3);
  EXPECT_EQ(per_stage[2], 4);
  EXPECT_EQ(per_stage[3], 6);
  EXPECT_EQ(per_stage[4], 3);
  for (const auto& b : bb.blocks) {
    EXPECT_FALSE(b.spec.cbam);
    EXPECT_FALSE(b.spec.acon);
    EXPECT_FALSE(b.spec.dcn);
  }
}

TEST(Backbone, DcnOnlyInStageFour) {
  AblationFlags flags{false, true, true, false, false};
  Backbone<float> bb(flags, seed_all(1));
  for (const auto& b : bb.blocks) EXPECT_EQ(b.spec.dcn, b.spec.stage == 4);
}

TEST(Fpn, ShapePropagationAndZeroLaterals) {
  ModelConfig cfg = tiny_cfg({false, true, false, false, false});
  RngState rng = seed_all(3);
  Detector<float> model(cfg, rng);
  Rng xr = seed_all(4).stream("x");
  auto x = make_leaf(Tensor<float>::randn({1, 3, 64, 64}, xr, 0.1f));
  auto b = model.backbone.forward(x, false, false);
  auto p2 = model.fpn.forward(b);
  EXPECT_EQ(p2->value.shape(), (std::vector<std::int64_t>{1, 64, 16, 16}));

  // Zero the C2..C4 laterals: P2 becomes the C5 lateral upsampled x8.
  model.fpn.lat2_w->value.zero();
  model.fpn.lat2_b->value.zero();
  model.fpn.lat3_w->value.zero();
  model.fpn.lat3_b->value.zero();
  model.fpn.lat4_w->value.zero();
  model.fpn.lat4_b->value.zero();
  auto p2_zero = model.fpn.forward(b);
  auto p5 = conv2d(b.c5, model.fpn.lat5_w, model.fpn.lat5_b, std::int64_t(1), std::int64_t(0));
  auto up8 = upsample_bilinear2x(upsample_bilinear2x(upsample_bilinear2x(p5)));
  ASSERT_TRUE(p2_zero->value.same_shape(up8->value));
  for (std::int64_t i = 0; i < up8->value.numel(); ++i)
    ASSERT_NEAR(p2_zero->value[i], up8->value[i], 1e-6);
}

TEST(Heads, ShapeContractAndBiasPrior) {
  ModelConfig cfg = tiny_cfg();
  Heads<float> heads(64, 32, 5, seed_all(5));
  Rng xr = seed_all(6).stream("x");
  auto p2 = make_leaf(Tensor<float>::randn({2, 64, 16, 16}, xr, 0.1f));
  auto outs = heads.forward(p2);
  EXPECT_EQ(outs.heatmap->value.shape(), (std::vector<std::int64_t>{2, 5, 16, 16}));
  EXPECT_EQ(outs.offset->value.shape(), (std::vector<std::int64_t>{2, 2, 16, 16}));
  EXPECT_EQ(outs.size->value.shape(), (std::vector<std::int64_t>{2, 2, 16, 16}));
  for (std::int64_t i = 0; i < outs.heatmap->value.numel(); ++i) {
    ASSERT_GT(outs.heatmap->value[i], 0.f);
    ASSERT_LT(outs.heatmap->value[i], 1.f);
  }

  // Zeroed weights leave only the -2.19 bias: sigmoid gives the 0.1 prior.
  heads.hm.w1->value.zero();
  heads.hm.b1->value.zero();
  heads.hm.w2->value.zero();
  auto outs2 = heads.forward(p2);
  for (std::int64_t i = 0; i < outs2.heatmap->value.numel(); ++i)
    ASSERT_NEAR(outs2.heatmap->value[i], 0.1f, 2e-3);
}

TEST(Detector, OutputStrideInvariant) {
  for (auto dims : {std::pair<int, int>{64, 64}, {32, 96}}) {
    ModelConfig cfg = tiny_cfg();
    cfg.input_h = dims.first;
    cfg.input_w = dims.second;
    Detector<float> model(cfg, seed_all(7));
    Rng xr = seed_all(8).stream("x");
    auto x = make_leaf(Tensor<float>::randn({1, 3, dims.first, dims.second}, xr, 0.1f));
    auto outs = model.forward(x, false);
    EXPECT_EQ(outs.heatmap->value.dim(2), dims.first / 4);
    EXPECT_EQ(outs.heatmap->value.dim(3), dims.second / 4);
  }
}

TEST(Detector, RejectsBadInput) {
  Detector<float> model(tiny_cfg(), seed_all(7));
  Rng xr = seed_all(8).stream("x");
  auto bad = make_leaf(Tensor<float>::randn({1, 3, 60, 64}, xr, 0.1f));
  EXPECT_THROW(model.forward(bad, false), DataError);
}

TEST(Detector, EvalForwardIsPureAndBatchIndependent) {
  ModelConfig cfg = tiny_cfg({true, true, true, true, true});
  Detector<float> model(cfg, seed_all(9));
  Rng xr = seed_all(10).stream("x");
  Tensor<float> one = Tensor<float>::randn({1, 3, 64, 64}, xr, 0.2f);
  Tensor<float> two({2, 3, 64, 64});
  std::copy_n(one.data(), one.numel(), two.data());
  std::copy_n(one.data(), one.numel(), two.data() + one.numel());

  auto a = model.forward(make_leaf(one), false);
  auto b = model.forward(make_leaf(one), false);
  EXPECT_TRUE(tensors_equal(a.heatmap->value, b.heatmap->value));
  EXPECT_TRUE(tensors_equal(a.size->value, b.size->value));

  auto batched = model.forward(make_leaf(two), false);
  HeadMaps<float> first = slice_head_maps(batched, 0);
  HeadMaps<float> second = slice_head_maps(batched, 1);
  EXPECT_TRUE(tensors_equal(first.heatmap, second.heatmap));
  HeadMaps<float> single = slice_head_maps(a, 0);
  for (std::int64_t i = 0; i < single.heatmap.numel(); ++i)
    ASSERT_NEAR(first.heatmap[i], single.heatmap[i], 1e-6);
}

TEST(Detector, ParamCountMonotoneInFlags) {
  const AblationFlags base{false, true, false, false, true};
  const std::int64_t n_base = Detector<float>(tiny_cfg(base), seed_all(11)).param_count();
  {
    AblationFlags f = base;
    f.cbam = true;
    EXPECT_GT(Detector<float>(tiny_cfg(f), seed_all(11)).param_count(), n_base);
  }
  {
    AblationFlags f = base;
    f.dcn = true;
    EXPECT_GT(Detector<float>(tiny_cfg(f), seed_all(11)).param_count(), n_base);
  }
  {
    AblationFlags f = base;
    f.acon = true;
    EXPECT_GT(Detector<float>(tiny_cfg(f), seed_all(11)).param_count(), n_base);
  }
}

TEST(Detector, FpnToggleChangesHeadInputWidth) {
  ModelConfig with_fpn = tiny_cfg({false, true, false, false, true});
  ModelConfig without = tiny_cfg({false, false, false, false, true});
  Detector<float> a(with_fpn, seed_all(12));
  Detector<float> b(without, seed_all(12));
  EXPECT_EQ(a.heads.hm.w1->value.dim(1), with_fpn.fpn_channels);
  EXPECT_EQ(b.heads.hm.w1->value.dim(1), DeconvNeck<float>::kOutChannels);
  // The deconv path still lands on stride 4.
  Rng xr = seed_all(13).stream("x");
  auto x = make_leaf(Tensor<float>::randn({1, 3, 64, 64}, xr, 0.1f));
  auto outs = b.forward(x, false);
  EXPECT_EQ(outs.heatmap->value.dim(2), 16);
}

TEST(Detector, GradientReachesEveryParameter) {
  ModelConfig cfg = tiny_cfg({true, true, true, true, true});
  cfg.input_h = 32;
  cfg.input_w = 64;
  Detector<float> model(cfg, seed_all(14));
  Rng xr = seed_all(15).stream("x");
  auto x = make_leaf(Tensor<float>::randn({2, 3, 32, 64}, xr, 0.3f));
  auto outs = model.forward(x, true);

  // A generic scalar touching all three heads.
  Rng pr = seed_all(16).stream("p");
  auto proj = [&](const Var<float>& v) {
    Tensor<float> w = Tensor<float>::randn(v->value.shape(), pr);
    float acc = 0;
    for (std::int64_t i = 0; i < v->value.numel(); ++i) acc += v->value[i] * w[i];
    Tensor<float> out = Tensor<float>::from_vector({1}, {acc});
    return make_node<float>(std::move(out), {v}, [v, w](VarNode<float>& node) {
      if (!v->needs_grad) return;
      float* d = ensure_grad(*v).data();
      for (std::int64_t i = 0; i < w.numel(); ++i) d[i] += node.grad[0] * w[i];
    });
  };
  auto loss = affine_combine<float>(
      {proj(outs.heatmap), proj(outs.offset), proj(outs.size)}, {1.f, 1.f, 1.f});
  backward(loss);

  ParamRegistry<float> reg = model.params();
  for (const auto& [name, p] : reg.items) {
    ASSERT_TRUE(p->grad.defined()) << name << " has no gradient";
    float max_abs = 0;
    for (std::int64_t i = 0; i < p->grad.numel(); ++i)
      max_abs = std::max(max_abs, std::abs(p->grad[i]));
    EXPECT_GT(max_abs, 0.f) << name << " gradient identically zero";
  }
}

TEST(Detector, FrozenBackboneReceivesNoGradient) {
  ModelConfig cfg = tiny_cfg();
  cfg.input_h = 32;
  cfg.input_w = 64;
  Detector<float> model(cfg, seed_all(17));
  model.set_backbone_frozen(true);
  Rng xr = seed_all(18).stream("x");
  auto x = make_leaf(Tensor<float>::randn({1, 3, 32, 64}, xr, 0.2f));
  auto outs = model.forward(x, true);
  // Sum of the heatmap as a quick scalar.
  Tensor<float> ones = Tensor<float>::full(outs.heatmap->value.shape(), 1.f);
  float acc = 0;
  for (std::int64_t i = 0; i < ones.numel(); ++i) acc += outs.heatmap->value[i];
  auto loss = make_node<float>(Tensor<float>::from_vector({1}, {acc}), {outs.heatmap},
                               [h = outs.heatmap](VarNode<float>& node) {
                                 float* d = ensure_grad(*h).data();
                                 for (std::int64_t i = 0; i < h->value.numel(); ++i)
                                   d[i] += node.grad[0];
                               });
  backward(loss);
  ParamRegistry<float> bb;
  model.backbone.collect(bb);
  for (const auto& [name, p] : bb.items) EXPECT_FALSE(p->grad.defined()) << name;
  // Heads still learn.
  ASSERT_TRUE(model.heads.hm.w1->grad.defined());
}
