#include <gtest/gtest.h>

#include "cdet/nn_blocks.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace cdet;
using cdet::testing::gradcheck;
using cdet::testing::project;

namespace {

AconParams<double> make_acon(std::int64_t channels, double p1, double p2, double beta) {
  AconParams<double> p(channels, seed_all(0), "t");
  p.p1->value.fill(p1);
  p.p2->value.fill(p2);
  p.beta->value.fill(beta);
  return p;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(AconC, ZeroInputGivesZero) {
  auto x = make_leaf(Tensor<double>::zeros({1, 2, 3, 3}));
  auto p = make_acon(2, 1.3, -0.4, 2.0);
  auto y = acon_c(x, p);
  for (std::int64_t i = 0; i < y->value.numel(); ++i) EXPECT_DOUBLE_EQ(y->value[i], 0.0);
}

TEST(AconC, EqualP1P2IsLinear) {
  Rng rng = seed_all(30).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 3, 4, 4}, rng));
  auto p = make_acon(3, 0.7, 0.7, 1.5);
  auto y = acon_c(x, p);
  for (std::int64_t i = 0; i < y->value.numel(); ++i)
    EXPECT_NEAR(y->value[i], 0.7 * x->value[i], 1e-12);
}

TEST(AconC, DefaultInitIsSwish) {
  auto x = make_leaf(Tensor<double>::full({1, 1, 1, 1}, 1.0));
  auto p = make_acon(1, 1.0, 0.0, 1.0);
  auto y = acon_c(x, p);
  EXPECT_NEAR(y->value[0], oracle::sigmoid_scalar(1.0), 1e-12);
  EXPECT_NEAR(y->value[0], 0.73106, 1e-5);
}

TEST(AconC, LargeBetaApproachesRelu) {
  auto p = make_acon(1, 1.0, 0.0, 50.0);
  for (double v = -2.0; v <= 2.0; v += 0.05) {
    if (std::abs(v) < 0.2) continue;
    auto x = make_leaf(Tensor<double>::full({1, 1, 1, 1}, v));
    auto y = acon_c(x, p);
    EXPECT_LT(std::abs(y->value[0] - std::max(v, 0.0)), 0.02) << "at x=" << v;
  }
}

TEST(AconC, MatchesScalarOracle) {
  Rng rng = seed_all(31).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 4, 3, 5}, rng));
  AconParams<double> p(4, seed_all(0), "t");
  for (std::int64_t c = 0; c < 4; ++c) {
    p.p1->value[c] = rng.uniform(0.5, 1.5);
    p.p2->value[c] = rng.uniform(-0.5, 0.5);
    p.beta->value[c] = rng.uniform(0.5, 3.0);
  }
  auto y = acon_c(x, p);
  Tensor<double> ref = oracle::acon_reference(x->value, p.p1->value, p.p2->value, p.beta->value);
  EXPECT_LT(max_abs_diff(y->value, ref), 1e-12);
}

TEST(AconC, Gradcheck) {
  Rng rng = seed_all(32).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 3, 3, 3}, rng, 0.1), true);
  AconParams<double> p(3, seed_all(0), "t");
  for (std::int64_t c = 0; c < 3; ++c) {
    p.p1->value[c] = rng.uniform(0.8, 1.2);
    p.p2->value[c] = rng.uniform(-0.2, 0.2);
    p.beta->value[c] = rng.uniform(0.5, 2.0);
  }
  Tensor<double> w = Tensor<double>::randn({2, 3, 3, 3}, rng);
  auto res = gradcheck({x, p.p1, p.p2, p.beta}, [&] { return project(acon_c(x, p), w); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Cbam, GatesForcedOpenPassInputThrough) {
  Rng rng = seed_all(33).stream("t");
  CbamParams<double> p(8, seed_all(0), "t");
  p.w1->value.zero();
  p.b1->value.zero();
  p.w2->value.zero();
  p.b2->value.fill(3.0);  // each MLP emits +3, sum +6 saturates the gate at 1
  p.w_sp->value.zero();
  p.b_sp->value.fill(3.0);
  auto x = make_leaf(Tensor<double>::randn({2, 8, 4, 4}, rng));
  auto y = cbam(x, p);
  EXPECT_LT(max_abs_diff(y->value, x->value), 1e-12);
}

TEST(Cbam, ChannelGateForcedClosedZeroesOutput) {
  Rng rng = seed_all(34).stream("t");
  CbamParams<double> p(8, seed_all(0), "t");
  p.w1->value.zero();
  p.w2->value.zero();
  p.b2->value.fill(-3.0);
  auto x = make_leaf(Tensor<double>::randn({1, 8, 4, 4}, rng));
  auto y = cbam(x, p);
  for (std::int64_t i = 0; i < y->value.numel(); ++i) EXPECT_DOUBLE_EQ(y->value[i], 0.0);
}

TEST(Cbam, MatchesScalarOracle) {
  Rng rng = seed_all(35).stream("t");
  CbamParams<double> p(8, seed_all(5), "cb");
  auto x = make_leaf(Tensor<double>::randn({2, 8, 4, 4}, rng));
  auto y = cbam(x, p);
  Tensor<double> ref =
      oracle::cbam_reference(x->value, p.w1->value, p.b1->value, p.w2->value, p.b2->value,
                             p.w_sp->value, p.b_sp->value, p.spatial_kernel);
  EXPECT_LT(max_abs_diff(y->value, ref), 1e-6);
}

TEST(Cbam, OutputShapeEqualsInputAndGateRange) {
  Rng rng = seed_all(36).stream("t");
  CbamParams<double> p(16, seed_all(2), "cb");
  auto x = make_leaf(Tensor<double>::randn({3, 16, 5, 7}, rng));
  auto y = cbam(x, p);
  EXPECT_EQ(y->value.shape(), x->value.shape());
}

TEST(Cbam, Gradcheck) {
  // Sample inputs until no relu/max kink sits within the finite-difference
  // step; the check is only meaningful on a differentiable neighbourhood.
  CbamParams<double> p(4, seed_all(3), "cb", 16, 3);
  Var<double> x;
  for (std::uint64_t attempt = 0; attempt < 256; ++attempt) {
    Rng rng = seed_all(37).stream("t", attempt);
    Tensor<double> cand = Tensor<double>::randn({2, 4, 3, 3}, rng, 0.1);
    if (oracle::cbam_kink_margin(cand, p.w1->value, p.b1->value, p.w2->value, p.b2->value) >
        5e-3) {
      x = make_leaf(cand, true);
      break;
    }
  }
  ASSERT_TRUE(x) << "no kink-free sample found";
  Rng wrng = seed_all(37).stream("w");
  Tensor<double> w = Tensor<double>::randn({2, 4, 3, 3}, wrng);
  auto res = gradcheck({x, p.w1, p.b1, p.w2, p.b2, p.w_sp, p.b_sp},
                       [&] { return project(cbam(x, p), w); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Cbam, RejectsNonPositiveChannels) {
  EXPECT_THROW(CbamParams<double>(0, seed_all(0), "t"), ConfigError);
}

TEST(Cbam, ThinLayerClampsHidden) {
  CbamParams<double> p(8, seed_all(0), "t");  // 8 / 16 clamps to 1
  EXPECT_EQ(p.hidden, 1);
}

TEST(DeformConv, ZeroOffsetsEqualReferenceConv) {
  Rng rng = seed_all(38).stream("t");
  for (int trial = 0; trial < 8; ++trial) {
    const std::int64_t cin = rng.uniform_int(1, 4), cout = rng.uniform_int(1, 4);
    const std::int64_t h = rng.uniform_int(5, 9), w = rng.uniform_int(5, 9);
    const std::int64_t stride = rng.uniform_int(1, 2), pad = rng.uniform_int(0, 1);
    Tensor<double> xt = Tensor<double>::randn({1, cin, h, w}, rng);
    Tensor<double> wt = Tensor<double>::randn({cout, cin, 3, 3}, rng);
    const std::int64_t ho = (h + 2 * pad - 3) / stride + 1;
    const std::int64_t wo = (w + 2 * pad - 3) / stride + 1;
    if (ho <= 0 || wo <= 0) continue;
    auto x = make_leaf(xt);
    auto wv = make_leaf(wt);
    auto off = make_leaf(Tensor<double>::zeros({1, 18, ho, wo}));
    auto y = deform_conv2d_with_offsets(x, wv, Var<double>(nullptr), off, stride, pad);
    Tensor<double> x3 = xt.reshaped({cin, h, w});
    Tensor<double> ref = conv2d_reference(x3, wt, Tensor<double>(), stride, pad);
    EXPECT_LT(max_abs_diff(y->value.reshaped(ref.shape()), ref), 1e-6);
  }
}

TEST(DeformConv, IntegerOffsetShiftsSampling) {
  Rng rng = seed_all(39).stream("t");
  const std::int64_t H = 6, W = 7;
  Tensor<double> xt = Tensor<double>::randn({1, 2, H, W}, rng);
  Tensor<double> wt = Tensor<double>::randn({3, 2, 3, 3}, rng);
  // dy=0, dx=1 on every tap: sampling grid shifted one column right.
  Tensor<double> off = Tensor<double>::zeros({1, 18, H, W});
  for (std::int64_t t = 0; t < 9; ++t)
    for (std::int64_t i = 0; i < H * W; ++i) off[(2 * t + 1) * H * W + i] = 1.0;
  auto y = deform_conv2d_with_offsets(make_leaf(xt), make_leaf(wt), Var<double>(nullptr),
                                      make_leaf(off), 1, 1);
  // Equivalent: ordinary conv of the input shifted one column left. The
  // equivalence holds away from the left edge, where zero padding and the
  // shifted sampling grid see different pixels.
  Tensor<double> shifted({2, H, W});
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t r = 0; r < H; ++r)
      for (std::int64_t col = 0; col < W; ++col)
        shifted.at(c, r, col) = (col + 1 < W) ? xt.at(0, c, r, col + 1) : 0.0;
  Tensor<double> ref = conv2d_reference(shifted, wt, Tensor<double>(), 1, 1);
  for (std::int64_t co = 0; co < 3; ++co)
    for (std::int64_t r = 0; r < H; ++r)
      for (std::int64_t col = 1; col < W; ++col)
        EXPECT_NEAR(y->value.at(0, co, r, col), ref.at(co, r, col), 1e-9);
}

TEST(DeformConv, HalfPixelOffsetAveragesNeighbours) {
  // Horizontal ramp, 1x1-style probe through a 3x3 kernel with only the
  // center tap active; dx=0.5 reads the mean of two horizontal neighbours.
  const std::int64_t H = 5, W = 8;
  Tensor<double> xt({1, 1, H, W});
  for (std::int64_t r = 0; r < H; ++r)
    for (std::int64_t c = 0; c < W; ++c) xt.at(0, 0, r, c) = static_cast<double>(c);
  Tensor<double> wt = Tensor<double>::zeros({1, 1, 3, 3});
  wt.at(0, 0, 1, 1) = 1.0;
  Tensor<double> off = Tensor<double>::zeros({1, 18, H, W});
  const std::int64_t t = 4;  // center tap
  for (std::int64_t i = 0; i < H * W; ++i) off[(2 * t + 1) * H * W + i] = 0.5;
  auto y = deform_conv2d_with_offsets(make_leaf(xt), make_leaf(wt), Var<double>(nullptr),
                                      make_leaf(off), 1, 1);
  // Interior: value at column c becomes (c + (c+1)) / 2.
  for (std::int64_t c = 0; c < W - 1; ++c)
    EXPECT_NEAR(y->value.at(0, 0, 2, c), (2.0 * c + 1.0) / 2.0, 1e-12);
}

TEST(DeformConv, MatchesIndependentOracle) {
  Rng rng = seed_all(40).stream("t");
  Tensor<double> xt = Tensor<double>::randn({1, 3, 6, 6}, rng);
  Tensor<double> wt = Tensor<double>::randn({2, 3, 3, 3}, rng);
  Tensor<double> off({1, 18, 6, 6});
  for (std::int64_t i = 0; i < off.numel(); ++i) off[i] = rng.uniform(-1.4, 1.4);
  auto y = deform_conv2d_with_offsets(make_leaf(xt), make_leaf(wt), Var<double>(nullptr),
                                      make_leaf(off), 1, 1);
  Tensor<double> ref = oracle::deform_conv_reference(xt.reshaped({3, 6, 6}), wt,
                                                     off.reshaped({18, 6, 6}), 1, 1);
  EXPECT_LT(max_abs_diff(y->value.reshaped(ref.shape()), ref), 1e-9);
}

TEST(DeformConv, RejectsBadOffsetChannels) {
  Rng rng = seed_all(41).stream("t");
  auto x = make_leaf(Tensor<double>::randn({1, 2, 5, 5}, rng));
  auto w = make_leaf(Tensor<double>::randn({2, 2, 3, 3}, rng));
  auto off = make_leaf(Tensor<double>::zeros({1, 17, 5, 5}));
  EXPECT_THROW(deform_conv2d_with_offsets(x, w, Var<double>(nullptr), off, 1, 1),
               std::invalid_argument);
}

TEST(DeformConv, Gradcheck) {
  Rng rng = seed_all(42).stream("t");
  auto x = make_leaf(Tensor<double>::randn({1, 2, 5, 5}, rng, 0.1), true);
  auto w = make_leaf(Tensor<double>::randn({2, 2, 3, 3}, rng, 0.1), true);
  // Fractional parts kept away from integers so the bilinear kink is not hit.
  Tensor<double> offt({1, 18, 5, 5});
  for (std::int64_t i = 0; i < offt.numel(); ++i) {
    double base = static_cast<double>(rng.uniform_int(-1, 1));
    offt[i] = base + rng.uniform(0.15, 0.35) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  }
  auto off = make_leaf(offt, true);
  Tensor<double> proj = Tensor<double>::randn({1, 2, 5, 5}, rng);
  auto res = gradcheck({x, w, off}, [&] {
    return project(deform_conv2d_with_offsets(x, w, Var<double>(nullptr), off, 1, 1), proj);
  });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(DeformConv, PredictorStartsAsPlainConvAndGetsGradient) {
  Rng rng = seed_all(43).stream("t");
  DeformConvParams<double> p(2, 3, seed_all(9), "dc");
  auto x = make_leaf(Tensor<double>::randn({1, 2, 5, 5}, rng), true);
  auto y = deform_conv2d(x, p);
  Tensor<double> ref =
      conv2d_reference(x->value.reshaped({2, 5, 5}), p.w->value, Tensor<double>(), 1, 1);
  EXPECT_LT(max_abs_diff(y->value.reshaped(ref.shape()), ref), 1e-9);

  Tensor<double> proj = Tensor<double>::randn({1, 3, 5, 5}, rng);
  backward(project(y, proj));
  ASSERT_TRUE(p.w_off->grad.defined());
  double norm = 0;
  for (std::int64_t i = 0; i < p.w_off->grad.numel(); ++i)
    norm += std::abs(p.w_off->grad[i]);
  EXPECT_GT(norm, 0.0);
}

TEST(ResidualBlock, Stage4OnlyDcnEnforced) {
  ResidualBlockSpec spec;
  spec.stage = 2;
  spec.dcn = true;
  spec.in_ch = spec.mid_ch = spec.out_ch = 8;
  EXPECT_THROW(BottleneckBlock<double>(spec, seed_all(0), "b"), ConfigError);
}

TEST(ResidualBlock, ZeroBranchIdentityBlockIsFinalActivation) {
  ResidualBlockSpec spec;
  spec.kind = BlockKind::IdentityBlock;
  spec.stage = 1;
  spec.in_ch = 8;
  spec.mid_ch = 4;
  spec.out_ch = 8;
  BottleneckBlock<double> block(spec, seed_all(0), "b");
  block.w1->value.zero();
  block.w2->value.zero();
  block.w3->value.zero();
  Rng rng = seed_all(44).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 8, 4, 4}, rng));
  auto y = block.forward(x, true, false);
  Tensor<double> ref = oracle::relu_reference(x->value);
  EXPECT_LT(max_abs_diff(y->value, ref), 1e-12);
}

TEST(ResidualBlock, PlainFlagsMatchOracleComposition) {
  ResidualBlockSpec spec;
  spec.kind = BlockKind::ConvBlock;
  spec.stage = 1;
  spec.in_ch = 6;
  spec.mid_ch = 4;
  spec.out_ch = 8;
  spec.stride = 2;
  BottleneckBlock<double> block(spec, seed_all(1), "b");
  Rng rng = seed_all(45).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 6, 8, 8}, rng));
  auto y = block.forward(x, true, false);

  // Independent composition with oracle building blocks.
  auto conv_batch = [&](const Tensor<double>& in, const Tensor<double>& w, std::int64_t s,
                        std::int64_t p) {
    const std::int64_t N = in.dim(0);
    std::vector<Tensor<double>> outs;
    for (std::int64_t n = 0; n < N; ++n) {
      Tensor<double> xn({in.dim(1), in.dim(2), in.dim(3)});
      std::copy_n(in.data() + n * xn.numel(), xn.numel(), xn.data());
      outs.push_back(conv2d_reference(xn, w, Tensor<double>(), s, p));
    }
    Tensor<double> out({N, outs[0].dim(0), outs[0].dim(1), outs[0].dim(2)});
    for (std::int64_t n = 0; n < N; ++n)
      std::copy_n(outs[static_cast<std::size_t>(n)].data(), outs[0].numel(),
                  out.data() + n * outs[0].numel());
    return out;
  };
  Tensor<double> h = oracle::relu_reference(oracle::bn_train_reference(
      conv_batch(x->value, block.w1->value, 1, 0), block.bn1_g->value, block.bn1_b->value));
  Tensor<double> h2 = oracle::relu_reference(oracle::bn_train_reference(
      conv_batch(h, block.w2->value, 2, 1), block.bn2_g->value, block.bn2_b->value));
  Tensor<double> h3 = oracle::bn_train_reference(conv_batch(h2, block.w3->value, 1, 0),
                                                 block.bn3_g->value, block.bn3_b->value);
  Tensor<double> sc = oracle::bn_train_reference(conv_batch(x->value, block.w_sc->value, 2, 0),
                                                 block.bnsc_g->value, block.bnsc_b->value);
  Tensor<double> sum(h3.shape());
  for (std::int64_t i = 0; i < sum.numel(); ++i) sum[i] = h3[i] + sc[i];
  Tensor<double> ref = oracle::relu_reference(sum);
  EXPECT_LT(max_abs_diff(y->value, ref), 1e-9);
}

TEST(ResidualBlock, AllFlagsMatchOracleComposition) {
  ResidualBlockSpec spec;
  spec.kind = BlockKind::IdentityBlock;
  spec.stage = 4;
  spec.in_ch = 8;
  spec.mid_ch = 4;
  spec.out_ch = 8;
  spec.cbam = true;
  spec.acon = true;
  spec.dcn = true;
  BottleneckBlock<double> block(spec, seed_all(2), "b");
  // Give the offset predictor nonzero weights so the deformable path is real.
  Rng orng = seed_all(46).stream("off");
  for (std::int64_t i = 0; i < block.deform.w_off->value.numel(); ++i)
    block.deform.w_off->value[i] = orng.normal() * 0.05;

  Rng rng = seed_all(47).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 8, 6, 6}, rng));
  auto y = block.forward(x, true, false);

  auto conv_batch = [&](const Tensor<double>& in, const Tensor<double>& w, std::int64_t s,
                        std::int64_t p) {
    const std::int64_t N = in.dim(0);
    Tensor<double> out;
    for (std::int64_t n = 0; n < N; ++n) {
      Tensor<double> xn({in.dim(1), in.dim(2), in.dim(3)});
      std::copy_n(in.data() + n * xn.numel(), xn.numel(), xn.data());
      Tensor<double> on = conv2d_reference(xn, w, Tensor<double>(), s, p);
      if (n == 0) out = Tensor<double>({N, on.dim(0), on.dim(1), on.dim(2)});
      std::copy_n(on.data(), on.numel(), out.data() + n * on.numel());
    }
    return out;
  };
  Tensor<double> h = oracle::relu_reference(oracle::bn_train_reference(
      conv_batch(x->value, block.w1->value, 1, 0), block.bn1_g->value, block.bn1_b->value));
  // Deformable conv via the oracle: offsets from the (ordinary) predictor.
  Tensor<double> offs = conv_batch(h, block.deform.w_off->value, 1, 1);
  Tensor<double> c2;
  {
    const std::int64_t N = h.dim(0);
    for (std::int64_t n = 0; n < N; ++n) {
      Tensor<double> hn({h.dim(1), h.dim(2), h.dim(3)});
      std::copy_n(h.data() + n * hn.numel(), hn.numel(), hn.data());
      Tensor<double> on({offs.dim(1), offs.dim(2), offs.dim(3)});
      std::copy_n(offs.data() + n * on.numel(), on.numel(), on.data());
      Tensor<double> yn = oracle::deform_conv_reference(hn, block.deform.w->value, on, 1, 1);
      if (n == 0) c2 = Tensor<double>({N, yn.dim(0), yn.dim(1), yn.dim(2)});
      std::copy_n(yn.data(), yn.numel(), c2.data() + n * yn.numel());
    }
  }
  Tensor<double> h2 = oracle::acon_reference(
      oracle::bn_train_reference(c2, block.bn2_g->value, block.bn2_b->value),
      block.acon_params.p1->value, block.acon_params.p2->value, block.acon_params.beta->value);
  Tensor<double> h3 = oracle::bn_train_reference(conv_batch(h2, block.w3->value, 1, 0),
                                                 block.bn3_g->value, block.bn3_b->value);
  Tensor<double> att = oracle::cbam_reference(
      h3, block.cbam_params.w1->value, block.cbam_params.b1->value, block.cbam_params.w2->value,
      block.cbam_params.b2->value, block.cbam_params.w_sp->value, block.cbam_params.b_sp->value,
      block.cbam_params.spatial_kernel);
  Tensor<double> sum(att.shape());
  for (std::int64_t i = 0; i < sum.numel(); ++i) sum[i] = att[i] + x->value[i];
  Tensor<double> ref = oracle::relu_reference(sum);
  EXPECT_LT(max_abs_diff(y->value, ref), 1e-5);
}
