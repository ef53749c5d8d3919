#include <gtest/gtest.h>

#include "cdet/ops.hpp"
#include "gradcheck.hpp"

using namespace cdet;
using cdet::testing::gradcheck;
using cdet::testing::project;

namespace {

Tensor<double> random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 0.1) {
  return Tensor<double>::randn(std::move(shape), rng, scale);
}

// Keeps samples away from the kinks of relu/h_sigmoid/clamp so finite
// differences stay valid.
Tensor<double> random_away_from(std::vector<std::int64_t> shape, Rng& rng, double avoid,
                                double margin, double scale) {
  Tensor<double> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    double v;
    do {
      v = rng.normal() * scale;
    } while (std::abs(v - avoid) < margin);
    t[i] = v;
  }
  return t;
}

}  // namespace

TEST(Ops, AddForwardAndGrad) {
  Rng rng = seed_all(1).stream("t");
  auto a = make_leaf(random_tensor({2, 3, 4, 4}, rng), true);
  auto b = make_leaf(random_tensor({2, 3, 4, 4}, rng), true);
  Tensor<double> w = random_tensor({2, 3, 4, 4}, rng, 1.0);
  auto res = gradcheck({a, b}, [&] { return project(add(a, b), w); });
  EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Ops, ReluGrad) {
  Rng rng = seed_all(2).stream("t");
  auto x = make_leaf(random_away_from({2, 2, 3, 3}, rng, 0.0, 0.02, 0.1), true);
  Tensor<double> w = random_tensor({2, 2, 3, 3}, rng, 1.0);
  auto res = gradcheck({x}, [&] { return project(relu(x), w); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Ops, SigmoidGrad) {
  Rng rng = seed_all(3).stream("t");
  auto x = make_leaf(random_tensor({2, 2, 3, 3}, rng, 0.5), true);
  Tensor<double> w = random_tensor({2, 2, 3, 3}, rng, 1.0);
  auto res = gradcheck({x}, [&] { return project(sigmoid(x), w); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Ops, HSigmoidValues) {
  auto x = make_leaf(Tensor<double>::from_vector({1, 1, 1, 5}, {0.0, 3.0, -3.0, 1.5, 10.0}));
  auto y = h_sigmoid(x);
  EXPECT_DOUBLE_EQ(y->value[0], 0.5);
  EXPECT_DOUBLE_EQ(y->value[1], 1.0);
  EXPECT_DOUBLE_EQ(y->value[2], 0.0);
  EXPECT_DOUBLE_EQ(y->value[3], 0.75);
  EXPECT_DOUBLE_EQ(y->value[4], 1.0);
}

TEST(Ops, HSigmoidMonotoneAndLipschitz) {
  Rng rng = seed_all(4).stream("t");
  for (int i = 0; i < 500; ++i) {
    double a = rng.uniform(-6, 6), b = rng.uniform(-6, 6);
    auto va = make_leaf(Tensor<double>::from_vector({1, 1, 1, 1}, {a}));
    auto vb = make_leaf(Tensor<double>::from_vector({1, 1, 1, 1}, {b}));
    double ha = h_sigmoid(va)->value[0], hb = h_sigmoid(vb)->value[0];
    if (a <= b) EXPECT_LE(ha, hb);
    EXPECT_LE(std::abs(ha - hb), std::abs(a - b) / 6.0 + 1e-12);
  }
}

TEST(Ops, HSigmoidGrad) {
  Rng rng = seed_all(5).stream("t");
  // Stay away from the corners at +-3.
  auto x = make_leaf(random_tensor({2, 2, 3, 3}, rng, 0.5), true);
  Tensor<double> w = random_tensor({2, 2, 3, 3}, rng, 1.0);
  auto res = gradcheck({x}, [&] { return project(h_sigmoid(x), w); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Ops, ClampGrad) {
  Rng rng = seed_all(6).stream("t");
  auto x = make_leaf(random_away_from({1, 2, 3, 3}, rng, 0.5, 0.02, 0.4), true);
  Tensor<double> w = random_tensor({1, 2, 3, 3}, rng, 1.0);
  auto res = gradcheck({x}, [&] { return project(clamp(x, 0.0001, 0.5), w); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Ops, MulBcastChannelGate) {
  Rng rng = seed_all(7).stream("t");
  auto x = make_leaf(random_tensor({2, 3, 4, 4}, rng), true);
  auto g = make_leaf(random_tensor({2, 3, 1, 1}, rng, 0.5), true);
  Tensor<double> w = random_tensor({2, 3, 4, 4}, rng, 1.0);
  auto res = gradcheck({x, g}, [&] { return project(mul_bcast(x, g), w); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Ops, MulBcastSpatialGate) {
  Rng rng = seed_all(8).stream("t");
  auto x = make_leaf(random_tensor({2, 3, 4, 4}, rng), true);
  auto g = make_leaf(random_tensor({2, 1, 4, 4}, rng, 0.5), true);
  Tensor<double> w = random_tensor({2, 3, 4, 4}, rng, 1.0);
  auto res = gradcheck({x, g}, [&] { return project(mul_bcast(x, g), w); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Ops, ConcatChannelsGrad) {
  Rng rng = seed_all(9).stream("t");
  auto a = make_leaf(random_tensor({2, 2, 3, 3}, rng), true);
  auto b = make_leaf(random_tensor({2, 1, 3, 3}, rng), true);
  Tensor<double> w = random_tensor({2, 3, 3, 3}, rng, 1.0);
  auto res = gradcheck({a, b}, [&] { return project(concat_channels(a, b), w); });
  EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Ops, GlobalPoolsGrad) {
  Rng rng = seed_all(10).stream("t");
  auto x = make_leaf(random_tensor({2, 3, 4, 5}, rng), true);
  Tensor<double> w = random_tensor({2, 3, 1, 1}, rng, 1.0);
  auto res_avg = gradcheck({x}, [&] { return project(global_avg_pool(x), w); });
  EXPECT_LT(res_avg.max_rel_err, 1e-2);
  auto res_max = gradcheck({x}, [&] { return project(global_max_pool(x), w); });
  EXPECT_LT(res_max.max_rel_err, 1e-2);
}

TEST(Ops, ChannelStatsGrad) {
  Rng rng = seed_all(11).stream("t");
  auto x = make_leaf(random_tensor({2, 4, 3, 3}, rng), true);
  Tensor<double> w = random_tensor({2, 1, 3, 3}, rng, 1.0);
  auto res_mean = gradcheck({x}, [&] { return project(channel_mean(x), w); });
  EXPECT_LT(res_mean.max_rel_err, 1e-2);
  auto res_max = gradcheck({x}, [&] { return project(channel_max(x), w); });
  EXPECT_LT(res_max.max_rel_err, 1e-2);
}

TEST(Autograd, GradAccumulatesAcrossConsumers) {
  // y = x + x should give dy/dx = 2 everywhere.
  auto x = make_leaf(Tensor<double>::full({1, 1, 2, 2}, 0.3), true);
  Tensor<double> w = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  auto loss = project(add(x, x), w);
  backward(loss);
  for (std::int64_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x->grad[i], 2.0);
}

TEST(Autograd, NoGradWhenNotRequired) {
  auto x = make_leaf(Tensor<double>::full({1, 1, 2, 2}, 0.3), false);
  Tensor<double> w = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  auto loss = project(relu(x), w);
  backward(loss);
  EXPECT_FALSE(x->grad.defined());
}
