#include <gtest/gtest.h>

#include "cdet/conv_ops.hpp"
#include "cdet/norm_ops.hpp"
#include "gradcheck.hpp"

using namespace cdet;
using cdet::testing::gradcheck;
using cdet::testing::project;

namespace {

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(ConvReference, IdentityKernel) {
  Rng rng = seed_all(20).stream("t");
  Tensor<double> x = Tensor<double>::randn({2, 4, 5}, rng);
  Tensor<double> w = Tensor<double>::zeros({2, 2, 1, 1});
  w.at(0, 0, 0, 0) = 1.0;
  w.at(1, 1, 0, 0) = 1.0;
  Tensor<double> y = conv2d_reference(x, w, Tensor<double>(), 1, 0);
  EXPECT_NEAR(max_abs_diff(y, x), 0.0, 0.0);
}

TEST(ConvReference, AllOnesCenterPixel) {
  Tensor<double> x = Tensor<double>::full({1, 5, 5}, 1.0);
  Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  Tensor<double> y = conv2d_reference(x, w, Tensor<double>(), 1, 1);
  EXPECT_DOUBLE_EQ(y.at(0, 2, 2), 9.0);
  // Corner sees only a 2x2 valid window.
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0), 4.0);
}

TEST(ConvReference, DeltaKernelShiftsColumns) {
  Rng rng = seed_all(21).stream("t");
  Tensor<double> x = Tensor<double>::randn({1, 4, 6}, rng);
  // Kernel with a single 1 at Pn=(0,1) relative to center shifts content.
  Tensor<double> w = Tensor<double>::zeros({1, 1, 3, 3});
  w.at(0, 0, 1, 2) = 1.0;
  Tensor<double> y = conv2d_reference(x, w, Tensor<double>(), 1, 1);
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 5; ++c) EXPECT_DOUBLE_EQ(y.at(0, r, c), x.at(0, r, c + 1));
  for (std::int64_t r = 0; r < 4; ++r) EXPECT_DOUBLE_EQ(y.at(0, r, 5), 0.0);
}

TEST(ConvFast, MatchesReferenceAcrossGeometries) {
  Rng rng = seed_all(22).stream("t");
  struct Geo {
    std::int64_t cin, cout, h, w, k, s, p;
  };
  const Geo geos[] = {{1, 1, 5, 5, 3, 1, 1}, {3, 4, 8, 6, 3, 2, 1}, {2, 3, 7, 7, 1, 1, 0},
                      {4, 2, 9, 5, 3, 1, 0}, {2, 5, 6, 10, 7, 1, 3}, {3, 3, 11, 4, 3, 2, 0}};
  for (const auto& g : geos) {
    Tensor<double> xt = Tensor<double>::randn({2, g.cin, g.h, g.w}, rng);
    Tensor<double> wt = Tensor<double>::randn({g.cout, g.cin, g.k, g.k}, rng);
    Tensor<double> bt = Tensor<double>::randn({g.cout}, rng);
    auto x = make_leaf(xt);
    auto w = make_leaf(wt);
    auto b = make_leaf(bt);
    auto y = conv2d(x, w, b, g.s, g.p);
    for (std::int64_t n = 0; n < 2; ++n) {
      Tensor<double> xn({g.cin, g.h, g.w});
      std::copy_n(xt.data() + n * g.cin * g.h * g.w, g.cin * g.h * g.w, xn.data());
      Tensor<double> ref = conv2d_reference(xn, wt, bt, g.s, g.p);
      const std::int64_t per = ref.numel();
      for (std::int64_t i = 0; i < per; ++i)
        ASSERT_NEAR(y->value[n * per + i], ref[i], 1e-9);
    }
  }
}

TEST(ConvFast, Gradcheck) {
  Rng rng = seed_all(23).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 3, 5, 5}, rng, 0.1), true);
  auto w = make_leaf(Tensor<double>::randn({4, 3, 3, 3}, rng, 0.1), true);
  auto b = make_leaf(Tensor<double>::randn({4}, rng, 0.1), true);
  Tensor<double> proj = Tensor<double>::randn({2, 4, 3, 3}, rng);
  auto res = gradcheck({x, w, b}, [&] { return project(conv2d(x, w, b, 2, 1), proj); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(ConvTranspose, ShapeAndGradcheck) {
  Rng rng = seed_all(24).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 3, 4, 5}, rng, 0.1), true);
  auto w = make_leaf(Tensor<double>::randn({3, 2, 4, 4}, rng, 0.1), true);
  auto b = make_leaf(Tensor<double>::randn({2}, rng, 0.1), true);
  auto y = conv_transpose2d(x, w, b, 2, 1);
  ASSERT_EQ(y->value.dim(2), 8);
  ASSERT_EQ(y->value.dim(3), 10);
  Tensor<double> proj = Tensor<double>::randn({2, 2, 8, 10}, rng);
  auto res = gradcheck({x, w, b}, [&] { return project(conv_transpose2d(x, w, b, 2, 1), proj); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(ConvTranspose, InvertsStrideArithmetic) {
  // A 1-input-pixel transposed conv stamps the kernel; checks placement.
  auto x = make_leaf(Tensor<double>::from_vector({1, 1, 2, 2}, {1, 0, 0, 0}));
  Tensor<double> wt({1, 1, 4, 4});
  for (std::int64_t i = 0; i < 16; ++i) wt[i] = static_cast<double>(i);
  auto w = make_leaf(wt);
  auto y = conv_transpose2d(x, w, Var<double>(nullptr), 2, 1);
  ASSERT_EQ(y->value.dim(2), 4);
  // Output pixel (0,0) receives kernel tap (1,1) from input (0,0).
  EXPECT_DOUBLE_EQ(y->value.at(0, 0, 0, 0), wt.at(0, 0, 1, 1));
  EXPECT_DOUBLE_EQ(y->value.at(0, 0, 0, 1), wt.at(0, 0, 1, 2));
}

TEST(MaxPool, ForwardAndGrad) {
  Rng rng = seed_all(25).stream("t");
  // Well-separated values keep window maxima unambiguous under the
  // finite-difference step.
  Tensor<double> xt({2, 2, 6, 6});
  std::vector<double> grid(static_cast<std::size_t>(xt.numel()));
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 0.01 * static_cast<double>(i) - 0.7;
  rng.shuffle(grid.begin(), grid.end());
  std::copy(grid.begin(), grid.end(), xt.data());
  auto x = make_leaf(xt, true);
  auto y = maxpool2d(x, 3, 2, 1);
  ASSERT_EQ(y->value.dim(2), 3);
  Tensor<double> proj = Tensor<double>::randn({2, 2, 3, 3}, rng);
  auto res = gradcheck({x}, [&] { return project(maxpool2d(x, 3, 2, 1), proj); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(Upsample, HandComputedBilinear) {
  // 2x2 -> 4x4, align_corners=false: corners of the output reproduce the
  // input corners; interior midpoints average neighbours 3:1.
  auto x = make_leaf(Tensor<double>::from_vector({1, 1, 2, 2}, {1, 3, 5, 7}));
  auto y = upsample_bilinear2x(x);
  ASSERT_EQ(y->value.dim(2), 4);
  EXPECT_DOUBLE_EQ(y->value.at(0, 0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y->value.at(0, 0, 0, 3), 3.0);
  EXPECT_DOUBLE_EQ(y->value.at(0, 0, 3, 0), 5.0);
  EXPECT_DOUBLE_EQ(y->value.at(0, 0, 3, 3), 7.0);
  // Source coordinate of output x=1 is 0.25: 0.75*1 + 0.25*3 = 1.5.
  EXPECT_DOUBLE_EQ(y->value.at(0, 0, 0, 1), 1.5);
  EXPECT_DOUBLE_EQ(y->value.at(0, 0, 1, 0), 0.75 * 1 + 0.25 * 5);
}

TEST(Upsample, Gradcheck) {
  Rng rng = seed_all(26).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 3, 3, 4}, rng, 0.1), true);
  Tensor<double> proj = Tensor<double>::randn({2, 3, 6, 8}, rng);
  auto res = gradcheck({x}, [&] { return project(upsample_bilinear2x(x), proj); });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(BatchNorm, NormalizesInTraining) {
  Rng rng = seed_all(27).stream("t");
  auto x = make_leaf(Tensor<double>::randn({4, 3, 5, 5}, rng, 2.0));
  auto g = make_leaf(Tensor<double>::full({3}, 1.0));
  auto b = make_leaf(Tensor<double>::zeros({3}));
  BnRunningStats<double> stats(3);
  auto y = batchnorm2d(x, g, b, stats, true, true);
  for (std::int64_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    const std::int64_t plane = 25;
    for (std::int64_t n = 0; n < 4; ++n)
      for (std::int64_t i = 0; i < plane; ++i) {
        double v = y->value[(n * 3 + c) * plane + i];
        sum += v;
        sq += v * v;
      }
    const double mean = sum / 100, var = sq / 100 - mean * mean;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-4);  // eps shifts variance slightly below 1
    EXPECT_GT(std::abs(stats.mean[c]), 0.0);
  }
}

TEST(BatchNorm, GradcheckTrainingMode) {
  Rng rng = seed_all(28).stream("t");
  auto x = make_leaf(Tensor<double>::randn({3, 2, 4, 4}, rng, 0.5), true);
  auto g = make_leaf(Tensor<double>::rand_uniform({2}, rng, 0.5, 1.5), true);
  auto b = make_leaf(Tensor<double>::randn({2}, rng, 0.1), true);
  Tensor<double> proj = Tensor<double>::randn({3, 2, 4, 4}, rng);
  auto res = gradcheck({x, g, b}, [&] {
    BnRunningStats<double> stats(2);
    return project(batchnorm2d(x, g, b, stats, true, false), proj);
  });
  EXPECT_LT(res.max_rel_err, 1e-2);
}

TEST(BatchNorm, EvalUsesRunningStats) {
  Rng rng = seed_all(29).stream("t");
  auto x = make_leaf(Tensor<double>::randn({2, 2, 3, 3}, rng));
  auto g = make_leaf(Tensor<double>::full({2}, 1.0));
  auto b = make_leaf(Tensor<double>::zeros({2}));
  BnRunningStats<double> stats(2);
  stats.mean[0] = 1.0;
  stats.var[0] = 4.0;
  auto y = batchnorm2d(x, g, b, stats, false, false);
  EXPECT_NEAR(y->value[0], (x->value[0] - 1.0) / std::sqrt(4.0 + 1e-5), 1e-12);
}
