#include <gtest/gtest.h>

#include <sstream>

#include "cdet/config.hpp"
#include "cdet/geometry.hpp"
#include "cdet/rng.hpp"
#include "cdet/tensor.hpp"

using namespace cdet;

TEST(Rng, SameSeedSameStreams) {
  RngState a = seed_all(0);
  RngState b = seed_all(0);
  Rng s1 = a.stream("augment", 3);
  Rng s2 = b.stream("augment", 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(s1.next_u64(), s2.next_u64());
}

TEST(Rng, DifferentSeedsDiverge) {
  Rng s1 = seed_all(0).stream("augment");
  Rng s2 = seed_all(1).stream("augment");
  bool any_diff = false;
  for (int i = 0; i < 10; ++i) any_diff |= (s1.next_u64() != s2.next_u64());
  EXPECT_TRUE(any_diff);
}

TEST(Rng, ChildStreamsIndependent) {
  RngState root = seed_all(42);
  Rng a = root.stream("init");
  Rng b = root.stream("shuffle");
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformBoundsAndDeterminism) {
  Rng r = seed_all(7).stream("u");
  for (int i = 0; i < 1000; ++i) {
    double v = r.uniform();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  Rng r2 = seed_all(7).stream("u");
  Rng r3 = seed_all(7).stream("u");
  for (int i = 0; i < 100; ++i) EXPECT_EQ(r2.uniform(), r3.uniform());
}

TEST(Rng, UniformIntRange) {
  Rng r = seed_all(3).stream("i");
  for (int i = 0; i < 1000; ++i) {
    auto v = r.uniform_int(-2, 5);
    EXPECT_GE(v, -2);
    EXPECT_LE(v, 5);
  }
}

TEST(Tensor, ShapeAndFill) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(t.dim(2), 4);
  t.fill(2.5f);
  EXPECT_FLOAT_EQ(t[13], 2.5f);
  t.at(1, 2, 3) = 9.f;
  EXPECT_FLOAT_EQ(t[23], 9.f);
}

TEST(Tensor, SharedStorageAndClone) {
  Tensor<float> a({4});
  Tensor<float> b = a;  // shares
  b[0] = 1.f;
  EXPECT_FLOAT_EQ(a[0], 1.f);
  Tensor<float> c = a.clone();
  c[0] = 5.f;
  EXPECT_FLOAT_EQ(a[0], 1.f);
}

TEST(Config, AcceptsDivisibleStride) {
  ModelConfig cfg;
  cfg.input_h = 512;
  cfg.input_w = 512;
  cfg.output_stride = 4;
  EXPECT_NO_THROW(validate_config(cfg));
}

TEST(Config, RejectsNonDivisibleStride) {
  ModelConfig cfg;
  cfg.input_h = 512;
  cfg.input_w = 512;
  cfg.output_stride = 3;
  EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(Config, LambdaRegDefaultsToPointOne) {
  // A document with no loss-weight keys keeps the default weights.
  std::istringstream doc("model.input_h = 64\nmodel.input_w = 256\n");
  KvDoc kv = KvDoc::parse(doc);
  ModelConfig cfg = model_config_from_kv(kv);
  EXPECT_FLOAT_EQ(cfg.lambda_reg, 0.1f);
  EXPECT_FLOAT_EQ(cfg.lambda_off, 1.0f);
  EXPECT_EQ(cfg.input_h, 64);
}

TEST(Config, RejectsNonPositiveLambda) {
  ModelConfig cfg;
  cfg.lambda_reg = 0.f;
  EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(Config, KvRoundTrip) {
  ModelConfig cfg;
  cfg.input_h = 64;
  cfg.input_w = 256;
  cfg.fpn_channels = 128;
  cfg.ablation.dcn = false;
  cfg.confidence_threshold = 0.45f;
  KvDoc kv;
  model_config_to_kv(cfg, kv);
  std::istringstream s(kv.serialize());
  ModelConfig back = model_config_from_kv(KvDoc::parse(s));
  EXPECT_EQ(cfg, back);
}

TEST(Config, OverrideSyntax) {
  KvDoc kv;
  kv.set_override("model.top_k=50");
  EXPECT_EQ(kv.get_int("model.top_k", 100), 50);
  EXPECT_THROW(kv.set_override("nonsense"), ConfigError);
}

TEST(Config, ClassOrderIsAlphabetical) {
  EXPECT_EQ(class_id_of("dotted"), 0);
  EXPECT_EQ(class_id_of("folded"), 1);
  EXPECT_EQ(class_id_of("malposed"), 2);
  EXPECT_EQ(class_id_of("normal"), 3);
  EXPECT_EQ(class_id_of("unfiltered"), 4);
  EXPECT_EQ(class_id_of("bogus"), -1);
}

TEST(Geometry, BoxInvariants) {
  BoundingBox b{10.f, 20.f, 50.f, 40.f, 0};
  EXPECT_TRUE(b.valid());
  EXPECT_FLOAT_EQ(b.width(), 40.f);
  EXPECT_FLOAT_EQ(b.center_x(), 30.f);
  BoundingBox bad{10.f, 20.f, 10.f, 40.f, 0};
  EXPECT_FALSE(bad.valid());
}

TEST(Geometry, IouCases) {
  BoundingBox a{0, 0, 2, 2, 0};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  BoundingBox far_box{10, 10, 12, 12, 0};
  EXPECT_DOUBLE_EQ(iou(a, far_box), 0.0);
  BoundingBox shifted{1, 0, 3, 2, 0};
  EXPECT_NEAR(iou(a, shifted), 2.0 / 6.0, 1e-12);
}

TEST(Config, FingerprintChangesWithArch) {
  ModelConfig a, b;
  b.fpn_channels = 128;
  EXPECT_NE(config_fingerprint(a), config_fingerprint(b));
  EXPECT_EQ(config_fingerprint(a), config_fingerprint(ModelConfig{}));
}
