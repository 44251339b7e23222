#include <random>

#include <gtest/gtest.h>

#include "ojkd/backbone.hpp"

using namespace ojkd;

namespace {

std::size_t param_count(const Backbone<float>& b) {
  ParamList<float> p;
  b.collect("b", p);
  return count_trainable(p);
}

template <typename T>
Tensor<T> uniform(Shape shape, std::uint64_t seed, T lo = 0, T hi = 1) {
  Rng rng(seed);
  std::uniform_real_distribution<T> u(lo, hi);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<T>(std::move(shape), std::move(v));
}

}  // namespace

TEST(Backbone, MlpParameterCount) {
  BackboneConfig c{BackboneKind::mlp, {2}, {16, 16}, 16};
  Backbone<float> b(c, InitSpec{InitScheme::kaiming_uniform, 0});
  EXPECT_EQ(param_count(b), 2u * 16 + 16 + 16 * 16 + 16 + 16 * 16 + 16);
  EXPECT_EQ(param_count(b), 592u);
}

TEST(Backbone, MiniConvFeatureShape) {
  BackboneConfig c{BackboneKind::mini_conv, {3, 32, 32}, {8, 16}, 16};
  Backbone<float> b(c, InitSpec{InitScheme::kaiming_uniform, 0});
  for (std::size_t n : {1u, 3u}) {
    auto f = b.forward(uniform<float>({n, 3, 32, 32}, n), Mode::eval);
    EXPECT_EQ(f.shape(), (Shape{n, 16}));
  }
}

TEST(Backbone, ResnetTinyFeatureShape) {
  BackboneConfig c{BackboneKind::resnet_tiny, {1, 8, 8}, {4, 8}, 8};
  Backbone<float> b(c, InitSpec{InitScheme::kaiming_uniform, 0});
  auto f = b.forward(uniform<float>({2, 1, 8, 8}, 1), Mode::train);
  EXPECT_EQ(f.shape(), (Shape{2, 8}));
}

TEST(Backbone, ZeroResidualBranchIsIdentity) {
  Rng rng(0);
  ResidualBlock<double> block(3, InitScheme::zeros, rng);
  // block input is post-relu in the network, so nonnegative
  auto x = uniform<double>({2, 3, 4, 4}, 5, 0.0, 2.0);
  for (auto mode : {Mode::train, Mode::eval}) {
    auto y = block.forward(x, mode);
    EXPECT_EQ(y.values(), x.values());
  }
}

TEST(Backbone, ZeroedResidualBranchesReduceToPooledStem) {
  BackboneConfig c{BackboneKind::resnet_tiny, {1, 6, 6}, {4, 4}, 4};
  Backbone<double> b(c, InitSpec{InitScheme::kaiming_uniform, 2});
  for (auto& blk : b.blocks()) {
    for (auto* conv : {&blk.conv1, &blk.conv2}) {
      for (auto& w : conv->weight.mutable_data()) w = 0;
      for (auto& w : conv->bias.mutable_data()) w = 0;
    }
  }
  auto x = uniform<double>({2, 1, 6, 6}, 3);
  // Features with the blocks zeroed equal pooling of the stem output.
  ParamList<double> p;
  b.collect("b", p);
  const Tensor<double>* stem_w = nullptr;
  const Tensor<double>* stem_b = nullptr;
  for (const auto& q : p) {
    if (q.name == "b.stem.weight") stem_w = &q.tensor;
    if (q.name == "b.stem.bias") stem_b = &q.tensor;
  }
  ASSERT_NE(stem_w, nullptr);
  ASSERT_NE(stem_b, nullptr);
  auto stem = relu(batch_norm2d_eval<double>(conv2d(x, *stem_w, *stem_b, {1, 1}), Tensor<double>::full({4}, 1.0),
                                             Tensor<double>::zeros({4}), std::vector<double>(4, 0.0),
                                             std::vector<double>(4, 1.0)));
  auto expect = global_avg_pool(stem);
  auto got = b.forward(x, Mode::eval);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-12);
}

TEST(Backbone, EvalModeIsDeterministic) {
  BackboneConfig c{BackboneKind::resnet_tiny, {1, 8, 8}, {4}, 4};
  Backbone<float> b(c, InitSpec{InitScheme::kaiming_uniform, 0});
  auto x = uniform<float>({3, 1, 8, 8}, 9);
  EXPECT_EQ(b.forward(x, Mode::eval).values(), b.forward(x, Mode::eval).values());
}

TEST(Backbone, InvalidStageWidths) {
  EXPECT_THROW((Backbone<float>(BackboneConfig{BackboneKind::mini_conv, {1, 8, 8}, {}, 4}, InitSpec{})),
               ConfigError);
  EXPECT_THROW((Backbone<float>(BackboneConfig{BackboneKind::mini_conv, {1, 8, 8}, {4, 8}, 4}, InitSpec{})),
               ConfigError);
  EXPECT_THROW((Backbone<float>(BackboneConfig{BackboneKind::mlp, {2}, {0}, 4}, InitSpec{})), ConfigError);
  EXPECT_THROW((Backbone<float>(BackboneConfig{BackboneKind::resnet_tiny, {8}, {4}, 4}, InitSpec{})), ConfigError);
}

TEST(Backbone, RejectsWrongInputShape) {
  BackboneConfig c{BackboneKind::mini_conv, {1, 8, 8}, {4}, 4};
  Backbone<float> b(c, InitSpec{});
  EXPECT_THROW(b.forward(uniform<float>({1, 3, 8, 8}, 0), Mode::eval), ShapeError);
}

TEST(Backbone, KindRoundTrip) {
  for (auto k : {BackboneKind::mlp, BackboneKind::mini_conv, BackboneKind::resnet_tiny})
    EXPECT_EQ(backbone_kind_from_string(to_string(k)), k);
  EXPECT_THROW(backbone_kind_from_string("vgg"), ConfigError);
}
