#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "ojkd/gradcheck.hpp"
#include "ojkd/ops.hpp"

using namespace ojkd;
using Td = Tensor<double>;

namespace {

Td randn(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = g(rng);
  return Td(std::move(shape), std::move(v));
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Td({2, 2}, {1, 2, 3}), ShapeError);
  Td t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, ZeroGradResetsBuffer) {
  Td x({3}, {1, 2, 3}, true);
  backward(sum(mul(x, x)));
  ASSERT_TRUE(x.has_grad());
  x.zero_grad();
  for (auto g : x.grad()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(x.grad().size(), x.size());
}

TEST(ForwardOp, MatmulIdentity) {
  Td a({2, 2}, {1, 2, 3, 4});
  Td eye({2, 2}, {1, 0, 0, 1});
  auto y = matmul(a, eye);
  EXPECT_EQ(y.values(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(ForwardOp, Relu) {
  Td x({3}, {-1, 0, 2});
  EXPECT_EQ(relu(x).values(), (std::vector<double>{0, 0, 2}));
}

TEST(ForwardOp, ScalarKernelConvScalesInput) {
  Td x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Td w({1, 1, 1, 1}, {2});
  auto y = conv2d(x, w, Td{}, {1, 0});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[i], 2.0 * x[i]);
}

TEST(ForwardOp, ConvPaddingAndStrideShapes) {
  Td x = Td::zeros({2, 3, 7, 7});
  Td w = Td::zeros({4, 3, 3, 3});
  EXPECT_EQ(conv2d(x, w, Td{}, {1, 1}).shape(), (Shape{2, 4, 7, 7}));
  EXPECT_EQ(conv2d(x, w, Td{}, {2, 1}).shape(), (Shape{2, 4, 4, 4}));
  EXPECT_EQ(conv2d(x, w, Td{}, {2, 0}).shape(), (Shape{2, 4, 3, 3}));
}

TEST(ForwardOp, ShapeErrorsNameTheOp) {
  Td a = Td::zeros({2, 3}), b = Td::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.op(), "matmul");
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(conv2d(Td::zeros({1, 2, 3, 3}), Td::zeros({1, 3, 1, 1}), Td{}), ShapeError);
  EXPECT_THROW(reshape(a, {5}), ShapeError);
}

TEST(GradientGate, ForwardIsBitExactIdentity) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    auto x = randn({3, 4}, rng);
    auto y = gradient_gate(x);
    ASSERT_EQ(std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(double)), 0);
  }
  Td x({2}, {3.5, -1.0});
  EXPECT_EQ(gradient_gate(x).values(), (std::vector<double>{3.5, -1.0}));
}

TEST(GradientGate, BackwardDeliversZero) {
  Td x({2}, {3.5, -1.0}, true);
  auto y = gradient_gate(x);
  const std::vector<double> upstream{7, 7};
  backward(y, std::span<const double>(upstream));
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(GradientGate, SumOfGateHasZeroGradient) {
  Td x({4}, {1, -2, 3, 0.5}, true);
  backward(sum(gradient_gate(x)));
  for (auto g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(GradientGate, GatedProductDifferentiatesOnlyTheOpenBranch) {
  // y = sum(gate(x) * x): the gated factor is a constant, so dy/dx = x.
  Td x({3}, {0.7, -1.3, 2.0}, true);
  backward(sum(mul(gradient_gate(x), x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], x[i]);

  // Finite differences on the surrogate where the gated branch is frozen.
  const Td frozen = x.detach();
  const double err = finite_difference_check([&](const Td& v) { return sum(mul(frozen, v)); }, x.detach(), 1e-6);
  EXPECT_LT(err, 1e-8);
}

TEST(Backward, SumOfSquares) {
  Td x({3}, {1, 2, 3}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, NonScalarLossRejected) {
  Td x({2}, {1, 2}, true);
  EXPECT_THROW(backward(mul(x, x)), ShapeError);
}

TEST(Backward, AccumulatesAcrossBranches) {
  std::mt19937_64 rng(3);
  auto x = randn({2, 3}, rng);
  x.set_requires_grad(true);
  auto a = randn({2, 3}, rng), b = randn({3, 2}, rng);
  auto branch1 = [&] { return sum(mul(x, a)); };
  auto branch2 = [&] { return sum(relu(matmul(x, b))); };

  x.zero_grad();
  backward(branch1());
  std::vector<double> g1(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(branch2());
  std::vector<double> g2(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(add(branch1(), branch2()));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x.grad()[i], g1[i] + g2[i], 1e-12);
}

TEST(Backward, LeafGradientsAccumulateUntilReset) {
  Td x({2}, {1, 2}, true);
  backward(sum(x));
  backward(sum(x));
  EXPECT_EQ(x.grad()[0], 2.0);
  x.zero_grad();
  backward(sum(x));
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Tape, TopologicalAndVisitsEachOpOnce) {
  Td x({2}, {1, 2}, true);
  auto h = mul(x, x);
  auto y = sum(add(h, h));  // h feeds two edges
  auto tape = record_tape(y);
  ASSERT_EQ(tape.size(), 3u);  // mul, add, sum
  for (std::size_t i = 0; i < tape.ops.size(); ++i)
    for (const auto& in : tape.ops[i]->inputs) {
      auto pos = std::find(tape.ops.begin(), tape.ops.end(), in.get());
      if (pos != tape.ops.end()) {
        EXPECT_LT(static_cast<std::size_t>(pos - tape.ops.begin()), i);
      }
    }
  backward(y);
  EXPECT_EQ(x.grad()[0], 4.0);
  EXPECT_EQ(x.grad()[1], 8.0);
}

TEST(Backward, InferenceGraphsRecordNothing) {
  Td x({2}, {1, 2});
  auto y = sum(mul(x, x));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(record_tape(y).size(), 0u);
}

TEST(Backward, ReplayIsBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(11);
    auto x = randn({4, 5}, rng);
    auto w = randn({5, 3}, rng);
    w.set_requires_grad(true);
    auto loss = sum(relu(matmul(x, w)));
    backward(loss);
    std::vector<double> out(w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
}

TEST(Backward, RandomThreeLayerCompositionMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = randn({3, 4}, rng), w1 = randn({4, 6}, rng), w2 = randn({6, 5}, rng), w3 = randn({5, 2}, rng);
    const double err = finite_difference_check(
        [&] { return sum(matmul(relu(matmul(relu(matmul(x, w1)), w2)), w3)); }, {w1, w2, w3}, 1e-6);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(FiniteDifference, SumOfSquares) {
  Td x({2}, {1, 2});
  EXPECT_LT(finite_difference_check([](const Td& v) { return sum(mul(v, v)); }, x, 1e-5), 1e-8);
}

TEST(FiniteDifference, LinearMapGradientIsColumnSums) {
  // f(x) = sum(A x), written as sum(x^T A^T) with x as a row vector.
  Td at({3, 2}, {1, 4, 2, 5, 3, 6});  // A^T for A = [[1,2,3],[4,5,6]]
  Td x({1, 3}, {0.1, -0.2, 0.3}, true);
  backward(sum(matmul(x, at)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{5, 7, 9}));
  EXPECT_LT(finite_difference_check([&](const Td& v) { return sum(matmul(v, at)); }, x.detach(), 1e-6), 1e-8);
}

TEST(FiniteDifference, RejectsNonScalarAndBadEpsilon) {
  Td x({2}, {1, 2});
  EXPECT_THROW(finite_difference_check([](const Td& v) { return mul(v, v); }, x, 1e-5), ShapeError);
  EXPECT_THROW(finite_difference_check([](const Td& v) { return sum(v); }, x, 0.0), std::invalid_argument);
}

TEST(FiniteDifference, EveryPrimitiveOnRandomInputs) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = randn({2, 3}, rng), b = randn({2, 3}, rng), r = randn({2, 3}, rng);
    EXPECT_LT(finite_difference_check([&] { return sum(mul(sub(a, b), r)); }, {a, b}, 1e-6), 1e-4);
    EXPECT_LT(finite_difference_check([&] { return sum(mul(scale(relu(a), 1.5), r)); }, {a}, 1e-6), 1e-4);
    EXPECT_LT(finite_difference_check([&] { return mean(mul(reshape(a, {3, 2}), reshape(r, {3, 2}))); }, {a}, 1e-6),
              1e-4);
  }
}
