#pragma once

// Finite-difference checks of every differentiable layer in 64-bit mode.
// Each instance draws fresh random inputs/parameters and reduces the layer
// output against a random weighting so every output coordinate matters.

#include <random>
#include <string>
#include <vector>

#include "ojkd/gradcheck.hpp"
#include "ojkd/layers.hpp"

namespace ojkd {

struct GradcheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
};

namespace detail {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = g(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

inline Tensor<double> weighted_sum(const Tensor<double>& y, const Tensor<double>& w) { return sum(mul(y, w)); }

}  // namespace detail

inline std::vector<GradcheckResult> run_gradcheck_suite(std::size_t instances = 20, std::uint64_t seed = 7,
                                                        double epsilon = 1e-6) {
  using detail::random_tensor;
  using detail::weighted_sum;
  Rng rng(seed);
  std::vector<GradcheckResult> results;
  auto run = [&](const std::string& name, auto&& one_instance) {
    GradcheckResult r{name, instances, 0.0};
    for (std::size_t i = 0; i < instances; ++i) r.max_error = std::max(r.max_error, one_instance());
    results.push_back(r);
  };

  run("linear", [&] {
    auto x = random_tensor({3, 4}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({5}, rng);
    auto r = random_tensor({3, 5}, rng);
    return finite_difference_check([&] { return weighted_sum(add_rowwise(matmul(x, w), b), r); }, {x, w, b}, epsilon);
  });

  run("conv2d", [&] {
    std::uniform_int_distribution<int> coin(0, 1);
    const Conv2dOptions opt{static_cast<std::size_t>(1 + coin(rng)), static_cast<std::size_t>(coin(rng))};
    auto x = random_tensor({2, 2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    const std::size_t oh = (5 + 2 * opt.padding - 3) / opt.stride + 1;
    auto r = random_tensor({2, 3, oh, oh}, rng);
    return finite_difference_check([&] { return weighted_sum(conv2d(x, w, b, opt), r); }, {x, w, b}, epsilon);
  });

  run("relu_composite", [&] {
    auto x = random_tensor({4, 3}, rng), w1 = random_tensor({3, 6}, rng), w2 = random_tensor({6, 2}, rng);
    auto r = random_tensor({4, 2}, rng);
    return finite_difference_check([&] { return weighted_sum(matmul(relu(matmul(x, w1)), w2), r); }, {x, w1, w2},
                                   epsilon);
  });

  run("layer_norm", [&] {
    auto x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    auto r = random_tensor({3, 6}, rng);
    return finite_difference_check([&] { return weighted_sum(layer_norm(x, g, b), r); }, {x, g, b}, epsilon);
  });

  run("batch_norm2d_train", [&] {
    auto x = random_tensor({3, 2, 3, 3}, rng), g = random_tensor({2}, rng), b = random_tensor({2}, rng);
    auto r = random_tensor({3, 2, 3, 3}, rng);
    return finite_difference_check([&] { return weighted_sum(batch_norm2d_train(x, g, b), r); }, {x, g, b}, epsilon);
  });

  run("batch_norm2d_eval", [&] {
    auto x = random_tensor({2, 3, 2, 2}, rng), g = random_tensor({3}, rng), b = random_tensor({3}, rng);
    std::vector<double> rm{0.3, -0.2, 1.0}, rv{1.5, 0.7, 2.0};
    auto r = random_tensor({2, 3, 2, 2}, rng);
    return finite_difference_check([&] { return weighted_sum(batch_norm2d_eval<double>(x, g, b, rm, rv), r); },
                                   {x, g, b}, epsilon);
  });

  run("softmax_cross_entropy", [&] {
    auto z = random_tensor({4, 5}, rng, 2.0);
    std::uniform_int_distribution<std::int32_t> lab(0, 4);
    std::vector<std::int32_t> y(4);
    for (auto& v : y) v = lab(rng);
    return finite_difference_check([&] { return softmax_cross_entropy(z, y); }, {z}, epsilon);
  });

  run("max_pool2d", [&] {
    auto x = random_tensor({2, 2, 4, 4}, rng);
    auto r = random_tensor({2, 2, 2, 2}, rng);
    return finite_difference_check([&] { return weighted_sum(max_pool2d(x, 2), r); }, {x}, epsilon);
  });

  run("avg_pool2d", [&] {
    auto x = random_tensor({2, 2, 4, 4}, rng);
    auto r = random_tensor({2, 2, 2, 2}, rng);
    return finite_difference_check([&] { return weighted_sum(avg_pool2d(x, 2), r); }, {x}, epsilon);
  });

  run("global_avg_pool", [&] {
    auto x = random_tensor({2, 3, 3, 3}, rng);
    auto r = random_tensor({2, 3}, rng);
    return finite_difference_check([&] { return weighted_sum(global_avg_pool(x), r); }, {x}, epsilon);
  });

  run("three_layer_network", [&] {
    auto x = random_tensor({5, 4}, rng);
    auto w1 = random_tensor({4, 8}, rng), b1 = random_tensor({8}, rng);
    auto g = random_tensor({8}, rng), be = random_tensor({8}, rng);
    auto w2 = random_tensor({8, 3}, rng), b2 = random_tensor({3}, rng);
    std::vector<std::int32_t> y{0, 1, 2, 1, 0};
    return finite_difference_check(
        [&] {
          auto h = relu(layer_norm(add_rowwise(matmul(x, w1), b1), g, be));
          return softmax_cross_entropy(add_rowwise(matmul(h, w2), b2), y);
        },
        {x, w1, b1, g, be, w2, b2}, epsilon);
  });
  return results;
}

}  // namespace ojkd
