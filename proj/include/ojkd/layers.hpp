#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ojkd/ops.hpp"

namespace ojkd {

using Rng = std::mt19937_64;

enum class Mode { train, eval };

enum class InitScheme { kaiming_uniform, kaiming_normal, zeros, ones };

struct InitSpec {
  InitScheme scheme = InitScheme::kaiming_uniform;
  std::uint64_t seed = 0;
};

/// A named parameter or buffer. Buffers (batch-norm running statistics) are
/// saved in checkpoints but are not trainable.
template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
std::size_t count_trainable(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params)
    if (p.trainable) n += p.tensor.size();
  return n;
}

namespace detail {

// Fills a weight tensor. fan_in is the number of inputs feeding one output.
template <typename T>
void init_weight(Tensor<T>& w, std::size_t fan_in, InitScheme scheme, Rng& rng) {
  auto v = w.mutable_data();
  switch (scheme) {
    case InitScheme::zeros:
      std::fill(v.begin(), v.end(), T(0));
      break;
    case InitScheme::ones:
      std::fill(v.begin(), v.end(), T(1));
      break;
    case InitScheme::kaiming_uniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& x : v) x = static_cast<T>(dist(rng));
      break;
    }
    case InitScheme::kaiming_normal: {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (auto& x : v) x = static_cast<T>(dist(rng));
      break;
    }
  }
}

}  // namespace detail

/// y = x W + b with W stored as [d_in x d_out].
template <typename T>
struct Linear {
  std::size_t d_in = 0, d_out = 0;
  Tensor<T> weight, bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, InitScheme scheme, Rng& rng)
      : d_in(in),
        d_out(out),
        weight(Tensor<T>::zeros({in, out}, true)),
        bias(Tensor<T>::zeros({out}, true)) {
    detail::init_weight(weight, in, scheme, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != d_in) {
      throw ShapeError("linear", "expected [N x " + std::to_string(d_in) + "], got " +
                                     shape_str(x.shape()));
    }
    return add_rowwise(matmul(x, weight), bias);
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, true});
  }

  static std::size_t parameter_count(std::size_t in, std::size_t out) { return in * out + out; }
};

template <typename T>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  std::size_t d = 0;
  Tensor<T> gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim)
      : d(dim), gamma(Tensor<T>::full({dim}, T(1), true)), beta(Tensor<T>::zeros({dim}, true)) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    return layer_norm(x, gamma, beta, static_cast<T>(kEps));
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
  }

  static std::size_t parameter_count(std::size_t dim) { return 2 * dim; }
};

template <typename T>
struct Conv2d {
  std::size_t in_channels = 0, out_channels = 0, kernel = 0;
  Conv2dOptions options;
  Tensor<T> weight, bias;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k, Conv2dOptions opt, InitScheme scheme,
         Rng& rng)
      : in_channels(in),
        out_channels(out),
        kernel(k),
        options(opt),
        weight(Tensor<T>::zeros({out, in, k, k}, true)),
        bias(Tensor<T>::zeros({out}, true)) {
    detail::init_weight(weight, in * k * k, scheme, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, options); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, true});
  }

  static std::size_t parameter_count(std::size_t in, std::size_t out, std::size_t k) {
    return out * in * k * k + out;
  }
};

/// Batch normalization over NCHW with running statistics. Only the training
/// forward mutates state (the running buffers).
template <typename T>
struct BatchNorm2d {
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;
  std::size_t channels = 0;
  Tensor<T> gamma, beta, running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t c)
      : channels(c),
        gamma(Tensor<T>::full({c}, T(1), true)),
        beta(Tensor<T>::zeros({c}, true)),
        running_mean(Tensor<T>::zeros({c})),
        running_var(Tensor<T>::full({c}, T(1))) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    const T eps = static_cast<T>(kEps);
    if (mode == Mode::eval) {
      return batch_norm2d_eval(x, gamma, beta, running_mean.data(), running_var.data(), eps);
    }
    BatchStats<T> stats;
    auto y = batch_norm2d_train(x, gamma, beta, eps, &stats);
    const T mom = static_cast<T>(kMomentum);
    const T unbias = stats.count > 1 ? static_cast<T>(stats.count) / static_cast<T>(stats.count - 1)
                                     : T(1);
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      rm[c] = (T(1) - mom) * rm[c] + mom * stats.mean[c];
      rv[c] = (T(1) - mom) * rv[c] + mom * stats.var[c] * unbias;
    }
    return y;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
    out.push_back({prefix + ".running_mean", running_mean, false});
    out.push_back({prefix + ".running_var", running_var, false});
  }

  static std::size_t parameter_count(std::size_t c) { return 2 * c; }
};

}  // namespace ojkd
