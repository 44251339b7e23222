#pragma once

// Feature Refiner head.
//
// Full variant, in order:
//   linear(d_bbf -> d_frf)            dimension reduction, no activation
//   layer_norm(d_frf)
//   linear(d_frf -> d_frf), relu
//   linear(d_frf -> d_frf)            [relu if second_relu]
//   layer_norm(d_frf)
//   classifier linear(d_frf -> C)
//
// Parameter count: d_bbf*d_frf + d_frf + 2*(d_frf^2 + d_frf) + 4*d_frf + d_frf*C + C.
// With (512, 64, 10) this is 42058; (1024, 64, 10) gives 74826 and
// (512, 256, 101) gives 289893. Those three published counts admit exactly
// one reduction linear, two square linears, two layer norms and a classifier,
// all with biases, which is how the structure above is pinned.

#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "ojkd/layers.hpp"

namespace ojkd {

enum class FrVariant { full, no_layernorm, reduce_only, square_linear_only, k_nonlinear_layers };

inline std::string to_string(FrVariant v) {
  switch (v) {
    case FrVariant::full: return "full";
    case FrVariant::no_layernorm: return "no_layernorm";
    case FrVariant::reduce_only: return "reduce_only";
    case FrVariant::square_linear_only: return "square_linear_only";
    case FrVariant::k_nonlinear_layers: return "k_nonlinear_layers";
  }
  return "?";
}

inline FrVariant fr_variant_from_string(const std::string& s) {
  if (s == "full") return FrVariant::full;
  if (s == "no_layernorm") return FrVariant::no_layernorm;
  if (s == "reduce_only") return FrVariant::reduce_only;
  if (s == "square_linear_only") return FrVariant::square_linear_only;
  if (s == "k_nonlinear_layers") return FrVariant::k_nonlinear_layers;
  throw ConfigError("unknown feature refiner variant '" + s + "'");
}

struct FeatureRefinerConfig {
  std::size_t d_bbf = 512;
  std::size_t d_frf = 64;
  std::size_t num_classes = 10;
  FrVariant variant = FrVariant::full;
  std::size_t k = 2;          // k_nonlinear_layers only
  bool second_relu = false;   // full / no_layernorm: relu after the second square linear

  void validate() const {
    if (d_bbf == 0 || num_classes == 0) throw ConfigError("feature refiner: dims must be > 0");
    if (variant != FrVariant::square_linear_only) {
      if (d_frf == 0) throw ConfigError("feature refiner: d_frf must be > 0");
      if (d_frf > d_bbf)
        throw ConfigError("feature refiner: d_frf " + std::to_string(d_frf) +
                          " exceeds d_bbf " + std::to_string(d_bbf));
    }
    if (variant == FrVariant::k_nonlinear_layers && k < 1)
      throw ConfigError("feature refiner: k_nonlinear_layers needs k >= 1");
  }
};

/// Closed-form trainable parameter count of the head described by `config`.
inline std::size_t fr_parameter_formula(const FeatureRefinerConfig& config) {
  const std::size_t b = config.d_bbf, f = config.d_frf, c = config.num_classes;
  const std::size_t reduce = b * f + f;
  const std::size_t square = f * f + f;
  const std::size_t norms = 2 * (2 * f);
  const std::size_t classifier = f * c + c;
  switch (config.variant) {
    case FrVariant::full: return reduce + 2 * square + norms + classifier;
    case FrVariant::no_layernorm: return reduce + 2 * square + classifier;
    case FrVariant::reduce_only: return reduce + classifier;
    case FrVariant::square_linear_only: return b * b + b + b * c + c;
    case FrVariant::k_nonlinear_layers: return reduce + config.k * square + norms + classifier;
  }
  return 0;
}

struct ReluLayer {};

template <typename T>
using FrLayer = std::variant<Linear<T>, LayerNorm<T>, ReluLayer>;

template <typename T>
class FeatureRefinerHead {
 public:
  FeatureRefinerHead() = default;

  FeatureRefinerHead(FeatureRefinerConfig config, InitSpec init) : config_(config) {
    config_.validate();
    Rng rng(init.seed);
    build(init.scheme, rng);
  }

  FeatureRefinerHead(FeatureRefinerConfig config, InitScheme scheme, Rng& rng) : config_(config) {
    config_.validate();
    build(scheme, rng);
  }

  const FeatureRefinerConfig& config() const { return config_; }

  /// Refined features before the classifier.
  Tensor<T> refine(const Tensor<T>& features) const {
    if (features.rank() != 2 || features.dim(1) != config_.d_bbf) {
      throw ShapeError("feature_refiner", "expected [N x " + std::to_string(config_.d_bbf) +
                                              "], got " + shape_str(features.shape()));
    }
    auto h = features;
    for (const auto& layer : layers_) {
      h = std::visit(
          [&](const auto& l) -> Tensor<T> {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, ReluLayer>) {
              return relu(h);
            } else {
              return l.forward(h);
            }
          },
          layer);
    }
    return h;
  }

  Tensor<T> forward(const Tensor<T>& features) const { return classifier_.forward(refine(features)); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto name = prefix + ".l" + std::to_string(i);
      std::visit(
          [&](const auto& l) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(l)>, ReluLayer>) l.collect(name, out);
          },
          layers_[i]);
    }
    classifier_.collect(prefix + ".classifier", out);
  }

  /// Layer kinds in order, e.g. {"linear", "layer_norm", ..., "classifier"}.
  std::vector<std::string> layer_kinds() const {
    std::vector<std::string> kinds;
    for (const auto& layer : layers_) {
      kinds.push_back(std::visit(
          [](const auto& l) -> std::string {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Linear<T>>) return "linear";
            else if constexpr (std::is_same_v<L, LayerNorm<T>>) return "layer_norm";
            else return "relu";
          },
          layer));
    }
    kinds.push_back("classifier");
    return kinds;
  }

  std::vector<FrLayer<T>>& layers() { return layers_; }
  Linear<T>& classifier() { return classifier_; }

 private:
  void build(InitScheme scheme, Rng& rng) {
    const std::size_t b = config_.d_bbf, f = config_.d_frf;
    switch (config_.variant) {
      case FrVariant::full:
      case FrVariant::no_layernorm: {
        const bool norms = config_.variant == FrVariant::full;
        layers_.emplace_back(Linear<T>(b, f, scheme, rng));
        if (norms) layers_.emplace_back(LayerNorm<T>(f));
        layers_.emplace_back(Linear<T>(f, f, scheme, rng));
        layers_.emplace_back(ReluLayer{});
        layers_.emplace_back(Linear<T>(f, f, scheme, rng));
        if (config_.second_relu) layers_.emplace_back(ReluLayer{});
        if (norms) layers_.emplace_back(LayerNorm<T>(f));
        classifier_ = Linear<T>(f, config_.num_classes, scheme, rng);
        break;
      }
      case FrVariant::reduce_only:
        layers_.emplace_back(Linear<T>(b, f, scheme, rng));
        classifier_ = Linear<T>(f, config_.num_classes, scheme, rng);
        break;
      case FrVariant::square_linear_only:
        layers_.emplace_back(Linear<T>(b, b, scheme, rng));
        classifier_ = Linear<T>(b, config_.num_classes, scheme, rng);
        break;
      case FrVariant::k_nonlinear_layers:
        layers_.emplace_back(Linear<T>(b, f, scheme, rng));
        layers_.emplace_back(LayerNorm<T>(f));
        for (std::size_t i = 0; i < config_.k; ++i) {
          layers_.emplace_back(Linear<T>(f, f, scheme, rng));
          layers_.emplace_back(ReluLayer{});
        }
        layers_.emplace_back(LayerNorm<T>(f));
        classifier_ = Linear<T>(f, config_.num_classes, scheme, rng);
        break;
    }
  }

  FeatureRefinerConfig config_;
  std::vector<FrLayer<T>> layers_;
  Linear<T> classifier_;
};

template <typename T>
std::size_t count_parameters(const FeatureRefinerHead<T>& head) {
  ParamList<T> params;
  head.collect("fr", params);
  return count_trainable(params);
}

}  // namespace ojkd
