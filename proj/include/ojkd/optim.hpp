#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ojkd/layers.hpp"

namespace ojkd {

struct OptimizerConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 200;
  double lr_drop_fraction = 0.8;
  double lr_drop_factor = 10.0;
  std::size_t batch_size = 128;

  void validate() const {
    // lr0 == 0 is accepted so a run can be made a no-op.
    if (!(lr0 >= 0.0)) throw ConfigError("optimizer: lr0 must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be >= 0");
    if (epochs == 0) throw ConfigError("optimizer: epochs must be > 0");
    if (!(lr_drop_fraction > 0.0 && lr_drop_fraction <= 1.0))
      throw ConfigError("optimizer: lr_drop_fraction must be in (0, 1]");
    if (!(lr_drop_factor > 0.0)) throw ConfigError("optimizer: lr_drop_factor must be > 0");
    if (batch_size == 0) throw ConfigError("optimizer: batch_size must be > 0");
  }

  /// First epoch running at the reduced rate.
  std::size_t drop_epoch() const {
    return static_cast<std::size_t>(std::floor(lr_drop_fraction * static_cast<double>(epochs)));
  }
};

/// Step schedule: lr0 before floor(fraction * epochs), lr0 / factor from then on.
inline double lr_at(std::size_t epoch, const OptimizerConfig& config) {
  if (epoch >= config.epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(config.epochs) + ")");
  }
  return epoch < config.drop_epoch() ? config.lr0 : config.lr0 / config.lr_drop_factor;
}

/// Momentum buffers, one per trainable parameter.
template <typename T>
struct SgdState {
  std::vector<std::vector<T>> velocity;
};

/// v <- momentum * v + grad + weight_decay * param;  param <- param - lr(epoch) * v
template <typename T>
void sgd_step(ParamList<T>& params, SgdState<T>& state, const OptimizerConfig& config,
              std::size_t epoch) {
  const T lr = static_cast<T>(lr_at(epoch, config));
  const T mom = static_cast<T>(config.momentum);
  const T wd = static_cast<T>(config.weight_decay);
  if (state.velocity.size() != params.size()) state.velocity.resize(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.trainable) continue;
    if (!p.tensor.has_grad()) throw std::logic_error("sgd_step: parameter '" + p.name + "' has no gradient");
    auto& v = state.velocity[k];
    if (v.size() != p.tensor.size()) v.assign(p.tensor.size(), T(0));
    auto w = p.tensor.mutable_data();
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mom * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
}

template <typename T>
class Sgd {
 public:
  Sgd(ParamList<T> params, OptimizerConfig config) : params_(std::move(params)), config_(config) {
    config_.validate();
  }

  void zero_grad() {
    for (auto& p : params_)
      if (p.trainable) p.tensor.zero_grad();
  }

  void step(std::size_t epoch) { sgd_step(params_, state_, config_, epoch); }

  const OptimizerConfig& config() const { return config_; }

 private:
  ParamList<T> params_;
  OptimizerConfig config_;
  SgdState<T> state_;
};

}  // namespace ojkd
