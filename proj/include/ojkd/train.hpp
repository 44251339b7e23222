#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "ojkd/data.hpp"
#include "ojkd/model.hpp"
#include "ojkd/optim.hpp"

namespace ojkd {

struct TrainConfig {
  OptimizerConfig optim;
  std::optional<AugmentSpec> augment;  // image datasets only
  LossWeights weights;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  double accuracy = 0.0;     // original head, inference path
  double accuracy_fr = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;

  /// Equality over the deterministic fields (wall-clock excluded).
  bool same_outcome(const TrainResult& o) const {
    auto eq = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    if (epoch_loss.size() != o.epoch_loss.size() || seed != o.seed) return false;
    for (std::size_t i = 0; i < epoch_loss.size(); ++i)
      if (!eq(epoch_loss[i], o.epoch_loss[i])) return false;
    return eq(accuracy, o.accuracy) && eq(accuracy_fr, o.accuracy_fr);
  }
};

/// Index of the largest entry; ties go to the lowest index.
template <typename T>
std::size_t argmax_row(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return best;
}

namespace detail {

template <typename T, typename Forward>
double accuracy_of(const Dataset& test, const AugmentSpec* norm, Forward&& forward,
                   std::size_t batch = 256) {
  if (test.size() == 0) throw ConfigError("evaluate: empty test set");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(test.size(), start + batch); ++i) idx.push_back(i);
    auto logits = forward(make_batch<T>(test, idx, norm));
    const std::size_t C = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto pred = argmax_row(logits.data().subspan(r * C, C));
      if (static_cast<std::int32_t>(pred) == test.labels[idx[r]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace detail

/// Fraction of test samples whose argmax over the inference logits equals
/// the label.
template <typename T>
double evaluate(DualHeadNetwork<T>& net, const Dataset& test, const AugmentSpec* norm = nullptr) {
  return detail::accuracy_of<T>(test, norm, [&](const Tensor<T>& x) { return net.forward_infer(x); });
}

/// Same, through the FR head.
template <typename T>
double evaluate_fr(DualHeadNetwork<T>& net, const Dataset& test, const AugmentSpec* norm = nullptr) {
  return detail::accuracy_of<T>(test, norm, [&](const Tensor<T>& x) { return net.forward_fr_eval(x); });
}

/// Minibatch SGD over `labeled` (indices into `train_set`) for optim.epochs
/// epochs, reshuffling every epoch; the last partial batch is kept.
/// Deterministic for a fixed seed.
template <typename T>
TrainResult train(DualHeadNetwork<T>& net, const Dataset& train_set,
                  std::span<const std::size_t> labeled, const Dataset& test_set,
                  const TrainConfig& config, std::uint64_t seed) {
  if (labeled.empty()) throw ConfigError("train: empty labeled set");
  config.optim.validate();
  const auto started = std::chrono::steady_clock::now();
  Rng rng(seed);
  TrainResult result;
  result.seed = seed;

  auto params = net.parameters();
  SgdState<T> state;
  std::vector<std::size_t> order(labeled.begin(), labeled.end());
  std::vector<std::size_t> batch;
  const AugmentSpec* aug = config.augment ? &*config.augment : nullptr;

  net.set_mode(Mode::train);
  for (std::size_t epoch = 0; epoch < config.optim.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.optim.batch_size) {
      const auto end = std::min(order.size(), start + config.optim.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
      auto x = make_batch<T>(train_set, batch, aug, aug ? &rng : nullptr);
      const auto y = gather_labels(train_set, batch);
      for (auto& p : params)
        if (p.trainable) p.tensor.zero_grad();
      auto loss = ojkd_loss(net.forward_train(x), y, config.weights);
      backward(loss);
      sgd_step(params, state, config.optim, epoch);
      loss_sum += static_cast<double>(loss.item());
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }

  net.set_mode(Mode::eval);
  result.accuracy = evaluate(net, test_set, aug);
  if (net.has_fr()) result.accuracy_fr = evaluate_fr(net, test_set, aug);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace ojkd
