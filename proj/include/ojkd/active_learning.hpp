#pragma once

// Cycle-based active learning: labeled/unlabeled pools, acquisition scores
// (random, max-entropy, greedy k-center core-set) and the
// reinitialize -> train -> evaluate -> acquire loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <thread>
#include <vector>

#include "ojkd/train.hpp"

namespace ojkd {

enum class Strategy { random, max_entropy, core_set };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::max_entropy: return "max_entropy";
    case Strategy::core_set: return "core_set";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "random") return Strategy::random;
  if (s == "max_entropy" || s == "entropy") return Strategy::max_entropy;
  if (s == "core_set" || s == "coreset") return Strategy::core_set;
  throw ConfigError("unknown acquisition strategy '" + s + "'");
}

/// Labeled indices in acquisition order; unlabeled indices ascending.
struct Pool {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;

  /// Pool over [0, n) whose labeled part is `initial`.
  static Pool from_initial(std::size_t n, std::span<const std::size_t> initial) {
    Pool p;
    p.labeled.assign(initial.begin(), initial.end());
    std::vector<char> taken(n, 0);
    for (auto i : initial) {
      if (i >= n) throw ConfigError("pool: index " + std::to_string(i) + " outside dataset");
      if (taken[i]) throw ConfigError("pool: duplicate index " + std::to_string(i));
      taken[i] = 1;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) p.unlabeled.push_back(i);
    return p;
  }

  /// labeled and unlabeled are disjoint and together cover [0, n) exactly.
  bool is_partition_of(std::size_t n) const {
    if (labeled.size() + unlabeled.size() != n) return false;
    std::vector<char> seen(n, 0);
    for (auto v : {&labeled, &unlabeled})
      for (auto i : *v) {
        if (i >= n || seen[i]) return false;
        seen[i] = 1;
      }
    return true;
  }
};

class NormalizationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Predictive entropy -sum_c p ln p per row, with 0 ln 0 = 0. Rows must be
/// nonnegative and sum to 1 within 1e-5.
inline std::vector<double> entropy_score(std::span<const double> probs, std::size_t classes) {
  if (classes == 0 || probs.size() % classes != 0)
    throw ShapeError("entropy_score", std::to_string(probs.size()) + " values for " +
                                          std::to_string(classes) + " classes");
  const std::size_t n = probs.size() / classes;
  std::vector<double> scores(n);
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0.0, h = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = probs[r * classes + c];
      if (p < 0.0) throw NormalizationError("entropy_score: negative probability in row " + std::to_string(r));
      total += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(total - 1.0) > 1e-5)
      throw NormalizationError("entropy_score: row " + std::to_string(r) + " sums to " + std::to_string(total));
    scores[r] = std::max(h, 0.0);
  }
  return scores;
}

template <typename T>
std::vector<double> entropy_score(const Tensor<T>& probs) {
  if (probs.rank() != 2) throw ShapeError("entropy_score", "expected [N x C], got " + shape_str(probs.shape()));
  std::vector<double> p(probs.data().begin(), probs.data().end());
  return entropy_score(p, probs.dim(1));
}

/// Row-major point set.
struct FeatureMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * cols, cols);
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Greedy k-center (farthest-first) selection. Each step takes the unlabeled
/// point farthest (Euclidean) from its nearest covered point, where covered =
/// labeled plus points already selected; ties go to the lowest row. With no
/// labeled points, the centroid of the unlabeled set acts as the single
/// covered point. Returns rows of `unlabeled` in selection order.
inline std::vector<std::size_t> coreset_select(const FeatureMatrix& labeled,
                                               const FeatureMatrix& unlabeled, std::size_t budget) {
  if (budget > unlabeled.rows)
    throw ConfigError("coreset_select: budget " + std::to_string(budget) + " exceeds " +
                      std::to_string(unlabeled.rows) + " unlabeled points");
  if (labeled.rows > 0 && labeled.cols != unlabeled.cols)
    throw ShapeError("coreset_select", "feature dims differ " + std::to_string(labeled.cols) +
                                           " vs " + std::to_string(unlabeled.cols));
  const std::size_t U = unlabeled.rows;
  std::vector<double> nearest(U, std::numeric_limits<double>::infinity());
  auto cover = [&](std::span<const double> c) {
    for (std::size_t u = 0; u < U; ++u)
      if (nearest[u] >= 0.0) nearest[u] = std::min(nearest[u], squared_distance(unlabeled.row(u), c));
  };
  if (labeled.rows == 0) {
    std::vector<double> centroid(unlabeled.cols, 0.0);
    for (std::size_t u = 0; u < U; ++u)
      for (std::size_t k = 0; k < unlabeled.cols; ++k) centroid[k] += unlabeled.values[u * unlabeled.cols + k];
    for (auto& v : centroid) v /= static_cast<double>(std::max<std::size_t>(U, 1));
    cover(centroid);
  } else {
    for (std::size_t l = 0; l < labeled.rows; ++l) cover(labeled.row(l));
  }
  std::vector<std::size_t> picked;
  picked.reserve(budget);
  for (std::size_t step = 0; step < budget; ++step) {
    std::size_t best = U;
    for (std::size_t u = 0; u < U; ++u) {
      if (nearest[u] < 0.0) continue;  // already selected
      if (best == U || nearest[u] > nearest[best]) best = u;
    }
    picked.push_back(best);
    nearest[best] = -1.0;
    cover(unlabeled.row(best));
  }
  return picked;
}

enum class AcquisitionHead { original, fr };

struct AcquireOptions {
  AcquisitionHead entropy_head = AcquisitionHead::original;
  const AugmentSpec* normalization = nullptr;  // eval-time transform for image data
  std::size_t batch = 256;
};

namespace detail {

template <typename T, typename Fn>
FeatureMatrix run_rows(const Dataset& d, std::span<const std::size_t> idx, const AcquireOptions& opt, Fn&& fn) {
  FeatureMatrix m;
  m.rows = idx.size();
  for (std::size_t start = 0; start < idx.size(); start += opt.batch) {
    const auto chunk = idx.subspan(start, std::min(opt.batch, idx.size() - start));
    auto out = fn(make_batch<T>(d, chunk, opt.normalization));
    m.cols = out.dim(1);
    for (auto v : out.data()) m.values.push_back(static_cast<double>(v));
  }
  return m;
}

}  // namespace detail

/// Moves `budget` unlabeled indices to the labeled set. Max-entropy ranks by
/// descending entropy of the softmax (ties: lowest dataset index); core-set
/// runs greedy k-center on eval-mode backbone features; random samples
/// uniformly without replacement from a generator seeded with `seed`.
template <typename T>
Pool acquire(DualHeadNetwork<T>& net, const Pool& pool, const Dataset& data, Strategy strategy,
             std::size_t budget, std::uint64_t seed, const AcquireOptions& opt = {}) {
  if (budget > pool.unlabeled.size())
    throw ConfigError("acquire: budget " + std::to_string(budget) + " exceeds " +
                      std::to_string(pool.unlabeled.size()) + " unlabeled samples");
  std::vector<std::size_t> chosen;  // positions in pool.unlabeled
  switch (strategy) {
    case Strategy::random: {
      std::vector<std::size_t> pos(pool.unlabeled.size());
      std::iota(pos.begin(), pos.end(), std::size_t{0});
      Rng rng(seed);
      for (std::size_t i = 0; i < budget; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pos.size() - 1);
        std::swap(pos[i], pos[pick(rng)]);
      }
      chosen.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(budget));
      break;
    }
    case Strategy::max_entropy: {
      const auto logits = detail::run_rows<T>(data, pool.unlabeled, opt, [&](const Tensor<T>& x) {
        return opt.entropy_head == AcquisitionHead::fr ? net.forward_fr_eval(x) : net.forward_infer(x);
      });
      Tensor<double> z({logits.rows, logits.cols}, logits.values);
      const auto scores = entropy_score(softmax_rows(z), logits.cols);
      std::vector<std::size_t> order(scores.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      // unlabeled is ascending, so position order is dataset-index order
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
      chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(budget));
      break;
    }
    case Strategy::core_set: {
      auto feats = [&](const Tensor<T>& x) { return net.features(x, Mode::eval); };
      const auto lab = detail::run_rows<T>(data, pool.labeled, opt, feats);
      const auto unl = detail::run_rows<T>(data, pool.unlabeled, opt, feats);
      chosen = coreset_select(lab, unl, budget);
      break;
    }
  }
  Pool next;
  next.labeled = pool.labeled;
  std::vector<char> take(pool.unlabeled.size(), 0);
  for (auto c : chosen) {
    take[c] = 1;
    next.labeled.push_back(pool.unlabeled[c]);
  }
  for (std::size_t i = 0; i < pool.unlabeled.size(); ++i)
    if (!take[i]) next.unlabeled.push_back(pool.unlabeled[i]);
  return next;
}

// ---------------------------------------------------------------------------
// Experiment loop

struct ALConfig {
  std::size_t initial_pool_size = 1000;
  std::size_t budget_per_cycle = 1000;
  std::size_t num_cycles = 10;
  Strategy strategy = Strategy::random;
  std::vector<std::uint64_t> seeds{0};
  AcquisitionHead entropy_head = AcquisitionHead::original;

  void validate(std::size_t dataset_size) const {
    if (num_cycles == 0) throw ConfigError("al: num_cycles must be >= 1");
    if (initial_pool_size == 0) throw ConfigError("al: initial pool must be nonempty");
    if (seeds.empty()) throw ConfigError("al: need at least one seed");
    if (initial_pool_size + num_cycles * budget_per_cycle > dataset_size)
      throw ConfigError("al: infeasible pools; " + std::to_string(initial_pool_size) + " + " +
                        std::to_string(num_cycles) + " x " + std::to_string(budget_per_cycle) +
                        " exceeds " + std::to_string(dataset_size) + " training samples");
  }
};

struct CycleRecord {
  std::size_t cycle = 0;
  std::size_t labeled_count = 0;
  double accuracy = 0.0;  // original head
  double accuracy_fr = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t init_hash = 0;     // checkpoint hash right after reinitialization
  std::uint64_t trained_hash = 0;  // after training
  std::vector<std::size_t> labeled;  // pool used for training in this cycle
  TrainResult train;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<CycleRecord> cycles;
  Pool final_pool;
};

struct ALResult {
  std::vector<SeedRun> runs;  // in ALConfig::seeds order

  /// seed x cycle accuracy matrix.
  std::vector<std::vector<double>> accuracy_matrix(bool fr_head = false) const {
    std::vector<std::vector<double>> m;
    for (const auto& r : runs) {
      auto& row = m.emplace_back();
      for (const auto& c : r.cycles) row.push_back(fr_head ? c.accuracy_fr : c.accuracy);
    }
    return m;
  }
};

/// splitmix64 finalizer; derives independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum class SeedStream : std::uint64_t { split = 1, init = 2, train = 3, acquire = 4 };

inline std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream, std::uint64_t cycle = 0) {
  return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(stream)), cycle);
}

/// Predefined nested schedule for one seed, shared by every strategy and
/// head variant run with that seed. Has num_cycles + 1 entries (the last is
/// the pool after the final acquisition).
inline SplitSchedule predefined_schedule(const ALConfig& al, std::size_t dataset_size, std::uint64_t seed) {
  return make_initial_splits(dataset_size, al.initial_pool_size, al.num_cycles + 1,
                             al.budget_per_cycle, stream_seed(seed, SeedStream::split));
}

/// One seed of the loop {reinitialize, train, evaluate, acquire}. The random
/// strategy draws its acquisitions from the predefined schedule, so the
/// random run coincides with the supervised incremental-pool protocol.
/// Called after each cycle's training, before acquisition.
template <typename T>
using CycleHook = std::function<void(std::uint64_t seed, std::size_t cycle, DualHeadNetwork<T>& net)>;

template <typename T>
SeedRun run_al_seed(const ALConfig& al, const ModelConfig& model, const TrainConfig& train_cfg,
                    const Dataset& train_set, const Dataset& test_set, std::uint64_t seed,
                    const CycleHook<T>& hook = {}) {
  const auto schedule = predefined_schedule(al, train_set.size(), seed);
  SeedRun run;
  run.seed = seed;
  Pool pool = Pool::from_initial(train_set.size(), schedule.cycles[0]);
  AcquireOptions opt;
  opt.entropy_head = al.entropy_head;
  opt.normalization = train_cfg.augment ? &*train_cfg.augment : nullptr;
  for (std::size_t cycle = 0; cycle < al.num_cycles; ++cycle) {
    DualHeadNetwork<T> net(model, InitSpec{InitScheme::kaiming_uniform, stream_seed(seed, SeedStream::init, cycle)});
    CycleRecord rec;
    rec.cycle = cycle;
    rec.labeled_count = pool.labeled.size();
    rec.labeled = pool.labeled;
    rec.init_hash = checkpoint_hash(net);
    rec.train = train(net, train_set, pool.labeled, test_set, train_cfg, stream_seed(seed, SeedStream::train, cycle));
    rec.accuracy = rec.train.accuracy;
    rec.accuracy_fr = rec.train.accuracy_fr;
    net.set_mode(Mode::train);
    rec.trained_hash = checkpoint_hash(net);
    if (hook) hook(seed, cycle, net);
    if (al.strategy == Strategy::random) {
      pool = Pool::from_initial(train_set.size(), schedule.cycles[cycle + 1]);
    } else {
      pool = acquire(net, pool, train_set, al.strategy, al.budget_per_cycle,
                     stream_seed(seed, SeedStream::acquire, cycle), opt);
    }
    run.cycles.push_back(std::move(rec));
  }
  run.final_pool = pool;
  return run;
}

/// Runs every seed. Seeds are independent and may run on up to `threads`
/// worker threads; results are stored in seed order, so the output does not
/// depend on the thread count.
template <typename T>
ALResult run_al_experiment(const ALConfig& al, const ModelConfig& model, const TrainConfig& train_cfg,
                           const Dataset& train_set, const Dataset& test_set, std::size_t threads = 1,
                           const CycleHook<T>& hook = {}) {
  al.validate(train_set.size());
  ALResult result;
  result.runs.resize(al.seeds.size());
  threads = std::max<std::size_t>(1, std::min(threads, al.seeds.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < al.seeds.size(); ++i)
      result.runs[i] = run_al_seed<T>(al, model, train_cfg, train_set, test_set, al.seeds[i], hook);
    return result;
  }
  std::vector<std::exception_ptr> errors(al.seeds.size());
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < al.seeds.size(); i += threads) {
        try {
          result.runs[i] = run_al_seed<T>(al, model, train_cfg, train_set, test_set, al.seeds[i], hook);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace ojkd
