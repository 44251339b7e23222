#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ojkd/active_learning.hpp"

using namespace ojkd;

namespace {

FeatureMatrix points(std::size_t cols, std::vector<double> v) {
  FeatureMatrix m;
  m.cols = cols;
  m.rows = v.size() / cols;
  m.values = std::move(v);
  return m;
}

// Independent farthest-first: recomputes every min-distance from scratch with
// plain Euclidean distances (sqrt), choosing the first maximum.
std::vector<std::size_t> brute_force_farthest_first(const FeatureMatrix& lab, const FeatureMatrix& unl,
                                                    std::size_t budget) {
  std::vector<std::vector<double>> covered;
  for (std::size_t i = 0; i < lab.rows; ++i) covered.emplace_back(lab.row(i).begin(), lab.row(i).end());
  if (covered.empty()) {
    std::vector<double> mean(unl.cols, 0.0);
    for (std::size_t i = 0; i < unl.rows; ++i)
      for (std::size_t k = 0; k < unl.cols; ++k) mean[k] += unl.row(i)[k];
    for (auto& m : mean) m /= static_cast<double>(unl.rows);
    covered.push_back(mean);
  }
  auto dist = [&](std::span<const double> a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  };
  std::vector<std::size_t> picked;
  std::vector<bool> used(unl.rows, false);
  for (std::size_t step = 0; step < budget; ++step) {
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < unl.rows; ++i) {
      if (used[i]) continue;
      double m = std::numeric_limits<double>::infinity();
      for (const auto& c : covered) m = std::min(m, dist(unl.row(i), c));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    used[arg] = true;
    picked.push_back(arg);
    covered.emplace_back(unl.row(arg).begin(), unl.row(arg).end());
  }
  return picked;
}

ModelConfig small_model() {
  ModelConfig m;
  m.backbone = BackboneConfig{BackboneKind::mlp, {2}, {8}, 8};
  m.num_classes = 3;
  m.fr.d_frf = 4;
  return m;
}

std::pair<Dataset, Dataset> blobs(std::size_t per_class = 20) {
  SyntheticSpec s;
  s.classes = 3;
  s.n_per_class = per_class;
  s.n_test_per_class = 10;
  s.noise = 0.3;
  s.seed = 1;
  return make_synthetic(s);
}

TrainConfig quick_train() {
  TrainConfig t;
  t.optim.lr0 = 0.05;
  t.optim.epochs = 2;
  t.optim.batch_size = 8;
  return t;
}

}  // namespace

TEST(Entropy, AnalyticCases) {
  std::vector<double> uniform(10, 0.1);
  EXPECT_NEAR(entropy_score(uniform, 10)[0], std::log(10.0), 1e-12);
  std::vector<double> onehot(10, 0.0);
  onehot[4] = 1.0;
  EXPECT_EQ(entropy_score(onehot, 10)[0], 0.0);
  std::vector<double> two(10, 0.0);
  two[0] = two[1] = 0.5;
  EXPECT_NEAR(entropy_score(two, 10)[0], std::log(2.0), 1e-12);
}

TEST(Entropy, BoundedOnRandomSimplexRows) {
  Rng rng(3);
  std::exponential_distribution<double> e(1.0);
  const std::size_t C = 7;
  std::vector<double> rows(1000 * C);
  for (std::size_t r = 0; r < 1000; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < C; ++c) s += rows[r * C + c] = e(rng);
    for (std::size_t c = 0; c < C; ++c) rows[r * C + c] /= s;
  }
  for (auto h : entropy_score(rows, C)) {
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(C)) + 1e-12);
  }
}

TEST(Entropy, RejectsNonNormalizedRows) {
  EXPECT_THROW(entropy_score(std::vector<double>{0.5, 0.4}, 2), NormalizationError);
  EXPECT_THROW(entropy_score(std::vector<double>{1.5, -0.5}, 2), NormalizationError);
  EXPECT_THROW(entropy_score(std::vector<double>{0.5, 0.5, 0.1}, 2), ShapeError);
}

TEST(CoreSet, PicksFarthestPoint) {
  auto lab = points(2, {0, 0});
  auto unl = points(2, {1, 0, 5, 0, 6, 0});
  EXPECT_EQ(coreset_select(lab, unl, 1), (std::vector<std::size_t>{2}));
}

TEST(CoreSet, ExhaustionIsFarthestFirstTraversal) {
  auto lab = points(2, {0, 0});
  auto unl = points(2, {1, 0, 5, 0, 6, 0});
  // (6,0) first; then (1,0) and (5,0) are both at distance 1, lowest row wins
  const auto order = coreset_select(lab, unl, 3);
  EXPECT_EQ(order, brute_force_farthest_first(lab, unl, 3));
  EXPECT_EQ(std::set<std::size_t>(order.begin(), order.end()), (std::set<std::size_t>{0, 1, 2}));
  EXPECT_EQ(order, (std::vector<std::size_t>{2, 0, 1}));
}

TEST(CoreSet, EmptyLabeledSetSeedsWithCentroid) {
  FeatureMatrix none;
  auto unl = points(1, {0, 1, 2, 10});
  // centroid 3.25: the farthest point is 10
  EXPECT_EQ(coreset_select(none, unl, 1), (std::vector<std::size_t>{3}));
  EXPECT_EQ(coreset_select(none, unl, 4), brute_force_farthest_first(none, unl, 4));
}

TEST(CoreSet, MatchesBruteForceOracle) {
  Rng rng(17);
  std::uniform_int_distribution<std::size_t> nu(1, 12), nl(0, 4), dim(1, 3);
  std::uniform_int_distribution<int> grid(-3, 3);  // small grid makes ties common
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t d = dim(rng), U = nu(rng), L = nl(rng);
    std::vector<double> lv(L * d), uv(U * d);
    for (auto& v : lv) v = grid(rng);
    for (auto& v : uv) v = grid(rng);
    auto lab = points(d, lv), unl = points(d, uv);
    lab.rows = L;
    std::uniform_int_distribution<std::size_t> nb(0, U);
    const auto budget = nb(rng);
    ASSERT_EQ(coreset_select(lab, unl, budget), brute_force_farthest_first(lab, unl, budget)) << "instance " << inst;
  }
}

TEST(CoreSet, BudgetTooLarge) {
  auto unl = points(1, {0, 1});
  EXPECT_THROW(coreset_select(FeatureMatrix{}, unl, 3), ConfigError);
}

TEST(Pool, FromInitialAndPartition) {
  std::vector<std::size_t> init{4, 1};
  auto p = Pool::from_initial(6, init);
  EXPECT_EQ(p.unlabeled, (std::vector<std::size_t>{0, 2, 3, 5}));
  EXPECT_TRUE(p.is_partition_of(6));
  EXPECT_FALSE(p.is_partition_of(7));
  std::vector<std::size_t> dup{1, 1};
  EXPECT_THROW(Pool::from_initial(6, dup), ConfigError);
}

TEST(Acquire, RandomIsReproducible) {
  auto [tr, te] = blobs();
  DualHeadNetwork<float> net(small_model(), InitSpec{});
  std::vector<std::size_t> init{0, 1, 2};
  auto pool = Pool::from_initial(tr.size(), init);
  auto a = acquire(net, pool, tr, Strategy::random, 5, 42);
  auto b = acquire(net, pool, tr, Strategy::random, 5, 42);
  auto c = acquire(net, pool, tr, Strategy::random, 5, 43);
  EXPECT_EQ(a.labeled, b.labeled);
  EXPECT_NE(a.labeled, c.labeled);
  EXPECT_TRUE(a.is_partition_of(tr.size()));
  EXPECT_EQ(a.labeled.size(), 8u);
  EXPECT_THROW(acquire(net, pool, tr, Strategy::random, tr.size(), 1), ConfigError);
}

TEST(Acquire, MaxEntropyPrefersUncertainPoint) {
  // Two unlabeled points: one maps to uniform logits (zero features), the
  // other to a confident prediction.
  Dataset d{{2}, {0, 0, 0, 0, 5, 0}, {0, 0, 1}, 3, Split::train};
  ModelConfig m;
  m.backbone = BackboneConfig{BackboneKind::mlp, {2}, {}, 2};
  m.num_classes = 3;
  m.with_fr = false;
  DualHeadNetwork<float> net(m, InitSpec{InitScheme::zeros, 0});
  ParamList<float> p = net.inference_parameters();
  for (auto& q : p)
    if (q.name.ends_with(".weight")) q.tensor.mutable_data()[0] = 1.0f;  // feature 0 <- input 0; logit 0 <- feature 0
  std::vector<std::size_t> init{0};
  auto pool = Pool::from_initial(3, init);
  auto next = acquire(net, pool, d, Strategy::max_entropy, 1, 0);
  EXPECT_EQ(next.labeled, (std::vector<std::size_t>{0, 1}));
}

TEST(Acquire, EntropyTiesGoToLowestIndex) {
  auto [tr, te] = blobs();
  ModelConfig m = small_model();
  m.with_fr = false;
  DualHeadNetwork<float> net(m, InitSpec{InitScheme::zeros, 0});  // every row uniform: exact ties
  std::vector<std::size_t> init{3, 0};
  auto pool = Pool::from_initial(tr.size(), init);
  auto next = acquire(net, pool, tr, Strategy::max_entropy, 4, 0);
  EXPECT_EQ(next.labeled, (std::vector<std::size_t>{3, 0, 1, 2, 4, 5}));
}

TEST(Acquire, CoreSetUsesBackboneFeatures) {
  auto [tr, te] = blobs();
  DualHeadNetwork<float> net(small_model(), InitSpec{InitScheme::kaiming_uniform, 5});
  std::vector<std::size_t> init{0, 1, 2};
  auto pool = Pool::from_initial(tr.size(), init);
  auto next = acquire(net, pool, tr, Strategy::core_set, 4, 0);
  EXPECT_TRUE(next.is_partition_of(tr.size()));
  // oracle over the same eval-mode features
  auto feats = [&](const std::vector<std::size_t>& idx) {
    auto f = net.features(make_batch<float>(tr, idx), Mode::eval);
    return points(f.dim(1), std::vector<double>(f.data().begin(), f.data().end()));
  };
  const auto picked = brute_force_farthest_first(feats(pool.labeled), feats(pool.unlabeled), 4);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(next.labeled[3 + k], pool.unlabeled[picked[k]]);
}

TEST(ALConfig, InfeasiblePools) {
  ALConfig c;
  c.initial_pool_size = 10;
  c.budget_per_cycle = 10;
  c.num_cycles = 3;
  EXPECT_NO_THROW(c.validate(40));
  EXPECT_THROW(c.validate(39), ConfigError);
  c.num_cycles = 0;
  EXPECT_THROW(c.validate(100), ConfigError);
}

TEST(RunAl, HarnessInvariants) {
  auto [tr, te] = blobs();
  ALConfig al;
  al.initial_pool_size = 6;
  al.budget_per_cycle = 5;
  al.num_cycles = 3;
  al.seeds = {1, 2};
  std::map<Strategy, ALResult> results;
  for (auto s : {Strategy::random, Strategy::max_entropy, Strategy::core_set}) {
    al.strategy = s;
    results[s] = run_al_experiment<float>(al, small_model(), quick_train(), tr, te);
    for (const auto& run : results[s].runs) {
      ASSERT_EQ(run.cycles.size(), 3u);
      for (std::size_t k = 0; k < 3; ++k) {
        const auto& cyc = run.cycles[k];
        EXPECT_EQ(cyc.labeled_count, 6 + 5 * k);
        EXPECT_EQ(cyc.labeled.size(), cyc.labeled_count);
        EXPECT_TRUE(Pool::from_initial(tr.size(), cyc.labeled).is_partition_of(tr.size()));
        if (k > 0) {
          const auto& prev = run.cycles[k - 1].labeled;
          EXPECT_TRUE(std::equal(prev.begin(), prev.end(), cyc.labeled.begin()));
          EXPECT_NE(cyc.init_hash, run.cycles[k - 1].init_hash);
        }
      }
      EXPECT_EQ(run.final_pool.labeled.size(), 6u + 5 * 3);
      EXPECT_TRUE(run.final_pool.is_partition_of(tr.size()));
    }
  }
  // cycle-0 init and pool are shared across strategies under the same seed
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& r = results[Strategy::random].runs[i].cycles[0];
    for (auto s : {Strategy::max_entropy, Strategy::core_set}) {
      EXPECT_EQ(results[s].runs[i].cycles[0].init_hash, r.init_hash);
      EXPECT_EQ(results[s].runs[i].cycles[0].labeled, r.labeled);
    }
  }
}

TEST(RunAl, RandomFollowsPredefinedSchedule) {
  auto [tr, te] = blobs();
  ALConfig al;
  al.initial_pool_size = 6;
  al.budget_per_cycle = 5;
  al.num_cycles = 3;
  al.seeds = {7};
  auto r = run_al_experiment<float>(al, small_model(), quick_train(), tr, te);
  const auto sched = predefined_schedule(al, tr.size(), 7);
  ASSERT_EQ(sched.cycles.size(), 4u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r.runs[0].cycles[k].labeled, sched.cycles[k]);
  EXPECT_EQ(r.runs[0].final_pool.labeled, sched.cycles[3]);
}

TEST(RunAl, OneCycleIsPlainSupervisedTraining) {
  auto [tr, te] = blobs();
  ALConfig al;
  al.initial_pool_size = 9;
  al.budget_per_cycle = 0;
  al.num_cycles = 1;
  al.seeds = {3};
  auto r = run_al_experiment<float>(al, small_model(), quick_train(), tr, te);
  const auto& cyc = r.runs[0].cycles[0];
  DualHeadNetwork<float> net(small_model(), InitSpec{InitScheme::kaiming_uniform, stream_seed(3, SeedStream::init, 0)});
  auto direct = train(net, tr, cyc.labeled, te, quick_train(), stream_seed(3, SeedStream::train, 0));
  EXPECT_TRUE(direct.same_outcome(cyc.train));
}

TEST(RunAl, DeterministicAndThreadCountInvariant) {
  auto [tr, te] = blobs();
  ALConfig al;
  al.initial_pool_size = 6;
  al.budget_per_cycle = 4;
  al.num_cycles = 2;
  al.seeds = {1, 2, 3};
  al.strategy = Strategy::core_set;
  auto a = run_al_experiment<float>(al, small_model(), quick_train(), tr, te, 1);
  auto b = run_al_experiment<float>(al, small_model(), quick_train(), tr, te, 1);
  auto c = run_al_experiment<float>(al, small_model(), quick_train(), tr, te, 3);
  EXPECT_EQ(a.accuracy_matrix(), b.accuracy_matrix());
  EXPECT_EQ(a.accuracy_matrix(true), c.accuracy_matrix(true));
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(a.runs[i].final_pool.labeled, c.runs[i].final_pool.labeled);
}

TEST(Seeds, StreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (auto st : {SeedStream::split, SeedStream::init, SeedStream::train, SeedStream::acquire})
      for (std::uint64_t c = 0; c < 4; ++c) seen.insert(stream_seed(s, st, c));
  EXPECT_EQ(seen.size(), 64u);
}

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {Strategy::random, Strategy::max_entropy, Strategy::core_set})
    EXPECT_EQ(strategy_from_string(to_string(s)), s);
  EXPECT_THROW(strategy_from_string("bald"), ConfigError);
}
