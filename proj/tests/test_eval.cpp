#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gda/eval.hpp"
#include "test_support.hpp"

namespace gda {
namespace {

using testing::random_matrix;

// ---- metrics ------------------------------------------------------------------

TEST(Evaluate, Perfect) {
  EvalReport r = evaluate({0, 1, 2, 2}, {0, 1, 2, 2});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.n_test, 4);
  EXPECT_EQ(r.per_class_correct, (std::vector<Index>{1, 1, 2}));
  EXPECT_FALSE(r.group_accuracy);
}

TEST(Evaluate, HalfRightBothClasses) {
  EvalReport r = evaluate({0, 1, 0, 1}, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.5);
}

TEST(Evaluate, AllPredictedZero) {
  EvalReport r = evaluate({0, 0, 0, 0}, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.macro_f1, 1.0 / 3.0);
}

TEST(Evaluate, AbsentClassScoresZero) {
  EvalReport r = evaluate({0, 1}, {0, 1}, {}, 4);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.5);
  EXPECT_EQ(r.per_class_correct.size(), 4u);
}

TEST(Evaluate, LengthMismatch) {
  try {
    evaluate({0, 1}, {0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LengthMismatch);
  }
}

TEST(Evaluate, MatchesNaiveLoopAndRelabelling) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<Index> pick_n(1, 300), pick_k(1, 8);
    const Index n = pick_n(rng), k = pick_k(rng);
    std::uniform_int_distribution<Label> pick(0, k - 1);
    LabelVector pred(static_cast<std::size_t>(n)), truth(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      truth[static_cast<std::size_t>(i)] = pick(rng);
      pred[static_cast<std::size_t>(i)] = rng() % 3 == 0 ? pick(rng) : truth[static_cast<std::size_t>(i)];
    }
    EvalReport r = evaluate(pred, truth, {}, k);
    Index hit = 0;
    for (Index i = 0; i < n; ++i) hit += pred[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(i)];
    ASSERT_DOUBLE_EQ(r.accuracy, static_cast<double>(hit) / static_cast<double>(n));
    ASSERT_EQ(std::accumulate(r.per_class_correct.begin(), r.per_class_correct.end(), Index{0}), hit);
    ASSERT_GE(r.macro_f1, 0.0);
    ASSERT_LE(r.macro_f1, 1.0);

    std::vector<Label> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), Label{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    LabelVector pp = pred, tp = truth;
    for (auto& v : pp) v = perm[static_cast<std::size_t>(v)];
    for (auto& v : tp) v = perm[static_cast<std::size_t>(v)];
    ASSERT_NEAR(evaluate(pp, tp, {}, k).macro_f1, r.macro_f1, 1e-12);
  }
}

TEST(Evaluate, GroupAccuracy) {
  LongTailGroups g;
  g.many = {0};
  g.medium = {1};
  g.few = {2, 3};
  EvalReport r = evaluate({0, 0, 1, 0, 2, 3}, {0, 0, 1, 1, 2, 2}, g, 4);
  ASSERT_TRUE(r.group_accuracy);
  EXPECT_DOUBLE_EQ(*r.group_accuracy->many, 1.0);
  EXPECT_DOUBLE_EQ(*r.group_accuracy->medium, 0.5);
  EXPECT_DOUBLE_EQ(*r.group_accuracy->few, 0.5);

  g.few = {};
  EXPECT_FALSE(evaluate({0}, {0}, g, 1).group_accuracy->few);
  EXPECT_TRUE(to_json(evaluate({0}, {0}, g, 1))["group_accuracy"]["few"].is_null());
}

// ---- alpha search -------------------------------------------------------------

TEST(SearchAlpha, SingletonGrid) {
  DatasetBundle b = testing::synthetic_bundle(62, 3, 6, 20, 10);
  AlphaSearchResult r = search_alpha(b.train, b.val, b.zeroshot, {0.0});
  EXPECT_EQ(r.best_alpha, 0.0);
  EXPECT_EQ(r.val_accuracy_per_alpha.size(), 1u);
}

TEST(SearchAlpha, PerfectGdaWithRandomHeadPicksLargestAlpha) {
  std::mt19937_64 rng(63);
  Matrix means = Matrix::Zero(3, 8);
  for (Index c = 0; c < 3; ++c) means(c, c) = 4.0;
  Matrix cov = Matrix::Identity(8, 8) * 0.05;
  LabeledSet train = testing::sample_gaussians(rng, means, cov, 100);
  LabeledSet val = testing::sample_gaussians(rng, means, cov, 100);
  // noise in the dimensions the class means leave empty, scaled so that only
  // the largest alpha outweighs it
  Matrix noise = Matrix::Zero(3, 8);
  noise.rightCols(5) = random_matrix(rng, 3, 5);
  AlphaSearchResult r = search_alpha(train, val, ZeroShotHead{300.0 * testing::normalize_rows(noise)});
  EXPECT_EQ(r.best_alpha, 100.0);
  EXPECT_EQ(r.val_accuracy_per_alpha.back(), 1.0);
  EXPECT_LT(r.val_accuracy_per_alpha[4], 1.0);
}

TEST(SearchAlpha, PerfectHeadWithScrambledGdaPicksSmallestAlpha) {
  std::mt19937_64 rng(64);
  Matrix means = Matrix::Zero(3, 8);
  for (Index c = 0; c < 3; ++c) means(c, c) = 4.0;
  Matrix cov = Matrix::Identity(8, 8) * 0.05;
  LabeledSet train = testing::sample_gaussians(rng, means, cov, 100);
  LabeledSet val = testing::sample_gaussians(rng, means, cov, 100);
  std::shuffle(train.y.begin(), train.y.end(), rng);
  AlphaSearchResult r = search_alpha(train, val, ZeroShotHead{testing::normalize_rows(means)});
  EXPECT_EQ(r.best_alpha, 0.001);
  EXPECT_EQ(r.val_accuracy_per_alpha.front(), 1.0);
}

TEST(SearchAlpha, PerfectHeadPicksSmallestAlpha) {
  DatasetBundle b = testing::synthetic_bundle(64, 3, 6, 20, 10, 4.0, 0.0);
  AlphaSearchResult r = search_alpha(b.train, b.val, b.zeroshot);
  // every alpha ties at the same accuracy or the small ones win; either way
  // the smallest maximiser is returned
  const double top = *std::max_element(r.val_accuracy_per_alpha.begin(), r.val_accuracy_per_alpha.end());
  std::size_t first = 0;
  while (r.val_accuracy_per_alpha[first] != top) ++first;
  EXPECT_EQ(r.best_alpha, r.grid[first]);
}

TEST(SearchAlpha, TiesGoToSmallerAlpha) {
  DatasetBundle b = testing::synthetic_bundle(65, 3, 6, 20, 10);
  AlphaSearchResult r = search_alpha(b.train, b.val, b.zeroshot, {5.0, 5.0, 1.0, 1.0});
  const double top = *std::max_element(r.val_accuracy_per_alpha.begin(), r.val_accuracy_per_alpha.end());
  if (r.val_accuracy_per_alpha[0] == r.val_accuracy_per_alpha[2]) {
    EXPECT_EQ(r.best_alpha, 1.0);
  } else {
    EXPECT_EQ(r.best_alpha, r.val_accuracy_per_alpha[0] == top ? 5.0 : 1.0);
  }
}

TEST(SearchAlpha, DeterministicAndInGrid) {
  for (std::uint64_t seed = 70; seed < 80; ++seed) {
    DatasetBundle b = testing::synthetic_bundle(seed, 4, 8, 15, 10);
    AlphaSearchResult a = search_alpha(b.train, b.val, b.zeroshot);
    AlphaSearchResult c = search_alpha(b.train, b.val, b.zeroshot);
    EXPECT_EQ(a.best_alpha, c.best_alpha);
    EXPECT_EQ(a.val_accuracy_per_alpha, c.val_accuracy_per_alpha);
    const auto& grid = default_alpha_grid();
    auto at = std::find(grid.begin(), grid.end(), a.best_alpha);
    ASSERT_NE(at, grid.end());
    const double best = a.val_accuracy_per_alpha[static_cast<std::size_t>(at - grid.begin())];
    for (double acc : a.val_accuracy_per_alpha) EXPECT_GE(best, acc);
  }
}

TEST(SearchAlpha, RejectsBadGrid) {
  DatasetBundle b = testing::synthetic_bundle(66, 2, 3, 10, 5);
  EXPECT_THROW(search_alpha(b.train, b.val, b.zeroshot, {}), Error);
  EXPECT_THROW(search_alpha(b.train, b.val, b.zeroshot, {1.0, -0.5}), Error);
}

// ---- protocol -------------------------------------------------------------------

TEST(Protocol, SingleSeedHasZeroSpread) {
  DatasetBundle b = testing::synthetic_bundle(67, 3, 6, 20, 10);
  ProtocolOptions opts;
  opts.shots = {4};
  opts.seeds = {9};
  ProtocolReport r = run_fewshot_protocol(b, opts);
  ASSERT_EQ(r.summary.size(), 1u);
  EXPECT_EQ(r.summary[0].stdev, 0.0);
  EXPECT_EQ(r.summary[0].mean, r.cells[0].accuracy);
}

TEST(Protocol, MoreShotsHelp) {
  DatasetBundle b = testing::synthetic_bundle(68, 5, 16, 40, 60, 2.0, 0.8);
  ProtocolOptions opts;
  opts.shots = {1, 16};
  ProtocolReport r = run_fewshot_protocol(b, opts);
  ASSERT_EQ(r.cells.size(), 6u);
  EXPECT_GE(r.summary[1].mean, r.summary[0].mean);
}

TEST(Protocol, OneShotFallsBackToZeroShot) {
  DatasetBundle b = testing::synthetic_bundle(69, 3, 6, 10, 10);
  ProtocolOptions opts;
  opts.shots = {1};
  opts.seeds = {1};
  ProtocolReport r = run_fewshot_protocol(b, opts);
  EXPECT_EQ(r.cells[0].alpha, 0.0);
  EXPECT_DOUBLE_EQ(r.cells[0].accuracy, evaluate(predict(zeroshot_logits(b.test.x.values(), b.zeroshot)), b.test.y, {}, 3).accuracy);
}

TEST(Protocol, ReportIsReproducible) {
  DatasetBundle b = testing::synthetic_bundle(70, 4, 8, 30, 15);
  ProtocolOptions opts;
  opts.shots = {2, 8};
  opts.longtail_groups = true;
  const std::string first = to_json(run_fewshot_protocol(b, opts)).dump(2);
  const std::string second = to_json(run_fewshot_protocol(b, opts)).dump(2);
  EXPECT_EQ(first, second);
  nlohmann::json j = nlohmann::json::parse(first);
  EXPECT_EQ(j["dataset"], "synthetic");
  EXPECT_EQ(j["estimator"], "ks");
  EXPECT_EQ(j["cells"].size(), 6u);
  EXPECT_TRUE(j["cells"][0]["groups"].is_object());
  EXPECT_EQ(j["summary"][1]["shots"], 8);
}

TEST(Protocol, RejectsEmptyLists) {
  DatasetBundle b = testing::synthetic_bundle(71, 2, 3, 10, 5);
  ProtocolOptions opts;
  opts.seeds = {};
  EXPECT_THROW(run_fewshot_protocol(b, opts), Error);
  opts = {};
  opts.shots = {};
  EXPECT_THROW(run_fewshot_protocol(b, opts), Error);
}

}  // namespace
}  // namespace gda
