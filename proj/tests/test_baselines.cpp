#include <gtest/gtest.h>

#include "prism/baselines.hpp"
#include "test_util.hpp"

using namespace prism;

namespace {

struct Fixture {
  Splits s;
  TdeConfig cfg;
  InitialModel m0;
};

const Fixture& shared() {
  static const Fixture f = [] {
    Fixture out;
    out.s = split(prism::testing::small_fixture(2, 25, 11), {0.6, 0.2, 0.2, 11});
    out.cfg.init_epochs = 60;
    out.cfg.finetune_passes = 10;
    out.cfg.encoder_dims = {8};
    out.cfg.seed = 11;
    out.m0 = train_initial(out.s.train, out.s.val, out.cfg);
    return out;
  }();
  return f;
}

std::map<std::string, int> domain_groups(const Dataset& a, const Dataset& b) {
  std::map<std::string, int> g;
  for (const auto* d : {&a, &b})
    for (const auto& s : d->samples) g[s.id] = std::stoi(s.meta.at("domain"));
  return g;
}

}  // namespace

TEST(Baselines, P0MatchesSingleModelMine) {
  const auto& f = shared();
  TdeConfig one = f.cfg;
  one.n = 1;
  const MineResult r = mine(f.s.train, f.s.val, f.m0, one);
  EXPECT_EQ(baseline_p0(f.m0, f.s.test, f.cfg), evaluate(r.pack, f.s.test));
}

TEST(Baselines, SingleClusterEqualsP0) {
  const auto& f = shared();
  const EvalReport p0 = baseline_p0(f.m0, f.s.test, f.cfg);
  EXPECT_EQ(baseline_cluster_data(f.m0, f.s.train, f.s.test, 1, f.cfg), p0);
  EXPECT_EQ(baseline_cluster_feature(f.m0, f.s.train, f.s.test, 1, f.cfg), p0);
  EXPECT_THROW(baseline_cluster_data(f.m0, f.s.train, f.s.test, 0, f.cfg), InputError);
}

TEST(Baselines, SemanticSplitHelpsOnShiftedDomains) {
  const auto& f = shared();
  const EvalReport p0 = baseline_p0(f.m0, f.s.test, f.cfg);
  const EvalReport sem = baseline_semantic(f.m0, f.s.train, f.s.test, "domain", f.cfg);
  EXPECT_GE(sem.accuracy, p0.accuracy);
  EXPECT_EQ(sem.fallback_routed, 0u);
  EXPECT_THROW(baseline_semantic(f.m0, f.s.train, f.s.test, "site", f.cfg), InputError);
}

TEST(Baselines, SemanticUnseenValueFallsBack) {
  const auto& f = shared();
  Dataset test = f.s.test;
  test.samples[0].meta["domain"] = "unseen";
  test.samples[1].meta["domain"] = "unseen";
  EXPECT_EQ(baseline_semantic(f.m0, f.s.train, test, "domain", f.cfg).fallback_routed, 2u);
}

TEST(Baselines, WholeSetSubsetKeepsInitialModel) {
  const auto& f = shared();
  const auto models = subset_models(f.m0, f.s.train, std::vector<int>(f.s.train.size(), 1), 2, f.cfg);
  ASSERT_EQ(models.size(), 2u);
  EXPECT_TRUE(models[0].encoder == f.m0.encoder);  // empty subset
  EXPECT_TRUE(models[1].encoder == f.m0.encoder);  // whole set
  EXPECT_TRUE(models[1].head == f.m0.head);
}

TEST(Baselines, ClusterBaselinesAreDeterministic) {
  const auto& f = shared();
  EXPECT_EQ(baseline_cluster_feature(f.m0, f.s.train, f.s.test, 2, f.cfg),
            baseline_cluster_feature(f.m0, f.s.train, f.s.test, 2, f.cfg));
}

TEST(EvalPartition, FlagsDegenerateSubsets) {
  const auto& f = shared();
  PartitionScheme scheme{SchemeKind::cd, {}, 3};
  // subset 0: everything of domain 0; subset 1: train samples of class 0 only
  // in domain 1 (untrainable); subset 2: no test samples
  for (const auto& s : f.s.train.samples) scheme.assignment[s.id] = s.meta.at("domain") == "0" ? 0 : (s.label == 0 ? 1 : 2);
  for (const auto& s : f.s.test.samples) scheme.assignment[s.id] = s.meta.at("domain") == "0" ? 0 : 1;
  const PartitionEval ev = eval_partition(scheme, f.s.train, f.s.test, f.m0, f.cfg);
  ASSERT_EQ(ev.subsets.size(), 3u);
  EXPECT_FALSE(ev.subsets[0].untrainable);
  EXPECT_TRUE(ev.subsets[1].untrainable);
  EXPECT_EQ(ev.subsets[1].error, 1.0);
  EXPECT_TRUE(ev.subsets[2].empty_test);
  EXPECT_EQ(ev.subsets[2].error, 0.0);
  EXPECT_NEAR(ev.total_error, ev.subsets[0].error + 1.0, 1e-15);

  PartitionScheme partial{SchemeKind::cd, {}, 1};
  EXPECT_THROW(eval_partition(partial, f.s.train, f.s.test, f.m0, f.cfg), InputError);
}

TEST(EvalPartition, SingleSubsetIsP0Error) {
  const auto& f = shared();
  PartitionScheme all{SchemeKind::p0, {}, 1};
  for (const auto& [id, g] : domain_groups(f.s.train, f.s.test)) all.assignment[id] = 0;
  const PartitionEval ev = eval_partition(all, f.s.train, f.s.test, f.m0, f.cfg);
  EXPECT_NEAR(ev.total_error, 1.0 - baseline_p0(f.m0, f.s.test, f.cfg).accuracy, 1e-15);
}

TEST(Oracle, PicksLexicographicallyFirstMinimum) {
  const auto& f = shared();
  TdeConfig cfg = f.cfg;
  cfg.finetune_passes = 3;
  const OracleResult r = exhaustive_partition_oracle(f.s.train, f.s.test, domain_groups(f.s.train, f.s.test), 2, 2, f.m0, cfg);
  ASSERT_EQ(r.evaluated.size(), 4u);
  EXPECT_EQ(r.evaluated[0].first, (std::vector<int>{0, 0}));
  EXPECT_EQ(r.evaluated[3].first, (std::vector<int>{1, 1}));
  double best = r.evaluated[0].second;
  std::size_t first = 0;
  for (std::size_t i = 0; i < r.evaluated.size(); ++i)
    if (r.evaluated[i].second < best) best = r.evaluated[i].second, first = i;
  EXPECT_EQ(r.min_total_error, best);
  EXPECT_EQ(r.best_group_assignment, r.evaluated[first].first);
  // relabelling subsets does not change the error of a two-way split
  EXPECT_NEAR(r.evaluated[1].second, r.evaluated[2].second, 1e-12);
}

TEST(Oracle, CapacityLimit) {
  const auto& f = shared();
  EXPECT_THROW(exhaustive_partition_oracle(f.s.train, f.s.test, {}, 13, 2, f.m0, f.cfg), CapacityError);
  EXPECT_THROW(exhaustive_partition_oracle(f.s.train, f.s.test, {}, 1, 0, f.m0, f.cfg), InputError);
}

TEST(Baselines, AccuracyByMeta) {
  Dataset test{"t", 2, 1, 1, {}};
  for (int i = 0; i < 4; ++i) test.samples.push_back({"s" + std::to_string(i), Matrix::Zero(1, 1), i % 2, {{"domain", i < 2 ? "a" : "b"}}});
  EvalReport rep;
  rep.predicted = {0, 1, 1, 1};
  const auto acc = accuracy_by_meta(rep, test, "domain");
  EXPECT_EQ(acc.at("a"), 1.0);
  EXPECT_EQ(acc.at("b"), 0.5);
}
