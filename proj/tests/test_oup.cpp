#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "prism/oup.hpp"
#include "prism/tde.hpp"
#include "test_util.hpp"

using namespace prism;

namespace {

FeedforwardNet linear(const Matrix& w) {
  FeedforwardNet net({static_cast<int>(w.rows()), static_cast<int>(w.cols())});
  net.weight(0) = w;
  return net;
}

// 1x2 windows, identity encoder, two heads that disagree, centroids at +-5 on axis 0
ModelPack routed_pack() {
  ModelPack p;
  p.encoder = linear(Matrix::Identity(2, 2));
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  p.heads = {linear(Matrix::Identity(2, 2)), linear(swap)};
  p.centroids.resize(2, 2);
  p.centroids << -5, 0, 5, 0;
  p.num_classes = 2;
  p.window_len = 1;
  p.channels = 2;
  p.config.n = 2;
  return p;
}

Dataset rows_dataset(const Matrix& x, const std::vector<int>& y) {
  Dataset ds{"rows", 2, 1, 2, {}};
  for (Eigen::Index i = 0; i < x.rows(); ++i) ds.samples.push_back({"r" + std::to_string(i), x.row(i), y[static_cast<std::size_t>(i)], {}});
  return ds;
}

ModelPack mined_pack(std::uint64_t seed) {
  const Dataset ds = prism::testing::small_fixture(2, 20, seed);
  const Splits s = split(ds, {0.6, 0.2, 0.2, seed});
  TdeConfig cfg;
  cfg.n = 2;
  cfg.epochs = 3;
  cfg.init_epochs = 20;
  cfg.encoder_dims = {6};
  cfg.seed = seed;
  return mine(s.train, s.val, cfg).pack;
}

}  // namespace

TEST(Score, MacroF1Oracle) {
  const std::vector<int> t{0, 0, 1, 1, 2, 2, 2, 0, 1, 2}, p{0, 1, 1, 1, 2, 0, 2, 0, 2, 2};
  const EvalReport r = score(t, p, 3);
  EXPECT_NEAR(r.macro_f1, 0.69444444444444431, 1e-12);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.7);
  EXPECT_EQ(r.confusion[0], (std::vector<long>{2, 1, 0}));
  EXPECT_EQ(r.confusion[2], (std::vector<long>{1, 0, 3}));
  EXPECT_TRUE(r.absent_classes.empty());
}

TEST(Score, AbsentClassCountsAsZero) {
  const EvalReport r = score(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 1, 1}, 3);
  EXPECT_NEAR(r.macro_f1, 0.48888888888888893, 1e-12);
  EXPECT_EQ(r.absent_classes, (std::vector<int>{2}));
  EXPECT_EQ(r.f1[2], 0.0);
}

TEST(Score, Errors) {
  EXPECT_THROW(score(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ShapeError);
  EXPECT_THROW(score(std::vector<int>{}, std::vector<int>{}, 2), InputError);
  EXPECT_THROW(score(std::vector<int>{3}, std::vector<int>{0}, 2), InputError);
}

TEST(Score, ArgmaxTiesGoLow) {
  EXPECT_EQ(argmax_lowest(std::vector<double>{0.25, 0.5, 0.5}), 1);
  EXPECT_EQ(argmax_lowest(std::vector<double>{0.5, 0.5}), 0);
}

TEST(Predict, RoutesToNearestCentroid) {
  Matrix x(3, 2);
  x << -4, 0.5, 4, 0.5, -6, -7;
  const auto recs = predict_batch(routed_pack(), rows_dataset(x, {1, 0, 0}));
  EXPECT_EQ(recs[0].chosen_domain, 0);
  EXPECT_EQ(recs[1].chosen_domain, 1);
  EXPECT_EQ(recs[2].chosen_domain, 0);
  // head 0 prefers class 0 for negative x, head 1 swaps the logits
  EXPECT_EQ(recs[0].predicted_label, 1);
  EXPECT_EQ(recs[1].predicted_label, 1);
  EXPECT_EQ(recs[2].predicted_label, 0);
  for (const auto& r : recs) {
    double sum = 0.0;
    for (double v : r.class_probs) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Predict, SingleSampleMatchesBatch) {
  Matrix x(2, 2);
  x << -4, 0.5, 4, 0.5;
  const Dataset ds = rows_dataset(x, {1, 0});
  const auto batch = predict_batch(routed_pack(), ds);
  const PredictionRecord one = predict(routed_pack(), ds.samples[1]);
  EXPECT_EQ(one.class_probs, batch[1].class_probs);
  EXPECT_EQ(one.chosen_domain, batch[1].chosen_domain);
  EXPECT_EQ(one.true_label, 0);
}

TEST(Predict, ShapeMismatch) {
  Dataset ds{"x", 2, 2, 2, {{"a", Matrix::Zero(2, 2), 0, {}}}};
  EXPECT_THROW(predict_batch(routed_pack(), ds), ShapeError);
  EXPECT_THROW(predict(routed_pack(), ds.samples[0]), ShapeError);
}

TEST(Evaluate, InvariantToTestOrder) {
  const Dataset ds = prism::testing::small_fixture(2, 10, 3);
  const ModelPack pack = mined_pack(3);
  Dataset reversed = ds;
  std::reverse(reversed.samples.begin(), reversed.samples.end());
  const EvalReport a = evaluate(pack, ds);
  const EvalReport b = evaluate(pack, reversed);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.macro_f1, b.macro_f1);
  EXPECT_EQ(a.confusion, b.confusion);
  std::vector<int> back = b.predicted;
  std::reverse(back.begin(), back.end());
  EXPECT_EQ(a.predicted, back);
}

TEST(Evaluate, MinedPackRoutesByDomain) {
  const ModelPack pack = mined_pack(4);
  const Dataset fresh = prism::testing::small_fixture(2, 10, 99);
  std::vector<int> routes;
  for (const auto& r : predict_batch(pack, fresh)) routes.push_back(r.chosen_domain);
  // map each route to the majority true domain and count agreement
  const auto truth = encode_categories(fresh.meta_values("domain"));
  int agree = 0;
  for (int k = 0; k < pack.n(); ++k) {
    int votes[2] = {0, 0};
    for (std::size_t i = 0; i < routes.size(); ++i)
      if (routes[i] == k) ++votes[truth[i]];
    agree += std::max(votes[0], votes[1]);
  }
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(routes.size()), 0.8);
}

TEST(Pack, RoundTripIsBitExact) {
  ModelPack p = mined_pack(5);
  p.provenance.loss_history.push_back(0.1 + 0.2);
  prism::testing::TempDir dir("pack");
  save_pack(p, dir / "pack.json");
  const ModelPack q = load_pack(dir / "pack.json");
  EXPECT_TRUE(q.encoder == p.encoder);
  ASSERT_EQ(q.n(), p.n());
  for (int k = 0; k < p.n(); ++k) EXPECT_TRUE(q.heads[static_cast<std::size_t>(k)] == p.heads[static_cast<std::size_t>(k)]);
  ASSERT_EQ(q.centroids.size(), p.centroids.size());
  EXPECT_EQ(std::memcmp(q.centroids.data(), p.centroids.data(), sizeof(double) * p.centroids.size()), 0);
  EXPECT_EQ(q.provenance.loss_history, p.provenance.loss_history);
  EXPECT_EQ(q.config.encoder_dims, p.config.encoder_dims);
  EXPECT_EQ(q.config.alpha, p.config.alpha);
  const Dataset ds = prism::testing::small_fixture(2, 5, 8);
  EXPECT_EQ(evaluate(q, ds), evaluate(p, ds));
}

TEST(Pack, NewerSchemaIsRejectedWithBothVersions) {
  nlohmann::json j = pack_to_json(routed_pack());
  j["schema_version"] = 7;
  try {
    pack_from_json(j);
    FAIL() << "expected CompatibilityError";
  } catch (const CompatibilityError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("7"), std::string::npos);
    EXPECT_NE(msg.find("schema_version 1"), std::string::npos);
  }
}

TEST(Pack, TruncatedFileIsParseError) {
  prism::testing::TempDir dir("trunc");
  save_pack(routed_pack(), dir / "pack.json");
  const std::string text = prism::testing::slurp(dir / "pack.json");
  std::ofstream(dir / "cut.json") << text.substr(0, text.size() / 2);
  EXPECT_THROW(load_pack(dir / "cut.json"), ParseError);
  EXPECT_THROW(load_pack(dir / "missing.json"), InputError);
}

TEST(Pack, MissingFieldAndBadShapes) {
  nlohmann::json j = pack_to_json(routed_pack());
  j.erase("heads");
  EXPECT_THROW(pack_from_json(j), ParseError);
  nlohmann::json k = pack_to_json(routed_pack());
  k["num_classes"] = 3;
  EXPECT_THROW(pack_from_json(k), SchemaError);
}

TEST(Csv, Headers) {
  Matrix x(1, 2);
  x << -4, 0.5;
  std::ostringstream pred;
  write_predictions_csv(predict_batch(routed_pack(), rows_dataset(x, {1})), pred);
  EXPECT_EQ(pred.str().substr(0, pred.str().find('\n')), "sample_id,chosen_domain,predicted_label,true_label,max_prob");
  EXPECT_NE(pred.str().find("\nr0,0,1,1,"), std::string::npos);

  std::ostringstream rep;
  write_report_csv(score(std::vector<int>{0, 1}, std::vector<int>{0, 0}, 2), rep);
  EXPECT_NE(rep.str().find("class,precision,recall,f1,support\n0,0.5,1,"), std::string::npos);
  EXPECT_NE(rep.str().find("overall_accuracy,0.5"), std::string::npos);
}
