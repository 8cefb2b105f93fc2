#include <gtest/gtest.h>

#include <set>

#include "prism/fixtures.hpp"
#include "prism/nid.hpp"

using namespace prism;

namespace {

FeedforwardNet identity_encoder(int d) {
  FeedforwardNet net({d, d});
  net.weight(0) = Matrix::Identity(d, d);
  return net;
}

}  // namespace

TEST(Schedule, ClipsPartitionTheDataset) {
  const ClipSchedule s = build_schedule(23, 3, 4);
  ASSERT_EQ(s.clips.size(), 6u);
  std::multiset<std::size_t> seen;
  for (const auto& c : s.clips) {
    EXPECT_TRUE(c.size() == 3 || c.size() == 4);
    seen.insert(c.begin(), c.end());
    for (std::size_t i = 1; i < c.size(); ++i) EXPECT_EQ(c[i], (c[i - 1] + 1) % 23);
  }
  EXPECT_EQ(seen.size(), 23u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 23u);
}

TEST(Schedule, SwapTraversal) {
  const ClipSchedule s = build_schedule(40, 4, 1);
  ASSERT_EQ(s.rounds.size(), 4u);
  EXPECT_EQ(s.rounds[0].alpha, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(s.rounds[0].beta, (std::vector<int>{4, 5, 6, 7}));
  EXPECT_EQ(s.rounds[1].alpha, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(s.rounds[1].beta, (std::vector<int>{5, 6, 7, 0}));
  EXPECT_EQ(s.rounds[3].alpha, (std::vector<int>{3, 4, 5, 6}));
  EXPECT_EQ(s.rounds[3].beta, (std::vector<int>{7, 0, 1, 2}));
  for (const auto& r : s.rounds) {
    std::set<int> all(r.alpha.begin(), r.alpha.end());
    all.insert(r.beta.begin(), r.beta.end());
    EXPECT_EQ(all.size(), 8u);
  }
}

TEST(Schedule, SeedOnlyMovesTheOffset) {
  const ClipSchedule a = build_schedule(50, 5, 1);
  const ClipSchedule b = build_schedule(50, 5, 1);
  EXPECT_EQ(a.clips, b.clips);
  EXPECT_THROW(build_schedule(5, 3, 0), InputError);
  EXPECT_THROW(build_schedule(50, 1, 0), InputError);
}

TEST(Ni, IdenticalSidesGiveZero) {
  Matrix f(4, 2);
  f << 1, 2, 3, 4, 1, 2, 3, 4;
  const std::vector<int> y{0, 0, 0, 0};
  const NiResult r = ni_features(f.topRows(2), std::vector<int>{0, 0}, f.bottomRows(2), std::vector<int>{0, 0}, f, y, 1);
  EXPECT_DOUBLE_EQ(r.value, 0.0);
}

TEST(Ni, OneDimensionalExact) {
  Matrix a(2, 1), b(2, 1), w(4, 1);
  a << 0, 0;
  b << 2, 2;
  w << 0, 0, 2, 2;
  const std::vector<int> y2{0, 0}, y4{0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(ni_features(a, y2, b, y2, w, y4, 1).value, 2.0);
  EXPECT_DOUBLE_EQ(ni_features(b, y2, a, y2, w, y4, 1).value, 2.0);
}

TEST(Ni, AveragesOverUsableClasses) {
  // class 1 has one sample on side b and is skipped
  Matrix a(4, 1), b(3, 1);
  a << 0, 0, 5, 5;
  b << 2, 2, 7;
  Matrix w(7, 1);
  w << 0, 0, 5, 5, 2, 2, 7;
  const std::vector<int> ya{0, 0, 1, 1}, yb{0, 0, 1}, yw{0, 0, 1, 1, 0, 0, 1};
  const NiResult r = ni_features(a, ya, b, yb, w, yw, 2);
  EXPECT_DOUBLE_EQ(r.value, 2.0);
  EXPECT_EQ(r.skipped_classes, (std::vector<int>{1}));
  EXPECT_THROW(ni_features(a, ya, b, yb, w, yw, 2, 3), EvaluationError);
}

TEST(Ni, ConstantFeatureUsesStdFloor) {
  Matrix a(2, 1), b(2, 1), w(4, 1);
  a << 1, 1;
  b << 1, 1;
  w << 1, 1, 1, 1;
  const std::vector<int> y2{0, 0}, y4{0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(ni_features(a, y2, b, y2, w, y4, 1).value, 0.0);
}

TEST(Nid, FrozenValue) {
  FixtureOptions o;
  o.domains = 2;
  o.per_cell = 10;
  o.window_len = 8;
  o.channels = 2;
  o.num_classes = 2;
  o.seed = 7;
  const Dataset ds = make_fixture(o);
  Engine eng = SeedSplitter(7).engine("enc");
  const FeedforwardNet enc = FeedforwardNet::glorot({16, 5, 3}, eng);
  const NidReport rep = nid(enc, ds, build_schedule(ds, 3, 7), 1.0);
  EXPECT_NEAR(rep.nid, 1.5017242819776186, 1e-12);
  EXPECT_EQ(rep.ni_values.size(), 3u);
  EXPECT_TRUE(rep.is_non_iid);
}

TEST(Nid, ThresholdIsStrict) {
  FixtureOptions o;
  o.domains = 1;
  o.per_cell = 20;
  o.window_len = 4;
  o.channels = 2;
  o.num_classes = 2;
  const Dataset ds = make_fixture(o);
  const FeedforwardNet enc = identity_encoder(8);
  const ClipSchedule s = build_schedule(ds, 2, 0);
  const double value = nid(enc, ds, s, 0.0).nid;
  EXPECT_FALSE(nid(enc, ds, s, value).is_non_iid);
  EXPECT_TRUE(nid(enc, ds, s, std::nextafter(value, 0.0)).is_non_iid);
}

TEST(Nid, ShiftedDomainsScoreHigher) {
  const Dataset shifted = [] {
    FixtureOptions o;
    o.domains = 2;
    o.per_cell = 30;
    o.window_len = 8;
    o.channels = 2;
    o.num_classes = 2;
    return make_fixture(o);
  }();
  FixtureOptions o;
  o.domains = 1;
  o.per_cell = 60;
  o.window_len = 8;
  o.channels = 2;
  o.num_classes = 2;
  const Dataset flat = make_fixture(o);
  const FeedforwardNet enc = identity_encoder(16);
  EXPECT_GT(nid(enc, shifted, build_schedule(shifted, 3, 1), 1.0).nid,
            2.0 * nid(enc, flat, build_schedule(flat, 3, 1), 1.0).nid);
}

TEST(Nid, ReportJsonRoundTrip) {
  NidReport r;
  r.ni_values = {0.5, 1.25};
  r.nid = 0.875;
  r.k = 2;
  r.threshold = 1.0;
  r.skipped_classes = {{}, {3}};
  const NidReport back = nlohmann::json(r).get<NidReport>();
  EXPECT_EQ(back.ni_values, r.ni_values);
  EXPECT_EQ(back.nid, r.nid);
  EXPECT_EQ(back.skipped_classes, r.skipped_classes);
  EXPECT_FALSE(back.is_non_iid);
}

TEST(Nid, ShapeMismatch) {
  const Dataset ds = make_fixture([] {
    FixtureOptions o;
    o.domains = 1;
    o.per_cell = 4;
    o.window_len = 4;
    o.channels = 2;
    o.num_classes = 2;
    return o;
  }());
  EXPECT_THROW(nid(identity_encoder(3), ds, build_schedule(ds, 2, 0), 1.0), ShapeError);
}
