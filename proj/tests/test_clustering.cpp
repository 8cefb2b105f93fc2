#include <gtest/gtest.h>

#include "prism/clustering.hpp"

using namespace prism;

namespace {

Matrix eight_points() {
  Matrix p(8, 2);
  p << 0, 0, 1, 0, 0, 1, 5, 5, 6, 5, 5, 6.5, 2.5, 2.5, 9, 0;
  return p;
}

Matrix blobs(int per_blob, std::uint64_t seed, double spread) {
  Engine eng = SeedSplitter(seed).engine("blobs");
  const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  Matrix p(3 * per_blob, 2);
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < per_blob; ++i)
      for (int d = 0; d < 2; ++d) p(b * per_blob + i, d) = centers[b][d] + spread * standard_normal(eng);
  return p;
}

}  // namespace

TEST(KMeans, SingleClusterInertia) {
  const ClusterModel m = kmeans(eight_points(), 1, 0);
  EXPECT_NEAR(m.inertia, 122.21875, 1e-10);
  EXPECT_NEAR(m.centroids(0, 0), 3.5625, 1e-12);
}

TEST(KMeans, ExhaustiveOracle) {
  const ExhaustiveResult r = exhaustive_min_sse(eight_points(), 2);
  EXPECT_NEAR(r.inertia, 43.3125, 1e-10);
  EXPECT_EQ(r.assignment, (std::vector<int>{0, 0, 0, 1, 1, 1, 0, 1}));
  const ClusterModel m = kmeans(eight_points(), 2, 3);
  EXPECT_NEAR(m.inertia, 43.3125, 1e-9);
}

TEST(KMeans, ReportedInertiaMatchesAssignment) {
  const Matrix p = blobs(20, 4, 1.0);
  const ClusterModel m = kmeans(p, 3, 4);
  EXPECT_NEAR(m.inertia, inertia_of(p, m.centroids, m.assignment), 1e-9);
  for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
    EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1] + 1e-9);
}

TEST(KMeans, RecoversBlobs) {
  const Matrix p = blobs(30, 5, 0.5);
  std::vector<int> truth;
  for (int b = 0; b < 3; ++b) truth.insert(truth.end(), 30, b);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(truth, kmeans(p, 3, 5).assignment), 1.0);
}

TEST(KMeans, SameSeedSameResult) {
  const Matrix p = blobs(10, 6, 2.0);
  const ClusterModel a = kmeans(p, 3, 9);
  const ClusterModel b = kmeans(p, 3, 9);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, TieGoesToLowestIndex) {
  Matrix c(2, 1);
  c << -1, 1;
  RowVector x(1);
  x << 0;
  EXPECT_EQ(assign_nearest(c, x), 0);
  c << 1, -1;
  EXPECT_EQ(assign_nearest(c, x), 0);
}

TEST(KMeans, EmptyClusterIsReseeded) {
  Matrix p(4, 1);
  p << 0, 1, 10, 11;
  Matrix init(2, 1);
  init << 5, 100;  // second centroid starts with no members
  const ClusterModel m = lloyd(p, init, 50, 1e-9);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(m.assignment, {0, 0, 1, 1}), 1.0);
  EXPECT_NEAR(m.inertia, 1.0, 1e-12);
}

TEST(KMeans, InputErrors) {
  EXPECT_THROW(kmeans(eight_points(), 9, 0), InputError);
  EXPECT_THROW(kmeans(eight_points(), 0, 0), InputError);
  Matrix bad = eight_points();
  bad(0, 0) = std::nan("");
  EXPECT_THROW(kmeans(bad, 2, 0), InputError);
  EXPECT_THROW(exhaustive_min_sse(Matrix::Zero(21, 1), 2), CapacityError);
}

TEST(Ari, Oracle) {
  EXPECT_NEAR(adjusted_rand_index({0, 0, 0, 1, 1, 1, 2, 2}, {0, 0, 1, 1, 1, 2, 2, 2}), 0.23809523809523808, 1e-12);
  EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 1, 1}, {5, 5, 3, 3}), 1.0);
  EXPECT_THROW(adjusted_rand_index({0}, {0, 1}), ShapeError);
}

// k-means with restarts should land on the exhaustive optimum on small random
// instances almost always, and never far from it.
TEST(KMeans, CloseToExhaustiveOptimum) {
  int equal = 0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    Engine eng = SeedSplitter(100 + t).engine("pts");
    Matrix p(10, 2);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = standard_normal(eng) * 3.0;
    const double best = exhaustive_min_sse(p, 2).inertia;
    const double got = kmeans(p, 2, t).inertia;
    EXPECT_GE(got, best - 1e-9);
    EXPECT_LE(got, best * 1.10);
    if (got <= best + 1e-9) ++equal;
  }
  EXPECT_GE(equal, 18);
}
