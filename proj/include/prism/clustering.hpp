#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "prism/error.hpp"
#include "prism/numerics.hpp"
#include "prism/rng.hpp"

namespace prism {

struct ClusterModel {
  Matrix centroids;             // n x d
  std::vector<int> assignment;  // N entries in [0, n)
  double inertia = 0.0;
  int iterations_run = 0;
  std::vector<double> inertia_history;  // inertia after each assignment step
};

struct KMeansOptions {
  int max_iter = 100;
  double tol = 1e-6;
  int restarts = 5;
};

/// Index of the nearest centroid by squared Euclidean distance; ties go to the
/// lowest index.
inline int assign_nearest(const Matrix& centroids, const RowVector& point) {
  if (centroids.rows() == 0) throw ShapeError("no centroids");
  if (point.size() != centroids.cols())
    throw ShapeError("point has dimension " + std::to_string(point.size()) + ", centroids have " +
                     std::to_string(centroids.cols()));
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

inline std::vector<int> assign_all(const Matrix& centroids, const Matrix& points) {
  std::vector<int> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) out[static_cast<std::size_t>(i)] = assign_nearest(centroids, points.row(i));
  return out;
}

/// Sum of squared distances of each point to the centroid it is assigned to.
inline double inertia_of(const Matrix& points, const Matrix& centroids, const std::vector<int>& assignment) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (points.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
  return total;
}

/// Per-cluster means; clusters with no members keep `fallback` rows.
inline Matrix cluster_means(const Matrix& points, const std::vector<int>& assignment, int n, const Matrix& fallback) {
  Matrix sums = Matrix::Zero(n, points.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int k = assignment[static_cast<std::size_t>(i)];
    sums.row(k) += points.row(i);
    ++counts[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < n; ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0)
      sums.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
    else
      sums.row(k) = fallback.row(k);
  }
  return sums;
}

namespace detail {

inline void check_points(const Matrix& points, int n) {
  if (n < 1) throw InputError("cluster count must be at least 1");
  if (points.rows() < n)
    throw InputError("k-means needs N >= n (N=" + std::to_string(points.rows()) + ", n=" + std::to_string(n) + ")");
  if (!points.allFinite()) throw InputError("k-means points must be finite");
}

inline Matrix kmeanspp_seed(const Matrix& points, int n, Engine& eng) {
  const auto N = static_cast<std::size_t>(points.rows());
  Matrix centroids(n, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(uniform_index(eng, N)));
  std::vector<double> d2(N, std::numeric_limits<double>::infinity());
  for (int k = 1; k < n; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - centroids.row(k - 1)).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(eng) * total;
      double acc = 0.0;
      pick = N - 1;
      for (std::size_t i = 0; i < N; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(eng, N);
    }
    centroids.row(k) = points.row(static_cast<Eigen::Index>(pick));
  }
  return centroids;
}

}  // namespace detail

/// Lloyd iterations from the given centroids. Empty clusters are reseeded to
/// the point farthest from its current centroid.
inline ClusterModel lloyd(const Matrix& points, Matrix centroids, int max_iter, double tol) {
  const int n = static_cast<int>(centroids.rows());
  detail::check_points(points, n);
  if (centroids.cols() != points.cols()) throw ShapeError("initial centroids have the wrong dimension");
  ClusterModel model;
  std::vector<int> assign = assign_all(centroids, points);
  model.inertia_history.push_back(inertia_of(points, centroids, assign));
  for (int it = 0; it < max_iter; ++it) {
    Matrix next = cluster_means(points, assign, n, centroids);

    std::vector<std::size_t> counts(static_cast<std::size_t>(n), 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    for (int k = 0; k < n; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) continue;
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double d = (points.row(i) - next.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next.row(k) = points.row(far);
      // claim the point so a second empty cluster picks a different one
      assign[static_cast<std::size_t>(far)] = k;
    }

    const double movement = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    assign = assign_all(centroids, points);
    model.inertia_history.push_back(inertia_of(points, centroids, assign));
    model.iterations_run = it + 1;
    if (movement < tol) break;
  }
  model.centroids = std::move(centroids);
  model.assignment = std::move(assign);
  model.inertia = model.inertia_history.back();
  return model;
}

/// Single-point moves on a Lloyd fixed point: moving x from A to B changes the
/// SSE by |B|/(|B|+1) |x-c_B|^2 - |A|/(|A|-1) |x-c_A|^2; any strictly negative
/// move is taken and both means are updated exactly. Never empties a cluster.
inline void hartigan_refine(const Matrix& points, ClusterModel& m, int max_sweeps = 50) {
  const int n = static_cast<int>(m.centroids.rows());
  std::vector<std::size_t> counts(static_cast<std::size_t>(n), 0);
  for (int a : m.assignment) ++counts[static_cast<std::size_t>(a)];
  bool moved = true;
  for (int sweep = 0; sweep < max_sweeps && moved; ++sweep) {
    moved = false;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int from = m.assignment[static_cast<std::size_t>(i)];
      const auto nf = static_cast<double>(counts[static_cast<std::size_t>(from)]);
      if (nf <= 1.0) continue;
      const double cost_out = nf / (nf - 1.0) * (points.row(i) - m.centroids.row(from)).squaredNorm();
      int best = from;
      double best_delta = -1e-12 * std::max(1.0, cost_out);
      for (int k = 0; k < n; ++k) {
        if (k == from) continue;
        const auto nk = static_cast<double>(counts[static_cast<std::size_t>(k)]);
        const double delta = nk / (nk + 1.0) * (points.row(i) - m.centroids.row(k)).squaredNorm() - cost_out;
        if (delta < best_delta) {
          best_delta = delta;
          best = k;
        }
      }
      if (best == from) continue;
      const auto nb = static_cast<double>(counts[static_cast<std::size_t>(best)]);
      m.centroids.row(from) = (m.centroids.row(from) * nf - points.row(i)) / (nf - 1.0);
      m.centroids.row(best) = (m.centroids.row(best) * nb + points.row(i)) / (nb + 1.0);
      --counts[static_cast<std::size_t>(from)];
      ++counts[static_cast<std::size_t>(best)];
      m.assignment[static_cast<std::size_t>(i)] = best;
      moved = true;
    }
  }
  // recompute from scratch so the centroids are exact means of the final assignment
  m.centroids = cluster_means(points, m.assignment, n, m.centroids);
  m.inertia = inertia_of(points, m.centroids, m.assignment);
  m.inertia_history.push_back(m.inertia);
}

/// k-means++ seeding, Lloyd, then single-point refinement; best inertia over
/// `restarts` runs (earliest run wins ties).
inline ClusterModel kmeans(const Matrix& points, int n, std::uint64_t seed, const KMeansOptions& opts = {}) {
  detail::check_points(points, n);
  if (opts.restarts < 1) throw InputError("k-means restarts must be at least 1");
  const SeedSplitter splitter(seed);
  ClusterModel best;
  bool have = false;
  for (int r = 0; r < opts.restarts; ++r) {
    Engine eng = splitter.engine("kmeans++", static_cast<std::uint64_t>(r));
    ClusterModel m = lloyd(points, detail::kmeanspp_seed(points, n, eng), opts.max_iter, opts.tol);
    hartigan_refine(points, m);
    if (!have || m.inertia < best.inertia) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

struct ExhaustiveResult {
  std::vector<int> assignment;
  Matrix centroids;
  double inertia = 0.0;
};

/// Minimum-SSE partition by enumerating all n^N labelings (lexicographically
/// first minimum). Limited to n^N <= 1e6.
inline ExhaustiveResult exhaustive_min_sse(const Matrix& points, int n) {
  detail::check_points(points, n);
  const auto N = static_cast<std::size_t>(points.rows());
  double count = std::pow(static_cast<double>(n), static_cast<double>(N));
  if (count > 1e6) throw CapacityError("exhaustive clustering limited to n^N <= 1e6 (got " + std::to_string(n) + "^" + std::to_string(N) + ")");
  std::vector<int> labels(N, 0);
  ExhaustiveResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const Matrix zeros = Matrix::Zero(n, points.cols());
  while (true) {
    const Matrix means = cluster_means(points, labels, n, zeros);
    const double sse = inertia_of(points, means, labels);
    if (sse < best.inertia) {
      best.inertia = sse;
      best.assignment = labels;
      best.centroids = means;
    }
    std::size_t pos = N;
    while (pos > 0) {
      --pos;
      if (++labels[pos] < n) break;
      labels[pos] = 0;
      if (pos == 0) return best;
    }
    if (N == 0) return best;
  }
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ShapeError("ARI labelings differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cells[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [k, v] : cells) index += c2(v);
  for (const auto& [k, v] : rows) sum_rows += c2(v);
  for (const auto& [k, v] : cols) sum_cols += c2(v);
  const double expected = sum_rows * sum_cols / c2(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;  // both labelings trivial
  return (index - expected) / (max_index - expected);
}

}  // namespace prism
