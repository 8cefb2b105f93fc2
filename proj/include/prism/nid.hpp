#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/dataset.hpp"
#include "prism/error.hpp"
#include "prism/numerics.hpp"
#include "prism/rng.hpp"

namespace prism {

struct NidConfig {
  int k = 10;
  double threshold = 1.0;
  int min_class_count = 2;  // per side, per class
};

struct ClipRound {
  std::vector<int> alpha;  // clip indices, in placement order
  std::vector<int> beta;
};

/// 2k contiguous clips of the dataset's stored order and the k rounds of the
/// swap traversal.
struct ClipSchedule {
  int k = 0;
  std::vector<std::vector<std::size_t>> clips;  // sample indices
  std::vector<ClipRound> rounds;

  std::vector<std::size_t> side_indices(const std::vector<int>& clip_ids) const {
    std::vector<std::size_t> out;
    for (int c : clip_ids) out.insert(out.end(), clips[static_cast<std::size_t>(c)].begin(), clips[static_cast<std::size_t>(c)].end());
    return out;
  }
};

/// Clips are contiguous runs of the stored sample order (recordings are
/// stored by source, so a contiguous clip carries its source's distribution);
/// the seed picks the cyclic start offset. Round 1 is ({c_1..c_k},
/// {c_k+1..c_2k}); round i moves c_{i-1} from alpha to beta and c_{k+i-1}
/// from beta to alpha.
inline ClipSchedule build_schedule(std::size_t num_samples, int k, std::uint64_t seed) {
  if (k < 2) throw InputError("clip schedule needs k >= 2");
  const auto clip_count = static_cast<std::size_t>(2 * k);
  if (num_samples < clip_count)
    throw InputError("clip schedule needs N >= 2k (N=" + std::to_string(num_samples) + ", k=" + std::to_string(k) + ")");
  Engine eng = SeedSplitter(seed).engine("nid-clips");
  const std::size_t offset = uniform_index(eng, num_samples);

  ClipSchedule s;
  s.k = k;
  const std::size_t base = num_samples / clip_count;
  const std::size_t extra = num_samples % clip_count;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < clip_count; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    std::vector<std::size_t> clip;
    clip.reserve(len);
    for (std::size_t i = 0; i < len; ++i) clip.push_back((offset + pos + i) % num_samples);
    pos += len;
    s.clips.push_back(std::move(clip));
  }

  ClipRound round;
  for (int c = 0; c < k; ++c) round.alpha.push_back(c);
  for (int c = k; c < 2 * k; ++c) round.beta.push_back(c);
  s.rounds.push_back(round);
  for (int i = 2; i <= k; ++i) {
    const int out_of_alpha = i - 2;      // c_{i-1}, 0-based
    const int out_of_beta = k + i - 2;   // c_{k+i-1}, 0-based
    std::erase(round.alpha, out_of_alpha);
    std::erase(round.beta, out_of_beta);
    round.alpha.push_back(out_of_beta);
    round.beta.push_back(out_of_alpha);
    s.rounds.push_back(round);
  }
  return s;
}

inline ClipSchedule build_schedule(const Dataset& dataset, int k, std::uint64_t seed) {
  return build_schedule(dataset.size(), k, seed);
}

struct NiResult {
  double value = 0.0;
  std::vector<int> skipped_classes;
};

/// NI over precomputed features. For each class with at least
/// `min_class_count` rows on both sides: || (mean_a - mean_b) / std_whole ||_2,
/// std_whole being the per-dimension population std of that class over the
/// whole set (floored at 1e-8). Skipped classes drop out of the average.
inline NiResult ni_features(const Matrix& feats_a, std::span<const int> labels_a, const Matrix& feats_b,
                            std::span<const int> labels_b, const Matrix& feats_whole, std::span<const int> labels_whole,
                            int num_classes, int min_class_count = 2) {
  if (feats_a.rows() == 0 || feats_b.rows() == 0) throw InputError("NI needs two nonempty sides");
  const Eigen::Index d = feats_whole.cols();
  if (feats_a.cols() != d || feats_b.cols() != d) throw ShapeError("NI feature dimensions differ");

  auto class_stats = [&](const Matrix& f, std::span<const int> y) {
    Matrix sum = Matrix::Zero(num_classes, d);
    Matrix sq = Matrix::Zero(num_classes, d);
    std::vector<int> count(static_cast<std::size_t>(num_classes), 0);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      const int c = y[static_cast<std::size_t>(i)];
      sum.row(c) += f.row(i);
      sq.row(c) += f.row(i).cwiseAbs2();
      ++count[static_cast<std::size_t>(c)];
    }
    return std::tuple{sum, sq, count};
  };
  const auto [sum_a, sq_a, n_a] = class_stats(feats_a, labels_a);
  const auto [sum_b, sq_b, n_b] = class_stats(feats_b, labels_b);

  // two-pass std over the whole set
  const auto [sum_w, sq_w, n_w] = class_stats(feats_whole, labels_whole);
  Matrix var_w = Matrix::Zero(num_classes, d);
  for (Eigen::Index i = 0; i < feats_whole.rows(); ++i) {
    const int c = labels_whole[static_cast<std::size_t>(i)];
    const RowVector mean = sum_w.row(c) / static_cast<double>(n_w[static_cast<std::size_t>(c)]);
    var_w.row(c) += (feats_whole.row(i) - mean).cwiseAbs2();
  }

  NiResult r;
  double total = 0.0;
  int used = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    if (n_a[uc] < min_class_count || n_b[uc] < min_class_count || n_w[uc] == 0) {
      r.skipped_classes.push_back(c);
      continue;
    }
    const RowVector diff = sum_a.row(c) / static_cast<double>(n_a[uc]) - sum_b.row(c) / static_cast<double>(n_b[uc]);
    const RowVector sd = (var_w.row(c) / static_cast<double>(n_w[uc])).cwiseSqrt().cwiseMax(1e-8);
    total += diff.cwiseQuotient(sd).norm();
    ++used;
  }
  if (used == 0) throw EvaluationError("no class has enough samples on both sides to compute NI");
  r.value = total / used;
  return r;
}

inline NiResult ni(const FeedforwardNet& encoder, const Dataset& side_a, const Dataset& side_b, const Dataset& whole,
                   int min_class_count = 2) {
  if (encoder.input_dim() != whole.input_dim()) throw ShapeError("encoder input dim does not match T*C");
  if (side_a.empty() || side_b.empty()) throw InputError("NI needs two nonempty sides");
  const auto ya = side_a.labels();
  const auto yb = side_b.labels();
  const auto yw = whole.labels();
  return ni_features(net_forward(encoder, side_a.flatten()), ya, net_forward(encoder, side_b.flatten()), yb,
                     net_forward(encoder, whole.flatten()), yw, whole.num_classes, min_class_count);
}

struct NidReport {
  std::vector<double> ni_values;
  double nid = 0.0;
  int k = 0;
  double threshold = 0.0;
  bool is_non_iid = false;
  std::vector<std::vector<int>> skipped_classes;  // per round
};

inline void to_json(nlohmann::json& j, const NidReport& r) {
  j = nlohmann::json{{"ni_values", r.ni_values},   {"nid", r.nid},
                     {"k", r.k},                   {"threshold", r.threshold},
                     {"is_non_iid", r.is_non_iid}, {"skipped_classes", r.skipped_classes}};
}

inline void from_json(const nlohmann::json& j, NidReport& r) {
  j.at("ni_values").get_to(r.ni_values);
  j.at("nid").get_to(r.nid);
  j.at("k").get_to(r.k);
  j.at("threshold").get_to(r.threshold);
  j.at("is_non_iid").get_to(r.is_non_iid);
  j.at("skipped_classes").get_to(r.skipped_classes);
}

/// NI per round of the schedule, NID as their mean, verdict NID > threshold.
inline NidReport nid(const FeedforwardNet& encoder, const Dataset& dataset, const ClipSchedule& schedule,
                     double threshold, int min_class_count = 2) {
  if (encoder.input_dim() != dataset.input_dim()) throw ShapeError("encoder input dim does not match T*C");
  std::size_t covered = 0;
  for (const auto& c : schedule.clips) covered += c.size();
  if (covered != dataset.size()) throw InputError("schedule was not built on this dataset");

  const Matrix feats = net_forward(encoder, dataset.flatten());
  const auto labels = dataset.labels();
  NidReport rep;
  rep.k = schedule.k;
  rep.threshold = threshold;
  for (const auto& round : schedule.rounds) {
    const auto ia = schedule.side_indices(round.alpha);
    const auto ib = schedule.side_indices(round.beta);
    std::vector<int> ya, yb;
    for (auto i : ia) ya.push_back(labels[i]);
    for (auto i : ib) yb.push_back(labels[i]);
    const NiResult r = ni_features(gather_rows(feats, ia), ya, gather_rows(feats, ib), yb, feats, labels,
                                   dataset.num_classes, min_class_count);
    rep.ni_values.push_back(r.value);
    rep.skipped_classes.push_back(r.skipped_classes);
  }
  double total = 0.0;
  for (double v : rep.ni_values) total += v;
  rep.nid = total / static_cast<double>(rep.ni_values.size());
  rep.is_non_iid = rep.nid > threshold;
  return rep;
}

}  // namespace prism
