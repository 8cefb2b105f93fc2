#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "prism/clustering.hpp"
#include "prism/dataset.hpp"
#include "prism/error.hpp"
#include "prism/model_pack.hpp"
#include "prism/numerics.hpp"
#include "prism/oup.hpp"
#include "prism/tde.hpp"

namespace prism {

/// DA fine-tuning: cfg.finetune_passes backtracking cross-entropy steps on the
/// subset, starting from M_0. Returns the final parameters.
inline InitialModel finetune(const InitialModel& m0, const Dataset& subset, const TdeConfig& cfg) {
  InitialModel m = m0;
  if (subset.empty()) return m;
  const TrainingData data = TrainingData::from(subset);
  std::vector<FeedforwardNet> nets{m.encoder, m.head};
  m.loss_history.clear();
  m.skipped_steps = 0;
  for (int pass = 0; pass < cfg.finetune_passes; ++pass) {
    const NetLoss at = detail::ce_loss(nets, data, true);
    if (!std::isfinite(at.loss)) throw NumericError("non-finite fine-tuning loss");
    const StepOutcome step = backtracking_step(nets, at.grads, at.loss, cfg, [&](const std::vector<FeedforwardNet>& t) {
      return detail::ce_loss(t, data, false).loss;
    });
    if (!step.accepted) ++m.skipped_steps;
    m.loss_history.push_back(step.loss_after);
  }
  m.encoder = std::move(nets[0]);
  m.head = std::move(nets[1]);
  return m;
}

/// Each test sample runs through models[route[i]] (route -1 = fallback model).
inline EvalReport score_routed(const std::vector<InitialModel>& models, const InitialModel& fallback,
                               const Dataset& test, const std::vector<int>& route) {
  const Matrix x = test.flatten();
  const auto truth = test.labels();
  std::vector<int> pred(test.size(), 0);
  std::vector<int> dom(test.size(), 0);
  EvalReport rep;
  for (int k = -1; k < static_cast<int>(models.size()); ++k) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < route.size(); ++i)
      if (route[i] == k) rows.push_back(i);
    if (rows.empty()) continue;
    const InitialModel& m = k < 0 ? fallback : models[static_cast<std::size_t>(k)];
    const Matrix probs = softmax_rows(net_forward(m.head, net_forward(m.encoder, gather_rows(x, rows))));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(probs.cols()));
      for (Eigen::Index c = 0; c < probs.cols(); ++c) row[static_cast<std::size_t>(c)] = probs(static_cast<Eigen::Index>(r), c);
      pred[rows[r]] = argmax_lowest(row);
      dom[rows[r]] = k < 0 ? 0 : k;
    }
  }
  rep = score(truth, pred, test.num_classes, dom, static_cast<int>(std::max<std::size_t>(models.size(), 1)));
  for (int r : route)
    if (r < 0) ++rep.fallback_routed;
  return rep;
}

/// One model per subset: M_0 itself when the subset is the whole training set,
/// otherwise M_0 fine-tuned on it (M_0 also for empty subsets).
inline std::vector<InitialModel> subset_models(const InitialModel& m0, const Dataset& train,
                                               const std::vector<int>& assignment, int n, const TdeConfig& cfg) {
  std::vector<InitialModel> models;
  for (int k = 0; k < n; ++k) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == k) rows.push_back(i);
    if (rows.size() == train.size() || rows.empty())
      models.push_back(m0);
    else
      models.push_back(finetune(m0, train.subset(rows), cfg));
  }
  return models;
}

/// Single model trained on everything.
inline EvalReport baseline_p0(const InitialModel& m0, const Dataset& test, const TdeConfig& cfg) {
  return evaluate(single_model_pack(m0, cfg, test.window_len, test.channels), test);
}

inline EvalReport baseline_p0(const Dataset& train, const Dataset& val, const Dataset& test, const TdeConfig& cfg) {
  return baseline_p0(train_initial(train, val, cfg), test, cfg);
}

/// Domains from a metadata attribute, read at test time as well. Test values
/// never seen in training fall back to M_0 and are counted.
inline EvalReport baseline_semantic(const InitialModel& m0, const Dataset& train, const Dataset& test,
                                    const std::string& meta_key, const TdeConfig& cfg) {
  if (!train.all_have_meta(meta_key)) throw InputError("training samples lack meta key '" + meta_key + "'");
  std::map<std::string, int> codes;
  for (const auto& v : train.meta_values(meta_key)) codes.emplace(v, 0);
  int next = 0;
  for (auto& [k, v] : codes) v = next++;
  std::vector<int> assignment;
  for (const auto& v : train.meta_values(meta_key)) assignment.push_back(codes.at(v));
  const auto models = subset_models(m0, train, assignment, static_cast<int>(codes.size()), cfg);
  std::vector<int> route;
  for (const auto& v : test.meta_values(meta_key)) {
    auto it = codes.find(v);
    route.push_back(it == codes.end() ? -1 : it->second);
  }
  return score_routed(models, m0, test, route);
}

inline EvalReport baseline_semantic(const Dataset& train, const Dataset& val, const Dataset& test,
                                    const std::string& meta_key, const TdeConfig& cfg) {
  return baseline_semantic(train_initial(train, val, cfg), train, test, meta_key, cfg);
}

namespace detail {

inline EvalReport cluster_baseline(const InitialModel& m0, const Dataset& train, const Dataset& test,
                                   const Matrix& train_points, const Matrix& test_points, int n, const TdeConfig& cfg,
                                   std::string_view tag) {
  if (n < 1) throw InputError("cluster baseline needs n >= 1");
  if (n == 1) return baseline_p0(m0, test, cfg);
  const ClusterModel cm = kmeans(train_points, n, SeedSplitter(cfg.seed).derive(tag), cfg.kmeans);
  const auto models = subset_models(m0, train, cm.assignment, n, cfg);
  return score_routed(models, m0, test, assign_all(cm.centroids, test_points));
}

}  // namespace detail

/// k-means on raw flattened windows; route by nearest raw-space centroid.
inline EvalReport baseline_cluster_data(const InitialModel& m0, const Dataset& train, const Dataset& test, int n,
                                        const TdeConfig& cfg) {
  return detail::cluster_baseline(m0, train, test, train.flatten(), test.flatten(), n, cfg, "baseline-cd");
}

inline EvalReport baseline_cluster_data(const Dataset& train, const Dataset& val, const Dataset& test, int n,
                                        const TdeConfig& cfg) {
  return baseline_cluster_data(train_initial(train, val, cfg), train, test, n, cfg);
}

/// k-means on M_0 features (no EM refinement); route by nearest feature centroid.
inline EvalReport baseline_cluster_feature(const InitialModel& m0, const Dataset& train, const Dataset& test, int n,
                                           const TdeConfig& cfg) {
  return detail::cluster_baseline(m0, train, test, net_forward(m0.encoder, train.flatten()),
                                  net_forward(m0.encoder, test.flatten()), n, cfg, "baseline-cf");
}

inline EvalReport baseline_cluster_feature(const Dataset& train, const Dataset& val, const Dataset& test, int n,
                                           const TdeConfig& cfg) {
  return baseline_cluster_feature(train_initial(train, val, cfg), train, test, n, cfg);
}

// --- partition objective and oracle ---------------------------------------

enum class SchemeKind { p0, sem, cd, cf, prism, oracle };

inline std::string to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::p0: return "p0";
    case SchemeKind::sem: return "sem";
    case SchemeKind::cd: return "cd";
    case SchemeKind::cf: return "cf";
    case SchemeKind::prism: return "prism";
    case SchemeKind::oracle: return "oracle";
  }
  return "?";
}

/// Subset index per sample id, covering both training and test samples.
struct PartitionScheme {
  SchemeKind name = SchemeKind::p0;
  std::map<std::string, int> assignment;
  int n_subsets = 1;

  int subset_of(const std::string& id) const {
    auto it = assignment.find(id);
    if (it == assignment.end()) throw InputError("partition does not cover sample '" + id + "'");
    return it->second;
  }
};

struct SubsetError {
  double error = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  bool untrainable = false;  // empty or missing classes in its training part
  bool empty_test = false;
};

struct PartitionEval {
  double total_error = 0.0;  // unweighted sum over subsets
  double weighted_error = 0.0;  // test-size weighted mean
  std::vector<SubsetError> subsets;
};

/// Sum over subsets of (1 - accuracy) of M_0 fine-tuned on the subset's
/// training part, tested on the subset's test part.
inline PartitionEval eval_partition(const PartitionScheme& scheme, const Dataset& train, const Dataset& test,
                                    const InitialModel& m0, const TdeConfig& cfg) {
  if (scheme.n_subsets < 1) throw InputError("partition needs at least one subset");
  std::vector<int> train_assign, test_assign;
  for (const auto& s : train.samples) train_assign.push_back(scheme.subset_of(s.id));
  for (const auto& s : test.samples) test_assign.push_back(scheme.subset_of(s.id));
  PartitionEval out;
  std::size_t weighted_n = 0;
  for (int k = 0; k < scheme.n_subsets; ++k) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < train_assign.size(); ++i)
      if (train_assign[i] == k) tr.push_back(i);
    for (std::size_t i = 0; i < test_assign.size(); ++i)
      if (test_assign[i] == k) te.push_back(i);
    SubsetError se;
    se.train_size = tr.size();
    se.test_size = te.size();
    const Dataset sub_train = train.subset(tr);
    if (te.empty()) {
      se.empty_test = true;
      se.error = 0.0;
    } else if (tr.empty() || !sub_train.covers_all_classes()) {
      se.untrainable = true;
      se.error = 1.0;
    } else {
      const InitialModel m = tr.size() == train.size() ? m0 : finetune(m0, sub_train, cfg);
      const EvalReport rep = baseline_p0(m, test.subset(te), cfg);
      se.error = 1.0 - rep.accuracy;
    }
    out.total_error += se.error;
    out.weighted_error += se.error * static_cast<double>(se.test_size);
    weighted_n += se.test_size;
    out.subsets.push_back(se);
  }
  if (weighted_n > 0) out.weighted_error /= static_cast<double>(weighted_n);
  return out;
}

struct OracleResult {
  PartitionScheme best;
  std::vector<int> best_group_assignment;
  double min_total_error = 0.0;
  std::vector<std::pair<std::vector<int>, double>> evaluated;  // every candidate, enumeration order
};

/// Enumerates every assignment of G groups to n subsets (n^G <= 4096),
/// scores each with eval_partition and returns the lexicographically first
/// minimum. `group_of` maps a sample id to its group in [0, G).
inline OracleResult exhaustive_partition_oracle(const Dataset& train, const Dataset& test,
                                                const std::map<std::string, int>& group_of, int num_groups, int n,
                                                const InitialModel& m0, const TdeConfig& cfg) {
  if (n < 1 || num_groups < 1) throw InputError("oracle needs n >= 1 and at least one group");
  if (std::pow(static_cast<double>(n), static_cast<double>(num_groups)) > 4096.0)
    throw CapacityError("partition oracle limited to n^G <= 4096 (got " + std::to_string(n) + "^" +
                        std::to_string(num_groups) + ")");
  OracleResult res;
  res.min_total_error = std::numeric_limits<double>::infinity();
  std::vector<int> groups(static_cast<std::size_t>(num_groups), 0);
  while (true) {
    PartitionScheme scheme{SchemeKind::oracle, {}, n};
    for (const auto& [id, g] : group_of) scheme.assignment[id] = groups.at(static_cast<std::size_t>(g));
    const double err = eval_partition(scheme, train, test, m0, cfg).total_error;
    res.evaluated.emplace_back(groups, err);
    if (err < res.min_total_error) {
      res.min_total_error = err;
      res.best = scheme;
      res.best_group_assignment = groups;
    }
    std::size_t pos = groups.size();
    bool done = true;
    while (pos > 0) {
      --pos;
      if (++groups[pos] < n) {
        done = false;
        break;
      }
      groups[pos] = 0;
    }
    if (done) break;
  }
  return res;
}

/// Prism's partition as a scheme: training samples by their mined domain,
/// test samples by the pack's nearest-centroid routing.
inline PartitionScheme prism_partition_scheme(const MineResult& mined, const Dataset& train, const Dataset& test) {
  PartitionScheme scheme{SchemeKind::prism, {}, mined.pack.n()};
  for (std::size_t i = 0; i < train.size(); ++i) scheme.assignment[train.samples[i].id] = mined.partition.assignment.at(i);
  const auto records = predict_batch(mined.pack, test);
  for (const auto& r : records) scheme.assignment[r.sample_id] = r.chosen_domain;
  return scheme;
}

/// Accuracy per value of a metadata key, in sorted key order.
inline std::map<std::string, double> accuracy_by_meta(const EvalReport& rep, const Dataset& test, const std::string& key) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  const auto values = test.meta_values(key);
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto& c = counts[values[i]];
    ++c.second;
    if (rep.predicted.at(i) == test.samples[i].label) ++c.first;
  }
  std::map<std::string, double> out;
  for (const auto& [k, c] : counts) out[k] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

}  // namespace prism
