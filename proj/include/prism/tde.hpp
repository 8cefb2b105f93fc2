#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "prism/clustering.hpp"
#include "prism/dataset.hpp"
#include "prism/error.hpp"
#include "prism/model_pack.hpp"
#include "prism/numerics.hpp"
#include "prism/oup.hpp"
#include "prism/rng.hpp"

namespace prism {

/// Encoder plus a single head trained on every sample (the model every domain
/// head starts from).
struct InitialModel {
  FeedforwardNet encoder;
  FeedforwardNet head;
  double val_accuracy = 0.0;
  int best_pass = 0;                 // 0 = the untrained initialization
  std::vector<double> loss_history;  // training loss after each pass
  int skipped_steps = 0;
};

struct PartitionResult {
  std::vector<int> assignment;  // parallel to the training samples
  std::vector<std::string> sample_ids;
  Matrix centroids;
  std::vector<std::size_t> domain_sizes;
  std::optional<double> ari_vs_meta;
};

struct EpochRecord {
  int epoch = 0;
  double post_e_step_tde = 0.0;  // L^tde at the start of the M-step
  double l_c = 0.0;              // values at the end of the M-step
  double l_t = 0.0;
  double l_tde = 0.0;
  std::vector<double> accepted_tde;  // start value, then one per accepted step
  int skipped_steps = 0;
  double val_macro_f1 = 0.0;
  std::optional<double> ari;
};

struct LossTrace {
  std::vector<EpochRecord> epochs;
};

struct TdeLoss {
  double l_c = 0.0;
  double l_t = 0.0;
  double l_tde = 0.0;
};

/// Flattened windows and labels; built once per run.
struct TrainingData {
  Matrix x;
  std::vector<int> y;

  static TrainingData from(const Dataset& d) { return {d.flatten(), d.labels()}; }
};

// --- descent machinery -----------------------------------------------------

struct StepOutcome {
  bool accepted = false;
  double loss_after = 0.0;
  double lr = 0.0;
  int halvings = 0;
};

/// One backtracking step: try lr, lr*b, lr*b^2, ... (at most max_halvings
/// shrinks) and accept the first trial whose loss does not exceed the current
/// loss. On exhaustion the parameters are left untouched.
template <typename LossOnly>
StepOutcome backtracking_step(std::vector<FeedforwardNet>& nets, const std::vector<GradientSet>& grads,
                              double current_loss, const TdeConfig& cfg, LossOnly&& loss_only) {
  for (const auto& g : grads)
    if (!g.finite()) throw NumericError("non-finite gradient");
  double lr = cfg.lr;
  for (int h = 0; h <= cfg.max_halvings; ++h, lr *= cfg.backtrack) {
    std::vector<FeedforwardNet> trial = nets;
    for (std::size_t k = 0; k < trial.size(); ++k) sgd_step(trial[k], grads[k], lr);
    const double l = loss_only(trial);
    if (std::isfinite(l) && l <= current_loss) {
      nets = std::move(trial);
      return {true, l, lr, h};
    }
  }
  return {false, current_loss, 0.0, cfg.max_halvings};
}

namespace detail {

/// Cross-entropy of head(encoder(x)); nets = {encoder, head}.
inline NetLoss ce_loss(std::span<const FeedforwardNet> nets, const TrainingData& data, bool with_grad) {
  NetLoss out;
  if (!with_grad) {
    const Matrix logits = net_forward(nets[1], net_forward(nets[0], data.x));
    out.loss = softmax_cross_entropy(logits, data.y).loss;
    return out;
  }
  const ForwardTrace te = forward_trace(nets[0], data.x);
  const ForwardTrace th = forward_trace(nets[1], te.output);
  const CrossEntropy ce = softmax_cross_entropy(th.output, data.y);
  NetGradients gh = backward(nets[1], th, ce.grad_logits);
  NetGradients ge = backward(nets[0], te, gh.inputs);
  out.loss = ce.loss;
  out.grads = {std::move(ge.params), std::move(gh.params)};
  return out;
}

inline double accuracy_of(const FeedforwardNet& enc, const FeedforwardNet& head, const TrainingData& data) {
  if (data.y.empty()) return 0.0;
  const Matrix logits = net_forward(head, net_forward(enc, data.x));
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    if (best == data.y[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.y.size());
}

}  // namespace detail

/// Fresh encoder and head for the given data shape, seeded from cfg.seed.
inline InitialModel initialize_model(int input_dim, int num_classes, const TdeConfig& cfg) {
  cfg.validate();
  const SeedSplitter splitter(cfg.seed);
  std::vector<int> enc_dims{input_dim};
  enc_dims.insert(enc_dims.end(), cfg.encoder_dims.begin(), cfg.encoder_dims.end());
  std::vector<int> head_dims{cfg.feature_dim()};
  head_dims.insert(head_dims.end(), cfg.head_dims.begin(), cfg.head_dims.end());
  head_dims.push_back(num_classes);
  Engine e1 = splitter.engine("encoder-init");
  Engine e2 = splitter.engine("head-init");
  InitialModel m;
  m.encoder = FeedforwardNet::glorot(enc_dims, e1);
  m.head = FeedforwardNet::glorot(head_dims, e2);
  return m;
}

/// `passes` full-batch backtracking steps on cross-entropy starting from
/// `start`; keeps the snapshot with the best validation accuracy (the start
/// counts as pass 0; later passes must be strictly better).
inline InitialModel train_cross_entropy(InitialModel start, const TrainingData& train, const TrainingData& val,
                                        int passes, const TdeConfig& cfg) {
  std::vector<FeedforwardNet> nets{start.encoder, start.head};
  InitialModel best = start;
  best.loss_history.clear();
  best.skipped_steps = 0;
  best.best_pass = 0;
  best.val_accuracy = detail::accuracy_of(nets[0], nets[1], val);
  std::vector<double> history;
  int skipped = 0;
  for (int pass = 1; pass <= passes; ++pass) {
    const NetLoss at = detail::ce_loss(nets, train, true);
    if (!std::isfinite(at.loss)) throw NumericError("non-finite training loss");
    const StepOutcome step = backtracking_step(nets, at.grads, at.loss, cfg, [&](const std::vector<FeedforwardNet>& t) {
      return detail::ce_loss(t, train, false).loss;
    });
    if (!step.accepted) ++skipped;
    history.push_back(step.loss_after);
    const double acc = detail::accuracy_of(nets[0], nets[1], val);
    if (acc > best.val_accuracy) {
      best.encoder = nets[0];
      best.head = nets[1];
      best.val_accuracy = acc;
      best.best_pass = pass;
    }
  }
  best.loss_history = std::move(history);
  best.skipped_steps = skipped;
  return best;
}

/// Initial model M_0: cross-entropy on all training samples for
/// cfg.init_epochs passes, best validation accuracy kept.
inline InitialModel train_initial(const Dataset& train, const Dataset& val, const TdeConfig& cfg) {
  if (train.empty()) throw InputError("training set is empty");
  if (!train.covers_all_classes()) throw InputError("training set does not cover every class");
  const TrainingData tr = TrainingData::from(train);
  const TrainingData va = TrainingData::from(val);
  return train_cross_entropy(initialize_model(train.input_dim(), train.num_classes, cfg), tr, va, cfg.init_epochs, cfg);
}

/// Encoder from M_0, every head a copy of M_0's head. Centroids stay unset.
inline ModelPack init_pack(const InitialModel& m0, int n, const TdeConfig& cfg, int window_len, int channels) {
  if (n < 2) throw InputError("init_pack needs n >= 2 (got " + std::to_string(n) + ")");
  ModelPack p;
  p.encoder = m0.encoder;
  p.heads.assign(static_cast<std::size_t>(n), m0.head);
  p.config = cfg;
  p.config.n = n;
  p.num_classes = m0.head.output_dim();
  p.window_len = window_len;
  p.channels = channels;
  return p;
}

/// Single-domain pack around M_0; routes everything to head 0.
inline ModelPack single_model_pack(const InitialModel& m0, const TdeConfig& cfg, int window_len, int channels) {
  ModelPack p;
  p.encoder = m0.encoder;
  p.heads = {m0.head};
  p.centroids = Matrix::Zero(1, m0.encoder.output_dim());
  p.config = cfg;
  p.config.n = 1;
  p.num_classes = m0.head.output_dim();
  p.window_len = window_len;
  p.channels = channels;
  return p;
}

inline std::vector<std::size_t> domain_sizes(const std::vector<int>& assignment, int n) {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n), 0);
  for (int a : assignment) ++sizes.at(static_cast<std::size_t>(a));
  return sizes;
}

/// ARI of an assignment against meta["domain"], when every sample has it.
inline std::optional<double> ari_against_meta(const Dataset& data, const std::vector<int>& assignment,
                                              const std::string& key = "domain") {
  if (data.empty() || !data.all_have_meta(key)) return std::nullopt;
  return adjusted_rand_index(assignment, encode_categories(data.meta_values(key)));
}

/// Clusters the current embeddings of the training set into n domains and
/// stores the centroids in the pack. A pack without centroids gets k-means++
/// with restarts; afterwards Lloyd is warm-started from the stored centroids so
/// domain indices (and the heads bound to them) stay stable across epochs.
inline PartitionResult e_step(ModelPack& pack, const Dataset& train, const Matrix& train_x, std::uint64_t seed) {
  const Matrix feats = net_forward(pack.encoder, train_x);
  ClusterModel cm = pack.has_centroids() && pack.centroids.rows() == pack.n()
                        ? lloyd(feats, pack.centroids, pack.config.kmeans.max_iter, pack.config.kmeans.tol)
                        : kmeans(feats, pack.n(), seed, pack.config.kmeans);
  pack.centroids = cm.centroids;
  PartitionResult r;
  r.assignment = std::move(cm.assignment);
  for (const auto& s : train.samples) r.sample_ids.push_back(s.id);
  r.centroids = pack.centroids;
  r.domain_sizes = domain_sizes(r.assignment, pack.n());
  r.ari_vs_meta = ari_against_meta(train, r.assignment, pack.config.meta_key);
  return r;
}

inline PartitionResult e_step(ModelPack& pack, const Dataset& train, std::uint64_t seed = 0) {
  return e_step(pack, train, train.flatten(), seed);
}

/// Balanced pair sample: half same-group pairs, half cross-group pairs. When
/// one kind cannot be formed the other fills the whole budget.
inline std::vector<SamplePair> sample_pairs(const std::vector<int>& groups, std::size_t count, Engine& eng) {
  const std::size_t N = groups.size();
  std::vector<SamplePair> pairs;
  if (N < 2 || count == 0) return pairs;
  int max_group = 0;
  for (int g : groups) max_group = std::max(max_group, g);
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_group) + 1);
  std::vector<std::size_t> position(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto& m = members[static_cast<std::size_t>(groups[i])];
    position[i] = m.size();
    m.push_back(i);
  }
  bool can_pos = false, can_neg = false;
  std::size_t nonempty = 0;
  for (const auto& m : members) {
    if (m.size() >= 2) can_pos = true;
    if (!m.empty()) ++nonempty;
  }
  can_neg = nonempty >= 2;
  if (!can_pos && !can_neg) return pairs;

  std::size_t n_pos = can_pos ? (can_neg ? count / 2 : count) : 0;
  std::size_t n_neg = count - n_pos;
  pairs.reserve(count);
  while (n_pos > 0) {
    const std::size_t a = uniform_index(eng, N);
    const auto& m = members[static_cast<std::size_t>(groups[a])];
    if (m.size() < 2) continue;
    std::size_t j = uniform_index(eng, m.size() - 1);
    if (j >= position[a]) ++j;
    pairs.push_back({a, m[j], true});
    --n_pos;
  }
  while (n_neg > 0) {
    const std::size_t a = uniform_index(eng, N);
    const std::size_t b = uniform_index(eng, N);
    if (groups[a] == groups[b]) continue;
    pairs.push_back({a, b, false});
    --n_neg;
  }
  return pairs;
}

namespace detail {

/// Joint loss over nets = {encoder, head_0, ..., head_{n-1}}. Samples are
/// grouped by assigned domain; each group runs through its own head and the
/// cross-entropy terms share the denominator N, so L^T is the plain mean over
/// all samples. Contrastive gradients reach only the encoder.
inline NetLoss tde_loss(std::span<const FeedforwardNet> nets, const TrainingData& data,
                        const std::vector<std::vector<std::size_t>>& groups, std::span<const SamplePair> pairs,
                        double alpha, double margin, bool with_grad, TdeLoss* parts = nullptr) {
  const FeedforwardNet& enc = nets[0];
  const auto N = static_cast<double>(data.y.size());
  NetLoss out;
  ForwardTrace te;
  Matrix feats;
  if (with_grad) {
    te = forward_trace(enc, data.x);
  } else {
    feats = net_forward(enc, data.x);
  }
  const Matrix& h = with_grad ? te.output : feats;

  Matrix grad_h;
  if (with_grad) {
    grad_h = Matrix::Zero(h.rows(), h.cols());
    out.grads.push_back(GradientSet{});
    for (std::size_t k = 1; k < nets.size(); ++k) out.grads.push_back(GradientSet::zeros_like(nets[k]));
  }
  double l_t = 0.0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& rows = groups[k];
    if (rows.empty()) continue;
    const FeedforwardNet& head = nets[k + 1];
    std::vector<int> y;
    y.reserve(rows.size());
    for (auto r : rows) y.push_back(data.y[r]);
    const Matrix hk = gather_rows(h, rows);
    if (with_grad) {
      const ForwardTrace th = forward_trace(head, hk);
      const CrossEntropy ce = softmax_cross_entropy(th.output, y, N);
      l_t += ce.loss;
      NetGradients gh = backward(head, th, ce.grad_logits);
      out.grads[k + 1] = std::move(gh.params);
      for (std::size_t i = 0; i < rows.size(); ++i)
        grad_h.row(static_cast<Eigen::Index>(rows[i])) += gh.inputs.row(static_cast<Eigen::Index>(i));
    } else {
      l_t += softmax_cross_entropy(net_forward(head, hk), y, N).loss;
    }
  }
  const ContrastiveBatch cb = contrastive_loss(h, pairs, margin);
  const double l_c = cb.loss;
  out.loss = alpha * l_c + l_t;
  if (with_grad) {
    grad_h += alpha * cb.grad_embeddings;
    out.grads[0] = backward(enc, te, grad_h).params;
  }
  out.near_kink = cb.min_hinge_gap < 1e-7;
  if (parts) *parts = {l_c, l_t, out.loss};
  return out;
}

inline std::vector<std::vector<std::size_t>> group_rows(const std::vector<int>& assignment, int n) {
  std::vector<std::vector<std::size_t>> g(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const int a = assignment[i];
    if (a < 0 || a >= n) throw InputError("domain index " + std::to_string(a) + " outside [0, " + std::to_string(n) + ")");
    g[static_cast<std::size_t>(a)].push_back(i);
  }
  return g;
}

inline std::vector<FeedforwardNet> bundle(const ModelPack& pack) {
  std::vector<FeedforwardNet> nets{pack.encoder};
  nets.insert(nets.end(), pack.heads.begin(), pack.heads.end());
  return nets;
}

inline void unbundle(ModelPack& pack, std::vector<FeedforwardNet>&& nets) {
  pack.encoder = std::move(nets[0]);
  for (std::size_t k = 0; k < pack.heads.size(); ++k) pack.heads[k] = std::move(nets[k + 1]);
}

}  // namespace detail

/// L^C, L^T and L^tde = alpha * L^C + L^T for the given assignment and pairs.
inline TdeLoss total_loss(const ModelPack& pack, const Dataset& train, const std::vector<int>& assignment,
                          std::span<const SamplePair> pairs, double alpha, double margin) {
  if (assignment.size() != train.size()) throw ShapeError("assignment does not cover the training set");
  const TrainingData data = TrainingData::from(train);
  const auto nets = detail::bundle(pack);
  TdeLoss parts;
  detail::tde_loss(nets, data, detail::group_rows(assignment, pack.n()), pairs, alpha, margin, false, &parts);
  return parts;
}

/// Pair groups for the contrastive term: estimated domains by default, class
/// labels under PairMode::klass.
inline const std::vector<int>& pair_groups(const TdeConfig& cfg, const std::vector<int>& assignment,
                                           const TrainingData& data) {
  return cfg.contrastive_pairs == PairMode::domain ? assignment : data.y;
}

/// M-step: m_step_passes backtracking steps on L^tde with the assignment and
/// one pair sample held fixed, so the accepted values never increase.
inline EpochRecord m_step(ModelPack& pack, const TrainingData& data, const std::vector<int>& assignment,
                          const TdeConfig& cfg, Engine& pair_engine) {
  if (assignment.size() != data.y.size()) throw ShapeError("assignment does not cover the training set");
  const auto groups = detail::group_rows(assignment, pack.n());
  const auto pairs = sample_pairs(pair_groups(cfg, assignment, data),
                                  static_cast<std::size_t>(cfg.pairs_per_sample) * data.y.size(), pair_engine);
  auto nets = detail::bundle(pack);
  EpochRecord rec;
  TdeLoss parts;
  NetLoss at = detail::tde_loss(nets, data, groups, pairs, cfg.alpha, cfg.margin, true, &parts);
  if (!std::isfinite(at.loss)) throw NumericError("non-finite L^tde");
  rec.post_e_step_tde = at.loss;
  rec.accepted_tde.push_back(at.loss);
  for (int pass = 0; pass < cfg.m_step_passes; ++pass) {
    if (pass > 0) {
      at = detail::tde_loss(nets, data, groups, pairs, cfg.alpha, cfg.margin, true, &parts);
      if (!std::isfinite(at.loss)) throw NumericError("non-finite L^tde");
    }
    const StepOutcome step = backtracking_step(nets, at.grads, at.loss, cfg, [&](const std::vector<FeedforwardNet>& t) {
      return detail::tde_loss(t, data, groups, pairs, cfg.alpha, cfg.margin, false).loss;
    });
    if (step.accepted)
      rec.accepted_tde.push_back(step.loss_after);
    else
      ++rec.skipped_steps;
  }
  detail::tde_loss(nets, data, groups, pairs, cfg.alpha, cfg.margin, false, &parts);
  rec.l_c = parts.l_c;
  rec.l_t = parts.l_t;
  rec.l_tde = parts.l_tde;
  detail::unbundle(pack, std::move(nets));
  return rec;
}

inline EpochRecord m_step(ModelPack& pack, const Dataset& train, const std::vector<int>& assignment,
                          const TdeConfig& cfg, std::uint64_t pair_seed = 0) {
  Engine eng = SeedSplitter(pair_seed).engine("pairs");
  return m_step(pack, TrainingData::from(train), assignment, cfg, eng);
}

/// Mean embedding of each domain's assigned samples under the current
/// encoder; empty domains keep their previous centroid.
inline void refresh_centroids(ModelPack& pack, const Matrix& train_x, const std::vector<int>& assignment) {
  const Matrix feats = net_forward(pack.encoder, train_x);
  pack.centroids = cluster_means(feats, assignment, pack.n(), pack.centroids);
}

struct MineResult {
  ModelPack pack;
  PartitionResult partition;
  LossTrace trace;
  InitialModel initial;
  int best_epoch = 0;
  double best_val_macro_f1 = 0.0;
};

/// EM loop starting from a trained M_0. Each epoch: E-step, M-step, centroid
/// refresh, validation macro-F1 through the routing path. The best-validation
/// snapshot is returned. With n == 1 there is nothing to estimate and the
/// single-model pack around M_0 is returned.
inline MineResult mine(const Dataset& train, const Dataset& val, const InitialModel& m0, const TdeConfig& cfg) {
  cfg.validate();
  if (train.empty() || val.empty()) throw InputError("mine needs nonempty train and validation sets");
  MineResult res;
  res.initial = m0;
  const TrainingData data = TrainingData::from(train);
  const SeedSplitter splitter(cfg.seed);

  if (cfg.n == 1) {
    res.pack = single_model_pack(m0, cfg, train.window_len, train.channels);
    res.pack.centroids = net_forward(m0.encoder, data.x).colwise().mean();
    res.partition.assignment.assign(train.size(), 0);
    for (const auto& s : train.samples) res.partition.sample_ids.push_back(s.id);
    res.partition.centroids = res.pack.centroids;
    res.partition.domain_sizes = {train.size()};
    res.partition.ari_vs_meta = ari_against_meta(train, res.partition.assignment, cfg.meta_key);
    res.best_val_macro_f1 = evaluate(res.pack, val).macro_f1;
    res.pack.provenance = {train.name, cfg.seed, {}};
    return res;
  }

  ModelPack pack = init_pack(m0, cfg.n, cfg, train.window_len, train.channels);
  bool have_best = false;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    PartitionResult part = e_step(pack, train, data.x, splitter.derive("kmeans", static_cast<std::uint64_t>(epoch)));
    Engine pair_eng = splitter.engine("pairs", static_cast<std::uint64_t>(epoch));
    EpochRecord rec = m_step(pack, data, part.assignment, cfg, pair_eng);
    refresh_centroids(pack, data.x, part.assignment);
    rec.epoch = epoch;
    rec.ari = part.ari_vs_meta;
    rec.val_macro_f1 = evaluate(pack, val).macro_f1;
    pack.provenance.loss_history.push_back(rec.l_tde);
    if (!have_best || rec.val_macro_f1 > res.best_val_macro_f1) {
      have_best = true;
      res.best_val_macro_f1 = rec.val_macro_f1;
      res.best_epoch = epoch;
      res.pack = pack;
      part.centroids = pack.centroids;
      res.partition = std::move(part);
    }
    res.trace.epochs.push_back(std::move(rec));
  }
  res.pack.provenance = {train.name, cfg.seed, pack.provenance.loss_history};
  return res;
}

inline MineResult mine(const Dataset& train, const Dataset& val, const TdeConfig& cfg) {
  return mine(train, val, train_initial(train, val, cfg), cfg);
}

/// epoch, L^C, L^T, L^tde, post-E-step L^tde, validation macro-F1, ARI, skipped steps.
inline void write_trace_csv(const LossTrace& trace, std::ostream& out) {
  out << "epoch,l_c,l_t,l_tde,post_e_step_tde,val_macro_f1,ari,skipped_steps\n";
  for (const auto& e : trace.epochs) {
    out << e.epoch << ',' << format_double(e.l_c) << ',' << format_double(e.l_t) << ',' << format_double(e.l_tde) << ','
        << format_double(e.post_e_step_tde) << ',' << format_double(e.val_macro_f1) << ','
        << (e.ari ? format_double(*e.ari) : std::string()) << ',' << e.skipped_steps << '\n';
  }
}

inline nlohmann::json partition_to_json(const PartitionResult& p) {
  nlohmann::json assignment = nlohmann::json::object();
  for (std::size_t i = 0; i < p.assignment.size(); ++i) assignment[p.sample_ids.at(i)] = p.assignment[i];
  std::vector<std::vector<double>> centroids;
  for (Eigen::Index r = 0; r < p.centroids.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < p.centroids.cols(); ++c) row.push_back(p.centroids(r, c));
    centroids.push_back(std::move(row));
  }
  nlohmann::json j{{"assignment", assignment}, {"centroids", centroids}, {"domain_sizes", p.domain_sizes}};
  j["ari_vs_meta"] = p.ari_vs_meta ? nlohmann::json(*p.ari_vs_meta) : nlohmann::json(nullptr);
  return j;
}

}  // namespace prism
