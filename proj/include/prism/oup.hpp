#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/clustering.hpp"
#include "prism/dataset.hpp"
#include "prism/error.hpp"
#include "prism/model_pack.hpp"
#include "prism/numerics.hpp"

namespace prism {

struct PredictionRecord {
  std::string sample_id;
  int chosen_domain = 0;
  std::vector<double> class_probs;
  int predicted_label = 0;
  std::optional<int> true_label;

  double max_prob() const { return class_probs.empty() ? 0.0 : class_probs[static_cast<std::size_t>(predicted_label)]; }
};

struct EvalReport {
  std::size_t total = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  std::vector<std::size_t> per_domain_counts;
  std::vector<int> absent_classes;  // never seen and never predicted
  std::size_t fallback_routed = 0;  // samples routed to a fallback model (baselines only)
  std::vector<int> predicted;       // per test sample, in test order

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Lowest index wins ties.
inline int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

/// Metrics from label vectors. F1 of a class is 0 when p + r = 0; precision
/// (recall) is 0 when the class is never predicted (never present).
inline EvalReport score(std::span<const int> truth, std::span<const int> predicted, int num_classes,
                        std::span<const int> domains = {}, int num_domains = 0) {
  if (truth.size() != predicted.size()) throw ShapeError("truth and prediction counts differ");
  if (truth.empty()) throw InputError("cannot score an empty test set");
  EvalReport r;
  r.total = truth.size();
  const auto C = static_cast<std::size_t>(num_classes);
  r.confusion.assign(C, std::vector<long>(C, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes)
      throw InputError("label outside [0, num_classes)");
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  long correct = 0;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    long tp = r.confusion[c][c], true_count = 0, pred_count = 0;
    for (std::size_t k = 0; k < C; ++k) {
      true_count += r.confusion[c][k];
      pred_count += r.confusion[k][c];
    }
    correct += tp;
    const double p = pred_count > 0 ? static_cast<double>(tp) / static_cast<double>(pred_count) : 0.0;
    const double rc = true_count > 0 ? static_cast<double>(tp) / static_cast<double>(true_count) : 0.0;
    const double f = (p + rc) > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(f);
    f1_sum += f;
    if (true_count == 0 && pred_count == 0) r.absent_classes.push_back(static_cast<int>(c));
  }
  r.predicted.assign(predicted.begin(), predicted.end());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  r.macro_f1 = f1_sum / static_cast<double>(C);
  if (num_domains > 0) {
    r.per_domain_counts.assign(static_cast<std::size_t>(num_domains), 0);
    for (int d : domains) ++r.per_domain_counts.at(static_cast<std::size_t>(d));
  }
  return r;
}

namespace detail {

inline void check_pack_input(const ModelPack& pack, const Dataset& data) {
  if (data.window_len != pack.window_len || data.channels != pack.channels)
    throw ShapeError("dataset windows are " + std::to_string(data.window_len) + "x" + std::to_string(data.channels) +
                     ", pack expects " + std::to_string(pack.window_len) + "x" + std::to_string(pack.channels));
  if (data.num_classes != pack.num_classes) throw ShapeError("dataset class count differs from pack");
}

inline std::vector<int> route(const ModelPack& pack, const Matrix& features) {
  if (!pack.has_centroids()) {
    if (pack.n() != 1) throw InputError("pack with several heads has no centroids to route by");
    return std::vector<int>(static_cast<std::size_t>(features.rows()), 0);
  }
  return assign_all(pack.centroids, features);
}

}  // namespace detail

/// Embed, route each row to its nearest centroid, run only that head.
inline std::vector<PredictionRecord> predict_batch(const ModelPack& pack, const Dataset& data) {
  detail::check_pack_input(pack, data);
  const Matrix feats = net_forward(pack.encoder, data.flatten());
  const std::vector<int> domains = detail::route(pack, feats);
  std::vector<PredictionRecord> out(data.size());
  for (int k = 0; k < pack.n(); ++k) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < domains.size(); ++i)
      if (domains[i] == k) rows.push_back(i);
    if (rows.empty()) continue;
    const Matrix probs = softmax_rows(net_forward(pack.heads[static_cast<std::size_t>(k)], gather_rows(feats, rows)));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      PredictionRecord& rec = out[rows[r]];
      const Sample& s = data.samples[rows[r]];
      rec.sample_id = s.id;
      rec.chosen_domain = k;
      rec.class_probs.resize(static_cast<std::size_t>(probs.cols()));
      for (Eigen::Index c = 0; c < probs.cols(); ++c) rec.class_probs[static_cast<std::size_t>(c)] = probs(static_cast<Eigen::Index>(r), c);
      rec.predicted_label = argmax_lowest(rec.class_probs);
      rec.true_label = s.label;
    }
  }
  return out;
}

inline PredictionRecord predict(const ModelPack& pack, const Sample& sample) {
  if (sample.window.rows() != pack.window_len || sample.window.cols() != pack.channels)
    throw ShapeError("sample window shape does not match the pack");
  Dataset one{"", pack.num_classes, pack.window_len, pack.channels, {sample}};
  one.samples[0].label = 0;  // label is not needed for routing
  PredictionRecord rec = predict_batch(pack, one).front();
  if (sample.label >= 0 && sample.label < pack.num_classes)
    rec.true_label = sample.label;
  else
    rec.true_label.reset();
  return rec;
}

inline EvalReport evaluate(const ModelPack& pack, const Dataset& test) {
  if (test.empty()) throw InputError("cannot evaluate on an empty test set");
  const auto records = predict_batch(pack, test);
  std::vector<int> truth, pred, dom;
  for (const auto& r : records) {
    truth.push_back(*r.true_label);
    pred.push_back(r.predicted_label);
    dom.push_back(r.chosen_domain);
  }
  return score(truth, pred, pack.num_classes, dom, pack.n());
}

// --- serialization ---------------------------------------------------------

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"total", r.total},
                     {"accuracy", r.accuracy},
                     {"macro_f1", r.macro_f1},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"f1", r.f1},
                     {"confusion", r.confusion},
                     {"per_domain_counts", r.per_domain_counts},
                     {"absent_classes", r.absent_classes},
                     {"fallback_routed", r.fallback_routed}};
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Columns: sample_id, chosen_domain, predicted_label, true_label, max_prob.
inline void write_predictions_csv(const std::vector<PredictionRecord>& records, std::ostream& out) {
  out << "sample_id,chosen_domain,predicted_label,true_label,max_prob\n";
  for (const auto& r : records) {
    out << r.sample_id << ',' << r.chosen_domain << ',' << r.predicted_label << ','
        << (r.true_label ? std::to_string(*r.true_label) : std::string()) << ',' << format_double(r.max_prob()) << '\n';
  }
}

inline void to_json(nlohmann::json& j, const PredictionRecord& r) {
  j = nlohmann::json{{"sample_id", r.sample_id},
                     {"chosen_domain", r.chosen_domain},
                     {"class_probs", r.class_probs},
                     {"predicted_label", r.predicted_label}};
  if (r.true_label) j["true_label"] = *r.true_label;
}

/// One-line summary plus per-class rows.
inline void write_report_csv(const EvalReport& r, std::ostream& out) {
  out << "class,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < r.f1.size(); ++c) {
    long support = 0;
    for (long v : r.confusion[c]) support += v;
    out << c << ',' << format_double(r.precision[c]) << ',' << format_double(r.recall[c]) << ','
        << format_double(r.f1[c]) << ',' << support << '\n';
  }
  out << "overall_accuracy," << format_double(r.accuracy) << ",,,\n";
  out << "macro_f1," << format_double(r.macro_f1) << ",,,\n";
}

inline nlohmann::json net_to_json(const FeedforwardNet& net) {
  nlohmann::json weights = nlohmann::json::array(), biases = nlohmann::json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(net.weight(l).size()));
    for (Eigen::Index r = 0; r < net.weight(l).rows(); ++r)
      for (Eigen::Index c = 0; c < net.weight(l).cols(); ++c) w.push_back(net.weight(l)(r, c));
    weights.push_back(std::move(w));
    biases.push_back(std::vector<double>(net.bias(l).data(), net.bias(l).data() + net.bias(l).size()));
  }
  return nlohmann::json{{"layer_dims", net.layer_dims()}, {"weights", weights}, {"biases", biases}};
}

inline FeedforwardNet net_from_json(const nlohmann::json& j) {
  FeedforwardNet net(j.at("layer_dims").get<std::vector<int>>());
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != net.num_layers() || biases.size() != net.num_layers())
    throw SchemaError("net parameter arrays do not match layer_dims");
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto w = weights[l].get<std::vector<double>>();
    const auto b = biases[l].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != net.weight(l).size() || static_cast<Eigen::Index>(b.size()) != net.bias(l).size())
      throw SchemaError("net layer " + std::to_string(l) + " has the wrong parameter count");
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < net.weight(l).rows(); ++r)
      for (Eigen::Index c = 0; c < net.weight(l).cols(); ++c) net.weight(l)(r, c) = w[i++];
    for (Eigen::Index c = 0; c < net.bias(l).size(); ++c) net.bias(l)(c) = b[static_cast<std::size_t>(c)];
  }
  return net;
}

inline nlohmann::json pack_to_json(const ModelPack& pack) {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : pack.heads) heads.push_back(net_to_json(h));
  nlohmann::json centroids = nlohmann::json::array();
  for (Eigen::Index r = 0; r < pack.centroids.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < pack.centroids.cols(); ++c) row.push_back(pack.centroids(r, c));
    centroids.push_back(std::move(row));
  }
  return nlohmann::json{{"schema_version", pack.schema_version},
                        {"config", pack.config},
                        {"num_classes", pack.num_classes},
                        {"window_len", pack.window_len},
                        {"channels", pack.channels},
                        {"encoder", net_to_json(pack.encoder)},
                        {"heads", std::move(heads)},
                        {"centroids", std::move(centroids)},
                        {"provenance",
                         {{"dataset", pack.provenance.dataset},
                          {"seed", pack.provenance.seed},
                          {"loss_history", pack.provenance.loss_history}}}};
}

inline ModelPack pack_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema_version")) throw ParseError("model pack lacks schema_version");
  const int version = j["schema_version"].get<int>();
  if (version != kPackSchemaVersion)
    throw CompatibilityError("model pack schema_version " + std::to_string(version) +
                             " is not supported (this build reads schema_version " +
                             std::to_string(kPackSchemaVersion) + ")");
  ModelPack p;
  try {
    p.schema_version = version;
    p.config = j.at("config").get<TdeConfig>();
    p.num_classes = j.at("num_classes").get<int>();
    p.window_len = j.at("window_len").get<int>();
    p.channels = j.at("channels").get<int>();
    p.encoder = net_from_json(j.at("encoder"));
    for (const auto& h : j.at("heads")) p.heads.push_back(net_from_json(h));
    const auto& cj = j.at("centroids");
    if (!cj.empty()) {
      p.centroids.resize(static_cast<Eigen::Index>(cj.size()), static_cast<Eigen::Index>(cj[0].size()));
      for (std::size_t r = 0; r < cj.size(); ++r) {
        const auto row = cj[r].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != p.centroids.cols()) throw SchemaError("ragged centroid matrix");
        for (std::size_t c = 0; c < row.size(); ++c) p.centroids(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
      }
    }
    const auto& prov = j.at("provenance");
    p.provenance.dataset = prov.at("dataset").get<std::string>();
    p.provenance.seed = prov.at("seed").get<std::uint64_t>();
    p.provenance.loss_history = prov.at("loss_history").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model pack: ") + e.what());
  }
  p.validate();
  return p;
}

inline void save_pack(const ModelPack& pack, const std::string& path) {
  write_file_atomic(path, pack_to_json(pack).dump(1) + "\n");
}

inline ModelPack load_pack(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model pack '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model pack is not valid JSON: ") + e.what());
  }
  return pack_from_json(j);
}

}  // namespace prism
