#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/clustering.hpp"
#include "prism/error.hpp"
#include "prism/numerics.hpp"

namespace prism {

/// Which pairs count as "similar" in the contrastive term.
enum class PairMode { domain, klass };

inline std::string to_string(PairMode m) { return m == PairMode::domain ? "domain" : "class"; }

inline PairMode pair_mode_from_string(const std::string& s) {
  if (s == "domain") return PairMode::domain;
  if (s == "class") return PairMode::klass;
  throw InputError("contrastive_pairs must be 'domain' or 'class', got '" + s + "'");
}

struct TdeConfig {
  int n = 4;             // estimated domains
  double alpha = 0.001;  // contrastive weight
  double margin = 1.0;   // contrastive margin M
  int epochs = 200;      // EM iterations
  int init_epochs = 200; // full-batch passes for the initial model
  int m_step_passes = 5;
  double lr = 0.05;
  double backtrack = 0.5;
  int max_halvings = 20;
  int pairs_per_sample = 4;  // contrastive pairs per M-step = pairs_per_sample * N
  std::uint64_t seed = 0;
  std::vector<int> encoder_dims{16};  // hidden widths then feature dim; input is T*C
  std::vector<int> head_dims{};       // hidden widths; output is the class count
  PairMode contrastive_pairs = PairMode::domain;
  int finetune_passes = 20;  // DA fine-tuning for the partition baselines
  KMeansOptions kmeans;
  std::string meta_key = "domain";  // ground-truth key for ARI reporting, never used for training

  int feature_dim() const { return encoder_dims.back(); }

  void validate() const {
    if (n < 1) throw InputError("n must be at least 1");
    if (!(alpha >= 0.0)) throw InputError("alpha must be nonnegative");
    if (!(margin > 0.0)) throw InputError("margin must be positive");
    if (epochs < 1) throw InputError("epochs must be at least 1");
    if (init_epochs < 0 || m_step_passes < 0 || finetune_passes < 0) throw InputError("pass counts must be nonnegative");
    if (!(lr > 0.0)) throw InputError("lr must be positive");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw InputError("backtrack factor must lie in (0, 1)");
    if (max_halvings < 0) throw InputError("max_halvings must be nonnegative");
    if (pairs_per_sample < 1) throw InputError("pairs_per_sample must be positive");
    if (encoder_dims.empty()) throw InputError("encoder_dims must name at least the feature dim");
    for (int d : encoder_dims)
      if (d < 1) throw InputError("encoder_dims must be positive");
    for (int d : head_dims)
      if (d < 1) throw InputError("head_dims must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TdeConfig& c) {
  j = nlohmann::json{{"n", c.n},
                     {"alpha", c.alpha},
                     {"margin", c.margin},
                     {"epochs", c.epochs},
                     {"init_epochs", c.init_epochs},
                     {"m_step_passes", c.m_step_passes},
                     {"lr", c.lr},
                     {"backtrack", c.backtrack},
                     {"max_halvings", c.max_halvings},
                     {"pairs_per_sample", c.pairs_per_sample},
                     {"seed", c.seed},
                     {"encoder_dims", c.encoder_dims},
                     {"head_dims", c.head_dims},
                     {"contrastive_pairs", to_string(c.contrastive_pairs)},
                     {"finetune_passes", c.finetune_passes},
                     {"kmeans_max_iter", c.kmeans.max_iter},
                     {"kmeans_tol", c.kmeans.tol},
                     {"kmeans_restarts", c.kmeans.restarts},
                     {"meta_key", c.meta_key}};
}

/// Missing keys keep their defaults, so partial config files are accepted.
inline void from_json(const nlohmann::json& j, TdeConfig& c) {
  c.n = j.value("n", c.n);
  c.alpha = j.value("alpha", c.alpha);
  c.margin = j.value("margin", c.margin);
  c.epochs = j.value("epochs", c.epochs);
  c.init_epochs = j.value("init_epochs", c.init_epochs);
  c.m_step_passes = j.value("m_step_passes", c.m_step_passes);
  c.lr = j.value("lr", c.lr);
  c.backtrack = j.value("backtrack", c.backtrack);
  c.max_halvings = j.value("max_halvings", c.max_halvings);
  c.pairs_per_sample = j.value("pairs_per_sample", c.pairs_per_sample);
  c.seed = j.value("seed", c.seed);
  c.encoder_dims = j.value("encoder_dims", c.encoder_dims);
  c.head_dims = j.value("head_dims", c.head_dims);
  if (j.contains("contrastive_pairs")) c.contrastive_pairs = pair_mode_from_string(j["contrastive_pairs"].get<std::string>());
  c.finetune_passes = j.value("finetune_passes", c.finetune_passes);
  c.kmeans.max_iter = j.value("kmeans_max_iter", c.kmeans.max_iter);
  c.kmeans.tol = j.value("kmeans_tol", c.kmeans.tol);
  c.kmeans.restarts = j.value("kmeans_restarts", c.kmeans.restarts);
  c.meta_key = j.value("meta_key", c.meta_key);
}

struct Provenance {
  std::string dataset;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;  // L^tde at the end of each epoch
};

inline constexpr int kPackSchemaVersion = 1;

/// Deployable bundle: shared encoder, one head per domain, and the domain
/// centroids in feature space used for routing.
struct ModelPack {
  FeedforwardNet encoder;
  std::vector<FeedforwardNet> heads;
  Matrix centroids;  // n x feature_dim; empty until the first E-step
  TdeConfig config;
  int num_classes = 0;
  int window_len = 0;
  int channels = 0;
  int schema_version = kPackSchemaVersion;
  Provenance provenance;

  int n() const { return static_cast<int>(heads.size()); }
  int feature_dim() const { return encoder.output_dim(); }
  bool has_centroids() const { return centroids.rows() > 0; }

  void validate() const {
    if (heads.empty()) throw SchemaError("model pack has no heads");
    for (const auto& h : heads) {
      if (h.input_dim() != encoder.output_dim()) throw SchemaError("head input dim differs from encoder output dim");
      if (h.output_dim() != num_classes) throw SchemaError("head output dim differs from num_classes");
    }
    if (encoder.input_dim() != window_len * channels) throw SchemaError("encoder input dim differs from T*C");
    if (has_centroids() && (centroids.rows() != n() || centroids.cols() != feature_dim()))
      throw SchemaError("centroid matrix must be n x feature_dim");
    if (!encoder.parameters_finite()) throw SchemaError("encoder has non-finite parameters");
  }
};

}  // namespace prism
