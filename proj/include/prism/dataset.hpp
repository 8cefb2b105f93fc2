#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include "prism/error.hpp"
#include "prism/io.hpp"
#include "prism/numerics.hpp"
#include "prism/rng.hpp"

namespace prism {

using Meta = std::map<std::string, std::string>;

/// One labeled window; `window` is T x C (rows are timesteps).
struct Sample {
  std::string id;
  Matrix window;
  int label = 0;
  Meta meta;

  friend bool operator==(const Sample& a, const Sample& b) {
    return a.id == b.id && a.label == b.label && a.meta == b.meta && a.window.rows() == b.window.rows() &&
           a.window.cols() == b.window.cols() &&
           std::memcmp(a.window.data(), b.window.data(), sizeof(double) * a.window.size()) == 0;
  }
};

struct Dataset {
  std::string name;
  int num_classes = 0;
  int window_len = 0;
  int channels = 0;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  int input_dim() const noexcept { return window_len * channels; }

  /// Shape, label range, id uniqueness and finiteness.
  void validate() const {
    if (num_classes < 1 || window_len < 1 || channels < 1) throw SchemaError("dataset header has nonpositive sizes");
    std::set<std::string> ids;
    for (const auto& s : samples) {
      if (s.window.rows() != window_len || s.window.cols() != channels)
        throw SchemaError("sample '" + s.id + "' has window " + std::to_string(s.window.rows()) + "x" +
                          std::to_string(s.window.cols()) + ", expected " + std::to_string(window_len) + "x" +
                          std::to_string(channels));
      if (s.label < 0 || s.label >= num_classes)
        throw SchemaError("sample '" + s.id + "' has label " + std::to_string(s.label) + " outside [0, " +
                          std::to_string(num_classes) + ")");
      if (!s.window.allFinite()) throw SchemaError("sample '" + s.id + "' has non-finite window values");
      if (!ids.insert(s.id).second) throw SchemaError("duplicate sample id '" + s.id + "'");
    }
  }

  bool covers_all_classes() const {
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (const auto& s : samples) seen[static_cast<std::size_t>(s.label)] = true;
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  }

  /// Same header, selected samples in the given order.
  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out{name, num_classes, window_len, channels, {}};
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) out.samples.push_back(samples.at(i));
    return out;
  }

  /// N x (T*C) design matrix; window row t, channel c lands in column t*C + c.
  Matrix flatten() const {
    Matrix x(static_cast<Eigen::Index>(samples.size()), input_dim());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Matrix& w = samples[i].window;
      for (int t = 0; t < window_len; ++t)
        for (int c = 0; c < channels; ++c) x(static_cast<Eigen::Index>(i), t * channels + c) = w(t, c);
    }
    return x;
  }

  std::vector<int> labels() const {
    std::vector<int> y;
    y.reserve(samples.size());
    for (const auto& s : samples) y.push_back(s.label);
    return y;
  }

  /// Value of a metadata key per sample; empty string when absent.
  std::vector<std::string> meta_values(const std::string& key) const {
    std::vector<std::string> v;
    v.reserve(samples.size());
    for (const auto& s : samples) {
      auto it = s.meta.find(key);
      v.push_back(it == s.meta.end() ? std::string() : it->second);
    }
    return v;
  }

  bool all_have_meta(const std::string& key) const {
    return std::all_of(samples.begin(), samples.end(), [&](const Sample& s) { return s.meta.count(key) > 0; });
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.name == b.name && a.num_classes == b.num_classes && a.window_len == b.window_len &&
           a.channels == b.channels && a.samples == b.samples;
  }
};

/// Integer codes for a string attribute, in order of first appearance.
inline std::vector<int> encode_categories(const std::vector<std::string>& values) {
  std::map<std::string, int> codes;
  std::vector<int> out;
  out.reserve(values.size());
  for (const auto& v : values) {
    auto [it, inserted] = codes.emplace(v, static_cast<int>(codes.size()));
    out.push_back(it->second);
  }
  return out;
}

inline constexpr double kStandardGravity = 9.80665;

/// Divides the channels flagged in `accel_mask` by g. An empty mask leaves the
/// data unchanged.
inline Dataset normalize_gravity(Dataset dataset, double g, const std::vector<bool>& accel_mask) {
  if (!(g > 0.0) || !std::isfinite(g)) throw InputError("gravity constant must be positive");
  if (!accel_mask.empty() && static_cast<int>(accel_mask.size()) != dataset.channels)
    throw ShapeError("accelerometer mask length does not match channel count");
  for (auto& s : dataset.samples)
    for (int c = 0; c < static_cast<int>(accel_mask.size()); ++c)
      if (accel_mask[static_cast<std::size_t>(c)]) s.window.col(c) /= g;
  return dataset;
}

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Seeded shuffle followed by a train/val/test cut. Train and val sizes are
/// floor(N * ratio); test takes the remainder.
inline Splits split(const Dataset& dataset, const SplitSpec& spec) {
  const double ratios[] = {spec.train, spec.val, spec.test};
  for (double r : ratios)
    if (!(r >= 0.0) || !std::isfinite(r)) throw InputError("split ratios must be finite and nonnegative");
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) throw InputError("split ratios must sum to 1");
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.val + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw InputError("split of " + std::to_string(n) + " samples leaves an empty partition");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Engine eng = SeedSplitter(spec.seed).engine("split");
  shuffle_in_place(order, eng);

  std::span<const std::size_t> all(order);
  Splits out{dataset.subset(all.subspan(0, n_train)), dataset.subset(all.subspan(n_train, n_val)),
             dataset.subset(all.subspan(n_train + n_val))};
  out.train.name = dataset.name + "/train";
  out.val.name = dataset.name + "/val";
  out.test.name = dataset.name + "/test";
  return out;
}

// --- JSON-lines ingestion -------------------------------------------------

namespace detail {

inline nlohmann::json sample_to_json(const Sample& s) {
  nlohmann::json window = nlohmann::json::array();
  for (Eigen::Index t = 0; t < s.window.rows(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < s.window.cols(); ++c) row.push_back(s.window(t, c));
    window.push_back(std::move(row));
  }
  return nlohmann::json{{"id", s.id}, {"label", s.label}, {"meta", s.meta}, {"window", std::move(window)}};
}

inline Sample sample_from_json(const nlohmann::json& j, const Dataset& header, std::size_t line) {
  if (!j.is_object()) throw ParseError("record is not a JSON object", line);
  for (const char* key : {"id", "label", "window"})
    if (!j.contains(key)) throw ParseError(std::string("record lacks field '") + key + "'", line);
  Sample s;
  if (!j["id"].is_string()) throw ParseError("'id' must be a string", line);
  s.id = j["id"].get<std::string>();
  if (!j["label"].is_number_integer()) throw ParseError("'label' must be an integer", line);
  s.label = j["label"].get<int>();
  if (j.contains("meta")) {
    if (!j["meta"].is_object()) throw ParseError("'meta' must be an object", line);
    for (const auto& [k, v] : j["meta"].items()) {
      if (!v.is_string()) throw ParseError("meta value for '" + k + "' must be a string", line);
      s.meta[k] = v.get<std::string>();
    }
  }
  const auto& w = j["window"];
  if (!w.is_array()) throw ParseError("'window' must be an array of rows", line);
  if (static_cast<int>(w.size()) != header.window_len)
    throw SchemaError("line " + std::to_string(line) + ": window has " + std::to_string(w.size()) +
                      " timesteps, header says " + std::to_string(header.window_len));
  s.window.resize(header.window_len, header.channels);
  for (int t = 0; t < header.window_len; ++t) {
    const auto& row = w[static_cast<std::size_t>(t)];
    if (!row.is_array()) throw ParseError("window row is not an array", line);
    if (static_cast<int>(row.size()) != header.channels)
      throw SchemaError("line " + std::to_string(line) + ": window row has " + std::to_string(row.size()) +
                        " channels, header says " + std::to_string(header.channels));
    for (int c = 0; c < header.channels; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ParseError("window value is not a number", line);
      s.window(t, c) = v.get<double>();
    }
  }
  if (s.label < 0 || s.label >= header.num_classes)
    throw SchemaError("line " + std::to_string(line) + ": label " + std::to_string(s.label) + " outside [0, " +
                      std::to_string(header.num_classes) + ")");
  return s;
}

}  // namespace detail

/// Header line followed by one record per line. Doubles are written in
/// shortest round-trip form, so a reload is bit-exact.
inline void write_jsonl(const Dataset& dataset, std::ostream& out) {
  out << nlohmann::json{{"num_classes", dataset.num_classes},
                        {"window_len", dataset.window_len},
                        {"channels", dataset.channels},
                        {"name", dataset.name}}
             .dump()
      << '\n';
  for (const auto& s : dataset.samples) out << detail::sample_to_json(s).dump() << '\n';
}

inline Dataset read_jsonl(std::istream& in) {
  Dataset ds;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  std::set<std::string> ids;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line);
    }
    if (!have_header) {
      if (!j.is_object()) throw ParseError("header is not a JSON object", line);
      for (const char* key : {"num_classes", "window_len", "channels"})
        if (!j.contains(key) || !j[key].is_number_integer())
          throw ParseError(std::string("header lacks integer field '") + key + "'", line);
      ds.num_classes = j["num_classes"].get<int>();
      ds.window_len = j["window_len"].get<int>();
      ds.channels = j["channels"].get<int>();
      ds.name = j.value("name", std::string());
      if (ds.num_classes < 1 || ds.window_len < 1 || ds.channels < 1)
        throw SchemaError("header sizes must be positive");
      have_header = true;
      continue;
    }
    Sample s = detail::sample_from_json(j, ds, line);
    if (!ids.insert(s.id).second) throw SchemaError("line " + std::to_string(line) + ": duplicate id '" + s.id + "'");
    ds.samples.push_back(std::move(s));
  }
  if (!have_header) throw ParseError("missing header line");
  return ds;
}

inline void save_jsonl(const Dataset& dataset, const std::string& path) {
  std::ostringstream out;
  write_jsonl(dataset, out);
  write_file_atomic(path, out.str());
}

inline Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_jsonl(in);
}

// --- synthetic generator --------------------------------------------------

/// Sinusoid motif of one class. Channel j of the stack is
/// amplitude * sin(2*pi*frequency*t/T + phase + 2*pi*j/C).
struct ClassMotif {
  double frequency = 1.0;  // cycles per window
  double phase = 0.0;
  double amplitude = 1.0;
};

struct SynthDomainSpec {
  int domain_id = 0;
  Matrix channel_mix;   // C x C, nonsingular
  Vector channel_bias;  // C
  double amplitude_scale = 1.0;
  double noise_sigma = 0.0;
  std::vector<ClassMotif> class_motifs;  // indexed by label
};

/// Noise-free window for one (domain, class) cell.
inline Matrix motif_window(const SynthDomainSpec& spec, int label, int window_len, int channels) {
  const ClassMotif& m = spec.class_motifs.at(static_cast<std::size_t>(label));
  constexpr double two_pi = 6.283185307179586;
  Matrix stack(window_len, channels);
  for (int t = 0; t < window_len; ++t)
    for (int j = 0; j < channels; ++j)
      stack(t, j) = m.amplitude * std::sin(two_pi * m.frequency * t / window_len + m.phase + two_pi * j / channels);
  // rows are timesteps, so mixing applies on the right
  Matrix w = spec.amplitude_scale * (stack * spec.channel_mix.transpose());
  w.rowwise() += spec.channel_bias.transpose();
  return w;
}

/// Emits, per domain, `per_cell` rounds of one sample per class (classes
/// interleaved). Every sample draws noise from its own stream keyed by
/// (seed, global index).
inline Dataset generate_synthetic(const std::vector<SynthDomainSpec>& domains, int per_cell, int window_len, int channels,
                                  int num_classes, std::uint64_t seed, std::string name = "synthetic") {
  if (domains.empty()) throw InputError("generator needs at least one domain");
  if (num_classes < 2) throw InputError("generator needs at least two classes");
  if (per_cell < 1 || window_len < 1 || channels < 1) throw InputError("generator sizes must be positive");
  for (const auto& d : domains) {
    if (d.channel_mix.rows() != channels || d.channel_mix.cols() != channels)
      throw ShapeError("channel_mix must be C x C");
    if (d.channel_bias.size() != channels) throw ShapeError("channel_bias must have C entries");
    if (static_cast<int>(d.class_motifs.size()) != num_classes)
      throw InputError("domain " + std::to_string(d.domain_id) + " must define one motif per class");
    if (!(d.noise_sigma >= 0.0)) throw InputError("noise_sigma must be nonnegative");
    if (!(d.amplitude_scale > 0.0)) throw InputError("amplitude_scale must be positive");
    Eigen::FullPivLU<Matrix> lu(d.channel_mix);
    if (lu.rank() < channels) throw InputError("channel_mix of domain " + std::to_string(d.domain_id) + " is singular");
  }
  const SeedSplitter splitter(seed);
  Dataset ds{std::move(name), num_classes, window_len, channels, {}};
  ds.samples.reserve(domains.size() * static_cast<std::size_t>(per_cell * num_classes));
  std::uint64_t index = 0;
  for (const auto& d : domains) {
    std::vector<Matrix> base;
    for (int c = 0; c < num_classes; ++c) base.push_back(motif_window(d, c, window_len, channels));
    for (int r = 0; r < per_cell; ++r) {
      for (int c = 0; c < num_classes; ++c, ++index) {
        Sample s;
        s.id = "d" + std::to_string(d.domain_id) + "_c" + std::to_string(c) + "_" + std::to_string(r);
        s.label = c;
        s.meta["domain"] = std::to_string(d.domain_id);
        s.window = base[static_cast<std::size_t>(c)];
        if (d.noise_sigma > 0.0) {
          Engine eng = splitter.engine("sample", index);
          for (int t = 0; t < window_len; ++t)
            for (int ch = 0; ch < channels; ++ch) s.window(t, ch) += d.noise_sigma * standard_normal(eng);
        }
        ds.samples.push_back(std::move(s));
      }
    }
  }
  return ds;
}

}  // namespace prism
