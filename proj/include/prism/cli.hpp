#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prism/baselines.hpp"
#include "prism/dataset.hpp"
#include "prism/error.hpp"
#include "prism/fixtures.hpp"
#include "prism/io.hpp"
#include "prism/nid.hpp"
#include "prism/oup.hpp"
#include "prism/svg.hpp"
#include "prism/tde.hpp"

namespace prism::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNonIid = 10;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

struct SweepGrid {
  std::string param = "n";
  std::vector<double> values;
};

/// Everything a command reads. Written back, fully resolved, next to the
/// outputs of every run.
struct RunConfig {
  std::uint64_t seed = 0;
  bool plot = true;
  bool force_tde = false;
  TdeConfig tde;
  SplitSpec split;
  NidConfig nid;
  FixtureOptions generator;
  std::vector<SynthDomainSpec> domain_specs;  // explicit domains; overrides the generator's fixture shape
  std::vector<std::uint64_t> seeds;           // compare / sweep; empty = {seed}
  SweepGrid sweep;

  std::vector<std::uint64_t> seed_list() const { return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds; }
};

// --- config (de)serialization ----------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw SchemaError("ragged matrix in config");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

inline nlohmann::json domain_spec_to_json(const SynthDomainSpec& s) {
  nlohmann::json motifs = nlohmann::json::array();
  for (const auto& m : s.class_motifs)
    motifs.push_back({{"frequency", m.frequency}, {"phase", m.phase}, {"amplitude", m.amplitude}});
  std::vector<double> bias(s.channel_bias.data(), s.channel_bias.data() + s.channel_bias.size());
  return {{"domain_id", s.domain_id},         {"channel_mix", matrix_to_json(s.channel_mix)},
          {"channel_bias", bias},             {"amplitude_scale", s.amplitude_scale},
          {"noise_sigma", s.noise_sigma},     {"class_motifs", motifs}};
}

inline SynthDomainSpec domain_spec_from_json(const nlohmann::json& j) {
  SynthDomainSpec s;
  s.domain_id = j.value("domain_id", 0);
  s.channel_mix = matrix_from_json(j.at("channel_mix"));
  const auto bias = j.at("channel_bias").get<std::vector<double>>();
  s.channel_bias = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
  s.amplitude_scale = j.value("amplitude_scale", 1.0);
  s.noise_sigma = j.value("noise_sigma", 0.0);
  for (const auto& m : j.at("class_motifs"))
    s.class_motifs.push_back({m.value("frequency", 1.0), m.value("phase", 0.0), m.value("amplitude", 1.0)});
  return s;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : c.domain_specs) specs.push_back(domain_spec_to_json(s));
  const auto& g = c.generator;
  return {{"seed", c.seed},
          {"plot", c.plot},
          {"force_tde", c.force_tde},
          {"tde", c.tde},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
          {"nid", {{"k", c.nid.k}, {"threshold", c.nid.threshold}, {"min_class_count", c.nid.min_class_count}}},
          {"generator",
           {{"domains", g.domains},
            {"per_cell", g.per_cell},
            {"window_len", g.window_len},
            {"channels", g.channels},
            {"num_classes", g.num_classes},
            {"shift", g.shift},
            {"bias", g.bias},
            {"noise", g.noise},
            {"relabel", g.relabel},
            {"name", g.name},
            {"domain_specs", specs}}},
          {"seeds", c.seeds},
          {"sweep", {{"param", c.sweep.param}, {"values", c.sweep.values}}}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.plot = j.value("plot", c.plot);
    c.force_tde = j.value("force_tde", c.force_tde);
    if (j.contains("tde")) c.tde = j["tde"].get<TdeConfig>();
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.split.train = s.value("train", c.split.train);
      c.split.val = s.value("val", c.split.val);
      c.split.test = s.value("test", c.split.test);
    }
    if (j.contains("nid")) {
      const auto& s = j["nid"];
      c.nid.k = s.value("k", c.nid.k);
      c.nid.threshold = s.value("threshold", c.nid.threshold);
      c.nid.min_class_count = s.value("min_class_count", c.nid.min_class_count);
    }
    if (j.contains("generator")) {
      const auto& s = j["generator"];
      auto& g = c.generator;
      g.domains = s.value("domains", g.domains);
      g.per_cell = s.value("per_cell", g.per_cell);
      g.window_len = s.value("window_len", g.window_len);
      g.channels = s.value("channels", g.channels);
      g.num_classes = s.value("num_classes", g.num_classes);
      g.shift = s.value("shift", g.shift);
      g.bias = s.value("bias", g.bias);
      g.noise = s.value("noise", g.noise);
      g.relabel = s.value("relabel", g.relabel);
      g.name = s.value("name", g.name);
      if (s.contains("domain_specs"))
        for (const auto& d : s["domain_specs"]) c.domain_specs.push_back(domain_spec_from_json(d));
    }
    c.seeds = j.value("seeds", c.seeds);
    if (j.contains("sweep")) {
      c.sweep.param = j["sweep"].value("param", c.sweep.param);
      c.sweep.values = j["sweep"].value("values", c.sweep.values);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
}

/// The single --seed fans out to every seeded component.
inline void propagate_seed(RunConfig& c) {
  c.tde.seed = c.seed;
  c.split.seed = c.seed;
  c.generator.seed = c.seed;
}

// --- parallel jobs ---------------------------------------------------------

/// Worker count: PRISM_THREADS when set to a positive integer, else the
/// hardware concurrency.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("PRISM_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    throw InputError(std::string("PRISM_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(0..count-1) on up to thread_budget() threads. Results are
/// index-addressed by the caller, so output order never depends on timing.
/// The first failure (lowest index) is rethrown.
inline void run_jobs(std::size_t count, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = std::min<std::size_t>(thread_budget(), count);
  std::vector<std::exception_ptr> errors(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= count) return;
            i = next++;
          }
          try {
            job(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// --- command bodies ----------------------------------------------------------

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::filesystem::path p(dir.empty() ? "." : dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw InputError("cannot create output directory '" + p.string() + "': " + ec.message());
  return p;
}

inline void write_resolved_config(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg) {
  nlohmann::json j = to_json(cfg);
  j["command"] = command;
  write_file_atomic((dir / "config.json").string(), j.dump(2) + "\n");
}

inline Dataset generate_dataset(const RunConfig& cfg) {
  if (cfg.domain_specs.empty()) return make_fixture(cfg.generator);
  const auto& g = cfg.generator;
  return generate_synthetic(cfg.domain_specs, g.per_cell, g.window_len, g.channels, g.num_classes, cfg.seed, g.name);
}

inline int cmd_gen(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out) {
  const Dataset ds = generate_dataset(cfg);
  const auto path = out_dir / "dataset.jsonl";
  save_jsonl(ds, path.string());
  const auto values = ds.meta_values("domain");
  const std::set<std::string> domains(values.begin(), values.end());
  out << "N=" << ds.size() << " domains=" << domains.size() << " classes=" << ds.num_classes << " -> " << path.string()
      << "\n";
  return kExitOk;
}

inline NidReport run_nid(const FeedforwardNet& encoder, const Dataset& ds, const RunConfig& cfg) {
  return nid(encoder, ds, build_schedule(ds, cfg.nid.k, cfg.seed), cfg.nid.threshold, cfg.nid.min_class_count);
}

inline void print_nid(const NidReport& rep, std::ostream& out) {
  out << "NID=" << format_double(rep.nid) << " threshold=" << format_double(rep.threshold) << " verdict="
      << (rep.is_non_iid ? "non-iid" : "iid") << "\n";
}

inline int cmd_nid(const RunConfig& cfg, const std::string& data_path, const std::string& pack_path,
                   const std::filesystem::path& out_dir, std::ostream& out) {
  const Dataset ds = load_jsonl(data_path);
  FeedforwardNet encoder;
  if (!pack_path.empty()) {
    const ModelPack pack = load_pack(pack_path);
    detail::check_pack_input(pack, ds);
    encoder = pack.encoder;
  } else {
    const Splits sp = split(ds, cfg.split);
    encoder = train_initial(sp.train, sp.val, cfg.tde).encoder;
  }
  const NidReport rep = run_nid(encoder, ds, cfg);
  write_file_atomic((out_dir / "nid.json").string(), nlohmann::json(rep).dump(2) + "\n");
  print_nid(rep, out);
  return rep.is_non_iid ? kExitNonIid : kExitOk;
}

inline std::string loss_svg(const LossTrace& trace) {
  svg::Series lc{"alpha*L^C", {}, {}}, lt{"L^T", {}, {}}, tde{"L^tde", {}, {}};
  for (const auto& e : trace.epochs) {
    const double x = e.epoch;
    lc.x.push_back(x);
    lc.y.push_back(e.l_tde - e.l_t);
    lt.x.push_back(x);
    lt.y.push_back(e.l_t);
    tde.x.push_back(x);
    tde.y.push_back(e.l_tde);
  }
  return svg::line_chart({tde, lt, lc}, "training loss", "epoch", "loss");
}

inline int cmd_mine(const RunConfig& cfg, const std::string& data_path, const std::filesystem::path& out_dir,
                    std::ostream& out) {
  const Dataset ds = load_jsonl(data_path);
  const Splits sp = split(ds, cfg.split);
  const InitialModel m0 = train_initial(sp.train, sp.val, cfg.tde);
  const NidReport gate = run_nid(m0.encoder, ds, cfg);
  write_file_atomic((out_dir / "nid.json").string(), nlohmann::json(gate).dump(2) + "\n");
  print_nid(gate, out);

  TdeConfig tde = cfg.tde;
  if (!gate.is_non_iid && !cfg.force_tde) {
    out << "data looks i.i.d.; writing the single-model pack (pass --force-tde to mine anyway)\n";
    tde.n = 1;
  }
  const MineResult mr = mine(sp.train, sp.val, m0, tde);
  save_pack(mr.pack, (out_dir / "pack.json").string());
  write_file_atomic((out_dir / "partition.json").string(), partition_to_json(mr.partition).dump(1) + "\n");
  std::ostringstream trace;
  write_trace_csv(mr.trace, trace);
  write_file_atomic((out_dir / "trace.csv").string(), trace.str());
  save_jsonl(sp.test, (out_dir / "test.jsonl").string());
  const EvalReport rep = evaluate(mr.pack, sp.test);
  write_file_atomic((out_dir / "report.json").string(), nlohmann::json(rep).dump(2) + "\n");
  if (cfg.plot && !mr.trace.epochs.empty()) write_file_atomic((out_dir / "loss.svg").string(), loss_svg(mr.trace));

  out << "heads=" << mr.pack.n() << " best_epoch=" << mr.best_epoch << " val_macro_f1=" << format_double(mr.best_val_macro_f1);
  if (mr.partition.ari_vs_meta) out << " ari=" << format_double(*mr.partition.ari_vs_meta);
  out << " test_macro_f1=" << format_double(rep.macro_f1) << "\n";
  return kExitOk;
}

inline int cmd_eval(const std::string& pack_path, const std::string& data_path, const std::filesystem::path& out_dir,
                    std::ostream& out) {
  const ModelPack pack = load_pack(pack_path);
  const Dataset ds = load_jsonl(data_path);
  const auto records = predict_batch(pack, ds);
  const EvalReport rep = evaluate(pack, ds);
  write_file_atomic((out_dir / "report.json").string(), nlohmann::json(rep).dump(2) + "\n");
  std::ostringstream csv, preds;
  write_report_csv(rep, csv);
  write_predictions_csv(records, preds);
  write_file_atomic((out_dir / "report.csv").string(), csv.str());
  write_file_atomic((out_dir / "predictions.csv").string(), preds.str());
  out << "N=" << rep.total << " accuracy=" << format_double(rep.accuracy) << " macro_f1=" << format_double(rep.macro_f1)
      << "\n";
  return kExitOk;
}

struct CompareRow {
  std::string method;
  std::uint64_t seed = 0;
  EvalReport report;
  std::map<std::string, double> per_domain;
};

inline const std::vector<std::string>& compare_methods() {
  static const std::vector<std::string> m{"p0", "sem", "cd", "cf", "prism"};
  return m;
}

/// All five methods on one seed; they share the seed's split and M_0.
inline std::vector<CompareRow> compare_seed(const Dataset& ds, const RunConfig& base, std::uint64_t seed) {
  RunConfig cfg = base;
  cfg.seed = seed;
  propagate_seed(cfg);
  const Splits sp = split(ds, cfg.split);
  const InitialModel m0 = train_initial(sp.train, sp.val, cfg.tde);
  const std::string& key = cfg.tde.meta_key;
  std::vector<EvalReport> reps{baseline_p0(m0, sp.test, cfg.tde),
                               baseline_semantic(m0, sp.train, sp.test, key, cfg.tde),
                               baseline_cluster_data(m0, sp.train, sp.test, cfg.tde.n, cfg.tde),
                               baseline_cluster_feature(m0, sp.train, sp.test, cfg.tde.n, cfg.tde),
                               evaluate(mine(sp.train, sp.val, m0, cfg.tde).pack, sp.test)};
  std::vector<CompareRow> rows;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    CompareRow r{compare_methods()[k], seed, reps[k], {}};
    if (sp.test.all_have_meta(key)) r.per_domain = accuracy_by_meta(reps[k], sp.test, key);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// method, seed, accuracy, macro_f1, then one accuracy column per metadata value.
inline void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out) {
  std::set<std::string> keys;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.per_domain) keys.insert(k);
  out << "method,seed,accuracy,macro_f1";
  for (const auto& k : keys) out << ",acc_" << k;
  out << "\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.seed << ',' << format_double(r.report.accuracy) << ',' << format_double(r.report.macro_f1);
    for (const auto& k : keys) {
      out << ',';
      if (auto it = r.per_domain.find(k); it != r.per_domain.end()) out << format_double(it->second);
    }
    out << "\n";
  }
}

inline std::vector<CompareRow> run_compare(const Dataset& ds, const RunConfig& cfg) {
  const auto seeds = cfg.seed_list();
  std::vector<std::vector<CompareRow>> per_seed(seeds.size());
  run_jobs(seeds.size(), [&](std::size_t i) { per_seed[i] = compare_seed(ds, cfg, seeds[i]); });
  // rows grouped by method (fixed order), seeds in the order given
  std::vector<CompareRow> rows;
  for (std::size_t m = 0; m < compare_methods().size(); ++m)
    for (const auto& s : per_seed) rows.push_back(s.at(m));
  return rows;
}

inline int cmd_compare(const RunConfig& cfg, const std::string& data_path, const std::filesystem::path& out_dir,
                       std::ostream& out) {
  const Dataset ds = load_jsonl(data_path);
  const auto rows = run_compare(ds, cfg);
  std::ostringstream csv;
  write_compare_csv(rows, csv);
  write_file_atomic((out_dir / "compare.csv").string(), csv.str());

  std::vector<double> means;
  for (const auto& m : compare_methods()) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : rows)
      if (r.method == m) sum += r.report.macro_f1, ++count;
    means.push_back(count ? sum / count : 0.0);
    out << m << " mean_macro_f1=" << format_double(means.back()) << "\n";
  }
  if (cfg.plot)
    write_file_atomic((out_dir / "compare.svg").string(),
                      svg::bar_chart(compare_methods(), means, "mean macro-F1 over seeds", "macro-F1"));
  return kExitOk;
}

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  EvalReport report;
  std::optional<double> ari;
};

inline TdeConfig apply_sweep_value(TdeConfig t, const std::string& param, double v) {
  if (param == "alpha") {
    t.alpha = v;
  } else if (param == "margin") {
    t.margin = v;
  } else if (param == "n") {
    if (v < 1.0 || v != static_cast<double>(static_cast<int>(v))) throw InputError("sweep over n needs positive integers");
    t.n = static_cast<int>(v);
  } else {
    throw InputError("sweep parameter must be alpha, n or margin, got '" + param + "'");
  }
  t.validate();
  return t;
}

/// One row per (value, seed); M_0 is trained once per seed and shared.
inline std::vector<SweepRow> run_sweep(const Dataset& ds, const RunConfig& cfg) {
  if (cfg.sweep.values.empty()) throw InputError("sweep grid is empty");
  for (double v : cfg.sweep.values) apply_sweep_value(cfg.tde, cfg.sweep.param, v);
  const auto seeds = cfg.seed_list();
  std::vector<Splits> splits;
  std::vector<InitialModel> m0s(seeds.size());
  std::vector<RunConfig> seeded;
  for (auto s : seeds) {
    RunConfig c = cfg;
    c.seed = s;
    propagate_seed(c);
    splits.push_back(split(ds, c.split));
    seeded.push_back(std::move(c));
  }
  run_jobs(seeds.size(), [&](std::size_t i) { m0s[i] = train_initial(splits[i].train, splits[i].val, seeded[i].tde); });

  const std::size_t nv = cfg.sweep.values.size();
  std::vector<SweepRow> rows(nv * seeds.size());
  run_jobs(rows.size(), [&](std::size_t j) {
    const std::size_t vi = j / seeds.size(), si = j % seeds.size();
    const TdeConfig t = apply_sweep_value(seeded[si].tde, cfg.sweep.param, cfg.sweep.values[vi]);
    const MineResult mr = mine(splits[si].train, splits[si].val, m0s[si], t);
    rows[j] = {cfg.sweep.values[vi], seeds[si], evaluate(mr.pack, splits[si].test), mr.partition.ari_vs_meta};
  });
  return rows;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline int cmd_sweep(const RunConfig& cfg, const std::string& data_path, const std::filesystem::path& out_dir,
                     std::ostream& out) {
  const Dataset ds = load_jsonl(data_path);
  const auto rows = run_sweep(ds, cfg);
  std::ostringstream csv;
  csv << "param,value,seed,accuracy,macro_f1,ari\n";
  for (const auto& r : rows)
    csv << cfg.sweep.param << ',' << format_double(r.value) << ',' << r.seed << ',' << format_double(r.report.accuracy) << ','
        << format_double(r.report.macro_f1) << ',' << (r.ari ? format_double(*r.ari) : std::string()) << "\n";
  write_file_atomic((out_dir / "sweep.csv").string(), csv.str());

  svg::Series acc{"median accuracy", {}, {}}, f1{"median macro-F1", {}, {}};
  for (double v : cfg.sweep.values) {
    std::vector<double> a, f;
    for (const auto& r : rows)
      if (r.value == v) a.push_back(r.report.accuracy), f.push_back(r.report.macro_f1);
    acc.x.push_back(v);
    acc.y.push_back(median(a));
    f1.x.push_back(v);
    f1.y.push_back(median(f));
    out << cfg.sweep.param << "=" << format_double(v) << " median_accuracy=" << format_double(acc.y.back())
        << " median_macro_f1=" << format_double(f1.y.back()) << "\n";
  }
  if (cfg.plot)
    write_file_atomic((out_dir / "sweep.svg").string(),
                      svg::line_chart({acc, f1}, "sweep over " + cfg.sweep.param, cfg.sweep.param, "score"));
  return kExitOk;
}

// --- entry point -------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"prism: latent-domain mining and routed inference for sensor windows"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = ".", meta_key, seeds_csv, pack_path;
  std::uint64_t seed = 0;
  int epochs = 0, n_domains = 0, k_clips = 0;
  double alpha = 0.0, margin = 0.0, nid_threshold = 0.0;
  bool force_tde = false, plot = true;

  app.add_option("--config", config_path, "JSON run config; flags override it")->check(CLI::ExistingFile);
  auto* o_seed = app.add_option("--seed", seed, "root seed");
  app.add_option("--out-dir", out_dir, "output directory (created if missing)");
  auto* o_force = app.add_flag("--force-tde", force_tde, "mine even when the NID gate says i.i.d.");
  auto* o_epochs = app.add_option("--epochs", epochs, "EM epochs")->check(CLI::PositiveNumber);
  auto* o_alpha = app.add_option("--alpha", alpha, "contrastive weight")->check(CLI::NonNegativeNumber);
  auto* o_n = app.add_option("--n-domains", n_domains, "number of estimated domains")->check(CLI::PositiveNumber);
  auto* o_margin = app.add_option("--margin", margin, "contrastive margin")->check(CLI::PositiveNumber);
  auto* o_k = app.add_option("--k-clips", k_clips, "NID rounds (2k clips)");
  auto* o_thr = app.add_option("--nid-threshold", nid_threshold, "NID verdict threshold");
  auto* o_meta = app.add_option("--meta-key", meta_key, "metadata key holding ground-truth domains");
  auto* o_plot = app.add_flag("--plot,!--no-plot", plot, "write SVG plots");
  auto* o_seeds = app.add_option("--seeds", seeds_csv, "comma-separated seed list for compare and sweep");

  auto* gen = app.add_subcommand("gen", "generate a synthetic multi-domain dataset");

  std::string nid_data;
  auto* nidc = app.add_subcommand("nid", "non-i.i.d. degree of a dataset (exit 10 when non-i.i.d.)");
  nidc->add_option("dataset", nid_data, "dataset JSON-lines file")->required();
  nidc->add_option("--pack", pack_path, "use this pack's encoder instead of training one");

  std::string mine_data;
  auto* minec = app.add_subcommand("mine", "mine latent domains and write a model pack");
  minec->add_option("dataset", mine_data, "dataset JSON-lines file")->required();

  std::string eval_pack, eval_data;
  auto* evalc = app.add_subcommand("eval", "evaluate a model pack on a dataset");
  evalc->add_option("pack", eval_pack, "model pack JSON")->required();
  evalc->add_option("dataset", eval_data, "dataset JSON-lines file")->required();

  std::string cmp_data;
  auto* cmpc = app.add_subcommand("compare", "P0, semantic, data-cluster, feature-cluster and Prism over seeds");
  cmpc->add_option("dataset", cmp_data, "dataset JSON-lines file")->required();

  std::string sweep_data, sweep_param;
  std::vector<double> sweep_values;
  auto* sweepc = app.add_subcommand("sweep", "accuracy over a grid of alpha, n or margin");
  sweepc->add_option("dataset", sweep_data, "dataset JSON-lines file")->required();
  auto* o_param = sweepc->add_option("--param", sweep_param, "alpha | n | margin");
  auto* o_values = sweepc->add_option("--values", sweep_values, "grid values, comma-separated")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (o_seed->count()) cfg.seed = seed;
    propagate_seed(cfg);
    if (o_force->count()) cfg.force_tde = force_tde;
    if (o_epochs->count()) cfg.tde.epochs = epochs;
    if (o_alpha->count()) cfg.tde.alpha = alpha;
    if (o_n->count()) cfg.tde.n = n_domains;
    if (o_margin->count()) cfg.tde.margin = margin;
    if (o_k->count()) cfg.nid.k = k_clips;
    if (o_thr->count()) cfg.nid.threshold = nid_threshold;
    if (o_meta->count()) cfg.tde.meta_key = meta_key;
    if (o_plot->count()) cfg.plot = plot;
    if (o_seeds->count()) {
      cfg.seeds.clear();
      std::stringstream ss(seeds_csv);
      for (std::string tok; std::getline(ss, tok, ',');) {
        try {
          std::size_t used = 0;
          cfg.seeds.push_back(std::stoull(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::logic_error&) {
          throw InputError("--seeds expects comma-separated integers, got '" + tok + "'");
        }
      }
    }
    if (o_param->count()) cfg.sweep.param = sweep_param;
    if (o_values->count()) cfg.sweep.values = sweep_values;
    cfg.tde.validate();
    if (cfg.nid.k < 2) throw InputError("--k-clips must be at least 2");

    const auto dir = prepare_out_dir(out_dir);
    const std::string command = app.get_subcommands().front()->get_name();
    write_resolved_config(dir, command, cfg);
    if (gen->parsed()) return cmd_gen(cfg, dir, out);
    if (nidc->parsed()) return cmd_nid(cfg, nid_data, pack_path, dir, out);
    if (minec->parsed()) return cmd_mine(cfg, mine_data, dir, out);
    if (evalc->parsed()) return cmd_eval(eval_pack, eval_data, dir, out);
    if (cmpc->parsed()) return cmd_compare(cfg, cmp_data, dir, out);
    if (sweepc->parsed()) return cmd_sweep(cfg, sweep_data, dir, out);
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace prism::cli
