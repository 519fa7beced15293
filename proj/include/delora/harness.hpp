// Experiment orchestration: a strict JSON experiment config, the end-to-end
// per-seed pipeline (generate → inject noise → detect → relabel → train),
// multi-seed aggregation with byte-stable metrics output, ablation switches,
// and hyperparameter sweeps.
//
// Reproducibility rules:
//  - run_experiment(config, out_dir) is a pure function of the config: the
//    metrics file and every CSV artifact are byte-identical across re-runs.
//  - per-replicate randomness derives from mix_seed(stage seed, replicate),
//    so seeds are independent and insertion-order free.
//  - wall-clock time and absolute paths appear only in report.json, never in
//    metrics.json.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "delora/adapter.hpp"
#include "delora/baselines.hpp"
#include "delora/core_math.hpp"
#include "delora/dataset.hpp"
#include "delora/detector.hpp"
#include "delora/metrics.hpp"
#include "delora/noise.hpp"
#include "delora/relabel.hpp"
#include "delora/relabel_http.hpp"
#include "delora/stage2.hpp"

namespace delora::harness {

// ---------------------------------------------------------------------------
// Config types
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic" | "csv"
  // Synthetic Gaussian clusters.
  std::size_t classes = 4;
  std::size_t dim = 32;
  std::size_t per_class = 500;       // training samples per class
  std::size_t test_per_class = 100;  // held-out samples per class
  std::size_t val_per_class = 0;     // validation samples per class
  double separation = 3.0;
  std::uint64_t seed = 17;
  // CSV ingestion.
  std::string csv_path;
  std::size_t text_dim = 512;
  double train_fraction = 0.8;
  double val_fraction = 0.0;
};

struct BackendSpec {
  std::string kind = "oracle";  // "oracle" | "cached" | "http"
  double oracle_accuracy = 0.9;
  std::uint64_t oracle_seed = 0;
  std::string cache_path;
  relabel::HttpLlmConfig http;
  std::size_t demos_per_class = 1;
};

// Component switches. Disabling detection entirely (no_nld) is mutually
// exclusive with the finer-grained switches it would shadow.
struct AblationFlags {
  bool no_l_lora = false;      // drop the parameter-change penalty gradient
  bool no_l_detector = false;  // drop the detection loss (warm-up style throughout)
  bool no_l_ce = false;        // drop the cross-entropy gradient in stage 1
  bool no_ns = false;          // skip relabeling; train stage 2 on D_c only
  bool no_ct = false;          // skip stage 2; evaluate the detector's clean variant
  bool no_nld = false;         // skip detection; plain training on all samples
};

struct ExperimentConfig {
  int schema_version = 1;
  DatasetSpec data;
  noise::NoiseSpec noise;
  noise::ProxyConfig proxy;  // instance-dependent noise generator settings
  detect::DetectorConfig detector;
  stage2::Stage2Config stage2;
  BackendSpec relabeler;
  AblationFlags ablation;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

inline void validate(const ExperimentConfig& cfg) {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  check(cfg.schema_version == 1, "config: unsupported schema_version");
  check(cfg.data.kind == "synthetic" || cfg.data.kind == "csv",
        "config: data.kind must be 'synthetic' or 'csv'");
  if (cfg.data.kind == "synthetic") {
    check(cfg.data.classes >= 2, "config: data.classes must be at least 2");
    check(cfg.data.dim >= 1, "config: data.dim must be positive");
    check(cfg.data.per_class >= 1, "config: data.per_class must be positive");
    check(cfg.data.separation > 0.0, "config: data.separation must be positive");
  } else {
    check(!cfg.data.csv_path.empty(), "config: data.csv_path required for csv datasets");
    check(cfg.data.train_fraction > 0.0 && cfg.data.train_fraction <= 1.0,
          "config: data.train_fraction must be in (0,1]");
    check(cfg.data.val_fraction >= 0.0 &&
              cfg.data.train_fraction + cfg.data.val_fraction <= 1.0,
          "config: data.train_fraction + data.val_fraction must not exceed 1");
  }
  check(cfg.noise.ratio >= 0.0 && cfg.noise.ratio < 1.0,
        "config: noise.ratio must be in [0,1)");
  try {
    detect::validate(cfg.detector);
    stage2::validate(cfg.stage2);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check(cfg.relabeler.kind == "oracle" || cfg.relabeler.kind == "cached" ||
            cfg.relabeler.kind == "http",
        "config: relabeler.kind must be 'oracle', 'cached', or 'http'");
  check(cfg.relabeler.oracle_accuracy >= 0.0 && cfg.relabeler.oracle_accuracy <= 1.0,
        "config: relabeler.oracle_accuracy must be in [0,1]");
  if (cfg.relabeler.kind == "cached")
    check(!cfg.relabeler.cache_path.empty(), "config: relabeler.cache_path required");
  const AblationFlags& ab = cfg.ablation;
  if (ab.no_nld)
    check(!ab.no_l_lora && !ab.no_l_detector && !ab.no_l_ce && !ab.no_ns && !ab.no_ct,
          "config: ablation.no_nld cannot be combined with other ablation flags");
  check(!cfg.seeds.empty(), "config: seeds must not be empty");
  check(std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() ==
            cfg.seeds.size(),
        "config: seeds must be distinct");
}

// ---------------------------------------------------------------------------
// Strict JSON parsing and echo
// ---------------------------------------------------------------------------

namespace detail {

inline void expect_object(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be a JSON object");
}

inline void expect_keys(const nlohmann::json& j, const std::string& where,
                        std::initializer_list<const char*> allowed) {
  expect_object(j, where);
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) {
      return item.key() == k;
    });
    if (!known)
      throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& into, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: bad value for " + where + "." + key);
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using detail::expect_keys;
  using detail::read_field;
  ExperimentConfig cfg;
  expect_keys(j, "config",
              {"schema_version", "data", "noise", "detector", "stage2", "relabeler",
               "ablation", "seeds"});
  read_field(j, "schema_version", cfg.schema_version, "config");

  if (j.contains("data")) {
    const nlohmann::json& d = j.at("data");
    expect_keys(d, "data",
                {"kind", "classes", "dim", "per_class", "test_per_class", "val_per_class",
                 "separation", "seed", "csv_path", "text_dim", "train_fraction",
                 "val_fraction"});
    read_field(d, "kind", cfg.data.kind, "data");
    read_field(d, "classes", cfg.data.classes, "data");
    read_field(d, "dim", cfg.data.dim, "data");
    read_field(d, "per_class", cfg.data.per_class, "data");
    read_field(d, "test_per_class", cfg.data.test_per_class, "data");
    read_field(d, "val_per_class", cfg.data.val_per_class, "data");
    read_field(d, "separation", cfg.data.separation, "data");
    read_field(d, "seed", cfg.data.seed, "data");
    read_field(d, "csv_path", cfg.data.csv_path, "data");
    read_field(d, "text_dim", cfg.data.text_dim, "data");
    read_field(d, "train_fraction", cfg.data.train_fraction, "data");
    read_field(d, "val_fraction", cfg.data.val_fraction, "data");
  }

  if (j.contains("noise")) {
    const nlohmann::json& n = j.at("noise");
    expect_keys(n, "noise", {"kind", "ratio", "seed", "proxy"});
    if (n.contains("kind")) {
      std::string kind;
      read_field(n, "kind", kind, "noise");
      cfg.noise.kind = noise::parse_noise_kind(kind);
    }
    read_field(n, "ratio", cfg.noise.ratio, "noise");
    read_field(n, "seed", cfg.noise.seed, "noise");
    if (n.contains("proxy")) {
      const nlohmann::json& p = n.at("proxy");
      expect_keys(p, "noise.proxy", {"epochs", "learning_rate", "batch_size"});
      read_field(p, "epochs", cfg.proxy.epochs, "noise.proxy");
      read_field(p, "learning_rate", cfg.proxy.learning_rate, "noise.proxy");
      read_field(p, "batch_size", cfg.proxy.batch_size, "noise.proxy");
    }
  }

  if (j.contains("detector")) {
    const nlohmann::json& d = j.at("detector");
    expect_keys(d, "detector",
                {"h1", "h2", "warmup_epochs", "total_epochs", "learning_rate", "batch_size",
                 "seed", "negative_resample", "rank", "w0_std", "lora_weight"});
    read_field(d, "h1", cfg.detector.h1, "detector");
    read_field(d, "h2", cfg.detector.h2, "detector");
    read_field(d, "warmup_epochs", cfg.detector.warmup_epochs, "detector");
    read_field(d, "total_epochs", cfg.detector.total_epochs, "detector");
    read_field(d, "learning_rate", cfg.detector.learning_rate, "detector");
    read_field(d, "batch_size", cfg.detector.batch_size, "detector");
    read_field(d, "seed", cfg.detector.seed, "detector");
    read_field(d, "negative_resample", cfg.detector.negative_resample, "detector");
    read_field(d, "rank", cfg.detector.rank, "detector");
    read_field(d, "w0_std", cfg.detector.w0_std, "detector");
    read_field(d, "lora_weight", cfg.detector.lora_weight, "detector");
  }

  if (j.contains("stage2")) {
    const nlohmann::json& s = j.at("stage2");
    expect_keys(s, "stage2",
                {"epochs", "learning_rate", "batch_size", "rce_log_zero", "seed", "peft",
                 "rank"});
    read_field(s, "epochs", cfg.stage2.epochs, "stage2");
    read_field(s, "learning_rate", cfg.stage2.learning_rate, "stage2");
    read_field(s, "batch_size", cfg.stage2.batch_size, "stage2");
    read_field(s, "rce_log_zero", cfg.stage2.rce_log_zero, "stage2");
    read_field(s, "seed", cfg.stage2.seed, "stage2");
    read_field(s, "peft", cfg.stage2.peft, "stage2");
    read_field(s, "rank", cfg.stage2.rank, "stage2");
  }

  if (j.contains("relabeler")) {
    const nlohmann::json& r = j.at("relabeler");
    expect_keys(r, "relabeler",
                {"kind", "oracle_accuracy", "oracle_seed", "cache_path", "http",
                 "demos_per_class"});
    read_field(r, "kind", cfg.relabeler.kind, "relabeler");
    read_field(r, "oracle_accuracy", cfg.relabeler.oracle_accuracy, "relabeler");
    read_field(r, "oracle_seed", cfg.relabeler.oracle_seed, "relabeler");
    read_field(r, "cache_path", cfg.relabeler.cache_path, "relabeler");
    read_field(r, "demos_per_class", cfg.relabeler.demos_per_class, "relabeler");
    if (r.contains("http")) {
      const nlohmann::json& h = r.at("http");
      expect_keys(h, "relabeler.http",
                  {"host", "port", "path", "model", "timeout_ms", "retries", "cache_path",
                   "api_key_env"});
      read_field(h, "host", cfg.relabeler.http.host, "relabeler.http");
      read_field(h, "port", cfg.relabeler.http.port, "relabeler.http");
      read_field(h, "path", cfg.relabeler.http.path, "relabeler.http");
      read_field(h, "model", cfg.relabeler.http.model, "relabeler.http");
      read_field(h, "timeout_ms", cfg.relabeler.http.timeout_ms, "relabeler.http");
      read_field(h, "retries", cfg.relabeler.http.retries, "relabeler.http");
      read_field(h, "cache_path", cfg.relabeler.http.cache_path, "relabeler.http");
      read_field(h, "api_key_env", cfg.relabeler.http.api_key_env, "relabeler.http");
    }
  }

  if (j.contains("ablation")) {
    const nlohmann::json& a = j.at("ablation");
    expect_keys(a, "ablation",
                {"no_l_lora", "no_l_detector", "no_l_ce", "no_ns", "no_ct", "no_nld"});
    read_field(a, "no_l_lora", cfg.ablation.no_l_lora, "ablation");
    read_field(a, "no_l_detector", cfg.ablation.no_l_detector, "ablation");
    read_field(a, "no_l_ce", cfg.ablation.no_l_ce, "ablation");
    read_field(a, "no_ns", cfg.ablation.no_ns, "ablation");
    read_field(a, "no_ct", cfg.ablation.no_ct, "ablation");
    read_field(a, "no_nld", cfg.ablation.no_nld, "ablation");
  }

  read_field(j, "seeds", cfg.seeds, "config");
  validate(cfg);
  return cfg;
}

inline ExperimentConfig parse_experiment_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

// Full echo of every field; parse(to_json(cfg)) reproduces cfg exactly.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = cfg.schema_version;
  j["data"] = {{"kind", cfg.data.kind},
               {"classes", cfg.data.classes},
               {"dim", cfg.data.dim},
               {"per_class", cfg.data.per_class},
               {"test_per_class", cfg.data.test_per_class},
               {"val_per_class", cfg.data.val_per_class},
               {"separation", cfg.data.separation},
               {"seed", cfg.data.seed},
               {"csv_path", cfg.data.csv_path},
               {"text_dim", cfg.data.text_dim},
               {"train_fraction", cfg.data.train_fraction},
               {"val_fraction", cfg.data.val_fraction}};
  j["noise"] = {{"kind", noise::noise_kind_name(cfg.noise.kind)},
                {"ratio", cfg.noise.ratio},
                {"seed", cfg.noise.seed},
                {"proxy",
                 {{"epochs", cfg.proxy.epochs},
                  {"learning_rate", cfg.proxy.learning_rate},
                  {"batch_size", cfg.proxy.batch_size}}}};
  j["detector"] = {{"h1", cfg.detector.h1},
                   {"h2", cfg.detector.h2},
                   {"warmup_epochs", cfg.detector.warmup_epochs},
                   {"total_epochs", cfg.detector.total_epochs},
                   {"learning_rate", cfg.detector.learning_rate},
                   {"batch_size", cfg.detector.batch_size},
                   {"seed", cfg.detector.seed},
                   {"negative_resample", cfg.detector.negative_resample},
                   {"rank", cfg.detector.rank},
                   {"w0_std", cfg.detector.w0_std},
                   {"lora_weight", cfg.detector.lora_weight}};
  j["stage2"] = {{"epochs", cfg.stage2.epochs},
                 {"learning_rate", cfg.stage2.learning_rate},
                 {"batch_size", cfg.stage2.batch_size},
                 {"rce_log_zero", cfg.stage2.rce_log_zero},
                 {"seed", cfg.stage2.seed},
                 {"peft", cfg.stage2.peft},
                 {"rank", cfg.stage2.rank}};
  j["relabeler"] = {{"kind", cfg.relabeler.kind},
                    {"oracle_accuracy", cfg.relabeler.oracle_accuracy},
                    {"oracle_seed", cfg.relabeler.oracle_seed},
                    {"cache_path", cfg.relabeler.cache_path},
                    {"demos_per_class", cfg.relabeler.demos_per_class},
                    {"http",
                     {{"host", cfg.relabeler.http.host},
                      {"port", cfg.relabeler.http.port},
                      {"path", cfg.relabeler.http.path},
                      {"model", cfg.relabeler.http.model},
                      {"timeout_ms", cfg.relabeler.http.timeout_ms},
                      {"retries", cfg.relabeler.http.retries},
                      {"cache_path", cfg.relabeler.http.cache_path},
                      {"api_key_env", cfg.relabeler.http.api_key_env}}}};
  j["ablation"] = {{"no_l_lora", cfg.ablation.no_l_lora},
                   {"no_l_detector", cfg.ablation.no_l_detector},
                   {"no_l_ce", cfg.ablation.no_l_ce},
                   {"no_ns", cfg.ablation.no_ns},
                   {"no_ct", cfg.ablation.no_ct},
                   {"no_nld", cfg.ablation.no_nld}};
  j["seeds"] = cfg.seeds;
  return j;
}

// ---------------------------------------------------------------------------
// Per-seed pipeline
// ---------------------------------------------------------------------------

struct SeedData {
  data::Dataset train;  // training split with injected noise
  data::Dataset val;    // may be empty
  data::Dataset test;   // may be empty for csv configs with no test share
  std::vector<noise::CorruptionRecord> records;
  double achieved_noise = 0.0;
};

// Deterministic data preparation for one replicate. Public so external
// consumers (benchmark comparisons) can reuse the exact per-seed datasets.
inline SeedData prepare_seed_data(const ExperimentConfig& cfg, std::uint64_t replicate) {
  const std::uint64_t data_seed = mix_seed(cfg.data.seed, replicate);
  SeedData out;
  if (cfg.data.kind == "synthetic") {
    out.train = data::gen_gaussian_clusters(cfg.data.classes, cfg.data.dim,
                                            cfg.data.per_class, cfg.data.separation,
                                            split_seed(data_seed, "train"));
    if (cfg.data.test_per_class > 0)
      out.test = data::gen_gaussian_clusters(cfg.data.classes, cfg.data.dim,
                                             cfg.data.test_per_class, cfg.data.separation,
                                             split_seed(data_seed, "test"));
    if (cfg.data.val_per_class > 0)
      out.val = data::gen_gaussian_clusters(cfg.data.classes, cfg.data.dim,
                                            cfg.data.val_per_class, cfg.data.separation,
                                            split_seed(data_seed, "val"));
  } else {
    data::LoadOptions opt;
    opt.text_dim = cfg.data.text_dim;
    const data::Dataset full = data::load_csv(cfg.data.csv_path, opt);
    data::SplitSpec spec;
    spec.train = cfg.data.train_fraction;
    spec.val = cfg.data.val_fraction;
    spec.test = 1.0 - spec.train - spec.val;
    spec.seed = data_seed;
    data::Split s = data::split(full, spec);
    out.train = std::move(s.train);
    out.val = std::move(s.val);
    out.test = std::move(s.test);
  }
  if (cfg.noise.ratio > 0.0) {
    noise::NoiseSpec spec = cfg.noise;
    spec.seed = mix_seed(cfg.noise.seed, replicate);
    noise::ProxyConfig proxy = cfg.proxy;
    proxy.seed = split_seed(spec.seed, "proxy");
    noise::NoiseResult res = noise::inject_noise(out.train, spec, proxy);
    out.train = std::move(res.dataset);
    out.records = std::move(res.records);
    out.achieved_noise = res.achieved_ratio;
  }
  return out;
}

inline std::unique_ptr<relabel::Backend> make_backend(const BackendSpec& spec,
                                                      std::uint64_t replicate) {
  if (spec.kind == "oracle")
    return std::make_unique<relabel::SyntheticOracle>(spec.oracle_accuracy,
                                                      mix_seed(spec.oracle_seed, replicate));
  if (spec.kind == "cached") return std::make_unique<relabel::CachedFile>(spec.cache_path);
  if (spec.kind == "http") return std::make_unique<relabel::HttpLlm>(spec.http);
  throw ConfigError("config: unknown relabeler kind '" + spec.kind + "'");
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double achieved_noise = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<std::size_t> selected_clean;
  std::optional<std::size_t> relabeled_count;
  std::optional<double> test_accuracy;
  std::optional<double> val_accuracy;
  std::optional<double> memo_clean_on_clean;
  std::optional<double> memo_clean_on_noisy;
  std::optional<double> memo_noisy_on_clean;
  std::optional<double> memo_noisy_on_noisy;
  std::optional<double> memo_combined_on_clean;
  std::optional<double> memo_combined_on_noisy;
};

// Runs the full pipeline for one replicate. When `out_dir` is non-empty the
// stage artifacts (corruption records, selection, epoch logs, checkpoints,
// relabeled set) are written beneath it.
inline SeedOutcome run_one_seed(const ExperimentConfig& cfg, std::uint64_t replicate,
                                const std::string& out_dir = "") {
  SeedOutcome outcome;
  outcome.seed = replicate;
  try {
    const SeedData sd = prepare_seed_data(cfg, replicate);
    outcome.achieved_noise = sd.achieved_noise;
    const bool save = !out_dir.empty();
    if (save) {
      std::filesystem::create_directories(out_dir);
      noise::save_records(sd.records, sd.train.label_names, out_dir + "/records.csv");
    }

    Matrix final_weight;
    if (cfg.ablation.no_nld) {
      stage2::Stage2Config s2 = cfg.stage2;
      s2.seed = mix_seed(cfg.stage2.seed, replicate);
      const stage2::ClassifierModel model = baseline::train_base(sd.train, s2);
      final_weight = model.weight;
      if (save) save_linear_checkpoint(model.weight, model.seed, out_dir + "/classifier.json");
    } else {
      const std::unique_ptr<relabel::Backend> backend = make_backend(cfg.relabeler, replicate);
      detect::DetectorConfig dcfg = cfg.detector;
      dcfg.seed = mix_seed(cfg.detector.seed, replicate);
      dcfg.use_l_lora = !cfg.ablation.no_l_lora;
      dcfg.use_l_detector = !cfg.ablation.no_l_detector;
      dcfg.use_l_ce = !cfg.ablation.no_l_ce;
      const detect::DetectorResult det = detect::train_detector(sd.train, dcfg, *backend);
      outcome.selected_clean = det.selection.clean_indices.size();
      if (save) {
        detect::save_selection(det.selection, sd.train, out_dir + "/selection.csv");
        detect::save_epoch_logs(det.epochs, out_dir + "/epochs.jsonl");
        save_checkpoint(det.model, out_dir + "/detector.json");
      }
      if (sd.train.has_true_labels() && !data::clean_positions(sd.train).empty()) {
        const PrecisionRecall pr = precision_recall(det.selection.clean_indices, sd.train);
        outcome.precision = pr.precision;
        outcome.recall = pr.recall;
      }
      if (!det.epochs.empty()) {
        const detect::EpochLog& last = det.epochs.back();
        outcome.memo_clean_on_clean = last.memo_clean_on_clean;
        outcome.memo_clean_on_noisy = last.memo_clean_on_noisy;
        outcome.memo_noisy_on_clean = last.memo_noisy_on_clean;
        outcome.memo_noisy_on_noisy = last.memo_noisy_on_noisy;
        outcome.memo_combined_on_clean = last.memo_combined_on_clean;
        outcome.memo_combined_on_noisy = last.memo_combined_on_noisy;
      }

      if (cfg.ablation.no_ct) {
        final_weight = effective_weight(det.model, AdapterVariant::Clean);
      } else {
        relabel::RelabeledSet relabeled;
        if (!cfg.ablation.no_ns) {
          relabeled = stage2::relabel_noisy(det.selection, sd.train, *backend,
                                            cfg.relabeler.demos_per_class,
                                            mix_seed(cfg.stage2.seed, replicate));
          if (save) stage2::save_relabeled(relabeled, sd.train, out_dir + "/relabeled.csv");
        }
        outcome.relabeled_count = relabeled.entries.size();
        stage2::Stage2Config s2 = cfg.stage2;
        s2.seed = mix_seed(cfg.stage2.seed, replicate);
        const stage2::ClassifierModel model =
            stage2::train_classifier(sd.train, det.selection.clean_indices, relabeled, s2);
        final_weight = model.weight;
        if (save)
          save_linear_checkpoint(model.weight, model.seed, out_dir + "/classifier.json");
      }
    }

    if (sd.test.size() > 0) outcome.test_accuracy = test_accuracy(final_weight, sd.test);
    if (sd.val.size() > 0) outcome.val_accuracy = test_accuracy(final_weight, sd.val);
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.error = e.what();
    std::cerr << "[delora] seed " << replicate << " failed: " << e.what() << '\n';
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Aggregation and reports
// ---------------------------------------------------------------------------

struct Aggregate {
  double mean = 0.0;
  double std_dev = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;
};

inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.n = values.size();
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std_dev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

struct RunReport {
  ExperimentConfig config;
  std::vector<SeedOutcome> outcomes;
  nlohmann::json metrics;  // byte-stable: no wall clock, no paths
  double wall_seconds = 0.0;
};

namespace detail {

inline nlohmann::json outcome_to_json(const SeedOutcome& o) {
  nlohmann::json j;
  j["seed"] = o.seed;
  j["ok"] = o.ok;
  if (!o.ok) j["error"] = o.error;
  j["achieved_noise"] = o.achieved_noise;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  if (o.selected_clean) j["selected_clean"] = *o.selected_clean;
  if (o.relabeled_count) j["relabeled_count"] = *o.relabeled_count;
  put("precision", o.precision);
  put("recall", o.recall);
  put("test_accuracy", o.test_accuracy);
  put("val_accuracy", o.val_accuracy);
  put("memo_clean_on_clean", o.memo_clean_on_clean);
  put("memo_clean_on_noisy", o.memo_clean_on_noisy);
  put("memo_noisy_on_clean", o.memo_noisy_on_clean);
  put("memo_noisy_on_noisy", o.memo_noisy_on_noisy);
  put("memo_combined_on_clean", o.memo_combined_on_clean);
  put("memo_combined_on_noisy", o.memo_combined_on_noisy);
  return j;
}

inline void add_aggregate(nlohmann::json& agg, const char* key,
                          const std::vector<SeedOutcome>& outcomes,
                          std::optional<double> SeedOutcome::*field) {
  std::vector<double> values;
  for (const SeedOutcome& o : outcomes)
    if (o.ok && o.*field) values.push_back(*(o.*field));
  if (values.empty()) return;
  const Aggregate a = aggregate(values);
  agg[key] = {{"mean", a.mean}, {"std", a.std_dev}, {"n", a.n}};
}

}  // namespace detail

inline nlohmann::json metrics_to_json(const ExperimentConfig& cfg,
                                      const std::vector<SeedOutcome>& outcomes) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config"] = to_json(cfg);
  nlohmann::json seeds = nlohmann::json::array();
  for (const SeedOutcome& o : outcomes) seeds.push_back(detail::outcome_to_json(o));
  j["seeds"] = seeds;

  nlohmann::json agg = nlohmann::json::object();
  std::size_t succeeded = 0;
  std::vector<double> noise_values;
  for (const SeedOutcome& o : outcomes)
    if (o.ok) {
      ++succeeded;
      noise_values.push_back(o.achieved_noise);
    }
  agg["seeds_succeeded"] = succeeded;
  if (!noise_values.empty()) {
    const Aggregate a = aggregate(noise_values);
    agg["achieved_noise"] = {{"mean", a.mean}, {"std", a.std_dev}, {"n", a.n}};
  }
  detail::add_aggregate(agg, "precision", outcomes, &SeedOutcome::precision);
  detail::add_aggregate(agg, "recall", outcomes, &SeedOutcome::recall);
  detail::add_aggregate(agg, "test_accuracy", outcomes, &SeedOutcome::test_accuracy);
  detail::add_aggregate(agg, "val_accuracy", outcomes, &SeedOutcome::val_accuracy);
  j["aggregate"] = agg;
  return j;
}

// Runs every configured seed, writes per-seed artifacts plus metrics.json
// (byte-stable) and report.json (adds wall clock and artifact paths).
inline RunReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.config = cfg;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (std::uint64_t seed : cfg.seeds) {
    const std::string seed_dir =
        out_dir.empty() ? "" : out_dir + "/seed_" + std::to_string(seed);
    report.outcomes.push_back(run_one_seed(cfg, seed, seed_dir));
  }
  report.metrics = metrics_to_json(cfg, report.outcomes);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!out_dir.empty()) {
    delora::detail::write_json_file(report.metrics, out_dir + "/metrics.json");
    nlohmann::json full = report.metrics;
    full["wall_clock_seconds"] = report.wall_seconds;
    nlohmann::json artifacts = nlohmann::json::object();
    for (const SeedOutcome& o : report.outcomes) {
      const std::string prefix = "seed_" + std::to_string(o.seed);
      nlohmann::json files = nlohmann::json::array();
      for (const char* name :
           {"records.csv", "selection.csv", "epochs.jsonl", "detector.json", "relabeled.csv",
            "classifier.json"}) {
        if (std::filesystem::exists(out_dir + "/" + prefix + "/" + name))
          files.push_back(prefix + "/" + name);
      }
      artifacts[prefix] = files;
    }
    full["artifacts"] = artifacts;
    full["out_dir"] = std::filesystem::absolute(out_dir).string();
    delora::detail::write_json_file(full, out_dir + "/report.json");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

// Cartesian grid over the schedule exponents, the detector learning rate,
// and the noise ratio. Empty dimensions fall back to the base config value.
struct SweepGrid {
  std::vector<double> h1;
  std::vector<double> h2;
  std::vector<double> learning_rate;
  std::vector<double> epsilon;
};

struct SweepResult {
  std::vector<RunReport> runs;
  nlohmann::json summary;
};

inline SweepResult sweep(const ExperimentConfig& base, const SweepGrid& grid,
                         const std::string& out_dir) {
  validate(base);
  auto axis = [](const std::vector<double>& v, double fallback) {
    return v.empty() ? std::vector<double>{fallback} : v;
  };
  const std::vector<double> h1s = axis(grid.h1, base.detector.h1);
  const std::vector<double> h2s = axis(grid.h2, base.detector.h2);
  const std::vector<double> lrs = axis(grid.learning_rate, base.detector.learning_rate);
  const std::vector<double> epss = axis(grid.epsilon, base.noise.ratio);

  // Rank by validation accuracy when the config carries a validation split,
  // otherwise by test accuracy.
  const bool has_val = base.data.kind == "synthetic" ? base.data.val_per_class > 0
                                                     : base.data.val_fraction > 0.0;
  const char* metric = has_val ? "val_accuracy" : "test_accuracy";

  SweepResult result;
  nlohmann::json points = nlohmann::json::array();
  std::size_t index = 0;
  for (double eps : epss)
    for (double h1 : h1s)
      for (double h2 : h2s)
        for (double lr : lrs) {
          ExperimentConfig cfg = base;
          cfg.noise.ratio = eps;
          cfg.detector.h1 = h1;
          cfg.detector.h2 = h2;
          cfg.detector.learning_rate = lr;
          const std::string point_dir =
              out_dir.empty() ? "" : out_dir + "/point_" + std::to_string(index);
          RunReport run = run_experiment(cfg, point_dir);
          nlohmann::json row{{"point", index}, {"epsilon", eps},   {"h1", h1},
                             {"h2", h2},       {"learning_rate", lr}};
          const nlohmann::json& agg = run.metrics.at("aggregate");
          if (agg.contains(metric)) row["score"] = agg.at(metric).at("mean");
          if (agg.contains("test_accuracy"))
            row["test_accuracy"] = agg.at("test_accuracy").at("mean");
          if (agg.contains("val_accuracy"))
            row["val_accuracy"] = agg.at("val_accuracy").at("mean");
          points.push_back(row);
          result.runs.push_back(std::move(run));
          ++index;
        }

  // First-maximum argmax per noise ratio, in point order.
  nlohmann::json best = nlohmann::json::array();
  for (double eps : epss) {
    std::optional<std::size_t> best_point;
    double best_score = 0.0;
    for (const nlohmann::json& row : points) {
      if (row.at("epsilon").get<double>() != eps || !row.contains("score")) continue;
      const double s = row.at("score").get<double>();
      if (!best_point || s > best_score) {
        best_point = row.at("point").get<std::size_t>();
        best_score = s;
      }
    }
    if (best_point)
      best.push_back({{"epsilon", eps}, {"point", *best_point}, {"score", best_score}});
  }

  result.summary = {{"schema_version", 1},
                    {"ranking_metric", metric},
                    {"points", points},
                    {"best_per_epsilon", best}};
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    delora::detail::write_json_file(result.summary, out_dir + "/sweep_summary.json");
  }
  return result;
}

}  // namespace delora::harness
