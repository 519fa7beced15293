// Command-line front end. Every subcommand reads and writes the documented
// CSV/JSON artifact formats, so pipeline stages compose through files:
//
//   delora gen-data     synthesize a Gaussian-cluster dataset CSV
//   delora inject-noise corrupt labels (symmetric/asymmetric/instance)
//   delora detect       train the dual-adapter detector, emit the selection
//   delora relabel      pseudo-label the detected-noisy samples
//   delora train        train the final classifier from selection + relabels
//   delora baseline     comparison selectors: gmm | llm | base
//   delora evaluate     accuracy of a saved classifier on a dataset CSV
//   delora run          full multi-seed experiment from a JSON config
//   delora sweep        hyperparameter grid around a base config
//   delora report       human-readable summary of a metrics/report JSON
//
// Exit codes: 0 success; 2 configuration, argument, or input-format error;
// 3 stage failure at runtime.
//
// The HTTP relabeler reads its bearer token from the environment variable
// named by --api-key-env (default DELORA_API_KEY).

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "delora/baselines.hpp"
#include "delora/harness.hpp"

namespace {

using namespace delora;

// Shared flags describing a pseudo-labeling backend.
struct BackendArgs {
  std::string kind = "oracle";
  double oracle_accuracy = 0.9;
  std::uint64_t oracle_seed = 0;
  std::string cache_path;
  relabel::HttpLlmConfig http;

  void attach(CLI::App* cmd) {
    cmd->add_option("--backend", kind, "Labeling backend: oracle, cached, or http")
        ->check(CLI::IsMember({"oracle", "cached", "http"}))
        ->capture_default_str();
    cmd->add_option("--oracle-accuracy", oracle_accuracy,
                    "Probability the synthetic oracle answers correctly")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--oracle-seed", oracle_seed, "Seed for the synthetic oracle")
        ->capture_default_str();
    cmd->add_option("--cache", cache_path, "JSON id->label map for the cached backend");
    cmd->add_option("--http-host", http.host, "HTTP backend host")->capture_default_str();
    cmd->add_option("--http-port", http.port, "HTTP backend port")->capture_default_str();
    cmd->add_option("--http-path", http.path, "HTTP backend request path")
        ->capture_default_str();
    cmd->add_option("--http-model", http.model, "Model name sent to the HTTP backend")
        ->capture_default_str();
    cmd->add_option("--http-timeout-ms", http.timeout_ms, "HTTP timeout in milliseconds")
        ->capture_default_str();
    cmd->add_option("--http-retries", http.retries, "HTTP retry count")
        ->capture_default_str();
    cmd->add_option("--http-cache", http.cache_path,
                    "Optional JSON file persisting HTTP responses");
    cmd->add_option("--api-key-env", http.api_key_env,
                    "Environment variable holding the HTTP bearer token")
        ->capture_default_str();
  }

  std::unique_ptr<relabel::Backend> make() const {
    harness::BackendSpec spec;
    spec.kind = kind;
    spec.oracle_accuracy = oracle_accuracy;
    spec.oracle_seed = oracle_seed;
    spec.cache_path = cache_path;
    spec.http = http;
    if (kind == "cached" && cache_path.empty())
      throw ConfigError("--cache is required with --backend cached");
    // The CLI passes the oracle seed through unmixed: single-stage commands
    // are one replicate.
    if (kind == "oracle")
      return std::make_unique<relabel::SyntheticOracle>(oracle_accuracy, oracle_seed);
    return harness::make_backend(spec, 0);
  }
};

// Shared flags for loading a dataset CSV.
struct LoadArgs {
  std::string path;
  std::size_t text_dim = 512;
  std::vector<std::string> labels;

  void attach(CLI::App* cmd, const char* what = "Dataset CSV") {
    cmd->add_option("--data", path, what)->required();
    cmd->add_option("--text-dim", text_dim,
                    "Feature dimension for hashed text datasets")
        ->capture_default_str();
    cmd->add_option("--labels", labels,
                    "Pinned class vocabulary (comma separated, in index order)")
        ->delimiter(',');
  }

  data::Dataset load() const {
    data::LoadOptions opt;
    opt.text_dim = text_dim;
    opt.labels = labels;
    return data::load_csv(path, opt);
  }
};

std::vector<std::size_t> all_positions(const data::Dataset& d) {
  std::vector<std::size_t> out(d.size());
  std::iota(out.begin(), out.end(), 0);
  return out;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(1) << '\n'; }

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

int cmd_gen_data(std::size_t classes, std::size_t dim, std::size_t per_class,
                 double separation, std::uint64_t seed, const std::string& out) {
  const data::Dataset d = data::gen_gaussian_clusters(classes, dim, per_class, separation,
                                                      seed);
  data::save_csv(d, out);
  print_json({{"written", out}, {"samples", d.size()}, {"classes", d.num_classes}});
  return 0;
}

int cmd_inject_noise(const LoadArgs& in, const std::string& kind, double ratio,
                     std::uint64_t seed, const noise::ProxyConfig& proxy,
                     const std::string& out, const std::string& records_out) {
  const data::Dataset d = in.load();
  noise::NoiseSpec spec;
  spec.kind = noise::parse_noise_kind(kind);
  spec.ratio = ratio;
  spec.seed = seed;
  noise::ProxyConfig p = proxy;
  p.seed = split_seed(seed, "proxy");
  const noise::NoiseResult res = noise::inject_noise(d, spec, p);
  data::save_csv(res.dataset, out);
  if (!records_out.empty())
    noise::save_records(res.records, res.dataset.label_names, records_out);
  print_json({{"written", out},
              {"records", records_out},
              {"achieved_ratio", res.achieved_ratio},
              {"corrupted", res.records.size()}});
  return 0;
}

int cmd_detect(const LoadArgs& in, const detect::DetectorConfig& cfg,
               const BackendArgs& backend, const std::string& selection_out,
               const std::string& epochs_out, const std::string& checkpoint_out) {
  const data::Dataset d = in.load();
  const std::unique_ptr<relabel::Backend> b = backend.make();
  const detect::DetectorResult res = detect::train_detector(d, cfg, *b);
  detect::save_selection(res.selection, d, selection_out);
  if (!epochs_out.empty()) detect::save_epoch_logs(res.epochs, epochs_out);
  if (!checkpoint_out.empty()) save_checkpoint(res.model, checkpoint_out);
  nlohmann::json summary{{"selection", selection_out},
                         {"clean", res.selection.clean_indices.size()},
                         {"noisy", res.selection.noisy_indices.size()}};
  if (d.has_true_labels() && !data::clean_positions(d).empty()) {
    const harness::PrecisionRecall pr =
        harness::precision_recall(res.selection.clean_indices, d);
    summary["precision"] = pr.precision;
    summary["recall"] = pr.recall;
  }
  print_json(summary);
  return 0;
}

int cmd_relabel(const LoadArgs& in, const std::string& selection_path,
                const BackendArgs& backend, std::size_t demos_per_class,
                std::uint64_t seed, const std::string& out) {
  const data::Dataset d = in.load();
  const detect::SelectionResult sel = detect::load_selection(d, selection_path);
  const std::unique_ptr<relabel::Backend> b = backend.make();
  const relabel::RelabeledSet r = stage2::relabel_noisy(sel, d, *b, demos_per_class, seed);
  stage2::save_relabeled(r, d, out);
  print_json({{"written", out},
              {"relabeled", r.entries.size()},
              {"noisy", sel.noisy_indices.size()}});
  return 0;
}

int cmd_train(const LoadArgs& in, const std::string& selection_path,
              const std::string& relabeled_path, const stage2::Stage2Config& cfg,
              const std::string& out) {
  const data::Dataset d = in.load();
  std::vector<std::size_t> clean;
  relabel::RelabeledSet relabeled;
  if (selection_path.empty()) {
    clean = all_positions(d);
  } else {
    const detect::SelectionResult sel = detect::load_selection(d, selection_path);
    clean = sel.clean_indices;
  }
  if (!relabeled_path.empty()) relabeled = stage2::load_relabeled(d, relabeled_path);
  const stage2::ClassifierModel model = stage2::train_classifier(d, clean, relabeled, cfg);
  save_linear_checkpoint(model.weight, model.seed, out);
  print_json({{"written", out},
              {"clean", clean.size()},
              {"relabeled", relabeled.entries.size()}});
  return 0;
}

int cmd_baseline_gmm(const LoadArgs& in, const detect::DetectorConfig& cfg,
                     std::size_t warmup_override, const std::string& out) {
  const data::Dataset d = in.load();
  const std::size_t epochs = warmup_override > 0 ? warmup_override : cfg.warmup_epochs;
  const baseline::WarmupResult warm = baseline::warmup_losses(d, cfg, epochs);
  const baseline::Gmm1d gmm = baseline::fit_gmm_em(warm.losses);
  const baseline::BaselineSelection sel = baseline::select_small_loss(warm.losses, gmm);
  baseline::save_baseline_selection(sel, d, out);
  nlohmann::json summary{{"written", out},
                         {"method", sel.method},
                         {"clean", sel.clean_indices.size()},
                         {"noisy", sel.noisy_indices.size()}};
  if (d.has_true_labels() && !data::clean_positions(d).empty()) {
    const harness::PrecisionRecall pr = harness::precision_recall(sel.clean_indices, d);
    summary["precision"] = pr.precision;
    summary["recall"] = pr.recall;
  }
  print_json(summary);
  return 0;
}

int cmd_baseline_llm(const LoadArgs& in, const BackendArgs& backend,
                     const std::string& out) {
  const data::Dataset d = in.load();
  const std::unique_ptr<relabel::Backend> b = backend.make();
  const baseline::BaselineSelection sel = baseline::llm_detection(d, *b);
  baseline::save_baseline_selection(sel, d, out);
  print_json({{"written", out},
              {"method", sel.method},
              {"clean", sel.clean_indices.size()},
              {"noisy", sel.noisy_indices.size()}});
  return 0;
}

int cmd_baseline_base(const LoadArgs& in, const stage2::Stage2Config& cfg,
                      const std::string& out) {
  const data::Dataset d = in.load();
  const stage2::ClassifierModel model = baseline::train_base(d, cfg);
  save_linear_checkpoint(model.weight, model.seed, out);
  print_json({{"written", out}, {"samples", d.size()}});
  return 0;
}

int cmd_evaluate(const LoadArgs& in, const std::string& model_path,
                 const std::string& selection_path) {
  const data::Dataset d = in.load();
  nlohmann::json summary;
  if (!model_path.empty()) {
    const LinearCheckpoint ckpt = load_linear_checkpoint(model_path);
    summary["model"] = model_path;
    summary["accuracy"] = harness::test_accuracy(ckpt.weight, d);
  }
  if (!selection_path.empty()) {
    const detect::SelectionResult sel = detect::load_selection(d, selection_path);
    const harness::PrecisionRecall pr = harness::precision_recall(sel.clean_indices, d);
    summary["selection"] = selection_path;
    summary["precision"] = pr.precision;
    summary["recall"] = pr.recall;
  }
  if (summary.empty())
    throw ConfigError("evaluate: provide --model and/or --selection");
  print_json(summary);
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  const harness::ExperimentConfig cfg = harness::parse_experiment_file(config_path);
  const harness::RunReport report = harness::run_experiment(cfg, out_dir);
  print_json(report.metrics.at("aggregate"));
  std::size_t failed = 0;
  for (const harness::SeedOutcome& o : report.outcomes)
    if (!o.ok) ++failed;
  if (failed == report.outcomes.size())
    throw std::runtime_error("every seed failed; see per-seed errors above");
  if (failed > 0)
    std::cerr << "[delora] warning: " << failed << " of " << report.outcomes.size()
              << " seeds failed\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const harness::SweepGrid& grid,
              const std::string& out_dir) {
  const harness::ExperimentConfig cfg = harness::parse_experiment_file(config_path);
  const harness::SweepResult res = harness::sweep(cfg, grid, out_dir);
  print_json(res.summary.at("best_per_epsilon"));
  return 0;
}

int cmd_report(const std::string& metrics_path) {
  std::ifstream in(metrics_path);
  if (!in) throw IngestError("cannot open " + metrics_path, 0);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("invalid JSON: ") + e.what(), 0);
  }
  std::ostringstream out;
  out << "experiment summary (" << metrics_path << ")\n";
  if (j.contains("config")) {
    const nlohmann::json& c = j.at("config");
    out << "  noise: " << c.at("noise").at("kind").get<std::string>() << " "
        << c.at("noise").at("ratio").get<double>() << "\n";
    out << "  seeds: " << c.at("seeds").size() << "\n";
  }
  if (j.contains("aggregate")) {
    const nlohmann::json& a = j.at("aggregate");
    out << "  seeds succeeded: " << a.at("seeds_succeeded") << "\n";
    for (const char* key : {"precision", "recall", "test_accuracy", "val_accuracy"}) {
      if (!a.contains(key)) continue;
      out << "  " << key << ": mean " << a.at(key).at("mean").get<double>() << "  std "
          << a.at(key).at("std").get<double>() << "  (n=" << a.at(key).at("n").get<int>()
          << ")\n";
    }
  }
  if (j.contains("seeds")) {
    for (const nlohmann::json& s : j.at("seeds")) {
      out << "  seed " << s.at("seed") << ": " << (s.at("ok").get<bool>() ? "ok" : "FAILED");
      if (s.contains("test_accuracy"))
        out << "  accuracy " << s.at("test_accuracy").get<double>();
      if (s.contains("error")) out << "  (" << s.at("error").get<std::string>() << ")";
      out << "\n";
    }
  }
  std::cout << out.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label detection and denoised training pipeline"};
  app.require_subcommand(1);

  // gen-data ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "Synthesize a Gaussian-cluster dataset CSV");
  std::size_t gen_classes = 4, gen_dim = 32, gen_per_class = 500;
  double gen_separation = 3.0;
  std::uint64_t gen_seed = 17;
  std::string gen_out;
  gen->add_option("--classes", gen_classes, "Number of classes")->capture_default_str();
  gen->add_option("--dim", gen_dim, "Feature dimension")->capture_default_str();
  gen->add_option("--per-class", gen_per_class, "Samples per class")->capture_default_str();
  gen->add_option("--separation", gen_separation, "Cluster-center separation")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  // inject-noise --------------------------------------------------------------
  auto* inject = app.add_subcommand("inject-noise", "Corrupt dataset labels");
  LoadArgs inject_in;
  inject_in.attach(inject);
  std::string inject_kind = "symmetric";
  double inject_ratio = 0.4;
  std::uint64_t inject_seed = 1;
  noise::ProxyConfig inject_proxy;
  std::string inject_out, inject_records;
  inject->add_option("--kind", inject_kind, "symmetric, asymmetric, or instance")
      ->check(CLI::IsMember({"symmetric", "asymmetric", "instance"}))
      ->capture_default_str();
  inject->add_option("--ratio", inject_ratio, "Target corruption fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  inject->add_option("--seed", inject_seed, "Corruption seed")->capture_default_str();
  inject->add_option("--proxy-epochs", inject_proxy.epochs,
                     "Proxy-model epochs (instance noise)")
      ->capture_default_str();
  inject->add_option("--proxy-lr", inject_proxy.learning_rate,
                     "Proxy-model learning rate (instance noise)")
      ->capture_default_str();
  inject->add_option("--proxy-batch", inject_proxy.batch_size,
                     "Proxy-model batch size (instance noise)")
      ->capture_default_str();
  inject->add_option("--out", inject_out, "Corrupted dataset CSV")->required();
  inject->add_option("--records", inject_records, "Corruption-record CSV (id,original,corrupted)");

  // shared detector options ---------------------------------------------------
  detect::DetectorConfig dcfg;
  auto attach_detector = [&dcfg](CLI::App* cmd) {
    cmd->add_option("--h1", dcfg.h1, "Rising-schedule exponent")->capture_default_str();
    cmd->add_option("--h2", dcfg.h2, "Falling-schedule exponent")->capture_default_str();
    cmd->add_option("--warmup-epochs", dcfg.warmup_epochs, "Warm-up epochs")
        ->capture_default_str();
    cmd->add_option("--epochs", dcfg.total_epochs, "Total detector epochs")
        ->capture_default_str();
    cmd->add_option("--lr", dcfg.learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--batch", dcfg.batch_size, "Batch size")->capture_default_str();
    cmd->add_option("--seed", dcfg.seed, "Training seed")->capture_default_str();
    cmd->add_option("--rank", dcfg.rank, "Adapter rank")->capture_default_str();
    cmd->add_option("--w0-std", dcfg.w0_std, "Frozen-base init std (0 = zero base)")
        ->capture_default_str();
    cmd->add_option("--lora-weight", dcfg.lora_weight,
                    "Scale applied to the parameter-change penalty gradient")
        ->capture_default_str();
    cmd->add_flag("--no-negative-resample",
                  [&dcfg](std::int64_t) { dcfg.negative_resample = false; },
                  "Keep one fixed negative label per sample across epochs");
  };

  // detect --------------------------------------------------------------------
  auto* det = app.add_subcommand("detect", "Train the noisy-label detector");
  LoadArgs det_in;
  det_in.attach(det);
  attach_detector(det);
  BackendArgs det_backend;
  det_backend.attach(det);
  std::string det_selection, det_epochs, det_checkpoint;
  det->add_option("--selection", det_selection, "Output selection CSV")->required();
  det->add_option("--epochs-log", det_epochs, "Output epoch-log JSONL");
  det->add_option("--checkpoint", det_checkpoint, "Output detector checkpoint JSON");

  // relabel ---------------------------------------------------------------------
  auto* rel = app.add_subcommand("relabel", "Pseudo-label the detected-noisy samples");
  LoadArgs rel_in;
  rel_in.attach(rel);
  BackendArgs rel_backend;
  rel_backend.attach(rel);
  std::string rel_selection, rel_out;
  std::size_t rel_demos = 1;
  std::uint64_t rel_seed = 0;
  rel->add_option("--selection", rel_selection, "Selection CSV from detect")->required();
  rel->add_option("--demos-per-class", rel_demos,
                  "In-context demonstrations per class (0 = zero shot)")
      ->capture_default_str();
  rel->add_option("--seed", rel_seed, "Demonstration-sampling seed")->capture_default_str();
  rel->add_option("--out", rel_out, "Output relabeled CSV")->required();

  // shared stage-2 options ------------------------------------------------------
  stage2::Stage2Config s2cfg;
  auto attach_stage2 = [&s2cfg](CLI::App* cmd) {
    cmd->add_option("--epochs", s2cfg.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--lr", s2cfg.learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--batch", s2cfg.batch_size, "Batch size")->capture_default_str();
    cmd->add_option("--rce-log-zero", s2cfg.rce_log_zero,
                    "Value substituted for log 0 in the reversed loss (must be negative)")
        ->capture_default_str();
    cmd->add_option("--seed", s2cfg.seed, "Training seed")->capture_default_str();
    cmd->add_flag("--peft", s2cfg.peft, "Train a low-rank adapter instead of a full matrix");
    cmd->add_option("--rank", s2cfg.rank, "Adapter rank (with --peft)")->capture_default_str();
  };

  // train --------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train the final classifier");
  LoadArgs train_in;
  train_in.attach(train);
  attach_stage2(train);
  std::string train_selection, train_relabeled, train_out;
  train->add_option("--selection", train_selection,
                    "Selection CSV (omit to train on every sample)");
  train->add_option("--relabeled", train_relabeled, "Relabeled CSV from relabel");
  train->add_option("--out", train_out, "Output classifier checkpoint JSON")->required();

  // baseline -------------------------------------------------------------------
  auto* base = app.add_subcommand("baseline", "Comparison selectors and the plain model");
  base->require_subcommand(1);

  auto* bgmm = base->add_subcommand("gmm", "Small-loss selection via a Gaussian mixture");
  LoadArgs bgmm_in;
  bgmm_in.attach(bgmm);
  attach_detector(bgmm);
  std::string bgmm_out;
  std::size_t bgmm_warmup = 0;
  bgmm->add_option("--out", bgmm_out, "Output baseline-selection CSV")->required();
  bgmm->add_option("--loss-epochs", bgmm_warmup,
                   "Warm-up epochs before reading losses (default: --warmup-epochs)");

  auto* bllm = base->add_subcommand("llm", "Agreement-with-backend selection");
  LoadArgs bllm_in;
  bllm_in.attach(bllm);
  BackendArgs bllm_backend;
  bllm_backend.attach(bllm);
  std::string bllm_out;
  bllm->add_option("--out", bllm_out, "Output baseline-selection CSV")->required();

  auto* bbase = base->add_subcommand("base", "Plain training on all samples");
  LoadArgs bbase_in;
  bbase_in.attach(bbase);
  attach_stage2(bbase);
  std::string bbase_out;
  bbase->add_option("--out", bbase_out, "Output classifier checkpoint JSON")->required();

  // evaluate -------------------------------------------------------------------
  auto* eval = app.add_subcommand("evaluate", "Score a classifier and/or a selection");
  LoadArgs eval_in;
  eval_in.attach(eval, "Evaluation dataset CSV");
  std::string eval_model, eval_selection;
  eval->add_option("--model", eval_model, "Classifier checkpoint JSON");
  eval->add_option("--selection", eval_selection,
                   "Selection CSV scored against true labels");

  // run ------------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Full multi-seed experiment from a JSON config");
  std::string run_config, run_out;
  run->add_option("--config", run_config, "Experiment config JSON")->required();
  run->add_option("--out", run_out, "Output directory")->required();

  // sweep ----------------------------------------------------------------------
  auto* swp = app.add_subcommand("sweep", "Grid sweep around a base config");
  std::string swp_config, swp_out;
  harness::SweepGrid grid;
  swp->add_option("--config", swp_config, "Base experiment config JSON")->required();
  swp->add_option("--out", swp_out, "Output directory")->required();
  swp->add_option("--h1", grid.h1, "Rising-schedule exponents")->delimiter(',');
  swp->add_option("--h2", grid.h2, "Falling-schedule exponents")->delimiter(',');
  swp->add_option("--lr", grid.learning_rate, "Detector learning rates")->delimiter(',');
  swp->add_option("--epsilon", grid.epsilon, "Noise ratios")->delimiter(',');

  // report ---------------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "Summarize a metrics.json or report.json");
  std::string rep_metrics;
  rep->add_option("--metrics", rep_metrics, "Metrics or report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_classes, gen_dim, gen_per_class, gen_separation, gen_seed,
                          gen_out);
    if (inject->parsed())
      return cmd_inject_noise(inject_in, inject_kind, inject_ratio, inject_seed,
                              inject_proxy, inject_out, inject_records);
    if (det->parsed())
      return cmd_detect(det_in, dcfg, det_backend, det_selection, det_epochs,
                        det_checkpoint);
    if (rel->parsed())
      return cmd_relabel(rel_in, rel_selection, rel_backend, rel_demos, rel_seed, rel_out);
    if (train->parsed())
      return cmd_train(train_in, train_selection, train_relabeled, s2cfg, train_out);
    if (base->parsed()) {
      if (bgmm->parsed()) return cmd_baseline_gmm(bgmm_in, dcfg, bgmm_warmup, bgmm_out);
      if (bllm->parsed()) return cmd_baseline_llm(bllm_in, bllm_backend, bllm_out);
      if (bbase->parsed()) return cmd_baseline_base(bbase_in, s2cfg, bbase_out);
    }
    if (eval->parsed()) return cmd_evaluate(eval_in, eval_model, eval_selection);
    if (run->parsed()) return cmd_run(run_config, run_out);
    if (swp->parsed()) return cmd_sweep(swp_config, grid, swp_out);
    if (rep->parsed()) return cmd_report(rep_metrics);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const IngestError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const ContractViolation& e) {
    std::cerr << "invalid arguments: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return 3;
  }
}
