// Comparison selectors and the no-handling reference classifier:
//  - small-loss selection via a two-component 1-D Gaussian mixture fit to
//    per-sample warm-up losses,
//  - direct pseudo-label agreement ("does the labeler agree with the
//    observed label?"),
//  - plain cross-entropy training on the full noisy dataset.
// All three reuse the pipeline's own metric code so comparisons are
// apples-to-apples.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "delora/adapter.hpp"
#include "delora/core_math.hpp"
#include "delora/dataset.hpp"
#include "delora/detector.hpp"
#include "delora/relabel.hpp"
#include "delora/stage2.hpp"

namespace delora::baseline {

// ---------------------------------------------------------------------------
// Two-component 1-D Gaussian mixture
// ---------------------------------------------------------------------------

struct GmmComponent {
  double mean = 0.0;
  double variance = 1.0;
  double weight = 0.5;
};

// Variances never drop below this floor; it keeps EM from collapsing onto
// near-duplicate values while preserving the per-iteration likelihood
// guarantee (the floored M-step is still the constrained maximizer).
inline constexpr double kGmmVarianceFloor = 1e-9;

struct Gmm1d {
  GmmComponent components[2];
  // Log-likelihood after each EM iteration, recorded for invariant checks.
  std::vector<double> log_likelihood_trace;

  std::size_t lower_mean_index() const {
    return components[0].mean <= components[1].mean ? 0 : 1;
  }
};

namespace detail {

inline double log_normal_pdf(double x, double mean, double variance) {
  const double diff = x - mean;
  return -0.5 * (std::log(2.0 * 3.141592653589793238462643383279502884 * variance) +
                 diff * diff / variance);
}

// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace detail

// Posterior probability that `x` belongs to component `k`.
inline double gmm_posterior(const Gmm1d& g, double x, std::size_t k) {
  require(k < 2, "gmm_posterior: component index out of range");
  const double l0 = std::log(g.components[0].weight) +
                    detail::log_normal_pdf(x, g.components[0].mean, g.components[0].variance);
  const double l1 = std::log(g.components[1].weight) +
                    detail::log_normal_pdf(x, g.components[1].mean, g.components[1].variance);
  const double norm = detail::log_add(l0, l1);
  return std::exp((k == 0 ? l0 : l1) - norm);
}

// Posterior of the lower-mean ("small-loss") component.
inline double gmm_posterior_lower(const Gmm1d& g, double x) {
  return gmm_posterior(g, x, g.lower_mean_index());
}

// Fits a two-component mixture by expectation-maximization. Initialization
// splits the sorted values at the median; iteration stops when the
// log-likelihood improves by less than `tol` or after `iters` rounds.
inline Gmm1d fit_gmm_em(const std::vector<double>& values, std::size_t iters = 100,
                        double tol = 1e-8) {
  require(values.size() >= 2, "fit_gmm_em: need at least two values");
  require(iters >= 1, "fit_gmm_em: iters must be positive");
  require(tol >= 0.0, "fit_gmm_em: tol must be nonnegative");
  for (double v : values)
    require(std::isfinite(v), "fit_gmm_em: values must be finite");
  const bool all_same =
      std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
  if (all_same) throw ContractViolation("fit_gmm_em: degenerate input, all values identical");

  const std::size_t n = values.size();
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = n / 2;

  Gmm1d g;
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t lo = (k == 0) ? 0 : mid;
    const std::size_t hi = (k == 0) ? mid : n;
    const double count = static_cast<double>(hi - lo);
    double mean = 0.0;
    for (std::size_t i = lo; i < hi; ++i) mean += sorted[i];
    mean /= count;
    double var = 0.0;
    for (std::size_t i = lo; i < hi; ++i) var += (sorted[i] - mean) * (sorted[i] - mean);
    var = std::max(var / count, kGmmVarianceFloor);
    g.components[k] = {mean, var, count / static_cast<double>(n)};
  }

  std::vector<double> resp0(n);  // responsibility of component 0 per value
  for (std::size_t iter = 0; iter < iters; ++iter) {
    // E-step in the log domain.
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double l0 =
          std::log(g.components[0].weight) +
          detail::log_normal_pdf(values[i], g.components[0].mean, g.components[0].variance);
      const double l1 =
          std::log(g.components[1].weight) +
          detail::log_normal_pdf(values[i], g.components[1].mean, g.components[1].variance);
      const double norm = detail::log_add(l0, l1);
      resp0[i] = std::exp(l0 - norm);
      ll += norm;
    }
    if (!g.log_likelihood_trace.empty()) {
      const double prev = g.log_likelihood_trace.back();
      require(ll >= prev - 1e-9 * (1.0 + std::abs(prev)),
              "fit_gmm_em: log-likelihood decreased");
      if (ll - prev < tol) {
        g.log_likelihood_trace.push_back(ll);
        break;
      }
    }
    g.log_likelihood_trace.push_back(ll);

    // M-step with the variance floor.
    for (std::size_t k = 0; k < 2; ++k) {
      double total = 0.0;
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = (k == 0) ? resp0[i] : 1.0 - resp0[i];
        total += r;
        mean += r * values[i];
      }
      if (total <= 0.0) continue;  // component vanished; keep its parameters
      mean /= total;
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = (k == 0) ? resp0[i] : 1.0 - resp0[i];
        var += r * (values[i] - mean) * (values[i] - mean);
      }
      g.components[k].mean = mean;
      g.components[k].variance = std::max(var / total, kGmmVarianceFloor);
      g.components[k].weight = total / static_cast<double>(n);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Baseline selections
// ---------------------------------------------------------------------------

struct BaselineSelection {
  std::string method;
  std::vector<std::size_t> clean_indices;
  std::vector<std::size_t> noisy_indices;
  std::vector<double> score;  // per-position clean score; clean iff > 0.5

  bool is_clean(std::size_t pos) const { return score.at(pos) > 0.5; }
};

// Small-loss rule: a sample is clean when the lower-mean mixture component
// claims strictly more than half of its posterior mass.
inline BaselineSelection select_small_loss(const std::vector<double>& losses,
                                           const Gmm1d& gmm) {
  BaselineSelection out;
  out.method = "gmm_small_loss";
  out.score.reserve(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double p = gmm_posterior_lower(gmm, losses[i]);
    out.score.push_back(p);
    if (p > 0.5)
      out.clean_indices.push_back(i);
    else
      out.noisy_indices.push_back(i);
  }
  return out;
}

struct WarmupResult {
  DualAdapterModel model;
  std::vector<double> losses;  // per-sample combined-variant cross-entropy
};

// Replays the detector's warm-up phase: identical initialization, shuffle
// stream, batch order, and gradient application, for `epochs` epochs. With
// `epochs == cfg.warmup_epochs` the returned model is bitwise the detector's
// state at the end of warm-up.
inline WarmupResult warmup_losses(const data::Dataset& d, const detect::DetectorConfig& cfg,
                                  std::size_t epochs) {
  detect::validate(cfg);
  require(d.size() > 0, "warmup_losses: empty dataset");
  require(d.num_classes >= 2, "warmup_losses: need at least two classes");
  require(epochs >= 1, "warmup_losses: need at least one epoch");

  WarmupResult out;
  out.model = make_model(d.num_classes, d.dim, cfg.rank, cfg.seed, cfg.w0_std);
  Rng shuffle_rng(split_seed(cfg.seed, "detector.shuffle"));
  ParamSnapshot snap = take_snapshot(out.model, 0);

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t t = 1; t <= epochs; ++t) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < d.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, d.size());
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      DualGrad grad = zero_grad(out.model);
      if (cfg.use_l_ce) accumulate(grad, detect::backward_ce_combined(out.model, d, batch).grad);
      if (cfg.use_l_lora)
        accumulate(grad, detect::grad_loss_lora(out.model, snap, t, cfg.h1, cfg.h2),
                   cfg.lora_weight);
      apply_grad(out.model, grad, cfg.learning_rate);
    }
    snap = take_snapshot(out.model, t);
  }

  const Matrix w = effective_weight(out.model, AdapterVariant::Combined);
  out.losses.reserve(d.size());
  for (const data::Sample& s : d.samples)
    out.losses.push_back(cross_entropy(softmax(mat_vec(w, s.features)), s.observed_label));
  return out;
}

inline WarmupResult warmup_losses(const data::Dataset& d, const detect::DetectorConfig& cfg) {
  return warmup_losses(d, cfg, cfg.warmup_epochs);
}

// End-to-end small-loss baseline on a dataset.
inline BaselineSelection small_loss_select(const data::Dataset& d,
                                           const detect::DetectorConfig& cfg) {
  const WarmupResult warm = warmup_losses(d, cfg);
  const Gmm1d gmm = fit_gmm_em(warm.losses);
  return select_small_loss(warm.losses, gmm);
}

// Agreement rule: a sample is clean when the labeling backend's zero-shot
// pseudo-label matches the observed label. Backend failures mark the sample
// noisy with a warning.
inline BaselineSelection llm_detection(const data::Dataset& d, relabel::Backend& backend) {
  require(d.size() > 0, "llm_detection: empty dataset");
  BaselineSelection out;
  out.method = "llm_detection";
  out.score.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const data::Sample& s = d.samples[i];
    bool agrees = false;
    try {
      const std::string got = relabel::pseudo_label(backend, s, d.label_names);
      agrees = relabel::label_index_of(d.label_names, got, s.id) == s.observed_label;
    } catch (const relabel::PseudoLabelUnavailable& e) {
      std::cerr << "[delora] warning: " << e.what() << "; marking sample noisy\n";
    }
    out.score.push_back(agrees ? 1.0 : 0.0);
    if (agrees)
      out.clean_indices.push_back(i);
    else
      out.noisy_indices.push_back(i);
  }
  return out;
}

// No-handling reference: plain cross-entropy training on every sample.
inline stage2::ClassifierModel train_base(const data::Dataset& d,
                                          const stage2::Stage2Config& cfg) {
  require(d.size() > 0, "train_base: empty dataset");
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  return stage2::train_classifier(d, all, {}, cfg);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// Baseline-selection CSV: sample id, clean score, clean flag, method tag.
inline void save_baseline_selection(const BaselineSelection& sel, const data::Dataset& d,
                                    const std::string& path) {
  require(sel.score.size() == d.size(), "save_baseline_selection: size mismatch");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "index,score,is_clean,method\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    out << d.samples[i].id << ',' << data::detail::format_double(sel.score[i]) << ','
        << (sel.is_clean(i) ? 1 : 0) << ',' << data::detail::csv_escape(sel.method) << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

inline BaselineSelection load_baseline_selection(const data::Dataset& d,
                                                 const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path, 0);
  const auto records = data::detail::parse_csv(in);
  if (records.empty() ||
      records[0].fields != std::vector<std::string>{"index", "score", "is_clean", "method"})
    throw IngestError("baseline file must start with index,score,is_clean,method", 1);
  if (records.size() != d.size() + 1)
    throw IngestError("baseline row count does not match the dataset", 0);

  std::unordered_map<std::size_t, std::size_t> id_to_pos;
  for (std::size_t i = 0; i < d.size(); ++i) id_to_pos.emplace(d.samples[i].id, i);

  BaselineSelection sel;
  sel.score.assign(d.size(), -1.0);
  std::vector<bool> seen(d.size(), false);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != 4) throw IngestError("baseline row needs 4 fields", rec.line);
    const std::size_t id = data::detail::parse_index(rec.fields[0], rec.line, "index");
    const auto it = id_to_pos.find(id);
    if (it == id_to_pos.end())
      throw IngestError("baseline references unknown sample id " + std::to_string(id),
                        rec.line);
    const std::size_t pos = it->second;
    if (seen[pos])
      throw IngestError("duplicate baseline row for id " + std::to_string(id), rec.line);
    seen[pos] = true;
    const double score = data::detail::parse_double(rec.fields[1], rec.line, "score");
    const std::string& flag = rec.fields[2];
    if (flag != "0" && flag != "1") throw IngestError("is_clean must be 0 or 1", rec.line);
    if ((flag == "1") != (score > 0.5))
      throw IngestError("is_clean flag disagrees with score", rec.line);
    if (r == 1)
      sel.method = rec.fields[3];
    else if (sel.method != rec.fields[3])
      throw IngestError("inconsistent method column", rec.line);
    sel.score[pos] = score;
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (sel.score[i] > 0.5)
      sel.clean_indices.push_back(i);
    else
      sel.noisy_indices.push_back(i);
  }
  return sel;
}

}  // namespace delora::baseline
