#pragma once

// Stage 1: the dual-adapter noisy-label detector. One frozen linear base
// carries two low-rank adapters; the "noisy" adapter's per-sample
// cross-entropy acts as a learnable threshold phi, and a sample counts as
// clean when the "clean" adapter beats that threshold. Training combines
//   - combined-variant cross-entropy on every batch,
//   - a scheduled parameter-change penalty (tau1(t) rising on the clean
//     adapter, tau2(t) falling on the noisy one),
//   - after warm-up, a binary likelihood on the clean probability
//     p = sigmoid(CE_noisy - CE_clean) over pseudo-label-confirmed positives
//     and deliberately flipped negatives.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "delora/adapter.hpp"
#include "delora/core_math.hpp"
#include "delora/dataset.hpp"
#include "delora/metrics.hpp"
#include "delora/relabel.hpp"

namespace delora::detect {

struct DetectorConfig {
  double h1 = 1.0;  // exponent of the rising clean-adapter schedule
  double h2 = 1.0;  // exponent of the falling noisy-adapter schedule
  std::size_t warmup_epochs = 2;  // epochs trained before the detector term
  std::size_t total_epochs = 8;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool negative_resample = true;  // redraw flipped labels every epoch
  std::size_t rank = 4;
  double w0_std = 0.0;  // base weights are zero unless > 0
  // Weight of the parameter-change penalty inside the SGD update. The raw
  // schedule weights are >= 1 and would dwarf this model's cross-entropy
  // gradients, pinning both adapters at their snapshots; the penalty enters
  // the update scaled down while logs keep the unweighted value and raw
  // schedule weights.
  double lora_weight = 0.003;
  // Objective-term switches (used by the ablation harness).
  bool use_l_ce = true;
  bool use_l_lora = true;
  bool use_l_detector = true;
};

inline void validate(const DetectorConfig& c) {
  require(c.h1 > 0.0 && c.h2 > 0.0, "detector: h1 and h2 must be positive");
  require(c.total_epochs > c.warmup_epochs,
          "detector: total_epochs must exceed warmup_epochs");
  require(c.learning_rate > 0.0, "detector: learning_rate must be positive");
  require(c.batch_size >= 1, "detector: batch_size must be positive");
  require(c.rank >= 1, "detector: rank must be positive");
  require(c.lora_weight >= 0.0, "detector: lora_weight must be non-negative");
}

// Schedule weights; the epoch index is global and starts at 1.
inline double tau1(std::size_t t, double h1) {
  require(t >= 1, "tau1: epoch index starts at 1");
  return std::pow(static_cast<double>(t), h1);
}

inline double tau2(std::size_t t, double h2) {
  require(t >= 1, "tau2: epoch index starts at 1");
  return std::pow(static_cast<double>(t), -h2);
}

// ---------------------------------------------------------------------------
// Per-sample quantities
// ---------------------------------------------------------------------------

// The learnable threshold: noisy-variant cross-entropy on (x, y).
inline double threshold_phi(const DualAdapterModel& m, const std::vector<double>& x,
                            std::size_t y) {
  return cross_entropy(forward(m, x, AdapterVariant::Noisy), y);
}

// p = sigmoid(d) with d = CE_noisy - CE_clean, evaluated so that p > 0.5
// holds exactly when d > 0: for tiny positive d, exp(-d) rounds to 1 and the
// quotient lands on 0.5, so the result is nudged up by one ulp. This keeps
// the probability rule and the threshold rule picking identical samples.
inline double clean_probability_from_diff(double d) {
  double p = 1.0 / (1.0 + std::exp(-d));
  if (d > 0.0 && p <= 0.5) p = std::nextafter(0.5, 1.0);
  if (d <= 0.0 && p > 0.5) p = 0.5;
  return p;
}

inline double clean_probability(const DualAdapterModel& m, const std::vector<double>& x,
                                std::size_t y) {
  const double ce_clean = cross_entropy(forward(m, x, AdapterVariant::Clean), y);
  return clean_probability_from_diff(threshold_phi(m, x, y) - ce_clean);
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

struct SelectionResult {
  std::vector<std::size_t> clean_indices;  // positions into the dataset
  std::vector<std::size_t> noisy_indices;  // complement, also positions
  std::vector<double> phi;                 // per-position noisy-variant CE
  std::vector<double> p_clean;             // per-position clean probability

  bool is_clean(std::size_t pos) const { return pos < p_clean.size() && p_clean[pos] > 0.5; }
};

// Partitions the dataset: position i is clean iff CE_clean < phi[i], which
// by construction coincides with p_clean[i] > 0.5 (ties go to noisy).
inline SelectionResult select_clean(const DualAdapterModel& m, const data::Dataset& d) {
  SelectionResult out;
  out.phi.resize(d.size());
  out.p_clean.resize(d.size());
  const Matrix wc = effective_weight(m, AdapterVariant::Clean);
  const Matrix wn = effective_weight(m, AdapterVariant::Noisy);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const data::Sample& s = d.samples[i];
    const double ce_clean = cross_entropy(softmax(mat_vec(wc, s.features)), s.observed_label);
    const double ce_noisy = cross_entropy(softmax(mat_vec(wn, s.features)), s.observed_label);
    out.phi[i] = ce_noisy;
    out.p_clean[i] = clean_probability_from_diff(ce_noisy - ce_clean);
    if (ce_clean < ce_noisy)
      out.clean_indices.push_back(i);
    else
      out.noisy_indices.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss terms and gradients
// ---------------------------------------------------------------------------

// Scheduled parameter-change penalty:
//   tau1(t) * (movement of the clean adapter since the snapshot)
// + tau2(t) * (movement of the noisy adapter since the snapshot).
inline double loss_lora(const DualAdapterModel& m, const ParamSnapshot& snap, std::size_t t,
                        double h1, double h2) {
  require(t >= 1, "loss_lora: epoch index starts at 1");
  return tau1(t, h1) * param_change(m.clean, snap.clean) +
         tau2(t, h2) * param_change(m.noisy, snap.noisy);
}

namespace detail {

// Gradient of scale * ||theta - theta0||_F with respect to theta:
// scale * (theta - theta0) / ||theta - theta0||, zero at theta == theta0.
inline Matrix frob_dist_grad(const Matrix& theta, const Matrix& theta0, double scale) {
  Matrix diff = theta;
  diff -= theta0;
  const double denom = std::max(frobenius_norm(diff), 1e-12);
  diff *= scale / denom;
  return diff;
}

}  // namespace detail

// Gradient of loss_lora; the snapshot is a constant.
inline DualGrad grad_loss_lora(const DualAdapterModel& m, const ParamSnapshot& snap,
                               std::size_t t, double h1, double h2) {
  require(t >= 1, "grad_loss_lora: epoch index starts at 1");
  const double t1 = tau1(t, h1);
  const double t2 = tau2(t, h2);
  DualGrad g;
  g.clean.a = detail::frob_dist_grad(m.clean.a, snap.clean.a, t1);
  g.clean.b = detail::frob_dist_grad(m.clean.b, snap.clean.b, t1);
  g.noisy.a = detail::frob_dist_grad(m.noisy.a, snap.noisy.a, t2);
  g.noisy.b = detail::frob_dist_grad(m.noisy.b, snap.noisy.b, t2);
  return g;
}

// Supervision pairs for the detector head. Positives are positions whose
// pseudo-label agrees with the observed label (pushed toward p = 1);
// negatives pair a position with a deliberately wrong label (pushed toward
// p = 0).
struct PosNegSets {
  std::vector<std::size_t> positives;
  std::vector<std::pair<std::size_t, std::size_t>> negatives;  // (position, flipped label)
};

// Pseudo-labels every sample once; keeps positions whose pseudo-label
// matches the observed label. Backend failures only exclude the sample.
inline std::vector<std::size_t> compute_positives(const data::Dataset& d,
                                                  relabel::Backend& backend) {
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const data::Sample& s = d.samples[i];
    try {
      if (relabel::pseudo_label(backend, s, d.label_names) == d.label_names.at(s.observed_label))
        positives.push_back(i);
    } catch (const relabel::PseudoLabelUnavailable& e) {
      std::cerr << "[delora] warning: " << e.what() << "; sample left out of positives\n";
    }
  }
  return positives;
}

// One uniformly random wrong label per position, in position order.
inline std::vector<std::pair<std::size_t, std::size_t>> draw_negatives(const data::Dataset& d,
                                                                       Rng& rng) {
  require(d.num_classes >= 2, "draw_negatives: need at least two classes");
  std::vector<std::pair<std::size_t, std::size_t>> negatives;
  negatives.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t y = d.samples[i].observed_label;
    std::size_t flip = rng.uniform_below(d.num_classes - 1);
    if (flip >= y) ++flip;
    negatives.emplace_back(i, flip);
  }
  return negatives;
}

inline PosNegSets build_sets(const data::Dataset& d, relabel::Backend& backend, Rng& rng) {
  PosNegSets sets;
  sets.positives = compute_positives(d, backend);
  sets.negatives = draw_negatives(d, rng);
  return sets;
}

// Binary likelihood on the clean probability: mean over positives of -log p
// plus mean over negatives of -log(1 - p), with p clamped away from 0 and 1.
inline double loss_detector(const DualAdapterModel& m, const data::Dataset& d,
                            const PosNegSets& sets) {
  require(!sets.positives.empty(), "loss_detector: positive set is empty");
  const Matrix wc = effective_weight(m, AdapterVariant::Clean);
  const Matrix wn = effective_weight(m, AdapterVariant::Noisy);
  auto prob = [&](std::size_t pos, std::size_t label) {
    const std::vector<double>& x = d.samples[pos].features;
    const double ce_clean = cross_entropy(softmax(mat_vec(wc, x)), label);
    const double ce_noisy = cross_entropy(softmax(mat_vec(wn, x)), label);
    const double p = clean_probability_from_diff(ce_noisy - ce_clean);
    return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  };
  double pos_sum = 0.0;
  for (std::size_t i : sets.positives)
    pos_sum += -std::log(prob(i, d.samples[i].observed_label));
  double total = pos_sum / static_cast<double>(sets.positives.size());
  if (!sets.negatives.empty()) {
    double neg_sum = 0.0;
    for (const auto& [i, flipped] : sets.negatives) neg_sum += -std::log(1.0 - prob(i, flipped));
    total += neg_sum / static_cast<double>(sets.negatives.size());
  }
  return total;
}

struct DetectorBackward {
  double loss = 0.0;
  DualGrad grad;
};

// Loss and gradient of the detector term. With u = CE_noisy - CE_clean and
// p = sigmoid(u), positives contribute -log p (dL/du = p - 1) and negatives
// -log(1 - p) (dL/du = p); u's gradient is the noisy-variant CE gradient
// minus the clean-variant one. Terms sitting on the probability clamp are
// flat and contribute no gradient.
inline DetectorBackward backward_detector(const DualAdapterModel& m, const data::Dataset& d,
                                          const PosNegSets& sets) {
  require(!sets.positives.empty(), "loss_detector: positive set is empty");
  DetectorBackward out;
  out.grad = zero_grad(m);
  auto add_term = [&](std::size_t pos, std::size_t label, bool positive, double inv_count) {
    const std::vector<double>& x = d.samples[pos].features;
    const CeBackward clean = backward_ce(m, x, label, AdapterVariant::Clean);
    const CeBackward noisy = backward_ce(m, x, label, AdapterVariant::Noisy);
    const double p = clean_probability_from_diff(noisy.loss - clean.loss);
    const double clamped = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
    out.loss += (positive ? -std::log(clamped) : -std::log(1.0 - clamped)) * inv_count;
    if (p != clamped) return;
    const double du = (positive ? p - 1.0 : p) * inv_count;
    accumulate(out.grad, noisy.grad, du);
    accumulate(out.grad, clean.grad, -du);
  };
  const double inv_pos = 1.0 / static_cast<double>(sets.positives.size());
  for (std::size_t i : sets.positives) add_term(i, d.samples[i].observed_label, true, inv_pos);
  if (!sets.negatives.empty()) {
    const double inv_neg = 1.0 / static_cast<double>(sets.negatives.size());
    for (const auto& [i, flipped] : sets.negatives) add_term(i, flipped, false, inv_neg);
  }
  return out;
}

// Mean combined-variant cross-entropy over a batch of positions.
inline double loss_ce_combined(const DualAdapterModel& m, const data::Dataset& d,
                               const std::vector<std::size_t>& batch) {
  require(!batch.empty(), "loss_ce_combined: empty batch");
  const Matrix w = effective_weight(m, AdapterVariant::Combined);
  double total = 0.0;
  for (std::size_t i : batch)
    total +=
        cross_entropy(softmax(mat_vec(w, d.samples[i].features)), d.samples[i].observed_label);
  return total / static_cast<double>(batch.size());
}

struct CeBatchBackward {
  double loss = 0.0;
  DualGrad grad;
};

inline CeBatchBackward backward_ce_combined(const DualAdapterModel& m, const data::Dataset& d,
                                            const std::vector<std::size_t>& batch) {
  require(!batch.empty(), "loss_ce_combined: empty batch");
  CeBatchBackward out;
  out.grad = zero_grad(m);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const CeBackward b =
        backward_ce(m, d.samples[i].features, d.samples[i].observed_label,
                    AdapterVariant::Combined);
    out.loss += b.loss * inv;
    accumulate(out.grad, b.grad, inv);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;  // global 1-based index
  double loss_ce = 0.0;   // epoch mean of per-batch combined-variant CE
  double loss_lora = 0.0;  // epoch mean of the unweighted movement penalty
  std::optional<double> loss_detector;  // epoch mean; absent during warm-up
  double tau1 = 0.0;
  double tau2 = 0.0;
  double dsigma_clean = 0.0;  // adapter movement over this epoch
  double dsigma_noisy = 0.0;
  std::size_t detector_batches_skipped = 0;  // batches without a positive sample
  // Diagnostics, present when ground-truth labels are known.
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> memo_clean_on_clean;
  std::optional<double> memo_clean_on_noisy;
  std::optional<double> memo_noisy_on_clean;
  std::optional<double> memo_noisy_on_noisy;
  std::optional<double> memo_combined_on_clean;
  std::optional<double> memo_combined_on_noisy;
};

struct DetectorResult {
  DualAdapterModel model;
  SelectionResult selection;
  std::vector<EpochLog> epochs;
};

// Minibatch SGD over the staged objective: warm-up epochs use the combined
// cross-entropy plus the movement penalty; later epochs add the detector
// term. Pseudo-labels are fetched once, at the first post-warm-up epoch;
// negatives are redrawn per epoch unless configured otherwise. One snapshot
// is taken at every epoch end and anchors the next epoch's penalty.
inline DetectorResult train_detector(const data::Dataset& d, const DetectorConfig& cfg,
                                     relabel::Backend& backend) {
  validate(cfg);
  require(d.size() > 0, "train_detector: empty dataset");
  require(d.num_classes >= 2, "train_detector: need at least two classes");
  require(d.dim >= 1 && d.samples[0].features.size() == d.dim,
          "train_detector: bad feature dimension");

  DetectorResult out;
  out.model = make_model(d.num_classes, d.dim, cfg.rank, cfg.seed, cfg.w0_std);
  Rng shuffle_rng(split_seed(cfg.seed, "detector.shuffle"));
  Rng negative_rng(split_seed(cfg.seed, "detector.negatives"));

  ParamSnapshot snap = take_snapshot(out.model, 0);
  std::optional<std::vector<std::size_t>> positives;
  std::vector<bool> positive_mask(d.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> negatives;

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);

  const std::vector<std::size_t> truly_clean =
      d.has_true_labels() ? data::clean_positions(d) : std::vector<std::size_t>{};
  const std::vector<std::size_t> truly_noisy =
      d.has_true_labels() ? data::noisy_positions(d) : std::vector<std::size_t>{};

  for (std::size_t t = 1; t <= cfg.total_epochs; ++t) {
    const bool detector_phase = t > cfg.warmup_epochs && cfg.use_l_detector;
    if (detector_phase && !positives) {
      positives = compute_positives(d, backend);
      for (std::size_t i : *positives) positive_mask[i] = true;
    }
    if (detector_phase && (negatives.empty() || cfg.negative_resample))
      negatives = draw_negatives(d, negative_rng);

    shuffle_rng.shuffle(order);

    EpochLog log;
    log.epoch = t;
    log.tau1 = tau1(t, cfg.h1);
    log.tau2 = tau2(t, cfg.h2);

    double ce_total = 0.0;
    double lora_total = 0.0;
    double det_total = 0.0;
    std::size_t batches = 0;
    std::size_t det_batches = 0;

    for (std::size_t start = 0; start < d.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, d.size());
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      ++batches;
      DualGrad grad = zero_grad(out.model);

      if (cfg.use_l_ce) {
        const CeBatchBackward ce = backward_ce_combined(out.model, d, batch);
        ce_total += ce.loss;
        accumulate(grad, ce.grad);
      } else {
        ce_total += loss_ce_combined(out.model, d, batch);
      }

      lora_total += loss_lora(out.model, snap, t, cfg.h1, cfg.h2);
      if (cfg.use_l_lora)
        accumulate(grad, grad_loss_lora(out.model, snap, t, cfg.h1, cfg.h2), cfg.lora_weight);

      if (detector_phase) {
        PosNegSets batch_sets;
        for (std::size_t i : batch) {
          if (positive_mask[i]) batch_sets.positives.push_back(i);
          batch_sets.negatives.push_back(negatives[i]);
        }
        if (batch_sets.positives.empty()) {
          ++log.detector_batches_skipped;
        } else {
          const DetectorBackward det = backward_detector(out.model, d, batch_sets);
          det_total += det.loss;
          ++det_batches;
          accumulate(grad, det.grad);
        }
      }

      apply_grad(out.model, grad, cfg.learning_rate);
    }

    log.loss_ce = ce_total / static_cast<double>(batches);
    log.loss_lora = lora_total / static_cast<double>(batches);
    if (det_batches > 0) log.loss_detector = det_total / static_cast<double>(det_batches);
    if (log.detector_batches_skipped > 0)
      std::cerr << "[delora] warning: epoch " << t << " skipped "
                << log.detector_batches_skipped << " detector batches without positives\n";
    log.dsigma_clean = param_change(out.model.clean, snap.clean);
    log.dsigma_noisy = param_change(out.model.noisy, snap.noisy);

    if (d.has_true_labels() && !truly_clean.empty()) {
      const SelectionResult sel = select_clean(out.model, d);
      const harness::PrecisionRecall pr = harness::precision_recall(sel.clean_indices, d);
      log.precision = pr.precision;
      log.recall = pr.recall;
      log.memo_clean_on_clean =
          harness::memorization_ratio(out.model, AdapterVariant::Clean, d, truly_clean);
      log.memo_noisy_on_clean =
          harness::memorization_ratio(out.model, AdapterVariant::Noisy, d, truly_clean);
      log.memo_combined_on_clean =
          harness::memorization_ratio(out.model, AdapterVariant::Combined, d, truly_clean);
      if (!truly_noisy.empty()) {
        log.memo_clean_on_noisy =
            harness::memorization_ratio(out.model, AdapterVariant::Clean, d, truly_noisy);
        log.memo_noisy_on_noisy =
            harness::memorization_ratio(out.model, AdapterVariant::Noisy, d, truly_noisy);
        log.memo_combined_on_noisy =
            harness::memorization_ratio(out.model, AdapterVariant::Combined, d, truly_noisy);
      }
    }

    snap = take_snapshot(out.model, t);
    out.epochs.push_back(std::move(log));
  }

  out.selection = select_clean(out.model, d);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// Selection CSV: one row per sample, identified by sample id; doubles are
// written with shortest round-trip formatting so files are byte-stable and
// reload losslessly.
inline void save_selection(const SelectionResult& sel, const data::Dataset& d,
                           const std::string& path) {
  require(sel.phi.size() == d.size() && sel.p_clean.size() == d.size(),
          "save_selection: selection does not match the dataset");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  std::vector<bool> clean(d.size(), false);
  for (std::size_t i : sel.clean_indices) clean[i] = true;
  out << "index,phi,p_clean,is_clean\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    out << d.samples[i].id << ',' << data::detail::format_double(sel.phi[i]) << ','
        << data::detail::format_double(sel.p_clean[i]) << ',' << (clean[i] ? 1 : 0) << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

inline SelectionResult load_selection(const data::Dataset& d, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path, 0);
  const auto records = data::detail::parse_csv(in);
  if (records.empty() ||
      records[0].fields != std::vector<std::string>{"index", "phi", "p_clean", "is_clean"})
    throw IngestError("selection file must start with index,phi,p_clean,is_clean", 1);
  if (records.size() != d.size() + 1)
    throw IngestError("selection row count does not match the dataset", 0);

  std::unordered_map<std::size_t, std::size_t> id_to_pos;
  for (std::size_t i = 0; i < d.size(); ++i) id_to_pos.emplace(d.samples[i].id, i);
  SelectionResult out;
  out.phi.assign(d.size(), 0.0);
  out.p_clean.assign(d.size(), 0.0);
  std::vector<bool> seen(d.size(), false);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != 4) throw IngestError("selection row needs 4 fields", rec.line);
    const std::size_t id = data::detail::parse_index(rec.fields[0], rec.line, "index");
    const auto it = id_to_pos.find(id);
    if (it == id_to_pos.end())
      throw IngestError("selection references unknown sample id " + std::to_string(id),
                        rec.line);
    const std::size_t pos = it->second;
    if (seen[pos]) throw IngestError("duplicate selection row for id " + std::to_string(id),
                                     rec.line);
    seen[pos] = true;
    out.phi[pos] = data::detail::parse_double(rec.fields[1], rec.line, "phi");
    out.p_clean[pos] = data::detail::parse_double(rec.fields[2], rec.line, "p_clean");
    const std::string& flag = rec.fields[3];
    if (flag != "0" && flag != "1")
      throw IngestError("is_clean must be 0 or 1", rec.line);
    const bool clean = flag == "1";
    if (clean != (out.p_clean[pos] > 0.5))
      throw IngestError("is_clean flag disagrees with p_clean", rec.line);
  }
  for (std::size_t i = 0; i < d.size(); ++i)
    (out.p_clean[i] > 0.5 ? out.clean_indices : out.noisy_indices).push_back(i);
  return out;
}

inline nlohmann::json epoch_to_json(const EpochLog& e) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"loss_ce", e.loss_ce},
                   {"loss_lora", e.loss_lora},
                   {"tau1", e.tau1},
                   {"tau2", e.tau2},
                   {"dsigma_clean", e.dsigma_clean},
                   {"dsigma_noisy", e.dsigma_noisy},
                   {"detector_batches_skipped", e.detector_batches_skipped}};
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("loss_detector", e.loss_detector);
  put("precision", e.precision);
  put("recall", e.recall);
  put("memo_clean_on_clean", e.memo_clean_on_clean);
  put("memo_clean_on_noisy", e.memo_clean_on_noisy);
  put("memo_noisy_on_clean", e.memo_noisy_on_clean);
  put("memo_noisy_on_noisy", e.memo_noisy_on_noisy);
  put("memo_combined_on_clean", e.memo_combined_on_clean);
  put("memo_combined_on_noisy", e.memo_combined_on_noisy);
  return j;
}

// One JSON object per line.
inline void save_epoch_logs(const std::vector<EpochLog>& logs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const EpochLog& e : logs) out << epoch_to_json(e).dump() << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace delora::detect
