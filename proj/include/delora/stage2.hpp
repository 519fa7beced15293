#pragma once

// Stage 2: train a fresh classifier from the detector's partition. Selected
// clean samples keep their labels and use plain cross-entropy; noisy samples
// are relabeled through a backend and use the reversed cross-entropy, whose
// one-hot log-zero is replaced by a constant A < 0. Both losses normalize by
// the full training-set size so the subsets weigh in by their sizes. The
// classifier never sees the detector's adapters: selection and training are
// fully decoupled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "delora/adapter.hpp"
#include "delora/core_math.hpp"
#include "delora/dataset.hpp"
#include "delora/detector.hpp"
#include "delora/relabel.hpp"

namespace delora::stage2 {

struct Stage2Config {
  std::size_t epochs = 6;
  double learning_rate = 16.0;  // sized for the 1/N loss normalization
  std::size_t batch_size = 32;
  double rce_log_zero = -4.0;  // A: stand-in for log 0 in the reversed CE
  std::uint64_t seed = 0;
  bool use_noisy_samples = true;  // off drops the relabeled set entirely
  // Parameter-efficient path: train a fresh low-rank adapter over a frozen
  // zero base instead of the full weight matrix.
  bool peft = false;
  std::size_t rank = 4;
};

inline void validate(const Stage2Config& c) {
  require(c.epochs >= 1, "stage2: epochs must be positive");
  require(c.learning_rate > 0.0, "stage2: learning_rate must be positive");
  require(c.batch_size >= 1, "stage2: batch_size must be positive");
  require(c.rce_log_zero < 0.0, "stage2: rce_log_zero must be negative");
  require(!c.peft || c.rank >= 1, "stage2: rank must be positive");
}

struct ClassifierModel {
  Matrix weight;  // classes x dim
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Cross-entropy summed over a clean batch and divided by the full
// training-set size; an empty batch contributes zero.
inline double loss_clean(const Matrix& w, const data::Dataset& d,
                         const std::vector<std::size_t>& batch, std::size_t n_total) {
  require(n_total >= 1, "loss_clean: n_total must be positive");
  double total = 0.0;
  for (std::size_t i : batch) {
    const data::Sample& s = d.samples.at(i);
    total += cross_entropy(softmax(mat_vec(w, s.features)), s.observed_label);
  }
  return total / static_cast<double>(n_total);
}

// Reversed cross-entropy over relabeled (position, label) pairs: each sample
// contributes -A * (1 - p(label)), which is zero exactly when the model puts
// all its mass on the relabeled class and at most -A otherwise.
inline double loss_reversed_ce(const Matrix& w, const data::Dataset& d,
                               const std::vector<std::pair<std::size_t, std::size_t>>& batch,
                               std::size_t n_total, double a) {
  require(n_total >= 1, "loss_reversed_ce: n_total must be positive");
  require(a < 0.0, "loss_reversed_ce: the log-zero stand-in must be negative");
  double total = 0.0;
  for (const auto& [i, label] : batch) {
    const data::Sample& s = d.samples.at(i);
    require(label < w.rows, "loss_reversed_ce: label out of range");
    const ProbVector p = softmax(mat_vec(w, s.features));
    total += -a * (1.0 - p[label]);
  }
  return total / static_cast<double>(n_total);
}

struct Stage2Backward {
  double loss = 0.0;
  Matrix grad;  // classes x dim
};

inline Stage2Backward backward_clean(const Matrix& w, const data::Dataset& d,
                                     const std::vector<std::size_t>& batch,
                                     std::size_t n_total) {
  require(n_total >= 1, "loss_clean: n_total must be positive");
  Stage2Backward out;
  out.grad = Matrix(w.rows, w.cols);
  const double inv = 1.0 / static_cast<double>(n_total);
  for (std::size_t i : batch) {
    const data::Sample& s = d.samples.at(i);
    const LinearCeBackward b = linear_backward_ce(w, s.features, s.observed_label);
    out.loss += b.loss * inv;
    out.grad += b.grad * inv;
  }
  return out;
}

// Per-sample logit gradient of the reversed CE: -A(1 - p_y) differentiates
// to A * p_y * (e_y - p) through the softmax.
inline std::vector<double> rce_logit_grad(const ProbVector& p, std::size_t label, double a) {
  std::vector<double> g(p.size());
  const double py = p[label];
  for (std::size_t j = 0; j < p.size(); ++j)
    g[j] = a * py * ((j == label ? 1.0 : 0.0) - p[j]);
  return g;
}

inline Stage2Backward backward_reversed_ce(
    const Matrix& w, const data::Dataset& d,
    const std::vector<std::pair<std::size_t, std::size_t>>& batch, std::size_t n_total,
    double a) {
  require(n_total >= 1, "loss_reversed_ce: n_total must be positive");
  require(a < 0.0, "loss_reversed_ce: the log-zero stand-in must be negative");
  Stage2Backward out;
  out.grad = Matrix(w.rows, w.cols);
  const double inv = 1.0 / static_cast<double>(n_total);
  for (const auto& [i, label] : batch) {
    const data::Sample& s = d.samples.at(i);
    require(label < w.rows, "loss_reversed_ce: label out of range");
    const ProbVector p = softmax(mat_vec(w, s.features));
    out.loss += -a * (1.0 - p[label]) * inv;
    out.grad += outer(rce_logit_grad(p, label, a), s.features) * inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Minibatch SGD over the merged stream of clean and relabeled samples for
// `epochs` passes. The weight starts at zero (uniform predictions); with
// `peft` the trainable parameters are instead a zero-times-Gaussian adapter
// pair whose product is the returned weight.
inline ClassifierModel train_classifier(const data::Dataset& d,
                                        const std::vector<std::size_t>& clean,
                                        const relabel::RelabeledSet& relabeled,
                                        const Stage2Config& cfg) {
  validate(cfg);
  require(!clean.empty(), "train_classifier: clean set is empty");
  require(d.num_classes >= 2, "train_classifier: need at least two classes");

  struct Item {
    std::size_t position;
    std::size_t label;
    bool relabeled;
  };
  std::vector<Item> items;
  for (std::size_t i : clean) {
    require(i < d.size(), "train_classifier: clean position out of range");
    items.push_back({i, d.samples[i].observed_label, false});
  }
  if (cfg.use_noisy_samples) {
    for (const auto& [i, label] : relabeled.entries) {
      require(i < d.size(), "train_classifier: relabeled position out of range");
      require(label < d.num_classes, "train_classifier: relabeled label out of range");
      items.push_back({i, label, true});
    }
  }

  const double inv_n = 1.0 / static_cast<double>(d.size());
  Matrix w(d.num_classes, d.dim);
  Matrix pa, pb;
  if (cfg.peft) {
    pa = Matrix(cfg.rank, d.dim);
    pb = Matrix(d.num_classes, cfg.rank);
    Rng init_rng(split_seed(cfg.seed, "stage2.adapter"));
    for (double& v : pa.values) v = kAdapterInitStd * init_rng.gaussian();
  }

  Rng shuffle_rng(split_seed(cfg.seed, "stage2.shuffle"));
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < items.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, items.size());
      const Matrix wcur = cfg.peft ? matmul(pb, pa) : w;
      Matrix gw(d.num_classes, d.dim);
      Matrix ga, gb;
      if (cfg.peft) {
        ga = Matrix(cfg.rank, d.dim);
        gb = Matrix(d.num_classes, cfg.rank);
      }
      for (std::size_t k = start; k < end; ++k) {
        const Item& it = items[order[k]];
        const std::vector<double>& x = d.samples[it.position].features;
        const ProbVector p = softmax(mat_vec(wcur, x));
        const std::vector<double> g = it.relabeled
                                          ? rce_logit_grad(p, it.label, cfg.rce_log_zero)
                                          : ce_logit_grad(p, it.label);
        if (!cfg.peft) {
          gw += outer(g, x) * inv_n;
        } else {
          gb += outer(g, mat_vec(pa, x)) * inv_n;
          std::vector<double> btg(cfg.rank, 0.0);
          for (std::size_t r = 0; r < cfg.rank; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d.num_classes; ++c) acc += pb.at(c, r) * g[c];
            btg[r] = acc;
          }
          ga += outer(btg, x) * inv_n;
        }
      }
      if (!cfg.peft) {
        w -= gw * cfg.learning_rate;
      } else {
        pb -= gb * cfg.learning_rate;
        pa -= ga * cfg.learning_rate;
      }
    }
  }

  ClassifierModel model;
  model.weight = cfg.peft ? matmul(pb, pa) : w;
  model.seed = cfg.seed;
  return model;
}

// ---------------------------------------------------------------------------
// Relabeling the rejected samples
// ---------------------------------------------------------------------------

// Asks the backend for a label for every noisy-index sample, prompting with
// demonstrations drawn from the selected-clean set. A failed sample is
// dropped from the result with a warning; everything else proceeds.
inline relabel::RelabeledSet relabel_noisy(const detect::SelectionResult& selection,
                                           const data::Dataset& d, relabel::Backend& backend,
                                           std::size_t demos_per_class, std::uint64_t seed) {
  relabel::RelabeledSet out;
  std::vector<relabel::Demo> demos;
  if (demos_per_class > 0 && !selection.clean_indices.empty())
    demos = relabel::select_demos(d, selection.clean_indices, demos_per_class, seed);
  for (std::size_t i : selection.noisy_indices) {
    require(i < d.size(), "relabel_noisy: noisy position out of range");
    const data::Sample& s = d.samples[i];
    try {
      const std::string got = relabel::relabel_with_demos(backend, s, d.label_names, demos);
      out.entries.emplace_back(i, relabel::label_index_of(d.label_names, got, s.id));
    } catch (const relabel::PseudoLabelUnavailable& e) {
      std::cerr << "[delora] warning: " << e.what() << "; dropped from the relabeled set\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// Relabeled-set CSV: sample id plus the assigned label name.
inline void save_relabeled(const relabel::RelabeledSet& r, const data::Dataset& d,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "index,relabel\n";
  for (const auto& [pos, label] : r.entries)
    out << d.samples.at(pos).id << ','
        << data::detail::csv_escape(d.label_names.at(label)) << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

inline relabel::RelabeledSet load_relabeled(const data::Dataset& d, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path, 0);
  const auto records = data::detail::parse_csv(in);
  if (records.empty() || records[0].fields != std::vector<std::string>{"index", "relabel"})
    throw IngestError("relabeled file must start with index,relabel", 1);
  std::unordered_map<std::size_t, std::size_t> id_to_pos;
  for (std::size_t i = 0; i < d.size(); ++i) id_to_pos.emplace(d.samples[i].id, i);
  relabel::RelabeledSet out;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != 2) throw IngestError("relabeled row needs 2 fields", rec.line);
    const std::size_t id = data::detail::parse_index(rec.fields[0], rec.line, "index");
    const auto it = id_to_pos.find(id);
    if (it == id_to_pos.end())
      throw IngestError("relabeled row references unknown sample id " + std::to_string(id),
                        rec.line);
    const auto name = std::find(d.label_names.begin(), d.label_names.end(), rec.fields[1]);
    if (name == d.label_names.end())
      throw IngestError("unknown label '" + rec.fields[1] + "'", rec.line);
    out.entries.emplace_back(it->second,
                             static_cast<std::size_t>(name - d.label_names.begin()));
  }
  return out;
}

}  // namespace delora::stage2
