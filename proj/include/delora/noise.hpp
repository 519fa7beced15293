#pragma once

// Label-noise synthesis. Class-conditional noise applies a row-stochastic
// transition matrix T where T[i][j] is the probability that a sample observed
// as class i is re-labeled to class j. Instance-dependent noise instead
// corrupts the samples that a deliberately under-trained linear proxy gets
// wrong, assigning the proxy's own prediction as the new label.
//
// Injection treats the incoming observed labels as ground truth: after
// corruption, true_label holds the pre-noise label for every sample.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "delora/adapter.hpp"
#include "delora/dataset.hpp"

namespace delora::noise {

enum class NoiseKind { Symmetric, Asymmetric, InstanceDependent };

inline const char* noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::Symmetric: return "symmetric";
    case NoiseKind::Asymmetric: return "asymmetric";
    default: return "instance";
  }
}

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "symmetric") return NoiseKind::Symmetric;
  if (s == "asymmetric") return NoiseKind::Asymmetric;
  if (s == "instance") return NoiseKind::InstanceDependent;
  throw ConfigError("unknown noise kind '" + s + "'");
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Symmetric;
  double ratio = 0.0;  // fraction of labels to corrupt
  std::uint64_t seed = 0;
};

// One flipped sample; untouched samples have no record, so the record list
// plus the corrupted dataset reconstructs the original labels exactly.
struct CorruptionRecord {
  std::size_t id = 0;
  std::size_t original = 0;
  std::size_t corrupted = 0;
};

struct NoiseResult {
  data::Dataset dataset;
  std::vector<CorruptionRecord> records;
  double achieved_ratio = 0.0;  // fraction of samples actually flipped
};

// ---------------------------------------------------------------------------
// Transition matrices
// ---------------------------------------------------------------------------

inline void check_ratio(double ratio) {
  require(ratio >= 0.0 && ratio <= 1.0, "noise ratio must be in [0, 1]");
}

// Keeps a label with probability 1 - ratio and spreads ratio uniformly over
// the other K-1 classes.
inline Matrix build_symmetric(std::size_t classes, double ratio) {
  require(classes >= 2, "build_symmetric: need at least two classes");
  check_ratio(ratio);
  Matrix t(classes, classes);
  const double off = ratio / static_cast<double>(classes - 1);
  for (std::size_t i = 0; i < classes; ++i)
    for (std::size_t j = 0; j < classes; ++j) t.at(i, j) = (i == j) ? 1.0 - ratio : off;
  return t;
}

// Keeps a label with probability 1 - ratio and sends ratio to the next class
// cyclically (class i -> i+1 mod K), mimicking confusions between adjacent
// categories.
inline Matrix build_asymmetric(std::size_t classes, double ratio) {
  require(classes >= 2, "build_asymmetric: need at least two classes");
  check_ratio(ratio);
  Matrix t(classes, classes);
  for (std::size_t i = 0; i < classes; ++i) {
    t.at(i, i) = 1.0 - ratio;
    t.at(i, (i + 1) % classes) += ratio;
  }
  return t;
}

inline void check_transition(const Matrix& t, std::size_t classes) {
  require(t.rows == classes && t.cols == classes, "transition matrix has wrong shape");
  for (std::size_t i = 0; i < classes; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      require(t.at(i, j) >= 0.0, "transition matrix has a negative entry");
      sum += t.at(i, j);
    }
    require(std::fabs(sum - 1.0) <= 1e-9, "transition matrix row does not sum to 1");
  }
}

// Draws each sample's new label from its row of the transition matrix via
// inverse CDF on one uniform draw per sample, in dataset order.
inline NoiseResult apply_transition(const data::Dataset& d, const Matrix& t,
                                    std::uint64_t seed) {
  check_transition(t, d.num_classes);
  NoiseResult out;
  out.dataset = d;
  Rng rng(split_seed(seed, "noise.transition"));
  for (data::Sample& s : out.dataset.samples) {
    const std::size_t original = s.observed_label;
    if (!s.true_label) s.true_label = original;
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t drawn = d.num_classes - 1;  // guards against rounding at u ~ 1
    for (std::size_t j = 0; j < d.num_classes; ++j) {
      cum += t.at(original, j);
      if (u < cum) {
        drawn = j;
        break;
      }
    }
    if (drawn != original) {
      s.observed_label = drawn;
      out.records.push_back({s.id, original, drawn});
    }
  }
  out.achieved_ratio =
      d.size() == 0 ? 0.0 : static_cast<double>(out.records.size()) / d.size();
  return out;
}

// ---------------------------------------------------------------------------
// Instance-dependent noise
// ---------------------------------------------------------------------------

struct ProxyConfig {
  std::size_t epochs = 2;  // deliberately under-trained
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Minibatch-SGD softmax regression from a zero weight; per-batch mean
// gradients, seeded shuffling each epoch. Kept weak on purpose so its
// mistakes provide plausible instance-dependent confusions.
inline Matrix train_proxy(const data::Dataset& d, const ProxyConfig& cfg) {
  require(d.size() > 0, "train_proxy: empty dataset");
  require(cfg.batch_size > 0, "train_proxy: batch_size must be positive");
  Matrix w(d.num_classes, d.dim);
  Rng shuffle_rng(split_seed(cfg.seed, "proxy.shuffle"));
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Matrix grad(d.num_classes, d.dim);
      for (std::size_t i = start; i < end; ++i) {
        const data::Sample& s = d.samples[order[i]];
        grad += linear_backward_ce(w, s.features, s.observed_label).grad;
      }
      grad *= 1.0 / static_cast<double>(end - start);
      w -= grad * cfg.learning_rate;
    }
  }
  return w;
}

// Corrupts floor(n * ratio) samples drawn without replacement from the pool
// the proxy misclassifies; each corrupted label becomes the proxy's argmax
// (never the original label, by pool construction). If the pool is smaller
// than the target the whole pool is flipped and a warning is emitted;
// achieved_ratio reports the realized fraction either way.
inline NoiseResult instance_dependent_corrupt(const data::Dataset& d, double ratio,
                                              const Matrix& proxy, std::uint64_t seed) {
  check_ratio(ratio);
  require(proxy.rows == d.num_classes && proxy.cols == d.dim,
          "instance_dependent_corrupt: proxy shape mismatch");
  NoiseResult out;
  out.dataset = d;
  for (data::Sample& s : out.dataset.samples)
    if (!s.true_label) s.true_label = s.observed_label;

  std::vector<std::size_t> pool;  // positions the proxy gets wrong
  std::vector<std::size_t> proxy_pred(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    proxy_pred[i] = argmax(mat_vec(proxy, d.samples[i].features));
    if (proxy_pred[i] != d.samples[i].observed_label) pool.push_back(i);
  }

  const auto target = static_cast<std::size_t>(static_cast<double>(d.size()) * ratio);
  Rng rng(split_seed(seed, "noise.instance"));
  rng.shuffle(pool);
  const std::size_t take = std::min(target, pool.size());
  if (take < target)
    std::cerr << "[delora] warning: instance-dependent noise pool exhausted (" << pool.size()
              << " candidates for target " << target << ")\n";

  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + take);
  std::sort(chosen.begin(), chosen.end());  // deterministic record order
  for (std::size_t pos : chosen) {
    data::Sample& s = out.dataset.samples[pos];
    out.records.push_back({s.id, s.observed_label, proxy_pred[pos]});
    s.observed_label = proxy_pred[pos];
  }
  out.achieved_ratio = d.size() == 0 ? 0.0 : static_cast<double>(take) / d.size();
  return out;
}

// Dispatches on the requested kind; the instance-dependent proxy is trained
// here with a seed derived from the corruption seed unless the caller
// supplies a config.
inline NoiseResult inject_noise(const data::Dataset& d, const NoiseSpec& spec,
                                std::optional<ProxyConfig> proxy_cfg = std::nullopt) {
  switch (spec.kind) {
    case NoiseKind::Symmetric:
      return apply_transition(d, build_symmetric(d.num_classes, spec.ratio), spec.seed);
    case NoiseKind::Asymmetric:
      return apply_transition(d, build_asymmetric(d.num_classes, spec.ratio), spec.seed);
    default: {
      ProxyConfig cfg = proxy_cfg.value_or(ProxyConfig{});
      if (!proxy_cfg) cfg.seed = split_seed(spec.seed, "noise.proxy");
      const Matrix proxy = train_proxy(d, cfg);
      return instance_dependent_corrupt(d, spec.ratio, proxy, spec.seed);
    }
  }
}

// ---------------------------------------------------------------------------
// Record round-trips
// ---------------------------------------------------------------------------

// CSV layout: id,original,corrupted (class names).
inline void save_records(const std::vector<CorruptionRecord>& records,
                         const std::vector<std::string>& label_names,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "id,original,corrupted\n";
  for (const CorruptionRecord& r : records)
    out << r.id << ',' << data::detail::csv_escape(label_names.at(r.original)) << ','
        << data::detail::csv_escape(label_names.at(r.corrupted)) << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

inline std::vector<CorruptionRecord> load_records(const std::string& path,
                                                  const std::vector<std::string>& label_names) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path, 0);
  const auto records = data::detail::parse_csv(in);
  if (records.empty() || records[0].fields != std::vector<std::string>{"id", "original",
                                                                       "corrupted"})
    throw IngestError("records header must be id,original,corrupted", 1);
  auto label_index = [&](const std::string& name, std::size_t line) {
    for (std::size_t k = 0; k < label_names.size(); ++k)
      if (label_names[k] == name) return k;
    throw IngestError("unknown label '" + name + "' in records", line);
  };
  std::vector<CorruptionRecord> out;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.fields.size() != 3) throw IngestError("expected 3 columns", rec.line);
    out.push_back({data::detail::parse_index(rec.fields[0], rec.line, "id"),
                   label_index(rec.fields[1], rec.line), label_index(rec.fields[2], rec.line)});
  }
  return out;
}

// Undoes recorded corruptions (by sample id); used to verify that records
// reconstruct the pre-noise labels exactly.
inline data::Dataset restore_labels(const data::Dataset& d,
                                    const std::vector<CorruptionRecord>& records) {
  data::Dataset out = d;
  for (const CorruptionRecord& r : records) {
    bool found = false;
    for (data::Sample& s : out.samples) {
      if (s.id != r.id) continue;
      require(s.observed_label == r.corrupted, "restore_labels: record does not match dataset");
      s.observed_label = r.original;
      found = true;
      break;
    }
    require(found, "restore_labels: record id not present in dataset");
  }
  return out;
}

}  // namespace delora::noise
