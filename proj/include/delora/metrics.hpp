#pragma once

// Evaluation metrics shared by the detector, the baselines, and the harness:
// selection precision/recall, test accuracy, and per-variant memorization.
// Every selector is scored through this one implementation so methods never
// drift apart in how they are measured.

#include <cstddef>
#include <iostream>
#include <vector>

#include "delora/adapter.hpp"
#include "delora/core_math.hpp"
#include "delora/dataset.hpp"

namespace delora::harness {

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 0.0;
};

// Ground-truth clean mask (observed label agrees with the true label).
inline std::vector<bool> clean_mask(const data::Dataset& d) {
  require(d.has_true_labels(), "clean_mask: dataset lacks true labels");
  std::vector<bool> mask(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mask[i] = data::is_clean(d.samples[i]);
  return mask;
}

// Scores a selected "clean" position set against the ground-truth mask.
// An empty selection scores precision 1.0 (nothing wrong was picked) with a
// warning; a dataset with no truly clean samples leaves recall undefined.
inline PrecisionRecall precision_recall(const std::vector<std::size_t>& selected,
                                        const std::vector<bool>& truly_clean) {
  std::size_t total_clean = 0;
  for (bool c : truly_clean) total_clean += c ? 1 : 0;
  require(total_clean > 0, "precision_recall: no truly clean samples, recall undefined");
  std::size_t hits = 0;
  for (std::size_t i : selected) {
    require(i < truly_clean.size(), "precision_recall: selected index out of range");
    hits += truly_clean[i] ? 1 : 0;
  }
  PrecisionRecall pr;
  if (selected.empty()) {
    std::cerr << "[delora] warning: empty selection, reporting precision 1.0\n";
    pr.precision = 1.0;
  } else {
    pr.precision = static_cast<double>(hits) / static_cast<double>(selected.size());
  }
  pr.recall = static_cast<double>(hits) / static_cast<double>(total_clean);
  return pr;
}

inline PrecisionRecall precision_recall(const std::vector<std::size_t>& selected,
                                        const data::Dataset& d) {
  return precision_recall(selected, clean_mask(d));
}

// Fraction of samples whose argmax prediction under `weight` matches the
// label (the true label when known; ties resolve to the lowest class index).
inline double test_accuracy(const Matrix& weight, const data::Dataset& d) {
  require(d.size() > 0, "test_accuracy: empty dataset");
  require(weight.cols == d.dim, "test_accuracy: feature dimension mismatch");
  std::size_t correct = 0;
  for (const data::Sample& s : d.samples) {
    const std::size_t truth = s.true_label.value_or(s.observed_label);
    if (argmax(mat_vec(weight, s.features)) == truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

// Fraction of `subset` whose argmax under the given adapter variant equals
// the observed label — how much of the subset that variant has memorized.
inline double memorization_ratio(const DualAdapterModel& m, AdapterVariant v,
                                 const data::Dataset& d,
                                 const std::vector<std::size_t>& subset) {
  require(!subset.empty(), "memorization_ratio: empty subset");
  const Matrix w = effective_weight(m, v);
  std::size_t hits = 0;
  for (std::size_t i : subset) {
    require(i < d.size(), "memorization_ratio: index out of range");
    const data::Sample& s = d.samples[i];
    if (argmax(mat_vec(w, s.features)) == s.observed_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(subset.size());
}

}  // namespace delora::harness
