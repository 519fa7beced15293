#pragma once

// Dataset handling: synthetic Gaussian clusters, text ingestion with hashed
// bag-of-words features, CSV round-trips, and seeded splits.
//
// CSV layouts (header required, label cells hold class names):
//   text mode:    [id,]text,label[,true_label]
//   numeric mode: id,f0,...,f{d-1},label[,true_label]
// Class indices are assigned by first appearance in file order unless the
// caller pins a vocabulary explicitly.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "delora/core_math.hpp"

namespace delora::data {

struct Sample {
  std::size_t id = 0;
  std::vector<double> features;
  std::size_t observed_label = 0;
  std::optional<std::size_t> true_label;  // known only for synthetic/benchmark data
  std::string text;                       // empty for purely numeric data
};

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<Sample> samples;
  std::vector<std::string> label_names;  // index -> name

  std::size_t size() const { return samples.size(); }
  bool has_true_labels() const {
    return !samples.empty() &&
           std::all_of(samples.begin(), samples.end(),
                       [](const Sample& s) { return s.true_label.has_value(); });
  }
  bool has_text() const {
    return !samples.empty() && std::all_of(samples.begin(), samples.end(),
                                           [](const Sample& s) { return !s.text.empty(); });
  }
};

// A sample is clean when its observed label agrees with the ground truth;
// recomputed on demand, never stored.
inline bool is_clean(const Sample& s) {
  return s.true_label.has_value() && *s.true_label == s.observed_label;
}

// Indices (positions) of truly clean / truly noisy samples; requires truths.
inline std::vector<std::size_t> clean_positions(const Dataset& d) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (is_clean(d.samples[i])) out.push_back(i);
  return out;
}

inline std::vector<std::size_t> noisy_positions(const Dataset& d) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.samples[i].true_label.has_value() && !is_clean(d.samples[i])) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic clusters
// ---------------------------------------------------------------------------

// K isotropic unit-variance Gaussians; class k is centered at
// separation * e_{k mod dim}. Produces exactly per_class samples per class,
// class-major, ids 0..N-1, observed == true label.
inline Dataset gen_gaussian_clusters(std::size_t classes, std::size_t dim,
                                     std::size_t per_class, double separation,
                                     std::uint64_t seed) {
  require(classes >= 2, "gen_gaussian_clusters: need at least two classes");
  require(dim >= 1, "gen_gaussian_clusters: dim must be positive");
  require(per_class >= 1, "gen_gaussian_clusters: per_class must be positive");
  require(separation >= 0.0, "gen_gaussian_clusters: separation must be non-negative");
  Dataset d;
  d.num_classes = classes;
  d.dim = dim;
  d.label_names.reserve(classes);
  for (std::size_t k = 0; k < classes; ++k)
    d.label_names.push_back("class_" + std::to_string(k));
  Rng rng(split_seed(seed, "gen.gauss"));
  d.samples.reserve(classes * per_class);
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Sample s;
      s.id = d.samples.size();
      s.features.resize(dim);
      for (std::size_t j = 0; j < dim; ++j) s.features[j] = rng.gaussian();
      s.features[k % dim] += separation;
      s.observed_label = k;
      s.true_label = k;
      d.samples.push_back(std::move(s));
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Text featurization
// ---------------------------------------------------------------------------

// Lowercases (ASCII), splits on every non-alphanumeric byte, buckets each
// token by fnv1a64(token) mod dim, counts, then L2-normalizes. An all-empty
// token stream yields the zero vector (with a warning on stderr).
inline std::vector<double> hash_features(std::string_view text, std::size_t dim) {
  require(dim >= 1, "hash_features: dim must be positive");
  std::vector<double> v(dim, 0.0);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    v[fnv1a64(token) % dim] += 1.0;
    token.clear();
  };
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c))
      token.push_back(static_cast<char>(std::tolower(c)));
    else
      flush();
  }
  flush();
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) {
    std::cerr << "[delora] warning: text hashed to the zero vector\n";
    return v;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// ---------------------------------------------------------------------------
// CSV parsing / writing
// ---------------------------------------------------------------------------

namespace detail {

// Minimal CSV: fields separated by commas, quoted with '"' when they contain
// commas, quotes, or newlines; embedded quotes doubled. Returns records with
// their starting line numbers.
struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

inline std::vector<CsvRecord> parse_csv(std::istream& in) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool any_char = false;
  std::size_t line = 1;
  current.line = 1;
  auto end_field = [&] {
    current.fields.push_back(field);
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(current));
    current = CsvRecord{};
    current.line = line;
    any_char = false;
  };
  char c;
  while (in.get(c)) {
    if (c == '\r') continue;
    if (in_quotes) {
      any_char = true;
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        any_char = true;
        break;
      case ',':
        end_field();
        any_char = true;
        break;
      case '\n':
        ++line;
        if (any_char || !field.empty() || !current.fields.empty()) end_record();
        current.line = line;
        break;
      default:
        field.push_back(c);
        any_char = true;
        break;
    }
  }
  if (in_quotes) throw IngestError("unterminated quoted field", current.line);
  if (any_char || !field.empty() || !current.fields.empty()) end_record();
  return records;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, std::size_t line, const std::string& what) {
  double out = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(out))
    throw IngestError(what + ": bad numeric value '" + s + "'", line);
  return out;
}

inline std::size_t parse_index(const std::string& s, std::size_t line, const std::string& what) {
  std::size_t out = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw IngestError(what + ": bad integer '" + s + "'", line);
  return out;
}

}  // namespace detail

struct LoadOptions {
  // Feature dimension for text-mode files (hashed bag of words).
  std::size_t text_dim = 512;
  // Optional pinned class vocabulary; unseen labels become ingest errors.
  // When empty, indices follow first appearance in file order.
  std::vector<std::string> labels;
};

inline Dataset load_csv(const std::string& path, const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path, 0);
  const auto records = detail::parse_csv(in);
  if (records.empty()) throw IngestError("empty file: " + path, 0);

  const auto& header = records[0].fields;
  // Recognize the layout from the header.
  bool text_mode = false;
  bool has_id = false;
  bool has_truth = false;
  std::size_t dim = 0;
  if (!header.empty() && (header[0] == "text" || (header.size() > 1 && header[0] == "id" &&
                                                  header[1] == "text"))) {
    text_mode = true;
    has_id = header[0] == "id";
    const std::size_t base = has_id ? 1 : 0;
    if (header.size() < base + 2 || header[base] != "text" || header[base + 1] != "label")
      throw IngestError("text-mode header must be [id,]text,label[,true_label]", 1);
    if (header.size() == base + 3) {
      if (header[base + 2] != "true_label")
        throw IngestError("unexpected column '" + header[base + 2] + "'", 1);
      has_truth = true;
    } else if (header.size() > base + 3) {
      throw IngestError("too many columns in text-mode header", 1);
    }
    dim = opts.text_dim;
  } else {
    if (header.size() < 3 || header[0] != "id")
      throw IngestError("numeric-mode header must be id,f0,...,label[,true_label]", 1);
    has_id = true;
    std::size_t i = 1;
    while (i < header.size() && header[i] == "f" + std::to_string(i - 1)) ++i;
    dim = i - 1;
    if (dim == 0) throw IngestError("no feature columns found", 1);
    if (i >= header.size() || header[i] != "label")
      throw IngestError("missing 'label' column after features", 1);
    ++i;
    if (i < header.size()) {
      if (header[i] != "true_label")
        throw IngestError("unexpected column '" + header[i] + "'", 1);
      has_truth = true;
      ++i;
    }
    if (i != header.size()) throw IngestError("trailing columns in header", 1);
  }

  Dataset d;
  d.dim = dim;
  d.label_names = opts.labels;
  const bool pinned_vocab = !opts.labels.empty();
  auto label_index = [&](const std::string& name, std::size_t line) -> std::size_t {
    for (std::size_t k = 0; k < d.label_names.size(); ++k)
      if (d.label_names[k] == name) return k;
    if (pinned_vocab) throw IngestError("label '" + name + "' not in pinned vocabulary", line);
    d.label_names.push_back(name);
    return d.label_names.size() - 1;
  };

  std::vector<std::size_t> seen_ids;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t expected =
        text_mode ? (has_id ? 2u : 1u) + 1u + (has_truth ? 1u : 0u)
                  : 1u + dim + 1u + (has_truth ? 1u : 0u);
    if (rec.fields.size() != expected)
      throw IngestError("expected " + std::to_string(expected) + " columns, got " +
                            std::to_string(rec.fields.size()),
                        rec.line);
    Sample s;
    std::size_t f = 0;
    s.id = has_id ? detail::parse_index(rec.fields[f++], rec.line, "id") : r - 1;
    if (text_mode) {
      s.text = rec.fields[f++];
      s.features = hash_features(s.text, dim);
    } else {
      s.features.resize(dim);
      for (std::size_t j = 0; j < dim; ++j)
        s.features[j] = detail::parse_double(rec.fields[f++], rec.line, "f" + std::to_string(j));
    }
    s.observed_label = label_index(rec.fields[f++], rec.line);
    if (has_truth) {
      const std::string& t = rec.fields[f++];
      if (!t.empty()) s.true_label = label_index(t, rec.line);
    }
    seen_ids.push_back(s.id);
    d.samples.push_back(std::move(s));
  }

  std::vector<std::size_t> sorted = seen_ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw IngestError("duplicate sample ids in " + path, 0);

  d.num_classes = d.label_names.size();
  return d;
}

// Writes text mode when every sample carries text (so LLM-facing stages keep
// the raw input); numeric mode otherwise. A true_label column is included
// when any sample has ground truth.
inline void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  const bool text_mode = d.has_text();
  const bool truth = std::any_of(d.samples.begin(), d.samples.end(),
                                 [](const Sample& s) { return s.true_label.has_value(); });
  if (text_mode) {
    out << "id,text,label" << (truth ? ",true_label" : "") << "\n";
  } else {
    out << "id";
    for (std::size_t j = 0; j < d.dim; ++j) out << ",f" << j;
    out << ",label" << (truth ? ",true_label" : "") << "\n";
  }
  for (const Sample& s : d.samples) {
    out << s.id;
    if (text_mode) {
      out << ',' << detail::csv_escape(s.text);
    } else {
      for (double v : s.features) out << ',' << detail::format_double(v);
    }
    out << ',' << detail::csv_escape(d.label_names.at(s.observed_label));
    if (truth) {
      out << ',';
      if (s.true_label) out << detail::csv_escape(d.label_names.at(*s.true_label));
    }
    out << '\n';
  }
  if (!out) throw ConfigError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train = 0.8;
  double val = 0.0;
  double test = 0.2;
  std::uint64_t seed = 0;
};

struct Split {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Seeded shuffle followed by a contiguous cut. Counts are
// floor(n*train), floor(n*val), remainder. Sample ids are preserved.
inline Split split(const Dataset& d, const SplitSpec& spec) {
  require(spec.train >= 0 && spec.val >= 0 && spec.test >= 0,
          "split: fractions must be non-negative");
  require(std::fabs(spec.train + spec.val + spec.test - 1.0) <= 1e-9,
          "split: fractions must sum to 1");
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(split_seed(spec.seed, "split.shuffle"));
  rng.shuffle(order);
  const std::size_t n_train = static_cast<std::size_t>(d.size() * spec.train);
  const std::size_t n_val = static_cast<std::size_t>(d.size() * spec.val);
  Split out;
  auto part = [&](std::size_t begin, std::size_t end) {
    Dataset p;
    p.num_classes = d.num_classes;
    p.dim = d.dim;
    p.label_names = d.label_names;
    for (std::size_t i = begin; i < end; ++i) p.samples.push_back(d.samples[order[i]]);
    return p;
  };
  out.train = part(0, n_train);
  out.val = part(n_train, n_train + n_val);
  out.test = part(n_train + n_val, d.size());
  return out;
}

}  // namespace delora::data
