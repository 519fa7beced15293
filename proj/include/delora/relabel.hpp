#pragma once

// Pluggable pseudo-labeling client, used twice in the pipeline: zero-shot
// pseudo-labels when building the detector's positive set, and few-shot
// relabeling of detected noisy samples with clean-sample demonstrations.
//
// Three backends:
//   SyntheticOracle — offline stand-in for an LLM: answers the ground-truth
//                     label with probability p, otherwise a uniformly random
//                     wrong label. A pure function of (seed, sample id), so
//                     repeated queries agree and runs are reproducible.
//   CachedFile      — replays a JSON map of sample-id -> label; never calls
//                     anything.
//   HttpLlm         — POSTs {model, prompt, temperature:0} to an HTTP
//                     endpoint, parses the completion, retries on failure,
//                     and persists answers to a JSON cache so a label is
//                     never requested twice across runs.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "delora/dataset.hpp"

namespace delora::relabel {

// Raised when a backend cannot produce a label for a sample (timeouts,
// unparseable replies, cache misses). Carries the sample id so callers can
// drop exactly that sample.
class PseudoLabelUnavailable : public std::runtime_error {
 public:
  PseudoLabelUnavailable(std::size_t sample_id, const std::string& why)
      : std::runtime_error("no pseudo-label for sample " + std::to_string(sample_id) + ": " +
                           why),
        id_(sample_id) {}
  std::size_t sample_id() const { return id_; }

 private:
  std::size_t id_;
};

struct Demo {
  std::string text;
  std::string label;
};

// Relabeled noisy samples: (position in dataset, new label index). Disjoint
// from the clean selection it complements.
struct RelabeledSet {
  std::vector<std::pair<std::size_t, std::size_t>> entries;
};

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

// Renders "[a, b, c]" for the {options} slot.
inline std::string render_options(const std::vector<std::string>& options) {
  std::string out = "[";
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out += ", ";
    out += options[i];
  }
  out += "]";
  return out;
}

// Numeric samples have no text; prompts fall back to a feature summary.
inline std::string feature_summary(const std::vector<double>& features) {
  std::string out;
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (j) out += " ";
    out += "f" + std::to_string(j) + "=" + data::detail::format_double(features[j]);
  }
  return out;
}

inline std::string prompt_text(const data::Sample& s) {
  return s.text.empty() ? feature_summary(s.features) : s.text;
}

// Chain-of-thought classification prompt. With demos empty this is the
// zero-shot form; otherwise each demonstration contributes a solved
// SENTENCE/LABEL block ahead of the query.
inline std::string render_prompt(const std::vector<std::string>& options,
                                 const std::vector<Demo>& demos, const std::string& text) {
  require(!options.empty(), "render_prompt: options must be non-empty");
  for (const Demo& d : demos) {
    bool known = false;
    for (const std::string& o : options) known = known || o == d.label;
    require(known, "render_prompt: demo label '" + d.label + "' not in options");
  }
  std::string p =
      "Below is a text classification problem.\n"
      "Note that you can only select the label in " +
      render_options(options) +
      ".\n"
      "Let's think step by step and give your answer.\n";
  for (const Demo& d : demos) p += "\nSENTENCE: " + d.text + "\n\nLABEL: " + d.label + "\n";
  p += "\nSENTENCE: " + text + "\n\nLABEL:";
  return p;
}

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

// Extracts the answer from a free-text completion: the first option name
// appearing after the final "LABEL:" marker, matched case-insensitively.
// When two options match at the same position the longer name wins. Returns
// nullopt when no marker or no option is found.
inline std::optional<std::string> parse_label_reply(const std::string& reply,
                                                    const std::vector<std::string>& options) {
  const std::string hay = detail::lower(reply);
  const std::size_t marker = hay.rfind("label:");
  if (marker == std::string::npos) return std::nullopt;
  const std::size_t from = marker + 6;
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  std::string best;
  for (const std::string& option : options) {
    const std::size_t pos = hay.find(detail::lower(option), from);
    if (pos == std::string::npos) continue;
    if (pos < best_pos || (pos == best_pos && option.size() > best_len)) {
      best_pos = pos;
      best_len = option.size();
      best = option;
    }
  }
  if (best_pos == std::string::npos) return std::nullopt;
  return best;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;
  // Produces one label from `options` for the sample, rendering demos into
  // the prompt where the backend has one. Throws PseudoLabelUnavailable on
  // failure.
  virtual std::string label_for(const data::Sample& sample,
                                const std::vector<std::string>& options,
                                const std::vector<Demo>& demos) = 0;
  virtual const char* name() const = 0;
};

// Offline oracle: right with probability `accuracy`, else uniformly wrong.
// The draw depends only on (seed, sample id) — not on call order or demos —
// so zero-shot and few-shot queries for one sample agree, like a cached LLM.
class SyntheticOracle final : public Backend {
 public:
  SyntheticOracle(double accuracy, std::uint64_t seed) : accuracy_(accuracy), seed_(seed) {
    require(accuracy >= 0.0 && accuracy <= 1.0, "SyntheticOracle: accuracy must be in [0,1]");
  }

  std::string label_for(const data::Sample& sample, const std::vector<std::string>& options,
                        const std::vector<Demo>&) override {
    require(!options.empty(), "SyntheticOracle: options must be non-empty");
    require(sample.true_label.has_value(),
            "SyntheticOracle requires ground-truth labels in the dataset");
    const std::size_t truth = *sample.true_label;
    require(truth < options.size(), "SyntheticOracle: true label outside options");
    Rng rng(mix_seed(split_seed(seed_, "oracle"), sample.id));
    if (options.size() == 1 || rng.uniform() < accuracy_) return options[truth];
    std::size_t wrong = rng.uniform_below(options.size() - 1);
    if (wrong >= truth) ++wrong;
    return options[wrong];
  }

  const char* name() const override { return "oracle"; }

 private:
  double accuracy_;
  std::uint64_t seed_;
};

// Replays previously produced labels from a JSON file: {"<id>": "<label>"}.
class CachedFile final : public Backend {
 public:
  explicit CachedFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("CachedFile: cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("CachedFile: invalid JSON in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("CachedFile: expected a JSON object in " + path);
    for (const auto& [key, value] : j.items()) {
      if (!value.is_string())
        throw ConfigError("CachedFile: label for id " + key + " must be a string");
      std::size_t id = 0;
      const auto res = std::from_chars(key.data(), key.data() + key.size(), id);
      if (res.ec != std::errc{} || res.ptr != key.data() + key.size())
        throw ConfigError("CachedFile: non-numeric sample id '" + key + "'");
      labels_[id] = value.get<std::string>();
    }
  }

  std::string label_for(const data::Sample& sample, const std::vector<std::string>& options,
                        const std::vector<Demo>&) override {
    const auto it = labels_.find(sample.id);
    if (it == labels_.end()) throw PseudoLabelUnavailable(sample.id, "not in cache file");
    for (const std::string& o : options)
      if (o == it->second) return o;
    throw PseudoLabelUnavailable(sample.id, "cached label '" + it->second +
                                                "' is not a valid option");
  }

  const char* name() const override { return "cached"; }

 private:
  std::map<std::size_t, std::string> labels_;
};

struct HttpLlmConfig {
  std::string host = "localhost";
  int port = 80;
  std::string path = "/v1/completions";
  std::string model = "gpt-4o";
  int timeout_ms = 30000;
  int retries = 2;           // attempts = 1 + retries
  std::string cache_path;    // empty disables persistence
  std::string api_key_env = "DELORA_API_KEY";
};

// HTTP client; declared here, defined in relabel_http.hpp to keep the
// socket dependency out of translation units that never relabel online.
class HttpLlm;

// ---------------------------------------------------------------------------
// Free-function interface
// ---------------------------------------------------------------------------

// Zero-shot pseudo-label used for positive-set construction.
inline std::string pseudo_label(Backend& backend, const data::Sample& sample,
                                const std::vector<std::string>& options) {
  return backend.label_for(sample, options, {});
}

// Few-shot relabeling with clean-sample demonstrations; empty demos
// downgrade to zero-shot with a warning.
inline std::string relabel_with_demos(Backend& backend, const data::Sample& sample,
                                      const std::vector<std::string>& options,
                                      const std::vector<Demo>& demos) {
  if (demos.empty())
    std::cerr << "[delora] warning: relabeling without demonstrations (zero-shot fallback)\n";
  return backend.label_for(sample, options, demos);
}

// Picks up to per_class clean samples per class (classes with fewer
// contribute all of theirs), seeded, in class-index order.
inline std::vector<Demo> select_demos(const data::Dataset& d,
                                      const std::vector<std::size_t>& clean_positions,
                                      std::size_t per_class, std::uint64_t seed) {
  require(!clean_positions.empty(), "select_demos: clean set is empty");
  require(per_class >= 1, "select_demos: per_class must be positive");
  std::vector<std::vector<std::size_t>> by_class(d.num_classes);
  for (std::size_t pos : clean_positions) {
    require(pos < d.size(), "select_demos: position out of range");
    by_class[d.samples[pos].observed_label].push_back(pos);
  }
  Rng rng(split_seed(seed, "demos"));
  std::vector<Demo> out;
  for (std::size_t k = 0; k < d.num_classes; ++k) {
    auto& pool = by_class[k];
    rng.shuffle(pool);
    const std::size_t take = std::min(per_class, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      const data::Sample& s = d.samples[pool[i]];
      out.push_back({prompt_text(s), d.label_names[k]});
    }
  }
  return out;
}

// Maps a backend's label name back to its class index.
inline std::size_t label_index_of(const std::vector<std::string>& options,
                                  const std::string& name, std::size_t sample_id) {
  for (std::size_t k = 0; k < options.size(); ++k)
    if (options[k] == name) return k;
  throw PseudoLabelUnavailable(sample_id, "backend returned unknown label '" + name + "'");
}

}  // namespace delora::relabel
