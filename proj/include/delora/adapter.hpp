#pragma once

// Dual low-rank adapter model: a frozen base weight plus two trainable
// low-rank deltas ("clean" and "noisy"). A single linear layer with softmax
// on top; the detector trains the adapters, never the base.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "delora/core_math.hpp"

namespace delora {

// Low-rank delta: b (classes x rank) times a (rank x dim). b starts at zero
// so the delta is exactly zero at initialization; a starts from a small
// seeded Gaussian.
struct LowRankAdapter {
  Matrix a;  // rank x dim
  Matrix b;  // classes x rank

  std::size_t rank() const { return a.rows; }
};

struct FrozenBase {
  Matrix w0;  // classes x dim
};

struct DualAdapterModel {
  FrozenBase base;
  LowRankAdapter clean;
  LowRankAdapter noisy;
  std::uint64_t seed = 0;  // init seed, kept for checkpoints

  std::size_t classes() const { return base.w0.rows; }
  std::size_t dim() const { return base.w0.cols; }
  std::size_t rank() const { return clean.rank(); }
};

enum class AdapterVariant { Clean, Noisy, Combined };

inline const char* variant_name(AdapterVariant v) {
  switch (v) {
    case AdapterVariant::Clean: return "clean";
    case AdapterVariant::Noisy: return "noisy";
    default: return "combined";
  }
}

inline constexpr double kAdapterInitStd = 0.01;

// Builds a model with b = 0, a ~ N(0, 0.01^2), and w0 = 0 unless
// w0_std > 0, in which case w0 ~ N(0, w0_std^2). All draws come from the
// given seed, so construction is reproducible bit-for-bit.
inline DualAdapterModel make_model(std::size_t classes, std::size_t dim, std::size_t rank,
                                   std::uint64_t seed, double w0_std = 0.0) {
  require(classes >= 2, "make_model: need at least two classes");
  require(dim >= 1 && rank >= 1, "make_model: dim and rank must be positive");
  DualAdapterModel m;
  m.seed = seed;
  m.base.w0 = Matrix(classes, dim);
  Rng rng(split_seed(seed, "adapter.init"));
  if (w0_std > 0.0)
    for (double& v : m.base.w0.values) v = w0_std * rng.gaussian();
  auto init_adapter = [&](LowRankAdapter& ad) {
    ad.b = Matrix(classes, rank);  // zeros
    ad.a = Matrix(rank, dim);
    for (double& v : ad.a.values) v = kAdapterInitStd * rng.gaussian();
  };
  init_adapter(m.clean);
  init_adapter(m.noisy);
  return m;
}

// w0 + b_c a_c (Clean), w0 + b_n a_n (Noisy), or w0 + both deltas (Combined).
inline Matrix effective_weight(const DualAdapterModel& m, AdapterVariant v) {
  Matrix w = m.base.w0;
  if (v == AdapterVariant::Clean || v == AdapterVariant::Combined)
    w += matmul(m.clean.b, m.clean.a);
  if (v == AdapterVariant::Noisy || v == AdapterVariant::Combined)
    w += matmul(m.noisy.b, m.noisy.a);
  return w;
}

inline ProbVector forward(const DualAdapterModel& m, const std::vector<double>& x,
                          AdapterVariant v) {
  return softmax(mat_vec(effective_weight(m, v), x));
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

// Gradient holder shaped like one adapter.
struct AdapterGrad {
  Matrix a;
  Matrix b;
};

// Gradient holder shaped like the trainable part of the model. Variants that
// exclude an adapter leave its block at zero.
struct DualGrad {
  AdapterGrad clean;
  AdapterGrad noisy;
};

inline DualGrad zero_grad(const DualAdapterModel& m) {
  DualGrad g;
  g.clean.a = Matrix(m.clean.a.rows, m.clean.a.cols);
  g.clean.b = Matrix(m.clean.b.rows, m.clean.b.cols);
  g.noisy.a = Matrix(m.noisy.a.rows, m.noisy.a.cols);
  g.noisy.b = Matrix(m.noisy.b.rows, m.noisy.b.cols);
  return g;
}

inline void accumulate(DualGrad& into, const DualGrad& g, double scale = 1.0) {
  into.clean.a += g.clean.a * scale;
  into.clean.b += g.clean.b * scale;
  into.noisy.a += g.noisy.a * scale;
  into.noisy.b += g.noisy.b * scale;
}

inline void apply_grad(DualAdapterModel& m, const DualGrad& g, double lr) {
  m.clean.a -= g.clean.a * lr;
  m.clean.b -= g.clean.b * lr;
  m.noisy.a -= g.noisy.a * lr;
  m.noisy.b -= g.noisy.b * lr;
}

struct CeBackward {
  double loss = 0.0;
  DualGrad grad;
};

// dL/dz for softmax cross-entropy: p - e_y, or all zeros when p[y] sits at
// the clamp floor (the loss is constant there).
inline std::vector<double> ce_logit_grad(const ProbVector& p, std::size_t label) {
  std::vector<double> g(p.size(), 0.0);
  if (p[label] <= kProbFloor) return g;
  g = p.entries;
  g[label] -= 1.0;
  return g;
}

// Cross-entropy loss and adapter gradients for one sample under a variant.
// With dW = (p - e_y) x^T, the adapter blocks are dB = dW A^T = g (A x)^T and
// dA = B^T dW = (B^T g) x^T; only the variant's adapters receive gradient.
inline CeBackward backward_ce(const DualAdapterModel& m, const std::vector<double>& x,
                              std::size_t label, AdapterVariant v) {
  require(label < m.classes(), "backward_ce: label out of range");
  const ProbVector p = forward(m, x, v);
  CeBackward out;
  out.loss = cross_entropy(p, label);
  out.grad = zero_grad(m);
  const std::vector<double> g = ce_logit_grad(p, label);
  auto fill = [&](const LowRankAdapter& ad, AdapterGrad& dst) {
    dst.b = outer(g, mat_vec(ad.a, x));
    std::vector<double> btg(ad.rank(), 0.0);
    for (std::size_t r = 0; r < ad.rank(); ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m.classes(); ++i) acc += ad.b.at(i, r) * g[i];
      btg[r] = acc;
    }
    dst.a = outer(btg, x);
  };
  if (v == AdapterVariant::Clean || v == AdapterVariant::Combined) fill(m.clean, out.grad.clean);
  if (v == AdapterVariant::Noisy || v == AdapterVariant::Combined) fill(m.noisy, out.grad.noisy);
  return out;
}

// Same loss/gradient for a plain linear model (used by the under-trained
// noise proxy, the denoised classifier, and the naive baseline).
struct LinearCeBackward {
  double loss = 0.0;
  Matrix grad;  // classes x dim
};

inline LinearCeBackward linear_backward_ce(const Matrix& w, const std::vector<double>& x,
                                           std::size_t label) {
  require(label < w.rows, "linear_backward_ce: label out of range");
  const ProbVector p = softmax(mat_vec(w, x));
  LinearCeBackward out;
  out.loss = cross_entropy(p, label);
  out.grad = outer(ce_logit_grad(p, label), x);
  return out;
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

struct AdapterSnapshot {
  Matrix a;
  Matrix b;
};

struct ParamSnapshot {
  AdapterSnapshot clean;
  AdapterSnapshot noisy;
  std::size_t epoch = 0;  // epoch the snapshot was taken at (0 = before training)
};

inline ParamSnapshot take_snapshot(const DualAdapterModel& m, std::size_t epoch) {
  return ParamSnapshot{{m.clean.a, m.clean.b}, {m.noisy.a, m.noisy.b}, epoch};
}

// Parameter movement since the snapshot: ||b - b0||_F + ||a - a0||_F.
inline double param_change(const LowRankAdapter& ad, const AdapterSnapshot& snap) {
  return frobenius_distance(ad.b, snap.b) + frobenius_distance(ad.a, snap.a);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// JSON checkpoint layout. Doubles are serialized with shortest-round-trip
// formatting, so save/load is lossless at 64-bit precision.
//   dual_adapter: format, version, kind, classes, dim, rank, seed,
//                 w0, clean_a, clean_b, noisy_a, noisy_b (row-major arrays)
//   linear:       format, version, kind, classes, dim, seed, weight

inline constexpr const char* kCheckpointFormat = "delora-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) { return m.values; }

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                               const std::string& what) {
  if (!j.is_array() || j.size() != rows * cols)
    throw ConfigError("checkpoint: field '" + what + "' has wrong length");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (!j[i].is_number())
      throw ConfigError("checkpoint: field '" + what + "' has a non-numeric entry");
    m.values[i] = j[i].get<double>();
    if (!std::isfinite(m.values[i]))
      throw ConfigError("checkpoint: field '" + what + "' has a non-finite entry");
  }
  return m;
}

inline nlohmann::json load_checkpoint_json(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint: invalid JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat)
    throw ConfigError("checkpoint: unrecognized format in " + path);
  if (j.value("version", -1) != kCheckpointVersion)
    throw ConfigError("checkpoint: unsupported version in " + path);
  if (j.value("kind", "") != kind)
    throw ConfigError("checkpoint: expected kind '" + kind + "' in " + path);
  return j;
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(1) << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace detail

inline void save_checkpoint(const DualAdapterModel& m, const std::string& path) {
  nlohmann::json j{{"format", kCheckpointFormat},
                   {"version", kCheckpointVersion},
                   {"kind", "dual_adapter"},
                   {"classes", m.classes()},
                   {"dim", m.dim()},
                   {"rank", m.rank()},
                   {"seed", m.seed},
                   {"w0", detail::matrix_to_json(m.base.w0)},
                   {"clean_a", detail::matrix_to_json(m.clean.a)},
                   {"clean_b", detail::matrix_to_json(m.clean.b)},
                   {"noisy_a", detail::matrix_to_json(m.noisy.a)},
                   {"noisy_b", detail::matrix_to_json(m.noisy.b)}};
  detail::write_json_file(j, path);
}

inline DualAdapterModel load_checkpoint(const std::string& path) {
  const nlohmann::json j = detail::load_checkpoint_json(path, "dual_adapter");
  const auto classes = j.at("classes").get<std::size_t>();
  const auto dim = j.at("dim").get<std::size_t>();
  const auto rank = j.at("rank").get<std::size_t>();
  if (classes < 2 || dim < 1 || rank < 1)
    throw ConfigError("checkpoint: invalid shape in " + path);
  DualAdapterModel m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.base.w0 = detail::matrix_from_json(j.at("w0"), classes, dim, "w0");
  m.clean.a = detail::matrix_from_json(j.at("clean_a"), rank, dim, "clean_a");
  m.clean.b = detail::matrix_from_json(j.at("clean_b"), classes, rank, "clean_b");
  m.noisy.a = detail::matrix_from_json(j.at("noisy_a"), rank, dim, "noisy_a");
  m.noisy.b = detail::matrix_from_json(j.at("noisy_b"), classes, rank, "noisy_b");
  return m;
}

inline void save_linear_checkpoint(const Matrix& weight, std::uint64_t seed,
                                   const std::string& path) {
  nlohmann::json j{{"format", kCheckpointFormat},
                   {"version", kCheckpointVersion},
                   {"kind", "linear"},
                   {"classes", weight.rows},
                   {"dim", weight.cols},
                   {"seed", seed},
                   {"weight", detail::matrix_to_json(weight)}};
  detail::write_json_file(j, path);
}

struct LinearCheckpoint {
  Matrix weight;
  std::uint64_t seed = 0;
};

inline LinearCheckpoint load_linear_checkpoint(const std::string& path) {
  const nlohmann::json j = detail::load_checkpoint_json(path, "linear");
  const auto classes = j.at("classes").get<std::size_t>();
  const auto dim = j.at("dim").get<std::size_t>();
  if (classes < 2 || dim < 1) throw ConfigError("checkpoint: invalid shape in " + path);
  LinearCheckpoint c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.weight = detail::matrix_from_json(j.at("weight"), classes, dim, "weight");
  return c;
}

}  // namespace delora
