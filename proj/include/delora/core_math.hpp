#pragma once

// Core numeric primitives shared by every other header: dense row-major
// matrices, probability vectors, a fully specified deterministic PRNG,
// FNV-1a hashing, and a central-difference gradient checker.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace delora {

// Thrown when a caller violates a documented precondition (shape mismatch,
// out-of-range label, bad hyperparameter, ...).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& msg) : std::invalid_argument(msg) {}
};

// Thrown for malformed configuration files / CLI arguments.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for malformed input data files; carries a 1-based line number.
class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& msg, std::size_t line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

// Probabilities below this floor are clamped before taking logs; a clamped
// probability contributes a constant to the loss and therefore zero gradient.
inline constexpr double kProbFloor = 1e-12;

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

// Dense row-major matrix of doubles. Entries are expected to stay finite;
// check_finite() is called on every deserialization boundary.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  std::size_t size() const { return values.size(); }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  void check_finite(const std::string& what) const {
    for (double v : values)
      if (!std::isfinite(v)) throw ContractViolation(what + ": non-finite entry");
  }

  Matrix& operator+=(const Matrix& other) {
    require(same_shape(other), "Matrix+=: shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
    return *this;
  }

  Matrix& operator-=(const Matrix& other) {
    require(same_shape(other), "Matrix-=: shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= other.values[i];
    return *this;
  }

  Matrix& operator*=(double s) {
    for (double& v : values) v *= s;
    return *this;
  }
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }

inline bool operator==(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.values == b.values;
}

// a (m x k) times b (k x n) -> (m x n).
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul: inner dimensions disagree");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  return out;
}

// w (m x n) times x (n) -> (m).
inline std::vector<double> mat_vec(const Matrix& w, const std::vector<double>& x) {
  require(w.cols == x.size(), "mat_vec: dimension mismatch");
  std::vector<double> out(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) acc += w.at(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
  return out;
}

// Rank-1 product g (m) times x^T (n) -> (m x n).
inline Matrix outer(const std::vector<double>& g, const std::vector<double>& x) {
  Matrix out(g.size(), x.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) out.at(i, j) = g[i] * x[j];
  return out;
}

inline double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.values) acc += v * v;
  return std::sqrt(acc);
}

// ||a - b||_F; shapes must agree.
inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "frobenius_distance: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// ProbVector
// ---------------------------------------------------------------------------

// Discrete distribution over class indices 0..size()-1. Produced by softmax;
// entries are in [0,1] and sum to 1 within 1e-9 whenever produced by this
// library.
struct ProbVector {
  std::vector<double> entries;

  std::size_t size() const { return entries.size(); }
  double operator[](std::size_t i) const { return entries[i]; }

  bool valid(double tol = 1e-9) const {
    double sum = 0.0;
    for (double p : entries) {
      if (!(p >= 0.0 && p <= 1.0 + tol)) return false;
      sum += p;
    }
    return std::fabs(sum - 1.0) <= tol;
  }
};

// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(const std::vector<double>& v) {
  require(!v.empty(), "argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::size_t argmax(const ProbVector& p) { return argmax(p.entries); }

// Numerically stable softmax: shifts by the max logit before exponentiation,
// so the result is invariant to adding a constant to every logit.
inline ProbVector softmax(const std::vector<double>& logits) {
  require(!logits.empty(), "softmax: empty logits");
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  ProbVector out;
  out.entries.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.entries[i] = std::exp(logits[i] - mx);
    sum += out.entries[i];
  }
  for (double& p : out.entries) p /= sum;
  return out;
}

// -log p[label], with p[label] clamped below by kProbFloor.
inline double cross_entropy(const ProbVector& probs, std::size_t label) {
  require(label < probs.size(), "cross_entropy: label out of range");
  return -std::log(std::max(probs[label], kProbFloor));
}

// ---------------------------------------------------------------------------
// Hashing and seed derivation
// ---------------------------------------------------------------------------

// FNV-1a, 64-bit: offset 0xcbf29ce484222325, prime 0x100000001b3. Used both
// for feature hashing and for deriving named PRNG streams; must stay
// bit-exact across platforms.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer; also used to expand seeds into PRNG state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed for a named purpose: seed XOR hash(tag).
inline std::uint64_t split_seed(std::uint64_t seed, std::string_view purpose) {
  return seed ^ fnv1a64(purpose);
}

// Derives an independent stream seed for the index-th item of a family
// (per-sample or per-replicate streams).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (index + 1));
  return splitmix64(s);
}

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

// xoshiro256** with splitmix64 seeding. The update rule is pinned here so
// that every run is reproducible bit-for-bit from a 64-bit seed, independent
// of the standard library:
//   result = rotl(s1 * 5, 7) * 9
//   t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t
//   s3 = rotl(s3, 45)
// Real draws use the top 53 bits; bounded ints use rejection sampling, so no
// value of n biases the result. Gaussians come from Box-Muller (exactly two
// uniform draws per call). std::uniform_*_distribution is deliberately not
// used anywhere: its output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;  // all-zero state is invalid
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); unbiased via rejection below 2^64 mod n.
  std::uint64_t uniform_below(std::uint64_t n) {
    require(n > 0, "uniform_below: n must be positive");
    const std::uint64_t threshold = (-n) % n;  // (2^64 - n) mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; consumes exactly two uniforms.
  double gaussian() {
    const double a = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double r = std::sqrt(-2.0 * std::log(a));
    const double theta = 2.0 * kPi * uniform();
    return r * std::cos(theta);
  }

  // Fisher-Yates, iterating from the back; order of draws is part of the
  // determinism contract.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Compares an analytic gradient against central differences
// (L(x+h e_i) - L(x-h e_i)) / 2h and returns the worst relative error
//   |g_i - fd_i| / max(1, |g_i|, |fd_i|).
// Throws if the loss evaluates to a non-finite value at any probe point,
// naming the offending coordinate.
inline double grad_check(const std::function<double(const std::vector<double>&)>& loss,
                         const std::function<std::vector<double>(const std::vector<double>&)>& grad,
                         const std::vector<double>& point, double step) {
  require(step > 0.0, "grad_check: step must be positive");
  const std::vector<double> g = grad(point);
  require(g.size() == point.size(), "grad_check: gradient size mismatch");
  std::vector<double> probe = point;
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = loss(probe);
    probe[i] = point[i] - step;
    const double down = loss(probe);
    probe[i] = point[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw ContractViolation("grad_check: non-finite loss at coordinate " + std::to_string(i));
    const double fd = (up - down) / (2.0 * step);
    const double rel = std::fabs(g[i] - fd) / std::max({1.0, std::fabs(g[i]), std::fabs(fd)});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace delora
