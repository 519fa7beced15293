#include "delora/adapter.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "test_util.hpp"

namespace {

using namespace delora;
using delora_test::bits_equal;
using delora_test::pack_adapters;
using delora_test::pack_grad;
using delora_test::unpack_adapters;

TEST(Adapter, EffectiveWeightHandValues) {
  DualAdapterModel m;
  m.base.w0 = Matrix(2, 2);
  m.base.w0.at(0, 0) = 1.0;
  m.base.w0.at(1, 1) = 1.0;
  m.clean.b = Matrix(2, 1);
  m.clean.b.values = {1, 2};
  m.clean.a = Matrix(1, 2);
  m.clean.a.values = {3, 4};
  m.noisy.b = Matrix(2, 1);
  m.noisy.b.values = {1, 0};
  m.noisy.a = Matrix(1, 2);
  m.noisy.a.values = {0, 5};

  // b_c a_c = [[3,4],[6,8]]
  const Matrix wc = effective_weight(m, AdapterVariant::Clean);
  EXPECT_DOUBLE_EQ(wc.at(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(wc.at(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(wc.at(1, 0), 6.0);
  EXPECT_DOUBLE_EQ(wc.at(1, 1), 9.0);

  // b_n a_n = [[0,5],[0,0]]
  const Matrix wn = effective_weight(m, AdapterVariant::Noisy);
  EXPECT_DOUBLE_EQ(wn.at(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(wn.at(1, 1), 1.0);

  const Matrix wb = effective_weight(m, AdapterVariant::Combined);
  EXPECT_DOUBLE_EQ(wb.at(0, 1), 9.0);  // 0 + 4 + 5
}

TEST(Adapter, FreshModelHasZeroDelta) {
  const DualAdapterModel m = make_model(3, 5, 2, 11);
  // b = 0 makes every variant equal to w0 (= 0 here) at initialization.
  for (auto v : {AdapterVariant::Clean, AdapterVariant::Noisy, AdapterVariant::Combined}) {
    const Matrix w = effective_weight(m, v);
    for (double val : w.values) EXPECT_DOUBLE_EQ(val, 0.0);
    const ProbVector p = forward(m, {1, 2, 3, 4, 5}, v);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], 1.0 / 3.0, 1e-12);
  }
}

TEST(Adapter, InitIsSeededAndScaled) {
  const DualAdapterModel m1 = make_model(4, 16, 4, 99);
  const DualAdapterModel m2 = make_model(4, 16, 4, 99);
  EXPECT_TRUE(bits_equal(m1.clean.a, m2.clean.a));
  EXPECT_TRUE(bits_equal(m1.noisy.a, m2.noisy.a));

  const DualAdapterModel m3 = make_model(4, 16, 4, 100);
  EXPECT_FALSE(bits_equal(m1.clean.a, m3.clean.a));

  // a entries are drawn at std 0.01; the empirical std over 2*64 draws
  // should land in a generous band around it.
  double sumsq = 0.0;
  std::size_t n = 0;
  for (const Matrix* mat : {&m1.clean.a, &m1.noisy.a})
    for (double v : mat->values) {
      sumsq += v * v;
      ++n;
    }
  const double std_hat = std::sqrt(sumsq / static_cast<double>(n));
  EXPECT_GT(std_hat, 0.005);
  EXPECT_LT(std_hat, 0.02);

  // b blocks are exactly zero, and the clean/noisy a blocks differ.
  for (double v : m1.clean.b.values) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : m1.noisy.b.values) EXPECT_DOUBLE_EQ(v, 0.0);
  EXPECT_FALSE(bits_equal(m1.clean.a, m1.noisy.a));

  EXPECT_THROW(make_model(1, 4, 2, 0), ContractViolation);
}

TEST(Adapter, SeededBaseInit) {
  const DualAdapterModel m = make_model(3, 4, 2, 5, 0.5);
  double maxabs = 0.0;
  for (double v : m.base.w0.values) maxabs = std::max(maxabs, std::fabs(v));
  EXPECT_GT(maxabs, 0.0);
  const DualAdapterModel m2 = make_model(3, 4, 2, 5, 0.5);
  EXPECT_TRUE(bits_equal(m.base.w0, m2.base.w0));
}

class AdapterGradCheck : public ::testing::Test {
 protected:
  // Small random state with non-zero b so every gradient path is exercised.
  DualAdapterModel random_model(std::uint64_t seed) {
    DualAdapterModel m = make_model(3, 5, 2, seed, 0.3);
    Rng rng(split_seed(seed, "test.state"));
    for (auto* mat : {&m.clean.a, &m.clean.b, &m.noisy.a, &m.noisy.b})
      for (double& v : mat->values) v = 0.5 * rng.gaussian();
    return m;
  }

  std::vector<double> random_input(std::uint64_t seed) {
    Rng rng(split_seed(seed, "test.input"));
    std::vector<double> x(5);
    for (double& v : x) v = rng.gaussian();
    return x;
  }
};

TEST_F(AdapterGradCheck, BackwardCeMatchesFiniteDifferences) {
  for (auto variant :
       {AdapterVariant::Clean, AdapterVariant::Noisy, AdapterVariant::Combined}) {
    DualAdapterModel m = random_model(21);
    const auto x = random_input(22);
    const std::size_t label = 1;
    auto loss = [&](const std::vector<double>& flat) {
      DualAdapterModel probe = m;
      unpack_adapters(probe, flat);
      return cross_entropy(forward(probe, x, variant), label);
    };
    auto grad = [&](const std::vector<double>& flat) {
      DualAdapterModel probe = m;
      unpack_adapters(probe, flat);
      return pack_grad(backward_ce(probe, x, label, variant).grad);
    };
    const double err = grad_check(loss, grad, pack_adapters(m), 1e-6);
    EXPECT_LT(err, 1e-4) << "variant " << variant_name(variant);
  }
}

TEST_F(AdapterGradCheck, ExcludedAdapterGetsZeroGradient) {
  DualAdapterModel m = random_model(3);
  const auto x = random_input(4);
  const CeBackward bc = backward_ce(m, x, 0, AdapterVariant::Clean);
  for (double v : bc.grad.noisy.a.values) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : bc.grad.noisy.b.values) EXPECT_DOUBLE_EQ(v, 0.0);
  const CeBackward bn = backward_ce(m, x, 0, AdapterVariant::Noisy);
  for (double v : bn.grad.clean.a.values) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : bn.grad.clean.b.values) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST_F(AdapterGradCheck, PerfectPredictionHasVanishingGradient) {
  // Huge separating base weight drives p to one-hot; every gradient entry
  // must be below 1e-9.
  DualAdapterModel m = make_model(2, 2, 1, 7);
  m.base.w0.at(0, 0) = 60.0;
  m.base.w0.at(1, 1) = 60.0;
  const CeBackward bc = backward_ce(m, {1.0, -1.0}, 0, AdapterVariant::Combined);
  EXPECT_LT(bc.loss, 1e-9);
  for (const Matrix* g : {&bc.grad.clean.a, &bc.grad.clean.b, &bc.grad.noisy.a, &bc.grad.noisy.b})
    for (double v : g->values) EXPECT_LT(std::fabs(v), 1e-9);
}

TEST_F(AdapterGradCheck, LinearBackwardMatchesFiniteDifferences) {
  Rng rng(31);
  Matrix w(3, 4);
  for (double& v : w.values) v = rng.gaussian();
  std::vector<double> x(4);
  for (double& v : x) v = rng.gaussian();
  const std::size_t label = 2;
  auto loss = [&](const std::vector<double>& flat) {
    Matrix probe = w;
    probe.values = flat;
    return cross_entropy(softmax(mat_vec(probe, x)), label);
  };
  auto grad = [&](const std::vector<double>& flat) {
    Matrix probe = w;
    probe.values = flat;
    return linear_backward_ce(probe, x, label).grad.values;
  };
  EXPECT_LT(grad_check(loss, grad, w.values, 1e-6), 1e-4);
}

TEST(Snapshot, ParamChangeHandValues) {
  DualAdapterModel m = make_model(2, 3, 1, 1);
  const ParamSnapshot snap = take_snapshot(m, 0);
  EXPECT_EQ(snap.epoch, 0u);
  EXPECT_DOUBLE_EQ(param_change(m.clean, snap.clean), 0.0);

  // Move one b entry by 3 and one a entry by 4: change = 3 + 4.
  m.clean.b.at(0, 0) += 3.0;
  m.clean.a.at(0, 1) += 4.0;
  EXPECT_DOUBLE_EQ(param_change(m.clean, snap.clean), 7.0);
  EXPECT_DOUBLE_EQ(param_change(m.noisy, snap.noisy), 0.0);
}

TEST(Snapshot, SgdStepMovesParameters) {
  DualAdapterModel m = make_model(2, 3, 1, 8);
  const ParamSnapshot snap = take_snapshot(m, 1);
  DualGrad g = zero_grad(m);
  g.clean.b.at(0, 0) = 2.0;
  apply_grad(m, g, 0.5);
  EXPECT_DOUBLE_EQ(m.clean.b.at(0, 0), snap.clean.b.at(0, 0) - 1.0);
}

TEST(Checkpoint, DualRoundTripIsBitExact) {
  DualAdapterModel m = make_model(3, 7, 2, 123, 0.25);
  Rng rng(55);
  for (auto* mat : {&m.clean.a, &m.clean.b, &m.noisy.a, &m.noisy.b})
    for (double& v : mat->values) v = rng.gaussian();
  // Awkward values that expose lossy serialization.
  m.clean.a.at(0, 0) = 0.1;
  m.clean.a.at(0, 1) = 1e-300;
  m.clean.b.at(0, 0) = -0.0;
  m.noisy.a.at(1, 6) = 1.0 / 3.0;

  const std::string path = testing::TempDir() + "ckpt_dual.json";
  save_checkpoint(m, path);
  const DualAdapterModel r = load_checkpoint(path);
  EXPECT_EQ(r.seed, m.seed);
  EXPECT_TRUE(bits_equal(r.base.w0, m.base.w0));
  EXPECT_TRUE(bits_equal(r.clean.a, m.clean.a));
  EXPECT_TRUE(bits_equal(r.clean.b, m.clean.b));
  EXPECT_TRUE(bits_equal(r.noisy.a, m.noisy.a));
  EXPECT_TRUE(bits_equal(r.noisy.b, m.noisy.b));
  std::remove(path.c_str());
}

TEST(Checkpoint, LinearRoundTripIsBitExact) {
  Matrix w(2, 3);
  w.values = {0.1, -0.0, 1e-300, 1.0 / 3.0, -2.5, 42.0};
  const std::string path = testing::TempDir() + "ckpt_linear.json";
  save_linear_checkpoint(w, 77, path);
  const LinearCheckpoint c = load_linear_checkpoint(path);
  EXPECT_EQ(c.seed, 77u);
  EXPECT_TRUE(bits_equal(c.weight, w));
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsMalformedFiles) {
  const std::string path = testing::TempDir() + "ckpt_bad.json";
  auto write = [&](const std::string& body) {
    std::ofstream out(path);
    out << body;
  };

  write("not json at all");
  EXPECT_THROW(load_checkpoint(path), ConfigError);

  write(R"({"format":"other","version":1,"kind":"dual_adapter"})");
  EXPECT_THROW(load_checkpoint(path), ConfigError);

  write(R"({"format":"delora-checkpoint","version":1,"kind":"linear",
            "classes":2,"dim":2,"seed":0,"weight":[1,2,3]})");
  EXPECT_THROW(load_linear_checkpoint(path), ConfigError);  // wrong length

  write(R"({"format":"delora-checkpoint","version":1,"kind":"linear",
            "classes":2,"dim":1,"seed":0,"weight":[1,"nan"]})");
  EXPECT_THROW(load_linear_checkpoint(path), ConfigError);

  EXPECT_THROW(load_checkpoint(testing::TempDir() + "missing_ckpt.json"), ConfigError);
  std::remove(path.c_str());
}

}  // namespace
