#include "delora/baselines.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "delora/metrics.hpp"
#include "delora/noise.hpp"
#include "test_util.hpp"

using namespace delora;
using namespace delora::baseline;
using delora_test::bits_equal;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

data::Dataset noisy_benchmark(double ratio, std::uint64_t seed) {
  const data::Dataset clean = data::gen_gaussian_clusters(3, 8, 40, 3.0, seed);
  noise::NoiseSpec spec;
  spec.kind = noise::NoiseKind::Symmetric;
  spec.ratio = ratio;
  spec.seed = seed + 1;
  return noise::inject_noise(clean, spec).dataset;
}

}  // namespace

TEST(FitGmm, SeparatedClustersHandValues) {
  const std::vector<double> values{0, 0, 0, 10, 10, 10};
  const Gmm1d g = fit_gmm_em(values);
  const std::size_t lo = g.lower_mean_index();
  const std::size_t hi = 1 - lo;
  EXPECT_NEAR(g.components[lo].mean, 0.0, 1e-6);
  EXPECT_NEAR(g.components[hi].mean, 10.0, 1e-6);
  EXPECT_NEAR(g.components[lo].weight, 0.5, 1e-6);
  EXPECT_NEAR(g.components[hi].weight, 0.5, 1e-6);
  EXPECT_NEAR(g.components[0].weight + g.components[1].weight, 1.0, 1e-12);
  EXPECT_GE(g.components[0].variance, kGmmVarianceFloor);
  EXPECT_GE(g.components[1].variance, kGmmVarianceFloor);
}

TEST(FitGmm, RecoversPlantedMixture) {
  Rng rng(split_seed(99, "oracle"));
  std::vector<double> values;
  values.reserve(10000);
  for (std::size_t i = 0; i < 5000; ++i) values.push_back(rng.gaussian());
  for (std::size_t i = 0; i < 5000; ++i) values.push_back(8.0 + rng.gaussian());
  const Gmm1d g = fit_gmm_em(values);
  const std::size_t lo = g.lower_mean_index();
  EXPECT_NEAR(g.components[lo].mean, 0.0, 0.2);
  EXPECT_NEAR(g.components[1 - lo].mean, 8.0, 0.2);
  EXPECT_NEAR(g.components[lo].weight, 0.5, 0.05);
  EXPECT_NEAR(g.components[lo].variance, 1.0, 0.2);
  EXPECT_NEAR(g.components[1 - lo].variance, 1.0, 0.2);
}

TEST(FitGmm, LogLikelihoodNondecreasing) {
  Rng rng(split_seed(7, "oracle"));
  std::vector<double> values;
  for (std::size_t i = 0; i < 300; ++i) values.push_back(rng.gaussian());
  for (std::size_t i = 0; i < 700; ++i) values.push_back(3.0 + 2.0 * rng.gaussian());
  const Gmm1d g = fit_gmm_em(values);
  ASSERT_GE(g.log_likelihood_trace.size(), 2u);
  for (std::size_t i = 1; i < g.log_likelihood_trace.size(); ++i) {
    const double prev = g.log_likelihood_trace[i - 1];
    EXPECT_GE(g.log_likelihood_trace[i], prev - 1e-9 * (1.0 + std::abs(prev)));
  }
}

TEST(FitGmm, RejectsDegenerateInput) {
  EXPECT_THROW(fit_gmm_em({3.0, 3.0, 3.0, 3.0}), ContractViolation);
  EXPECT_THROW(fit_gmm_em({1.0}), ContractViolation);
  EXPECT_THROW(fit_gmm_em({}), ContractViolation);
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(fit_gmm_em({0.0, inf}), ContractViolation);
}

TEST(FitGmm, NearDuplicateValuesRespectFloor) {
  // Two tight spikes; the floor keeps EM finite and the fit usable.
  std::vector<double> values;
  for (std::size_t i = 0; i < 50; ++i) values.push_back(1.0 + 1e-12 * static_cast<double>(i));
  for (std::size_t i = 0; i < 50; ++i) values.push_back(2.0 + 1e-12 * static_cast<double>(i));
  const Gmm1d g = fit_gmm_em(values);
  EXPECT_GE(g.components[0].variance, kGmmVarianceFloor);
  EXPECT_GE(g.components[1].variance, kGmmVarianceFloor);
  const std::size_t lo = g.lower_mean_index();
  EXPECT_NEAR(g.components[lo].mean, 1.0, 1e-3);
  EXPECT_NEAR(g.components[1 - lo].mean, 2.0, 1e-3);
}

TEST(SelectSmallLoss, ZeroLossSamplesAreClean) {
  const std::vector<double> losses{0, 0, 10, 10};
  const Gmm1d g = fit_gmm_em(losses);
  const BaselineSelection sel = select_small_loss(losses, g);
  EXPECT_EQ(sel.method, "gmm_small_loss");
  EXPECT_EQ(sel.clean_indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(sel.noisy_indices, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(sel.clean_indices.size() + sel.noisy_indices.size(), losses.size());
  EXPECT_GT(sel.score[0], 0.99);
  EXPECT_LT(sel.score[2], 0.01);
}

TEST(SelectSmallLoss, SymmetricDegenerateGivesEmptyCleanSet) {
  // Identical components put every posterior at exactly 0.5; the strict
  // threshold then selects nothing.
  Gmm1d g;
  g.components[0] = {5.0, 1.0, 0.5};
  g.components[1] = {5.0, 1.0, 0.5};
  const std::vector<double> losses{1.0, 5.0, 9.0};
  const BaselineSelection sel = select_small_loss(losses, g);
  EXPECT_TRUE(sel.clean_indices.empty());
  EXPECT_EQ(sel.noisy_indices.size(), losses.size());
  for (double s : sel.score) EXPECT_DOUBLE_EQ(s, 0.5);
}

TEST(WarmupLosses, MatchesDetectorTrajectoryBitwise) {
  const data::Dataset d = noisy_benchmark(0.3, 201);
  detect::DetectorConfig cfg;
  cfg.warmup_epochs = 2;
  cfg.total_epochs = 3;
  cfg.use_l_detector = false;  // the whole detector run is warm-up-style
  cfg.batch_size = 16;
  cfg.seed = 77;
  relabel::SyntheticOracle oracle(0.9, 3);
  const detect::DetectorResult det = detect::train_detector(d, cfg, oracle);
  const WarmupResult warm = warmup_losses(d, cfg, cfg.total_epochs);
  EXPECT_TRUE(bits_equal(warm.model.clean.a, det.model.clean.a));
  EXPECT_TRUE(bits_equal(warm.model.clean.b, det.model.clean.b));
  EXPECT_TRUE(bits_equal(warm.model.noisy.a, det.model.noisy.a));
  EXPECT_TRUE(bits_equal(warm.model.noisy.b, det.model.noisy.b));

  // Reported losses are the per-sample combined-variant cross-entropies.
  const Matrix w = effective_weight(warm.model, AdapterVariant::Combined);
  ASSERT_EQ(warm.losses.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double expect =
        cross_entropy(softmax(mat_vec(w, d.samples[i].features)), d.samples[i].observed_label);
    EXPECT_TRUE(delora_test::bits_equal(warm.losses[i], expect)) << "sample " << i;
  }
}

TEST(WarmupLosses, DefaultUsesConfiguredWarmupEpochs) {
  const data::Dataset d = noisy_benchmark(0.3, 203);
  detect::DetectorConfig cfg;
  cfg.batch_size = 16;
  cfg.seed = 5;
  const WarmupResult a = warmup_losses(d, cfg);
  const WarmupResult b = warmup_losses(d, cfg, cfg.warmup_epochs);
  EXPECT_TRUE(bits_equal(a.model.clean.b, b.model.clean.b));
  EXPECT_EQ(a.losses, b.losses);
}

TEST(SmallLossSelect, FindsPlantedNoiseAboveBaseRate) {
  const data::Dataset d = noisy_benchmark(0.3, 205);
  detect::DetectorConfig cfg;
  cfg.batch_size = 16;
  cfg.seed = 11;
  const BaselineSelection sel = small_loss_select(d, cfg);
  EXPECT_EQ(sel.clean_indices.size() + sel.noisy_indices.size(), d.size());
  ASSERT_FALSE(sel.clean_indices.empty());
  const harness::PrecisionRecall pr = harness::precision_recall(sel.clean_indices, d);
  // Random selection would sit at the clean base rate (~0.7); warm-up losses
  // must separate better than chance.
  EXPECT_GT(pr.precision, 0.75);
  EXPECT_GT(pr.recall, 0.5);
}

TEST(LlmDetection, PerfectOracleOnNoiseFreeDataSelectsEverything) {
  const data::Dataset d = data::gen_gaussian_clusters(3, 4, 10, 3.0, 207);
  relabel::SyntheticOracle oracle(1.0, 4);
  const BaselineSelection sel = llm_detection(d, oracle);
  EXPECT_EQ(sel.method, "llm_detection");
  EXPECT_EQ(sel.clean_indices.size(), d.size());
  EXPECT_TRUE(sel.noisy_indices.empty());
}

TEST(LlmDetection, PerfectOracleRecoversExactCleanSet) {
  const data::Dataset d = noisy_benchmark(0.4, 209);
  relabel::SyntheticOracle oracle(1.0, 5);
  const BaselineSelection sel = llm_detection(d, oracle);
  EXPECT_EQ(sel.clean_indices, data::clean_positions(d));
  const harness::PrecisionRecall pr = harness::precision_recall(sel.clean_indices, d);
  EXPECT_DOUBLE_EQ(pr.precision, 1.0);
  EXPECT_DOUBLE_EQ(pr.recall, 1.0);
}

namespace {
class FailingBackend final : public relabel::Backend {
 public:
  explicit FailingBackend(std::size_t fail_below) : fail_below_(fail_below) {}
  std::string label_for(const data::Sample& sample, const std::vector<std::string>& options,
                        const std::vector<relabel::Demo>&) override {
    if (sample.id < fail_below_)
      throw relabel::PseudoLabelUnavailable(sample.id, "synthetic outage");
    return options.at(sample.observed_label);
  }
  const char* name() const override { return "failing"; }

 private:
  std::size_t fail_below_;
};
}  // namespace

TEST(LlmDetection, BackendFailuresMarkSamplesNoisy) {
  const data::Dataset d = data::gen_gaussian_clusters(2, 3, 5, 3.0, 211);
  FailingBackend backend(3);  // ids 0..2 fail, the rest agree
  const BaselineSelection sel = llm_detection(d, backend);
  EXPECT_EQ(sel.noisy_indices, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(sel.clean_indices.size(), d.size() - 3);
}

TEST(LlmDetection, DeterministicWithSyntheticOracle) {
  const data::Dataset d = noisy_benchmark(0.3, 213);
  relabel::SyntheticOracle o1(0.8, 6), o2(0.8, 6);
  const BaselineSelection a = llm_detection(d, o1);
  const BaselineSelection b = llm_detection(d, o2);
  EXPECT_EQ(a.clean_indices, b.clean_indices);
  EXPECT_EQ(a.score, b.score);
}

TEST(TrainBase, MatchesClassifierTrainingOnAllSamples) {
  const data::Dataset d = noisy_benchmark(0.2, 215);
  stage2::Stage2Config cfg;
  cfg.seed = 13;
  const stage2::ClassifierModel a = train_base(d, cfg);
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  const stage2::ClassifierModel b = stage2::train_classifier(d, all, {}, cfg);
  EXPECT_TRUE(bits_equal(a.weight, b.weight));
}

TEST(TrainBase, SeparableNoiseFreeDataReachesHighAccuracy) {
  const data::Dataset d = data::gen_gaussian_clusters(3, 4, 40, 8.0, 217);
  stage2::Stage2Config cfg;
  cfg.seed = 15;
  const stage2::ClassifierModel m = train_base(d, cfg);
  EXPECT_GT(harness::test_accuracy(m.weight, d), 0.99);
}

TEST(BaselineCsv, RoundTripAndStableBytes) {
  const data::Dataset d = noisy_benchmark(0.3, 219);
  detect::DetectorConfig cfg;
  cfg.batch_size = 16;
  cfg.seed = 17;
  const BaselineSelection sel = small_loss_select(d, cfg);
  const std::string path = testing::TempDir() + "baseline.csv";
  save_baseline_selection(sel, d, path);
  const BaselineSelection back = load_baseline_selection(d, path);
  EXPECT_EQ(back.method, sel.method);
  EXPECT_EQ(back.clean_indices, sel.clean_indices);
  EXPECT_EQ(back.noisy_indices, sel.noisy_indices);
  ASSERT_EQ(back.score.size(), sel.score.size());
  for (std::size_t i = 0; i < sel.score.size(); ++i)
    EXPECT_TRUE(delora_test::bits_equal(back.score[i], sel.score[i])) << i;
  const std::string first = slurp(path);
  save_baseline_selection(back, d, path);
  EXPECT_EQ(slurp(path), first);
  std::remove(path.c_str());
}

TEST(BaselineCsv, RejectsCorruptFiles) {
  const data::Dataset d = data::gen_gaussian_clusters(2, 3, 3, 3.0, 221);
  const std::string path = testing::TempDir() + "baseline_bad.csv";
  {
    std::ofstream out(path);
    out << "index,score,is_clean,method\n0,0.9,0,gmm\n";  // flag disagrees
  }
  EXPECT_THROW(load_baseline_selection(d, path), IngestError);
  {
    std::ofstream out(path);
    out << "index,score,is_clean,method\n0,0.9,1,a\n1,0.9,1,b\n2,0.9,1,a\n";
  }
  EXPECT_THROW(load_baseline_selection(d, path), IngestError);
  {
    std::ofstream out(path);
    out << "index,score,is_clean,method\n0,0.9,1,m\n";  // wrong row count
  }
  EXPECT_THROW(load_baseline_selection(d, path), IngestError);
  std::remove(path.c_str());
}
