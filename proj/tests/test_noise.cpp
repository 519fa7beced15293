#include "delora/noise.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

namespace {

using namespace delora;
using namespace delora::noise;
using data::Dataset;
using data::Sample;

TEST(TransitionMatrix, SymmetricHandValues) {
  const Matrix t = build_symmetric(4, 0.4);
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      if (i == j)
        EXPECT_DOUBLE_EQ(t.at(i, j), 0.6);
      else
        EXPECT_NEAR(t.at(i, j), 0.4 / 3.0, 1e-15);
      sum += t.at(i, j);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_NO_THROW(check_transition(t, 4));
}

TEST(TransitionMatrix, AsymmetricHandValues) {
  const Matrix t = build_asymmetric(3, 0.2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(t.at(i, i), 0.8);
    EXPECT_DOUBLE_EQ(t.at(i, (i + 1) % 3), 0.2);
    EXPECT_DOUBLE_EQ(t.at(i, (i + 2) % 3), 0.0);
  }
  EXPECT_NO_THROW(check_transition(t, 3));
}

TEST(TransitionMatrix, RejectsBadArguments) {
  EXPECT_THROW(build_symmetric(1, 0.2), ContractViolation);
  EXPECT_THROW(build_symmetric(4, -0.1), ContractViolation);
  EXPECT_THROW(build_symmetric(4, 1.5), ContractViolation);
  EXPECT_THROW(build_asymmetric(4, 2.0), ContractViolation);
  Matrix bad(2, 2);
  bad.values = {0.5, 0.4, 0.5, 0.5};
  EXPECT_THROW(check_transition(bad, 2), ContractViolation);
}

TEST(ApplyTransition, EmpiricalRateMatchesTarget) {
  // K=2, ratio 0.4, n=1e5: empirical corruption within 0.01 (>= 6 sigma).
  const Dataset d = data::gen_gaussian_clusters(2, 4, 50000, 1.0, 81);
  const NoiseResult r = apply_transition(d, build_symmetric(2, 0.4), 99);
  EXPECT_NEAR(r.achieved_ratio, 0.4, 0.01);
  EXPECT_EQ(r.dataset.size(), d.size());
}

TEST(ApplyTransition, DeterministicAndRecordsReconstruct) {
  const Dataset d = data::gen_gaussian_clusters(3, 4, 400, 2.0, 11);
  const NoiseResult a = apply_transition(d, build_symmetric(3, 0.3), 5);
  const NoiseResult b = apply_transition(d, build_symmetric(3, 0.3), 5);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.dataset.size(); ++i)
    EXPECT_EQ(a.dataset.samples[i].observed_label, b.dataset.samples[i].observed_label);

  // Different seed gives a different draw.
  const NoiseResult c = apply_transition(d, build_symmetric(3, 0.3), 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.dataset.size(); ++i)
    differs |= a.dataset.samples[i].observed_label != c.dataset.samples[i].observed_label;
  EXPECT_TRUE(differs);

  // Records undo the corruption exactly.
  const Dataset restored = restore_labels(a.dataset, a.records);
  for (std::size_t i = 0; i < d.size(); ++i)
    EXPECT_EQ(restored.samples[i].observed_label, d.samples[i].observed_label);

  // Ground truth is the pre-noise label.
  for (std::size_t i = 0; i < a.dataset.size(); ++i)
    EXPECT_EQ(*a.dataset.samples[i].true_label, d.samples[i].observed_label);
}

TEST(ApplyTransition, ZeroRatioIsIdentity) {
  const Dataset d = data::gen_gaussian_clusters(2, 2, 100, 1.0, 1);
  const NoiseResult r = apply_transition(d, build_symmetric(2, 0.0), 3);
  EXPECT_TRUE(r.records.empty());
  EXPECT_DOUBLE_EQ(r.achieved_ratio, 0.0);
}

TEST(Proxy, LearnsAboveChanceButStaysWeak) {
  const Dataset d = data::gen_gaussian_clusters(4, 8, 250, 3.0, 21);
  const Matrix w = train_proxy(d, {.epochs = 2, .learning_rate = 0.01, .batch_size = 32,
                                   .seed = 2});
  std::size_t correct = 0;
  for (const Sample& s : d.samples)
    correct += argmax(mat_vec(w, s.features)) == s.observed_label;
  const double acc = static_cast<double>(correct) / d.size();
  EXPECT_GT(acc, 0.3);  // above 4-class chance

  const Matrix w2 = train_proxy(d, {.epochs = 2, .learning_rate = 0.01, .batch_size = 32,
                                    .seed = 2});
  EXPECT_EQ(w.values, w2.values);
}

// Proxy whose rows are rotated class centroids: every sample of class k gets
// argmax (k-1) mod K, so the misclassified pool is the whole dataset.
Matrix rotated_centroid_proxy(std::size_t classes, std::size_t dim) {
  Matrix w(classes, dim);
  for (std::size_t k = 0; k < classes; ++k) w.at(k, (k + 1) % classes % dim) = 1.0;
  return w;
}

TEST(InstanceNoise, ExactCountWhenPoolSuffices) {
  const Dataset d = data::gen_gaussian_clusters(4, 8, 250, 3.0, 31);  // n = 1000
  const Matrix proxy = rotated_centroid_proxy(4, 8);
  const double ratio = 0.35;
  const NoiseResult r = instance_dependent_corrupt(d, ratio, proxy, 7);
  EXPECT_EQ(r.records.size(), static_cast<std::size_t>(1000 * ratio));
  EXPECT_DOUBLE_EQ(r.achieved_ratio, 0.35);
  // Corrupted label is the proxy prediction and never the original.
  for (const CorruptionRecord& rec : r.records) {
    EXPECT_NE(rec.original, rec.corrupted);
    EXPECT_EQ(rec.corrupted, argmax(mat_vec(proxy, d.samples[rec.id].features)));
  }
  // Untouched samples still match ground truth.
  std::size_t flipped = 0;
  for (const Sample& s : r.dataset.samples) flipped += !data::is_clean(s);
  EXPECT_EQ(flipped, r.records.size());
}

TEST(InstanceNoise, PoolExhaustionTakesWholePoolAndWarns) {
  // A strong matched-filter proxy misclassifies almost nothing, so the pool
  // cannot cover a 40% target.
  const Dataset d = data::gen_gaussian_clusters(3, 6, 200, 4.0, 41);
  Matrix proxy(3, 6);
  for (std::size_t k = 0; k < 3; ++k) proxy.at(k, k) = 1.0;
  const NoiseResult r = instance_dependent_corrupt(d, 0.4, proxy, 9);
  EXPECT_LT(r.achieved_ratio, 0.4);
  std::size_t pool = 0;
  for (const Sample& s : d.samples) pool += argmax(mat_vec(proxy, s.features)) != s.observed_label;
  EXPECT_EQ(r.records.size(), pool);  // entire pool flipped
}

TEST(InstanceNoise, DeterministicPerSeed) {
  const Dataset d = data::gen_gaussian_clusters(4, 8, 100, 3.0, 51);
  const Matrix proxy = rotated_centroid_proxy(4, 8);
  const NoiseResult a = instance_dependent_corrupt(d, 0.2, proxy, 3);
  const NoiseResult b = instance_dependent_corrupt(d, 0.2, proxy, 3);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].id, b.records[i].id);
    EXPECT_EQ(a.records[i].corrupted, b.records[i].corrupted);
  }
}

TEST(InjectNoise, DispatchesAllKinds) {
  const Dataset d = data::gen_gaussian_clusters(4, 8, 100, 3.0, 61);
  for (NoiseKind kind :
       {NoiseKind::Symmetric, NoiseKind::Asymmetric, NoiseKind::InstanceDependent}) {
    const NoiseResult r = inject_noise(d, {kind, 0.25, 13});
    EXPECT_GT(r.achieved_ratio, 0.0) << noise_kind_name(kind);
    EXPECT_LE(r.achieved_ratio, 0.35) << noise_kind_name(kind);
  }
  EXPECT_EQ(parse_noise_kind("symmetric"), NoiseKind::Symmetric);
  EXPECT_THROW(parse_noise_kind("weird"), ConfigError);
}

TEST(Records, CsvRoundTrip) {
  const Dataset d = data::gen_gaussian_clusters(3, 4, 50, 2.0, 71);
  const NoiseResult r = apply_transition(d, build_symmetric(3, 0.4), 15);
  ASSERT_FALSE(r.records.empty());
  const std::string path = testing::TempDir() + "records.csv";
  save_records(r.records, d.label_names, path);
  const auto loaded = load_records(path, d.label_names);
  ASSERT_EQ(loaded.size(), r.records.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].id, r.records[i].id);
    EXPECT_EQ(loaded[i].original, r.records[i].original);
    EXPECT_EQ(loaded[i].corrupted, r.records[i].corrupted);
  }
  std::remove(path.c_str());
  EXPECT_THROW(load_records(testing::TempDir() + "missing_records.csv", d.label_names),
               IngestError);
}

}  // namespace
