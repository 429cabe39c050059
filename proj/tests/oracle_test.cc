/*
 * Copyright 2026 The rtxlab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "rtxlab/oracle.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gtest/gtest.h"
#include "rtxlab/synthetic.h"
#include "test_util.h"

namespace rtxlab {
namespace {

using testing::AsModel;
using testing::BruteForceShapley;
using testing::BruteForceUniform;
using testing::RandomNet;
using testing::RandomVector;

ReferenceVector Ref(const Vector& v) { return CustomReference(v); }

TEST(ExactAttribution, MatchesPermutationEnumeration) {
  for (int m = 1; m <= 6; ++m) {
    for (uint64_t seed = 0; seed < 3; ++seed) {
      const ModelFn f = AsModel(RandomNet(m, 100 * m + seed));
      Rng rng(seed + 7);
      const Vector x = RandomVector(m, rng);
      const Vector r = RandomVector(m, rng);
      const Vector exact = ExactAttribution(f, x, Ref(r)).scores;
      const Vector brute = BruteForceShapley(f, x, r);
      EXPECT_LT((exact - brute).cwiseAbs().maxCoeff(), 1e-10) << "M=" << m;
    }
  }
}

TEST(ExactAttribution, UniformMatchesSubsetEnumeration) {
  for (int m = 1; m <= 6; ++m) {
    const ModelFn f = AsModel(RandomNet(m, 31 * m));
    Rng rng(m);
    const Vector x = RandomVector(m, rng);
    const Vector r = RandomVector(m, rng);
    const Vector exact = ExactAttribution(f, x, Ref(r), Weighting::kUniform).scores;
    EXPECT_LT((exact - BruteForceUniform(f, x, r)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ExactAttribution, LinearModelGivesWeightTimesOffset) {
  const Vector w = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const ModelFn f = [w](const Matrix& b) -> Vector {
    return (b * w).array() + 3.0;
  };
  const Vector x = (Vector(3) << 1.0, 1.0, 1.0).finished();
  const Vector r = Vector::Zero(3);
  const AttributionVector att = ExactAttribution(f, x, Ref(r));
  EXPECT_NEAR(att.scores(0), 1.0, 1e-12);
  EXPECT_NEAR(att.scores(1), -2.0, 1e-12);
  EXPECT_NEAR(att.scores(2), 0.5, 1e-12);
  EXPECT_EQ(att.budget, 8);
}

TEST(ExactAttribution, Axioms) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 2 + trial % 6;
    const ModelFn f = AsModel(RandomNet(m, 900 + trial));
    const Vector x = RandomVector(m, rng);
    const Vector r = RandomVector(m, rng);
    const Vector phi = ExactAttribution(f, x, Ref(r)).scores;
    // Efficiency.
    const double total =
        testing::Eval(f, x) - testing::Eval(f, r);
    EXPECT_NEAR(phi.sum(), total, 1e-9);
    // Linearity: phi(a f + b g) = a phi(f) + b phi(g).
    const ModelFn g = AsModel(RandomNet(m, 1900 + trial));
    const ModelFn h = [&](const Matrix& b) -> Vector {
      return 2.0 * f(b) - 0.5 * g(b);
    };
    const Vector lin = 2.0 * phi - 0.5 * ExactAttribution(g, x, Ref(r)).scores;
    EXPECT_LT((ExactAttribution(h, x, Ref(r)).scores - lin).cwiseAbs().maxCoeff(),
              1e-9);
  }
}

TEST(ExactAttribution, SymmetryAndDummy) {
  // f depends on x0 + x1 symmetrically and ignores x2.
  const ModelFn f = [](const Matrix& b) -> Vector {
    return ((b.col(0) + b.col(1)).array().square() + b.col(0).array() * b.col(1).array())
        .matrix();
  };
  const Vector x = (Vector(3) << 0.7, 0.7, 5.0).finished();
  const Vector r = (Vector(3) << -0.2, -0.2, 1.0).finished();
  for (Weighting w : {Weighting::kShapley, Weighting::kUniform}) {
    const Vector phi = ExactAttribution(f, x, Ref(r), w).scores;
    EXPECT_NEAR(phi(0), phi(1), 1e-12);
    EXPECT_NEAR(phi(2), 0.0, 1e-12);
  }
}

TEST(ExactAttribution, RejectsTooManyFeatures) {
  const ModelFn f = [](const Matrix& b) -> Vector { return b.rowwise().sum(); };
  const Vector x = Vector::Ones(kMaxExactFeatures + 1);
  EXPECT_THROW(ExactAttribution(f, x, Ref(Vector::Zero(x.size()))), ConfigError);
}

TEST(KernelShap, FullEnumerationRecoversShapley) {
  for (int m = 2; m <= 8; ++m) {
    const ModelFn f = AsModel(RandomNet(m, 77 * m));
    Rng rng(m + 100);
    const Vector x = RandomVector(m, rng);
    const Vector r = RandomVector(m, rng);
    const Vector ks = KernelShap(f, x, Ref(r), 0, 0).scores;
    const Vector exact = ExactAttribution(f, x, Ref(r)).scores;
    EXPECT_LT((ks - exact).cwiseAbs().maxCoeff(), 1e-6) << "M=" << m;
  }
}

TEST(KernelShap, SampledIsEfficientAndConverges) {
  const int m = 6;
  const ModelFn f = AsModel(RandomNet(m, 4));
  Rng rng(9);
  const Vector x = RandomVector(m, rng);
  const Vector r = RandomVector(m, rng);
  const Vector exact = ExactAttribution(f, x, Ref(r)).scores;
  const double total = testing::Eval(f, x) - testing::Eval(f, r);
  const Vector small = KernelShap(f, x, Ref(r), 16, 1).scores;
  const Vector large = KernelShap(f, x, Ref(r), 4096, 1).scores;
  EXPECT_NEAR(small.sum(), total, 1e-9);
  EXPECT_NEAR(large.sum(), total, 1e-9);
  EXPECT_LT((large - exact).norm(), 0.05 * std::max(1.0, exact.norm()));
}

TEST(KernelShap, KernelWeightFormula) {
  // (M - 1) / (C(M, s) s (M - s)) for M = 4, s = 1: 3 / (4 * 1 * 3).
  EXPECT_NEAR(ShapleyKernelWeight(4, 1), 0.25, 1e-15);
  EXPECT_NEAR(ShapleyKernelWeight(4, 2), 3.0 / (6.0 * 2 * 2), 1e-15);
}

TEST(PermutationSampling, UnbiasedWithinStandardErrors) {
  const int m = 5;
  const ModelFn f = AsModel(RandomNet(m, 12));
  Rng rng(2);
  const Vector x = RandomVector(m, rng);
  const Vector r = RandomVector(m, rng);
  const Vector exact = ExactAttribution(f, x, Ref(r)).scores;
  // Each estimate is a mean of 8 orderings; average 400 independent ones.
  const int reps = 400;
  Matrix est(reps, m);
  for (int k = 0; k < reps; ++k) {
    est.row(k) = PermutationSampling(f, x, Ref(r), 8, 1000 + k).scores.transpose();
  }
  const Vector mean = est.colwise().mean().transpose();
  for (int i = 0; i < m; ++i) {
    const double var =
        (est.col(i).array() - mean(i)).square().sum() / (reps - 1);
    const double se = std::sqrt(var / reps);
    EXPECT_LE(std::abs(mean(i) - exact(i)), 3.0 * se + 1e-12) << "feature " << i;
  }
}

TEST(PermutationSampling, EfficiencyHoldsForEveryOrdering) {
  const int m = 7;
  const ModelFn f = AsModel(RandomNet(m, 3));
  Rng rng(1);
  const Vector x = RandomVector(m, rng);
  const Vector r = RandomVector(m, rng);
  const double total = testing::Eval(f, x) - testing::Eval(f, r);
  EXPECT_NEAR(PermutationSampling(f, x, Ref(r), 3, 4).scores.sum(), total, 1e-10);
  EXPECT_NEAR(AntitheticalPermutationSampling(f, x, Ref(r), 4, 4).scores.sum(),
              total, 1e-10);
}

TEST(PermutationSampling, OrderingAverageOverAllOrderingsIsExact) {
  const int m = 4;
  const ModelFn f = AsModel(RandomNet(m, 21));
  Rng rng(3);
  const Vector x = RandomVector(m, rng);
  const Vector r = RandomVector(m, rng);
  std::vector<std::vector<int>> all;
  std::vector<int> order{0, 1, 2, 3};
  do {
    all.push_back(order);
  } while (std::next_permutation(order.begin(), order.end()));
  EXPECT_LT((OrderingAverage(f, x, Ref(r), all) - BruteForceShapley(f, x, r))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(PermutationSampling, AntitheticVarianceNoWorseOnMostNets) {
  const int m = 6;
  int wins = 0;
  const int nets = 20;
  for (int n = 0; n < nets; ++n) {
    const ModelFn f = AsModel(RandomNet(m, 5000 + n));
    Rng rng(n);
    const Vector x = RandomVector(m, rng);
    const Vector r = RandomVector(m, rng);
    const Vector exact = ExactAttribution(f, x, Ref(r)).scores;
    double ps = 0.0;
    double aps = 0.0;
    for (int k = 0; k < 60; ++k) {
      ps += (PermutationSampling(f, x, Ref(r), 8, 10 * k + 1).scores - exact)
                .squaredNorm();
      aps += (AntitheticalPermutationSampling(f, x, Ref(r), 8, 10 * k + 1).scores -
              exact)
                 .squaredNorm();
    }
    if (aps <= ps) ++wins;
  }
  EXPECT_GE(wins, 14) << wins << "/" << nets;
}

TEST(PermutationSampling, BudgetValidation) {
  const ModelFn f = [](const Matrix& b) -> Vector { return b.rowwise().sum(); };
  const Vector x = Vector::Ones(3);
  EXPECT_THROW(PermutationSampling(f, x, Ref(Vector::Zero(3)), 0, 1), ConfigError);
  EXPECT_THROW(AntitheticalPermutationSampling(f, x, Ref(Vector::Zero(3)), 3, 1),
               ConfigError);
  OracleConfig c;
  c.source = AttributionSource::kKs;
  c.budget = 3;
  EXPECT_THROW(c.Validate(4), ConfigError);
  c.budget = 0;
  EXPECT_NO_THROW(c.Validate(4));
  c.source = AttributionSource::kModelHead;
  EXPECT_THROW(c.Validate(4), ConfigError);
}

TEST(PermutationSampling, SeedDeterminism) {
  const ModelFn f = AsModel(RandomNet(5, 8));
  const Vector x = Vector::LinSpaced(5, -1, 1);
  const ReferenceVector r = Ref(Vector::Zero(5));
  EXPECT_EQ(PermutationSampling(f, x, r, 5, 42).scores,
            PermutationSampling(f, x, r, 5, 42).scores);
  EXPECT_EQ(KernelShap(f, x, r, 20, 42).scores, KernelShap(f, x, r, 20, 42).scores);
}

TEST(EfficientNormalize, ShiftsToTarget) {
  AttributionVector att;
  att.scores = (Vector(3) << 1.0, 2.0, 3.0).finished();
  const AttributionVector out = EfficientNormalize(att, 3.0);
  EXPECT_NEAR(out.scores.sum(), 3.0, 1e-12);
  EXPECT_NEAR(out.scores(0), 0.0, 1e-12);
  const Matrix rows = EfficientNormalizeRows(
      (Matrix(2, 2) << 1, 1, 0, 4).finished(), (Vector(2) << 0.0, 1.0).finished());
  EXPECT_NEAR(rows.row(0).sum(), 0.0, 1e-12);
  EXPECT_NEAR(rows.row(1).sum(), 1.0, 1e-12);
}

class LabelCacheTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("rtxlab_labels_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string Read(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  std::filesystem::path dir_;
};

TEST_F(LabelCacheTest, RerunIsByteIdenticalAndRoundTrips) {
  SyntheticModelSpec spec;
  spec.kind = SyntheticKind::kMlpRandom;
  spec.num_features = 4;
  spec.hidden = {8};
  spec.model_seed = 3;
  const SyntheticBenchmark bench = GenerateSynthetic(spec, 12, 5);
  const ReferenceVector ref = ComputeReference(bench.data, ReferencePolicy::kMean);
  OracleConfig config;
  config.source = AttributionSource::kPs;
  config.budget = 4;
  config.seed = 11;
  const auto a = dir_ / "a.jsonl";
  const auto b = dir_ / "b.jsonl";
  const auto records = BuildLabelCache(bench.model, bench.data, ref, config, a.string());
  BuildLabelCache(bench.model, bench.data, ref, config, b.string());
  EXPECT_EQ(Read(a), Read(b));
  const auto loaded = LoadLabelCache(a.string());
  ASSERT_EQ(loaded.size(), records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(loaded[i].scores, records[i].scores);
    EXPECT_EQ(loaded[i].source, AttributionSource::kPs);
    EXPECT_EQ(loaded[i].budget, 4);
    EXPECT_EQ(loaded[i].seed, 11u);
  }
  const Matrix m = LabelMatrix(loaded, 12, 4);
  EXPECT_EQ(m.row(3).transpose(), records[3].scores);
  std::vector<LabelRecord> missing(loaded.begin() + 1, loaded.end());
  EXPECT_THROW(LabelMatrix(missing, 12, 4), ConfigError);
  EXPECT_THROW(LoadLabelCache((dir_ / "none.jsonl").string()), ConfigError);
}

TEST_F(LabelCacheTest, ExactRecordsCountCoalitions) {
  SyntheticModelSpec spec;
  spec.kind = SyntheticKind::kLinear;
  spec.num_features = 3;
  spec.weights = Vector::Ones(3);
  const SyntheticBenchmark bench = GenerateSynthetic(spec, 4, 1);
  const auto records =
      BuildLabelCache(bench.model, bench.data, CustomReference(Vector::Zero(3)),
                      OracleConfig{}, (dir_ / "e.jsonl").string());
  EXPECT_EQ(records.front().budget, 8);
  EXPECT_EQ(records.front().source, AttributionSource::kExactShapley);
}

}  // namespace
}  // namespace rtxlab
