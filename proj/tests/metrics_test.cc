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

#include "rtxlab/metrics.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "gtest/gtest.h"
#include "rtxlab/oracle.h"
#include "test_util.h"

namespace rtxlab {
namespace {

RankingVector R(std::vector<int> p) { return RankingVector{std::move(p)}; }

ModelFn Logistic(const Vector& w, double bias) {
  return [w, bias](const Matrix& b) -> Vector {
    return (1.0 / (1.0 + (-(b * w).array() - bias).exp())).matrix();
  };
}

TEST(RankAcc, HandValues) {
  EXPECT_DOUBLE_EQ(RankAcc(R({2, 0, 1}), R({2, 0, 1})), 1.0);
  EXPECT_NEAR(RankAcc(R({0, 2, 1}), R({0, 1, 2})), 6.0 / 11.0, 1e-15);
  EXPECT_DOUBLE_EQ(RankAcc(R({1, 2, 0}), R({0, 1, 2})), 0.0);
  EXPECT_THROW(RankAcc(R({0, 1}), R({0, 1, 2})), ConfigError);
}

TEST(RankAcc, OneOnlyForIdenticalRankings) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const RankingVector a = MakeRankingLabels(testing::RandomVector(5, rng));
    const RankingVector b = MakeRankingLabels(testing::RandomVector(5, rng));
    const double v = RankAcc(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v == 1.0, a == b);
  }
}

TEST(L2Error, MetricProperties) {
  EXPECT_DOUBLE_EQ(L2Error(Vector::Zero(2), (Vector(2) << 3, 4).finished()), 5.0);
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const Vector a = testing::RandomVector(6, rng);
    const Vector b = testing::RandomVector(6, rng);
    const Vector c = testing::RandomVector(6, rng);
    EXPECT_EQ(L2Error(a, a), 0.0);
    EXPECT_EQ(L2Error(a, b), L2Error(b, a));
    EXPECT_LE(L2Error(a, c), L2Error(a, b) + L2Error(b, c) + 1e-12);
  }
}

TEST(Reports, MeanMatchesPerInstanceValues) {
  Rng rng(3);
  const Matrix p = testing::RandomMatrix(40, 3, rng);
  const Matrix t = testing::RandomMatrix(40, 3, rng);
  const MetricReport r = L2ErrorReport(p, t);
  ASSERT_EQ(r.values.size(), 40u);
  double sum = 0.0;
  for (int i = 0; i < 40; ++i) {
    EXPECT_EQ(r.values[i], (p.row(i) - t.row(i)).norm());
    EXPECT_GE(r.values[i], 0.0);
    sum += r.values[i];
  }
  EXPECT_NEAR(r.mean, sum / 40.0, 1e-12);

  const MetricReport s = Summarize("x", {1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(s.ToJson()["metric"], "x");
}

TEST(LogOdds, Identities) {
  EXPECT_EQ(LogOdds(0.5), 0.0);
  EXPECT_NEAR(LogOdds(std::exp(1.0) / (1.0 + std::exp(1.0))), 1.0, 1e-12);
  EXPECT_NEAR(LogOdds(0.0), std::log(kProbabilityClamp / (1 - kProbabilityClamp)), 1e-9);
  EXPECT_TRUE(std::isfinite(LogOdds(1.0)));
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double a = u(rng), b = u(rng);
    EXPECT_EQ(DeltaLogOdds(a, a), 0.0);
    EXPECT_NEAR(DeltaLogOdds(a, b), -DeltaLogOdds(b, a), 1e-12);
  }
}

TEST(Throughput, MedianOfTimedPasses) {
  const Matrix x = Matrix::Zero(100, 2);
  int calls = 0;
  const BatchMap slow = [&calls](const Matrix& b) {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    return b;
  };
  const ThroughputResult r = MeasureThroughput(slow, x, 3);
  EXPECT_EQ(calls, 4);  // one warm-up
  ASSERT_EQ(r.run_seconds.size(), 3u);
  EXPECT_GE(r.median_seconds, 0.02);
  EXPECT_NEAR(r.instances_per_second, 100.0 / r.median_seconds, 1e-9);
  EXPECT_LT(r.instances_per_second, 5000.0 + 1e-9);
  EXPECT_THROW(MeasureThroughput(slow, Matrix(0, 2), 3), ConfigError);
}

TEST(TrapezoidAuc, SimpleShapes) {
  EXPECT_DOUBLE_EQ(TrapezoidAuc({0.0, 1.0}), 0.5);
  EXPECT_DOUBLE_EQ(TrapezoidAuc({1.0, 1.0, 1.0}), 1.0);
  EXPECT_DOUBLE_EQ(TrapezoidAuc({1.0, 0.0, 0.0, 0.0}), 1.0 / 6.0);
}

TEST(Curves, EndpointsMatchDirectEvaluation) {
  Rng rng(5);
  const int m = 4;
  const Vector w = testing::RandomVector(m, rng, 2.0);
  const ModelFn f = Logistic(w, 0.1);
  const Matrix x = testing::RandomMatrix(60, m, rng);
  const ReferenceVector ref = CustomReference(testing::RandomVector(m, rng));
  const Matrix importance = testing::RandomMatrix(60, m, rng);

  const CurveResult top1 = InclusionExclusionCurves(f, importance, x, ref, CurveOptions{});
  ASSERT_EQ(top1.exclusion.mean.size(), size_t(m + 1));
  const Vector fx = f(x);
  const double f_ref = testing::Eval(f, ref.values);
  double agree = 0.0;
  for (int i = 0; i < 60; ++i) agree += ((fx(i) >= 0.5) == (f_ref >= 0.5)) ? 1.0 : 0.0;
  EXPECT_DOUBLE_EQ(top1.exclusion.mean.front(), 1.0);
  EXPECT_DOUBLE_EQ(top1.inclusion.mean.back(), 1.0);
  EXPECT_NEAR(top1.exclusion.mean.back(), agree / 60.0, 1e-12);
  EXPECT_NEAR(top1.inclusion.mean.front(), agree / 60.0, 1e-12);

  CurveOptions lo;
  lo.score = CurveScore::kLogOdds;
  const CurveResult odds = InclusionExclusionCurves(f, importance, x, ref, lo);
  EXPECT_NEAR(odds.exclusion.mean.front(), odds.inclusion.mean.back(), 1e-12);
  EXPECT_NEAR(odds.exclusion.mean.back(), odds.inclusion.mean.front(), 1e-12);
  EXPECT_NEAR(odds.exclusion.auc, TrapezoidAuc(odds.exclusion.mean), 1e-15);
}

TEST(Curves, ConstantModelIsFlat) {
  const ModelFn f = [](const Matrix& b) -> Vector { return Vector::Constant(b.rows(), 0.7); };
  Rng rng(6);
  const Matrix x = testing::RandomMatrix(30, 3, rng);
  for (CurveScore score : {CurveScore::kTop1Accuracy, CurveScore::kLogOdds}) {
    CurveOptions o;
    o.score = score;
    const CurveResult r = InclusionExclusionCurves(
        f, testing::RandomMatrix(30, 3, rng), x, CustomReference(Vector::Zero(3)), o);
    for (size_t k = 1; k < r.exclusion.mean.size(); ++k) {
      EXPECT_EQ(r.exclusion.mean[k], r.exclusion.mean[0]);
      EXPECT_EQ(r.inclusion.mean[k], r.inclusion.mean[0]);
    }
    EXPECT_EQ(r.exclusion.auc, r.inclusion.auc);
  }
}

TEST(Curves, ExactOrderBeatsRandomOrderOnDominantFeature) {
  const int m = 5;
  Rng rng(7);
  std::normal_distribution<double> n01;
  Matrix x(200, m);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = 1.5 + 0.3 * n01(rng);
    for (int j = 1; j < m; ++j) x(i, j) = n01(rng);
  }
  const Vector w = (Vector(m) << 3.0, 0.1, -0.1, 0.05, 0.0).finished();
  const ModelFn f = Logistic(w, 0.0);
  Vector r = Vector::Zero(m);
  r(0) = -1.5;
  const ReferenceVector ref = CustomReference(r);
  const Matrix exact = ComputeAttributions(f, x, ref, OracleConfig{});
  const Matrix random = testing::RandomMatrix(200, m, rng);
  const CurveResult a = InclusionExclusionCurves(f, exact, x, ref, CurveOptions{});
  const CurveResult b = InclusionExclusionCurves(f, random, x, ref, CurveOptions{});
  EXPECT_LT(a.exclusion.auc, b.exclusion.auc);
  EXPECT_GT(a.inclusion.auc, b.inclusion.auc);
  EXPECT_LE(a.exclusion_bootstrap.std, 0.5);
}

TEST(Curves, RejectsNonProbabilityModels) {
  const ModelFn f = [](const Matrix& b) -> Vector { return b.col(0) * 5.0; };
  Rng rng(8);
  const Matrix x = testing::RandomMatrix(10, 2, rng);
  EXPECT_THROW(InclusionExclusionCurves(f, x, x, CustomReference(Vector::Zero(2)),
                                        CurveOptions{}),
               ConfigError);
}

TEST(Curves, CsvHasBothCurves) {
  const ModelFn f = Logistic(Vector::Ones(2), 0.0);
  Rng rng(9);
  const Matrix x = testing::RandomMatrix(10, 2, rng);
  const CurveResult r =
      InclusionExclusionCurves(f, x, x, CustomReference(Vector::Zero(2)), CurveOptions{});
  const std::string path =
      (std::filesystem::temp_directory_path() / "rtxlab_curves_test.csv").string();
  WriteCurveCsv(r, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "curve,k,mean,std");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6);
  std::filesystem::remove(path);
}

TEST(ExplanationErrorBound, ZeroErrorPipelineHolds) {
  const int m = 4;
  const Mlp target = testing::RandomNet(m, 12);
  const ModelFn raw = testing::AsModel(target);
  const ModelFn f = [raw](const Matrix& b) -> Vector {
    return (1.0 / (1.0 + (-raw(b).array()).exp())).matrix();
  };
  Rng rng(13);
  const Matrix train = testing::RandomMatrix(30, m, rng);
  const Matrix test = testing::RandomMatrix(20, m, rng);
  const ReferenceVector ref = CustomReference(Vector::Zero(m));
  const BatchMap lookup = [&](const Matrix& b) {
    return ComputeAttributions(f, b, ref, OracleConfig{});
  };
  BoundInputs in;
  in.target = f;
  in.encoder = [](const Matrix& b) { return b; };
  in.head = lookup;
  in.lipschitz_f = 1.0;
  in.lipschitz_head = 1.0;
  AugmentConfig aug;
  aug.m = 8;
  const BoundDiagnostics d =
      ExplanationErrorBound(in, train, lookup(train), test, lookup(test), ref, aug);
  EXPECT_EQ(d.epsilon, 0.0);
  ASSERT_EQ(d.lhs.size(), 20u);
  for (size_t i = 0; i < d.lhs.size(); ++i) {
    EXPECT_LT(d.lhs[i], 1e-12);
    EXPECT_GE(d.rhs[i], d.lhs[i]);
  }
  EXPECT_EQ(d.holds_fraction, 1.0);
  EXPECT_EQ(d.ToJson()["holds_fraction"], 1.0);
}

}  // namespace
}  // namespace rtxlab
