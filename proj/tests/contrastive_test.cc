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

#include "rtxlab/contrastive.h"

#include <cmath>

#include "gtest/gtest.h"
#include "test_util.h"

namespace rtxlab {
namespace {

TabularDataset GaussianTrain(int n, int m, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  TabularDataset d;
  d.features.resize(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) d.features(i, j) = normal(rng);
  }
  for (int j = 0; j < m; ++j) d.feature_names.push_back("x" + std::to_string(j));
  return d;
}

ModelFn SigmoidOfFirst(double slope) {
  return [slope](const Matrix& b) -> Vector {
    return (1.0 / (1.0 + (-slope * b.col(0).array()).exp())).matrix();
  };
}

ContrastiveConfig SmallConfig(uint64_t seed) {
  ContrastiveConfig c;
  c.tau = 0.2;
  c.batch_size = 64;
  c.max_epochs = 15;
  c.seed = seed;
  return c;
}

EncoderSpec SmallSpec() {
  EncoderSpec s;
  s.hidden = {32};
  s.embedding_dim = 16;
  return s;
}

TEST(InfoNce, HandValue) {
  const Vector a = (Vector(2) << 1, 0).finished();
  const Vector p = (Vector(2) << 1, 0).finished();
  const Matrix neg = (Matrix(1, 2) << 0, 1).finished();
  const InfoNceResult r = InfoNce(a, p, neg, 1.0);
  EXPECT_NEAR(r.loss, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
  EXPECT_NEAR(r.loss, 0.31326, 1e-5);
}

TEST(InfoNce, EqualSimilaritiesGiveLogN) {
  const Vector a = Vector::Zero(3);
  Rng rng(2);
  for (int negatives : {1, 4, 31}) {
    const InfoNceResult r = InfoNce(a, testing::RandomVector(3, rng),
                                    testing::RandomMatrix(negatives, 3, rng), 0.1);
    EXPECT_NEAR(r.loss, std::log(negatives + 1.0), 1e-12);
  }
  const Matrix same = Matrix::Ones(5, 3);
  EXPECT_NEAR(InfoNceBatch(same, same, 0.5).loss, std::log(5.0), 1e-12);
}

TEST(InfoNce, DominantPositiveDrivesLossToZero) {
  const Vector a = (Vector(1) << 1.0).finished();
  const Matrix neg = (Matrix(2, 1) << 0.1, -0.3).finished();
  double last = std::numeric_limits<double>::infinity();
  for (double s : {1.0, 3.0, 10.0, 40.0}) {
    const double loss = InfoNce(a, (Vector(1) << s).finished(), neg, 1.0).loss;
    EXPECT_LT(loss, last);
    EXPECT_TRUE(std::isfinite(loss));
    last = loss;
  }
  EXPECT_LT(last, 1e-12);
}

TEST(InfoNce, SaturatedLossKeepsRelativePrecision) {
  const Vector a = (Vector(1) << 1.0).finished();
  const Matrix neg = (Matrix(1, 1) << 0.0).finished();
  for (double gap : {20.0, 30.0, 40.0}) {
    const InfoNceResult r = InfoNce(a, (Vector(1) << gap).finished(), neg, 1.0);
    const double expected = std::log1p(std::exp(-gap));
    EXPECT_NEAR(r.loss / expected, 1.0, 1e-14);
    EXPECT_NEAR(r.grad_positive(0) / (-std::exp(-gap) / (1.0 + std::exp(-gap))), 1.0, 1e-14);
  }
  const Matrix h = (Matrix(2, 1) << 1.0, 0.0).finished();
  const Matrix hp = (Matrix(2, 1) << 30.0, 30.0).finished();
  // Row 0 saturates; row 1 has all logits equal to 0.
  EXPECT_NEAR(InfoNceBatch(h, hp, 1.0).loss,
              (std::log1p(std::exp(-30.0)) + std::log(2.0)) / 2.0, 1e-15);
}

TEST(InfoNce, NonNegativeAndOverflowSafe) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const double scale = t < 50 ? 1.0 : 1e3;
    const InfoNceResult r =
        InfoNce(testing::RandomVector(6, rng, scale), testing::RandomVector(6, rng, scale),
                testing::RandomMatrix(7, 6, rng, scale), 0.02);
    EXPECT_GE(r.loss, 0.0);
    EXPECT_TRUE(std::isfinite(r.loss));
  }
  EXPECT_THROW(InfoNce(Vector::Ones(2), Vector::Ones(2), Matrix::Ones(1, 2), 0.0),
               ConfigError);
}

TEST(InfoNce, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const int d = 3 + t % 5;
    const int k = 1 + t % 6;
    const double tau = t % 2 ? 0.5 : 1.0;
    const Vector a = testing::RandomVector(d, rng);
    const Vector p = testing::RandomVector(d, rng);
    const Matrix neg = testing::RandomMatrix(k, d, rng);
    const InfoNceResult r = InfoNce(a, p, neg, tau);

    const Vector ga = testing::NumericGradient(
        [&](const Vector& v) { return InfoNce(v, p, neg, tau).loss; }, a);
    const Vector gp = testing::NumericGradient(
        [&](const Vector& v) { return InfoNce(a, v, neg, tau).loss; }, p);
    const Vector flat = Eigen::Map<const Vector>(neg.data(), neg.size());
    const Vector gn = testing::NumericGradient(
        [&](const Vector& v) {
          return InfoNce(a, p, Eigen::Map<const Matrix>(v.data(), k, d), tau).loss;
        },
        flat);
    EXPECT_LT(testing::RelativeError(r.grad_anchor, ga), 1e-4) << t;
    EXPECT_LT(testing::RelativeError(r.grad_positive, gp), 1e-4) << t;
    EXPECT_LT(testing::RelativeError(
                  Eigen::Map<const Vector>(r.grad_negatives.data(), r.grad_negatives.size()),
                  gn),
              1e-4)
        << t;
  }
}

TEST(InfoNceBatch, MatchesPerAnchorLoss) {
  Rng rng(4);
  const Matrix h = testing::RandomMatrix(6, 4, rng);
  const Matrix hp = testing::RandomMatrix(6, 4, rng);
  double sum = 0.0;
  for (int i = 0; i < 6; ++i) {
    Matrix neg(5, 4);
    for (int j = 0, r = 0; j < 6; ++j) {
      if (j != i) neg.row(r++) = h.row(j);
    }
    sum += InfoNce(h.row(i).transpose(), hp.row(i).transpose(), neg, 0.3).loss;
  }
  EXPECT_NEAR(InfoNceBatch(h, hp, 0.3).loss, sum / 6.0, 1e-12);
  EXPECT_THROW(InfoNceBatch(h.topRows(1), hp.topRows(1), 0.3), ConfigError);
}

TEST(InfoNceBatch, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + t % 5;
    const int d = 2 + t % 4;
    const Matrix h = testing::RandomMatrix(n, d, rng);
    const Matrix hp = testing::RandomMatrix(n, d, rng);
    const BatchInfoNceResult r = InfoNceBatch(h, hp, 0.7);
    const auto as_vec = [](const Matrix& m) {
      return Vector(Eigen::Map<const Vector>(m.data(), m.size()));
    };
    const Vector gh = testing::NumericGradient(
        [&](const Vector& v) {
          return InfoNceBatch(Eigen::Map<const Matrix>(v.data(), n, d), hp, 0.7).loss;
        },
        as_vec(h));
    const Vector gp = testing::NumericGradient(
        [&](const Vector& v) {
          return InfoNceBatch(h, Eigen::Map<const Matrix>(v.data(), n, d), 0.7).loss;
        },
        as_vec(hp));
    EXPECT_LT(testing::RelativeError(as_vec(r.grad_anchors), gh), 1e-4) << t;
    EXPECT_LT(testing::RelativeError(as_vec(r.grad_positives), gp), 1e-4) << t;
  }
}

TEST(InfoNce, LossDoesNotIncreaseAsTemperatureFalls) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Vector a = testing::RandomVector(4, rng);
    Matrix neg = testing::RandomMatrix(5, 4, rng);
    // Make the positive strictly the most similar pair.
    const double best_neg = (neg * a).maxCoeff();
    const Vector p = a * ((best_neg + 0.1 + a.squaredNorm()) / a.squaredNorm());
    ASSERT_GT(a.dot(p), best_neg);
    double last = std::numeric_limits<double>::infinity();
    for (double tau : {1.0, 0.1, 0.02}) {
      const double loss = InfoNce(a, p, neg, tau).loss;
      EXPECT_LE(loss, last + 1e-12) << "case " << t << " tau " << tau;
      last = loss;
    }
  }
}

TEST(ContrastiveConfig, RejectsDegenerateSettings) {
  ContrastiveConfig c;
  c.batch_size = 1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c.batch_size = 2;
  c.tau = -1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c.tau = 0.02;
  EXPECT_NO_THROW(c.Validate());
}

TEST(EncoderSpec, DefaultDepthFollowsWidth) {
  EXPECT_EQ(DefaultEncoderSpec(8).LayerDims(8), (std::vector<int>{8, 128, 128, 64}));
  EXPECT_EQ(DefaultEncoderSpec(20).LayerDims(20).size(), 7u);
}

TEST(TrainEncoder, DeterministicAndLossDrops) {
  const TabularDataset train = GaussianTrain(256, 4, 1);
  const ModelFn f = SigmoidOfFirst(3.0);
  const ReferenceVector ref = CustomReference(Vector::Zero(4));
  AugmentConfig aug;
  aug.m = 10;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    aug.seed = seed;
    const EncoderTrainingResult a =
        TrainEncoder(train, f, ref, aug, SmallConfig(seed), SmallSpec());
    ASSERT_FALSE(a.log.empty());
    EXPECT_LT(a.log.back().mean_loss, a.log.front().mean_loss) << seed;
    for (const EpochLog& e : a.log) EXPECT_TRUE(std::isfinite(e.mean_loss));
    if (seed == 0) {
      const EncoderTrainingResult b =
          TrainEncoder(train, f, ref, aug, SmallConfig(seed), SmallSpec());
      EXPECT_EQ(a.encoder.GetParameters(), b.encoder.GetParameters());
    }
  }
}

TEST(TrainEncoder, RejectsBadInputs) {
  TabularDataset train = GaussianTrain(16, 3, 2);
  const ModelFn f = SigmoidOfFirst(1.0);
  const ReferenceVector ref = CustomReference(Vector::Zero(3));
  ContrastiveConfig c = SmallConfig(0);
  c.batch_size = 1;
  EXPECT_THROW(TrainEncoder(train, f, ref, AugmentConfig{}, c, SmallSpec()),
               ConfigError);
  train.split = SplitTag::kTest;
  EXPECT_THROW(TrainEncoder(train, f, ref, AugmentConfig{}, SmallConfig(0), SmallSpec()),
               ConfigError);
}

TEST(TrainEncoder, EmbeddingsGroupInstancesThatShareTheRelevantFeature) {
  const int m = 4;
  const ModelFn f = SigmoidOfFirst(3.0);
  const ReferenceVector ref = CustomReference(Vector::Zero(m));
  int wins = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const TabularDataset train = GaussianTrain(512, m, 100 + seed);
    AugmentConfig aug;
    aug.m = 10;
    aug.seed = seed;
    ContrastiveConfig c = SmallConfig(seed);
    c.max_epochs = 30;
    const Mlp enc = TrainEncoder(train, f, ref, aug, c, SmallSpec()).encoder;

    const Matrix base = GaussianTrain(300, m, 900 + seed).features;
    Matrix shared = GaussianTrain(300, m, 950 + seed).features;
    shared.col(0) = base.col(0);
    const Matrix other = GaussianTrain(300, m, 990 + seed).features;
    const Matrix hb = Embed(enc, base);
    const double same = hb.cwiseProduct(Embed(enc, shared)).rowwise().sum().mean();
    const double random = hb.cwiseProduct(Embed(enc, other)).rowwise().sum().mean();
    if (same > random) ++wins;
  }
  EXPECT_GE(wins, 4);
}

TEST(Embed, ZeroWeightsGiveBias) {
  Rng rng(1);
  Mlp enc = Mlp::Create({3, 5, 4}, rng);
  for (DenseLayer& l : enc.mutable_layers()) l.weights.setZero();
  enc.mutable_layers().back().bias = (Vector(4) << 1, -2, 3, 0.5).finished();
  const Matrix x = testing::RandomMatrix(7, 3, rng);
  const Matrix h = Embed(enc, x);
  ASSERT_EQ(h.rows(), 7);
  ASSERT_EQ(h.cols(), 4);
  for (int i = 0; i < 7; ++i) {
    EXPECT_EQ(h.row(i), enc.layers().back().bias.transpose());
  }
  EXPECT_EQ(Embed(enc, x), h);
  EXPECT_THROW(Embed(enc, Matrix::Ones(2, 5)), ConfigError);
}

}  // namespace
}  // namespace rtxlab
