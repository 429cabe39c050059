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

#include "rtxlab/net.h"

#include <filesystem>
#include <fstream>

#include "gtest/gtest.h"
#include "test_util.h"

namespace rtxlab {
namespace {

using testing::NumericGradient;
using testing::RandomMatrix;
using testing::RelativeError;

Mlp TinyNet() {
  DenseLayer l1{(Matrix(2, 2) << 1.0, -1.0, 0.5, 2.0).finished(),
                (Vector(2) << 0.0, -1.0).finished(), Activation::kRelu};
  DenseLayer l2{(Matrix(1, 2) << 2.0, 3.0).finished(),
                (Vector(1) << 0.5).finished(), Activation::kIdentity};
  return Mlp({l1, l2});
}

TEST(Mlp, ForwardByHand) {
  // x = (1, 2): hidden pre = (1 - 2, 0.5 + 4 - 1) = (-1, 3.5) -> relu (0, 3.5)
  // out = 3 * 3.5 + 0.5 = 11.
  const Matrix out = TinyNet().Forward((Matrix(1, 2) << 1.0, 2.0).finished());
  EXPECT_DOUBLE_EQ(out(0, 0), 11.0);
}

TEST(Mlp, CreateShapesAndInit) {
  Rng rng(3);
  const Mlp net = Mlp::Create({5, 7, 3}, rng);
  EXPECT_EQ(net.input_dim(), 5);
  EXPECT_EQ(net.output_dim(), 3);
  EXPECT_EQ(net.num_parameters(), 5 * 7 + 7 + 7 * 3 + 3);
  EXPECT_EQ(net.layers()[0].activation, Activation::kRelu);
  EXPECT_EQ(net.layers()[1].activation, Activation::kIdentity);
  const double bound = std::sqrt(6.0 / 5.0);
  EXPECT_LE(net.layers()[0].weights.cwiseAbs().maxCoeff(), bound);
  EXPECT_TRUE(net.layers()[0].bias.isZero());
}

TEST(Mlp, BatchEqualsRowwise) {
  Rng rng(4);
  const Mlp net = Mlp::Create({4, 6, 2}, rng);
  const Matrix x = RandomMatrix(5, 4, rng);
  const Matrix batch = net.Forward(x);
  for (int i = 0; i < 5; ++i) {
    EXPECT_LT((net.Forward(x.row(i)) - batch.row(i)).norm(), 1e-14);
  }
}

TEST(Mlp, ForwardErrors) {
  const Mlp net = TinyNet();
  EXPECT_THROW(net.Forward(Matrix::Zero(1, 3)), ConfigError);
  Mlp bad = net;
  bad.mutable_layers()[0].weights(0, 0) = std::nan("");
  EXPECT_THROW(bad.Forward(Matrix::Zero(1, 2)), RuntimeError);
  ForwardCache empty;
  EXPECT_THROW(net.Backward(empty, Matrix::Zero(1, 1)), RuntimeError);
}

// Loss = sum(out .* G) for a fixed G, so dLoss/dout = G.
TEST(Mlp, BackwardMatchesFiniteDifferences) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Mlp net = Mlp::Create({3, 5, 4, 2}, rng);
    Mlp probe = net;
    for (DenseLayer& l : probe.mutable_layers()) {
      l.bias = testing::RandomVector(static_cast<int>(l.bias.size()), rng, 0.3);
    }
    const Matrix x = RandomMatrix(4, 3, rng);
    const Matrix g = RandomMatrix(4, 2, rng);
    ForwardCache cache;
    probe.Forward(x, &cache);
    Matrix input_grad;
    const Vector analytic =
        probe.FlattenGradients(probe.Backward(cache, g, &input_grad));
    const Vector numeric = NumericGradient(
        [&](const Vector& p) {
          Mlp copy = probe;
          copy.SetParameters(p);
          return copy.Forward(x).cwiseProduct(g).sum();
        },
        probe.GetParameters());
    EXPECT_LT(RelativeError(analytic, numeric), 1e-4) << "seed " << seed;
    Eigen::Map<const Vector> flat_x(x.data(), x.size());
    const Vector numeric_x = NumericGradient(
        [&](const Vector& v) {
          const Matrix xm = Eigen::Map<const Matrix>(v.data(), 4, 3);
          return probe.Forward(xm).cwiseProduct(g).sum();
        },
        Vector(flat_x));
    EXPECT_LT(RelativeError(Eigen::Map<const Vector>(input_grad.data(),
                                                     input_grad.size()),
                            numeric_x),
              1e-4);
  }
}

TEST(Mlp, ParameterRoundTrip) {
  Rng rng(8);
  Mlp net = Mlp::Create({3, 4, 2}, rng);
  const Vector p = net.GetParameters();
  // Row-major weights, then bias, per layer.
  EXPECT_EQ(p(1), net.layers()[0].weights(0, 1));
  EXPECT_EQ(p(3), net.layers()[0].weights(1, 0));
  Vector q = p;
  q.array() += 1.0;
  net.SetParameters(q);
  EXPECT_EQ(net.GetParameters(), q);
  EXPECT_THROW(net.SetParameters(Vector::Zero(3)), ConfigError);
}

TEST(Adam, FirstStepByHand) {
  AdamOptions o;
  o.learning_rate = 0.1;
  o.weight_decay = 0.5;
  AdamOptimizer opt(o, 2);
  Vector p = (Vector(2) << 1.0, -2.0).finished();
  const Vector g = (Vector(2) << 4.0, -0.5).finished();
  opt.Step(p, g);
  // Decay first: p *= 1 - 0.1 * 0.5. Bias-corrected first step moves by
  // lr * g / (|g| + eps) = lr * sign(g).
  EXPECT_NEAR(p(0), 0.95 - 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_NEAR(p(1), -1.9 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_EQ(opt.step_count(), 1);
  EXPECT_THROW(opt.Step(p, Vector::Constant(2, std::nan(""))), RuntimeError);
}

TEST(Adam, NetworkStepMatchesFlatStep) {
  Rng rng(2);
  Mlp a = Mlp::Create({3, 4, 2}, rng);
  Mlp b = a;
  AdamOptions o;
  o.weight_decay = 1e-2;
  AdamOptimizer opt_a(o, a.num_parameters());
  AdamOptimizer opt_b(o, b.num_parameters());
  Vector flat = b.GetParameters();
  for (int step = 0; step < 5; ++step) {
    const Matrix x = RandomMatrix(6, 3, rng);
    const Matrix g = RandomMatrix(6, 2, rng);
    ForwardCache ca;
    a.Forward(x, &ca);
    opt_a.Step(a, a.Backward(ca, g));
    ForwardCache cb;
    b.SetParameters(flat);
    b.Forward(x, &cb);
    opt_b.Step(flat, b.FlattenGradients(b.Backward(cb, g)));
  }
  EXPECT_LT((a.GetParameters() - flat).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(SpectralNorm, MatchesSingularValueDecomposition) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix w = RandomMatrix(3 + trial % 4, 2 + trial % 5, rng);
    const double svd = Eigen::JacobiSVD<Matrix>(w).singularValues()(0);
    EXPECT_NEAR(SpectralNorm(w, 500, 1e-14), svd, 1e-6 * svd);
  }
  EXPECT_DOUBLE_EQ(SpectralNorm(Matrix::Zero(2, 2)), 0.0);
}

TEST(SpectralNorm, LipschitzBoundDominatesEmpiricalRatios) {
  Rng rng(10);
  const Mlp net = testing::RandomNet(4, 77, {8, 8});
  const double k = LipschitzUpperBound(net).value;
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix a = RandomMatrix(1, 4, rng);
    const Matrix b = RandomMatrix(1, 4, rng);
    const double ratio = (net.Forward(a) - net.Forward(b)).norm() / (a - b).norm();
    EXPECT_LE(ratio, k * (1.0 + 1e-6));
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(1);
  const Mlp net = Mlp::Create({3, 5, 2}, rng);
  const Mlp back = MlpFromJsonString(MlpToJsonString(net));
  EXPECT_EQ(back.GetParameters(), net.GetParameters());
  EXPECT_EQ(back.layer_dims(), net.layer_dims());
  const auto path = std::filesystem::temp_directory_path() / "rtxlab_net_ckpt.json";
  SaveMlp(net, path.string());
  EXPECT_EQ(LoadMlp(path.string()).GetParameters(), net.GetParameters());
  std::filesystem::remove(path);
  EXPECT_THROW(MlpFromJsonString("{\"format\":\"other\"}"), ConfigError);
  EXPECT_THROW(LoadMlp("/nonexistent/net.json"), ConfigError);
}

}  // namespace
}  // namespace rtxlab
