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

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "rtxlab/rng.h"

namespace rtxlab {
namespace {

// Row-wise L2 normalization and its backward map.
Matrix NormalizeRows(const Matrix& m, Vector* norms) {
  *norms = m.rowwise().norm().cwiseMax(1e-12);
  return norms->cwiseInverse().asDiagonal() * m;
}

Matrix NormalizeRowsBackward(const Matrix& normalized, const Vector& norms,
                             const Matrix& grad) {
  const Vector dots = normalized.cwiseProduct(grad).rowwise().sum();
  Matrix out = grad - dots.asDiagonal() * normalized;
  return norms.cwiseInverse().asDiagonal() * out;
}

// -log softmax(logits)(0) and its gradient p - onehot(0). The negatives'
// share 1 - p_0 is summed directly rather than formed as p_0 - 1.
double PositiveLogitLoss(const Vector& logits, Vector* dlogit) {
  const double top = logits.maxCoeff();
  const Vector e = (logits.array() - top).exp();
  const double rest = e.tail(e.size() - 1).sum();
  const double z = e(0) + rest;
  *dlogit = e / z;
  (*dlogit)(0) = -rest / z;
  if (logits(0) == top) return std::log1p(rest);  // e(0) == 1
  return top - logits(0) + std::log(z);
}

}  // namespace

void ContrastiveConfig::Validate() const {
  if (!(tau > 0.0)) throw ConfigError("contrastive: tau must be > 0");
  if (batch_size < 2) {
    throw ConfigError("contrastive: batch_size must be >= 2 (no negatives)");
  }
  if (max_epochs < 1) throw ConfigError("contrastive: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("contrastive: patience must be >= 1");
  if (!(rel_tol >= 0.0)) throw ConfigError("contrastive: rel_tol must be >= 0");
  if (!(learning_rate > 0.0)) {
    throw ConfigError("contrastive: learning_rate must be > 0");
  }
}

std::vector<int> EncoderSpec::LayerDims(int num_features) const {
  std::vector<int> dims{num_features};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(embedding_dim);
  return dims;
}

EncoderSpec DefaultEncoderSpec(int num_features) {
  EncoderSpec spec;
  spec.hidden = num_features <= 16 ? std::vector<int>{128, 128}
                                   : std::vector<int>(5, 128);
  spec.embedding_dim = 64;
  return spec;
}

InfoNceResult InfoNce(const Vector& anchor, const Vector& positive,
                      const Matrix& negatives, double tau) {
  if (!(tau > 0.0)) throw ConfigError("infonce: tau must be > 0");
  if (negatives.rows() < 1) throw ConfigError("infonce: need a negative");
  if (positive.size() != anchor.size() || negatives.cols() != anchor.size()) {
    throw ConfigError("infonce: embedding dimension mismatch");
  }
  const Eigen::Index k = negatives.rows();
  Vector logits(k + 1);
  logits(0) = anchor.dot(positive) / tau;
  logits.tail(k) = negatives * anchor / tau;
  Vector dlogit;
  InfoNceResult result;
  result.loss = PositiveLogitLoss(logits, &dlogit);
  result.grad_anchor =
      (dlogit(0) * positive + negatives.transpose() * dlogit.tail(k)) / tau;
  result.grad_positive = dlogit(0) * anchor / tau;
  result.grad_negatives = dlogit.tail(k) * anchor.transpose() / tau;
  return result;
}

BatchInfoNceResult InfoNceBatch(const Matrix& anchors, const Matrix& positives,
                                double tau) {
  if (!(tau > 0.0)) throw ConfigError("infonce: tau must be > 0");
  const Eigen::Index n = anchors.rows();
  if (n < 2) throw ConfigError("infonce: batch needs at least two anchors");
  if (positives.rows() != n || positives.cols() != anchors.cols()) {
    throw ConfigError("infonce: anchors and positives differ in shape");
  }
  // Column 0 of `logits` row i is the positive, the rest are h_i . h_j with
  // the diagonal (j = i) excluded through a -inf mask.
  const Matrix sim = anchors * anchors.transpose() / tau;
  const Vector pos = anchors.cwiseProduct(positives).rowwise().sum() / tau;

  Matrix weights(n, n);  // softmax mass on negative j for anchor i
  Vector pos_shortfall(n);  // p_i0 - 1
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double top = pos(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) top = std::max(top, sim(i, j));
    }
    const double own = std::exp(pos(i) - top);
    double rest = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      weights(i, j) = (j == i) ? 0.0 : std::exp(sim(i, j) - top);
      rest += weights(i, j);
    }
    const double z = own + rest;
    total += pos(i) == top ? std::log1p(rest) : top - pos(i) + std::log(z);
    weights.row(i) /= z;
    pos_shortfall(i) = -rest / z;
  }

  const double scale = 1.0 / (tau * static_cast<double>(n));
  BatchInfoNceResult result;
  result.loss = total / static_cast<double>(n);
  // Anchor i as anchor: (p_i0 - 1) p_i + sum_j w_ij h_j.
  // Anchor j as negative of i: w_ij h_i.
  result.grad_anchors =
      scale * (pos_shortfall.asDiagonal() * positives + weights * anchors +
               weights.transpose() * anchors);
  result.grad_positives = scale * (pos_shortfall.asDiagonal() * anchors);
  return result;
}

EncoderTrainingResult TrainEncoder(const TabularDataset& train,
                                   const ModelFn& target,
                                   const ReferenceVector& ref,
                                   const AugmentConfig& augment,
                                   const ContrastiveConfig& config,
                                   const EncoderSpec& spec) {
  config.Validate();
  augment.Validate();
  train.Validate();
  if (train.split != SplitTag::kTrain) {
    throw ConfigError("train_encoder: dataset split must be train");
  }
  const int n = train.num_rows();
  const int dim = train.num_features();
  if (n < 2) throw ConfigError("train_encoder: need at least two instances");
  if (ref.size() != dim) throw ConfigError("train_encoder: reference mismatch");

  Rng init_rng = MakeRng(config.seed, "encoder-init");
  EncoderTrainingResult result;
  result.encoder = Mlp::Create(spec.LayerDims(dim), init_rng);
  AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  AdamOptimizer optimizer(adam, result.encoder.num_parameters());

  const int batch_size = std::min(config.batch_size, n);
  const auto start = std::chrono::steady_clock::now();
  double previous = std::numeric_limits<double>::infinity();
  int stalled = 0;
  ForwardCache cache;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng batch_rng(SubSeed(config.seed, "batching", epoch));
    const std::vector<int> order = RandomPermutation(n, batch_rng);
    double loss_sum = 0.0;
    int loss_count = 0;
    for (int begin = 0; begin < n; begin += batch_size) {
      const int count = std::min(batch_size, n - begin);
      if (count < 2) break;
      Matrix anchors(count, dim);
      std::vector<uint64_t> streams(count);
      for (int k = 0; k < count; ++k) {
        const int idx = order[begin + k];
        anchors.row(k) = train.features.row(idx);
        streams[k] = static_cast<uint64_t>(epoch) * n + idx;
      }
      const PositiveBatch positives =
          BuildPositiveBatch(target, anchors, ref, augment, streams);

      Matrix stacked(2 * count, dim);
      stacked.topRows(count) = anchors;
      stacked.bottomRows(count) = positives.positives;
      Matrix emb = result.encoder.Forward(stacked, &cache);
      Vector norms;
      Matrix used = config.normalize ? NormalizeRows(emb, &norms) : emb;

      const BatchInfoNceResult loss =
          InfoNceBatch(used.topRows(count), used.bottomRows(count), config.tau);
      if (!std::isfinite(loss.loss)) {
        throw RuntimeError("train_encoder: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch offset " +
                           std::to_string(begin));
      }
      Matrix grad(2 * count, used.cols());
      grad.topRows(count) = loss.grad_anchors;
      grad.bottomRows(count) = loss.grad_positives;
      if (config.normalize) grad = NormalizeRowsBackward(used, norms, grad);
      optimizer.Step(result.encoder, result.encoder.Backward(cache, grad));
      loss_sum += loss.loss * count;
      loss_count += count;
    }
    const double mean_loss = loss_sum / std::max(1, loss_count);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    result.log.push_back(EpochLog{epoch + 1, mean_loss, elapsed});

    const double improvement =
        std::isfinite(previous)
            ? (previous - mean_loss) / std::max(std::abs(previous), 1e-12)
            : std::numeric_limits<double>::infinity();
    stalled = improvement < config.rel_tol ? stalled + 1 : 0;
    previous = mean_loss;
    if (stalled >= config.patience) {
      result.converged = true;
      break;
    }
  }
  return result;
}

Matrix Embed(const Mlp& encoder, const Matrix& instances) {
  return encoder.Forward(instances);
}

void WriteTrainingLog(const std::vector<EpochLog>& log,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write training log: " + path);
  out << "epoch,mean_loss,wall_seconds\n" << std::setprecision(17);
  for (const EpochLog& e : log) {
    out << e.epoch << "," << e.mean_loss << "," << e.wall_seconds << "\n";
  }
}

}  // namespace rtxlab
