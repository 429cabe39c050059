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

#ifndef RTXLAB_CONTRASTIVE_H_
#define RTXLAB_CONTRASTIVE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "rtxlab/augment.h"
#include "rtxlab/common.h"
#include "rtxlab/data.h"
#include "rtxlab/net.h"

namespace rtxlab {

struct ContrastiveConfig {
  double tau = 0.02;
  int batch_size = 1024;
  int max_epochs = 500;
  int patience = 10;
  double rel_tol = 1e-4;
  double learning_rate = 5e-3;
  double weight_decay = 0.0;
  // L2-normalize embeddings before the dot product.
  bool normalize = false;
  uint64_t seed = 0;

  void Validate() const;
};

// Encoder layer widths. The encoder maps M -> hidden... -> embedding_dim.
struct EncoderSpec {
  std::vector<int> hidden{128, 128};
  int embedding_dim = 64;

  std::vector<int> LayerDims(int num_features) const;
};

// 3 layers for M <= 16, 6 layers otherwise; width 128, d = 64.
EncoderSpec DefaultEncoderSpec(int num_features);

// Loss for one anchor: the positive competes against every negative.
//   -log( e^{a.p/tau} / (e^{a.p/tau} + sum_j e^{a.n_j/tau}) )
struct InfoNceResult {
  double loss = 0.0;
  Vector grad_anchor;
  Vector grad_positive;
  Matrix grad_negatives;
};
InfoNceResult InfoNce(const Vector& anchor, const Vector& positive,
                      const Matrix& negatives, double tau);

// Mean loss over a batch: anchor i is paired with positives.row(i) and uses
// the other anchors as negatives. Gradients account for every anchor's
// appearance as a negative of the others.
struct BatchInfoNceResult {
  double loss = 0.0;
  Matrix grad_anchors;
  Matrix grad_positives;
};
BatchInfoNceResult InfoNceBatch(const Matrix& anchors, const Matrix& positives,
                                double tau);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

struct EncoderTrainingResult {
  Mlp encoder;
  std::vector<EpochLog> log;
  bool converged = false;
};

// Contrastive pretraining of the encoder. The target model is only queried.
EncoderTrainingResult TrainEncoder(const TabularDataset& train,
                                   const ModelFn& target,
                                   const ReferenceVector& ref,
                                   const AugmentConfig& augment,
                                   const ContrastiveConfig& config,
                                   const EncoderSpec& spec);

// Row i of the result is g(row i of instances).
Matrix Embed(const Mlp& encoder, const Matrix& instances);

void WriteTrainingLog(const std::vector<EpochLog>& log,
                      const std::string& path);

}  // namespace rtxlab

#endif  // RTXLAB_CONTRASTIVE_H_
