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

#ifndef RTXLAB_HEADS_H_
#define RTXLAB_HEADS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rtxlab/common.h"
#include "rtxlab/net.h"

namespace rtxlab {

// positions[j] is the feature at importance rank j (rank 0 = most important).
struct RankingVector {
  std::vector<int> positions;

  int size() const { return static_cast<int>(positions.size()); }
  bool IsPermutation() const;
  friend bool operator==(const RankingVector&, const RankingVector&) = default;
};

// Sorts features by descending score (or |score|); ties keep index order.
RankingVector MakeRankingLabels(const Vector& scores, bool by_magnitude = false);
std::vector<RankingVector> MakeRankingLabels(const Matrix& scores,
                                             bool by_magnitude = false);

// A fraction of the training set that receives labels. Subsets for the same
// seed are nested: a smaller fraction takes a prefix of the same shuffle.
struct LabelBudget {
  double fraction = 1.0;
  uint64_t seed = 0;

  static int SubsetSize(double fraction, int num_rows);
  std::vector<int> Select(int num_rows) const;
};

enum class HeadTask { kMse, kCe };
std::string HeadTaskName(HeadTask task);
HeadTask ParseHeadTask(const std::string& name);

struct HeadSpec {
  std::vector<int> hidden{128, 128};
};

struct FinetuneOptions {
  int max_epochs = 400;
  int batch_size = 64;
  double learning_rate = 5e-3;
  // Candidates swept for the MSE task; the CE task always uses 0.
  std::vector<double> weight_decays{1e-3, 1e-4, 1e-5, 1e-6};
  // Share of the labeled subset held out for model selection.
  double holdout_fraction = 0.2;
  // Stop a run after this many epochs without held-out improvement.
  int patience = 40;
  // Train encoder and head together instead of freezing the encoder.
  bool joint = false;
  uint64_t seed = 0;
};

struct FinetuneResult {
  Mlp model;
  double selected_weight_decay = 0.0;
  double holdout_loss = 0.0;
  std::vector<int> labeled_indices;
  int epochs_run = 0;
};

// Per-instance loss of raw network outputs.
//   mse: (1/M) sum_j (out_j - phi_j)^2
//   ce:  sum_j CrossEntropy(softmax(out row j), onehot(r_j)), out is M x M
double MseLoss(const Matrix& outputs, const Matrix& targets);
double RankingCrossEntropy(const Matrix& outputs,
                           const std::vector<RankingVector>& rankings);

// Fits a fresh network of dims [inputs.cols(), hidden..., out] on the rows
// picked by `budget`, selecting the weight decay on a held-out slice.
FinetuneResult FinetuneMseHead(const Matrix& inputs, const Matrix& labels,
                               const LabelBudget& budget, const HeadSpec& spec,
                               const FinetuneOptions& options);
FinetuneResult FinetuneCeHead(const Matrix& inputs,
                              const std::vector<RankingVector>& rankings,
                              const LabelBudget& budget, const HeadSpec& spec,
                              const FinetuneOptions& options);

// Same fits starting from a given network (used for joint fine-tuning and the
// supervised baseline).
FinetuneResult FitNetwork(const Mlp& init, const Matrix& inputs,
                          const Matrix* labels,
                          const std::vector<RankingVector>* rankings,
                          HeadTask task, const LabelBudget& budget,
                          const FinetuneOptions& options);

// Joins encoder and head layers into one network (head after encoder).
Mlp Compose(const Mlp& encoder, const Mlp& head);
// Inverse of Compose given the encoder's layer count.
std::pair<Mlp, Mlp> SplitComposed(const Mlp& composed, int encoder_layers);

// Six-layer network on raw features trained with the task's loss.
HeadSpec SupervisedRtxSpec();
FinetuneResult SupervisedRtx(const Matrix& features, const Matrix* labels,
                             const std::vector<RankingVector>* rankings,
                             HeadTask task, const LabelBudget& budget,
                             const HeadSpec& spec,
                             const FinetuneOptions& options);

// Per-row argmax over each M-wide block; lowest index wins ties.
RankingVector RankingFromScores(const Eigen::Ref<const Vector>& flat_scores,
                                int num_features);
std::vector<RankingVector> RankingsFromOutputs(const Matrix& outputs,
                                               int num_features);

// One-feed-forward explainer: head(encoder(x)), optionally shifted so each
// row sums to f(x) - f(x_r).
class AttributionExplainer {
 public:
  AttributionExplainer(Mlp encoder, Mlp head);
  AttributionExplainer(Mlp encoder, Mlp head, ModelFn target,
                       double reference_output);

  Matrix Explain(const Matrix& instances) const;
  Matrix RawOutputs(const Matrix& instances) const;

 private:
  Mlp encoder_;
  Mlp head_;
  std::optional<ModelFn> target_;
  double reference_output_ = 0.0;
};

std::vector<RankingVector> PredictRanking(const Mlp& encoder, const Mlp& head,
                                          const Matrix& instances);

}  // namespace rtxlab

#endif  // RTXLAB_HEADS_H_
