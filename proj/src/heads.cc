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

#include "rtxlab/heads.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "rtxlab/rng.h"

namespace rtxlab {
namespace {

struct LossAndGrad {
  double loss = 0.0;  // mean over rows
  Matrix grad;        // d mean-loss / d outputs
};

LossAndGrad MseLossGrad(const Matrix& outputs, const Matrix& targets) {
  const Matrix diff = outputs - targets;
  const double denom = static_cast<double>(outputs.rows() * outputs.cols());
  return {diff.squaredNorm() / denom, 2.0 * diff / denom};
}

LossAndGrad CeLossGrad(const Matrix& outputs,
                       const std::vector<const RankingVector*>& rankings) {
  const Eigen::Index n = outputs.rows();
  const int m = rankings.empty() ? 0 : rankings.front()->size();
  LossAndGrad result;
  result.grad.resize(n, outputs.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const RankingVector& r = *rankings[i];
    for (int j = 0; j < m; ++j) {
      const auto logits = outputs.row(i).segment(j * m, m);
      const double top = logits.maxCoeff();
      const Eigen::RowVectorXd e = (logits.array() - top).exp().matrix();
      const double z = e.sum();
      total += -(logits(r.positions[j]) - top - std::log(z));
      Eigen::RowVectorXd g = e / z;
      g(r.positions[j]) -= 1.0;
      result.grad.row(i).segment(j * m, m) = g / static_cast<double>(n);
    }
  }
  result.loss = total / static_cast<double>(n);
  return result;
}

Matrix Rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (size_t k = 0; k < idx.size(); ++k) out.row(k) = m.row(idx[k]);
  return out;
}

std::vector<const RankingVector*> RankRows(
    const std::vector<RankingVector>& rankings, const std::vector<int>& idx) {
  std::vector<const RankingVector*> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(&rankings[i]);
  return out;
}

}  // namespace

bool RankingVector::IsPermutation() const {
  std::vector<bool> seen(positions.size(), false);
  for (int p : positions) {
    if (p < 0 || p >= size() || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

RankingVector MakeRankingLabels(const Vector& scores, bool by_magnitude) {
  if (!scores.allFinite()) throw ConfigError("ranking labels: non-finite score");
  RankingVector r;
  r.positions.resize(scores.size());
  std::iota(r.positions.begin(), r.positions.end(), 0);
  auto key = [&](int i) { return by_magnitude ? std::abs(scores(i)) : scores(i); };
  std::stable_sort(r.positions.begin(), r.positions.end(),
                   [&](int a, int b) { return key(a) > key(b); });
  return r;
}

std::vector<RankingVector> MakeRankingLabels(const Matrix& scores,
                                             bool by_magnitude) {
  std::vector<RankingVector> out;
  out.reserve(scores.rows());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    out.push_back(MakeRankingLabels(Vector(scores.row(i).transpose()),
                                    by_magnitude));
  }
  return out;
}

int LabelBudget::SubsetSize(double fraction, int num_rows) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("label fraction must lie in (0, 1]");
  }
  const double raw = fraction * num_rows;
  // Guard against 0.05 * 1000 = 50.000000000000007.
  const int size = static_cast<int>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp(size, 1, num_rows);
}

std::vector<int> LabelBudget::Select(int num_rows) const {
  const int size = SubsetSize(fraction, num_rows);
  Rng rng = MakeRng(seed, "label-subset");
  std::vector<int> order = RandomPermutation(num_rows, rng);
  order.resize(size);
  return order;
}

std::string HeadTaskName(HeadTask task) {
  return task == HeadTask::kMse ? "mse" : "ce";
}

HeadTask ParseHeadTask(const std::string& name) {
  if (name == "mse") return HeadTask::kMse;
  if (name == "ce") return HeadTask::kCe;
  throw ConfigError("unknown head task: " + name);
}

double MseLoss(const Matrix& outputs, const Matrix& targets) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
    throw ConfigError("mse: shape mismatch");
  }
  return MseLossGrad(outputs, targets).loss;
}

double RankingCrossEntropy(const Matrix& outputs,
                           const std::vector<RankingVector>& rankings) {
  if (static_cast<Eigen::Index>(rankings.size()) != outputs.rows()) {
    throw ConfigError("cross entropy: row count mismatch");
  }
  std::vector<int> all(rankings.size());
  std::iota(all.begin(), all.end(), 0);
  for (const RankingVector& r : rankings) {
    if (static_cast<Eigen::Index>(r.size()) * r.size() != outputs.cols()) {
      throw ConfigError("cross entropy: outputs must be M x M per instance");
    }
  }
  return CeLossGrad(outputs, RankRows(rankings, all)).loss;
}

FinetuneResult FitNetwork(const Mlp& init, const Matrix& inputs,
                          const Matrix* labels,
                          const std::vector<RankingVector>* rankings,
                          HeadTask task, const LabelBudget& budget,
                          const FinetuneOptions& options) {
  const int n = static_cast<int>(inputs.rows());
  if (task == HeadTask::kMse) {
    if (labels == nullptr || labels->rows() != n) {
      throw ConfigError("fine-tune: one attribution label per input row needed");
    }
    if (init.output_dim() != labels->cols()) {
      throw ConfigError("fine-tune: network output differs from label width");
    }
  } else {
    if (rankings == nullptr || static_cast<int>(rankings->size()) != n) {
      throw ConfigError("fine-tune: one ranking label per input row needed");
    }
    const int m = rankings->front().size();
    if (init.output_dim() != m * m) {
      throw ConfigError("fine-tune: CE network must output M x M scores");
    }
  }
  if (init.input_dim() != inputs.cols()) {
    throw ConfigError("fine-tune: input width differs from the network");
  }
  if (options.max_epochs < 1 || options.batch_size < 1) {
    throw ConfigError("fine-tune: epochs and batch size must be >= 1");
  }

  FinetuneResult result;
  result.labeled_indices = budget.Select(n);
  const int labeled = static_cast<int>(result.labeled_indices.size());
  if (labeled < 2) {
    throw ConfigError("fine-tune: labeled subset has " +
                      std::to_string(labeled) +
                      " instance(s); at least 2 are needed to hold one out");
  }
  const int holdout = std::clamp(
      static_cast<int>(std::lround(options.holdout_fraction * labeled)), 1,
      labeled - 1);
  const std::vector<int> fit_idx(result.labeled_indices.begin(),
                                 result.labeled_indices.end() - holdout);
  const std::vector<int> hold_idx(result.labeled_indices.end() - holdout,
                                  result.labeled_indices.end());

  // Loss of the network outputs for the given input rows.
  auto loss_on = [&](const Matrix& out, const std::vector<int>& idx) {
    return task == HeadTask::kMse ? MseLossGrad(out, Rows(*labels, idx))
                                  : CeLossGrad(out, RankRows(*rankings, idx));
  };
  const Matrix hold_x = Rows(inputs, hold_idx);

  const std::vector<double> decays =
      task == HeadTask::kMse ? options.weight_decays : std::vector<double>{0.0};
  if (decays.empty()) throw ConfigError("fine-tune: no weight decay candidates");

  double best_overall = std::numeric_limits<double>::infinity();
  ForwardCache cache;
  for (double decay : decays) {
    Mlp model = init;
    AdamOptions adam;
    adam.learning_rate = options.learning_rate;
    adam.weight_decay = decay;
    AdamOptimizer optimizer(adam, model.num_parameters());
    Vector best_params = model.GetParameters();
    double best = loss_on(model.Forward(hold_x), hold_idx).loss;
    int since_best = 0;
    int epochs = 0;
    for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
      // Cosine decay down to 1% of the base rate.
      const double progress =
          static_cast<double>(epoch) / std::max(1, options.max_epochs - 1);
      optimizer.set_learning_rate(
          options.learning_rate *
          (0.01 + 0.99 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress))));
      Rng rng(SubSeed(options.seed, "finetune-batches", epoch));
      std::vector<int> order = fit_idx;
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t begin = 0; begin < order.size();
           begin += options.batch_size) {
        const size_t count =
            std::min<size_t>(options.batch_size, order.size() - begin);
        const std::vector<int> idx(order.begin() + begin,
                                   order.begin() + begin + count);
        const Matrix x = Rows(inputs, idx);
        const Matrix out = model.Forward(x, &cache);
        const LossAndGrad lg = loss_on(out, idx);
        if (!std::isfinite(lg.loss)) {
          throw RuntimeError("fine-tune: non-finite training loss");
        }
        optimizer.Step(model, model.Backward(cache, lg.grad));
      }
      ++epochs;
      const double hold_loss = loss_on(model.Forward(hold_x), hold_idx).loss;
      if (hold_loss < best) {
        best = hold_loss;
        best_params = model.GetParameters();
        since_best = 0;
      } else if (++since_best >= options.patience) {
        break;
      }
    }
    if (best < best_overall) {
      best_overall = best;
      result.model = model;
      result.model.SetParameters(best_params);
      result.selected_weight_decay = decay;
      result.holdout_loss = best;
      result.epochs_run = epochs;
    }
  }
  if (result.model.num_layers() == 0) {
    // Every candidate diverged; keep the initial network.
    result.model = init;
    result.holdout_loss = best_overall;
  }
  return result;
}

namespace {

std::vector<int> HeadDims(int in, const HeadSpec& spec, int out) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(out);
  return dims;
}

}  // namespace

FinetuneResult FinetuneMseHead(const Matrix& inputs, const Matrix& labels,
                               const LabelBudget& budget, const HeadSpec& spec,
                               const FinetuneOptions& options) {
  Rng rng = MakeRng(options.seed, "head-init");
  const Mlp init = Mlp::Create(
      HeadDims(static_cast<int>(inputs.cols()), spec,
               static_cast<int>(labels.cols())),
      rng);
  return FitNetwork(init, inputs, &labels, nullptr, HeadTask::kMse, budget,
                    options);
}

FinetuneResult FinetuneCeHead(const Matrix& inputs,
                              const std::vector<RankingVector>& rankings,
                              const LabelBudget& budget, const HeadSpec& spec,
                              const FinetuneOptions& options) {
  if (rankings.empty()) throw ConfigError("fine-tune: no ranking labels");
  const int m = rankings.front().size();
  Rng rng = MakeRng(options.seed, "head-init");
  const Mlp init =
      Mlp::Create(HeadDims(static_cast<int>(inputs.cols()), spec, m * m), rng);
  return FitNetwork(init, inputs, nullptr, &rankings, HeadTask::kCe, budget,
                    options);
}

Mlp Compose(const Mlp& encoder, const Mlp& head) {
  if (encoder.output_dim() != head.input_dim()) {
    throw ConfigError("compose: encoder output differs from head input");
  }
  std::vector<DenseLayer> layers = encoder.layers();
  layers.insert(layers.end(), head.layers().begin(), head.layers().end());
  return Mlp(std::move(layers));
}

std::pair<Mlp, Mlp> SplitComposed(const Mlp& composed, int encoder_layers) {
  const auto& layers = composed.layers();
  if (encoder_layers < 1 || encoder_layers >= composed.num_layers()) {
    throw ConfigError("split: invalid encoder layer count");
  }
  return {Mlp(std::vector<DenseLayer>(layers.begin(),
                                      layers.begin() + encoder_layers)),
          Mlp(std::vector<DenseLayer>(layers.begin() + encoder_layers,
                                      layers.end()))};
}

HeadSpec SupervisedRtxSpec() { return HeadSpec{std::vector<int>(5, 128)}; }

FinetuneResult SupervisedRtx(const Matrix& features, const Matrix* labels,
                             const std::vector<RankingVector>* rankings,
                             HeadTask task, const LabelBudget& budget,
                             const HeadSpec& spec,
                             const FinetuneOptions& options) {
  int out = 0;
  if (task == HeadTask::kMse) {
    if (labels == nullptr) throw ConfigError("supervised rtx: labels required");
    out = static_cast<int>(labels->cols());
  } else {
    if (rankings == nullptr || rankings->empty()) {
      throw ConfigError("supervised rtx: ranking labels required");
    }
    out = rankings->front().size() * rankings->front().size();
  }
  Rng rng = MakeRng(options.seed, "supervised-init");
  const Mlp init =
      Mlp::Create(HeadDims(static_cast<int>(features.cols()), spec, out), rng);
  return FitNetwork(init, features, labels, rankings, task, budget, options);
}

RankingVector RankingFromScores(const Eigen::Ref<const Vector>& flat_scores,
                                int num_features) {
  const int m = num_features;
  if (flat_scores.size() != static_cast<Eigen::Index>(m) * m) {
    throw ConfigError("ranking prediction: expected M x M scores");
  }
  RankingVector r;
  r.positions.resize(m);
  for (int j = 0; j < m; ++j) {
    int best = 0;
    for (int k = 1; k < m; ++k) {
      if (flat_scores(j * m + k) > flat_scores(j * m + best)) best = k;
    }
    r.positions[j] = best;
  }
  return r;
}

std::vector<RankingVector> RankingsFromOutputs(const Matrix& outputs,
                                               int num_features) {
  std::vector<RankingVector> out;
  out.reserve(outputs.rows());
  for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
    out.push_back(
        RankingFromScores(Vector(outputs.row(i).transpose()), num_features));
  }
  return out;
}

AttributionExplainer::AttributionExplainer(Mlp encoder, Mlp head)
    : encoder_(std::move(encoder)), head_(std::move(head)) {}

AttributionExplainer::AttributionExplainer(Mlp encoder, Mlp head,
                                           ModelFn target,
                                           double reference_output)
    : encoder_(std::move(encoder)),
      head_(std::move(head)),
      target_(std::move(target)),
      reference_output_(reference_output) {}

Matrix AttributionExplainer::RawOutputs(const Matrix& instances) const {
  if (encoder_.num_layers() == 0) return head_.Forward(instances);
  return head_.Forward(encoder_.Forward(instances));
}

Matrix AttributionExplainer::Explain(const Matrix& instances) const {
  Matrix raw = RawOutputs(instances);
  if (!target_) return raw;
  Vector totals = (*target_)(instances);
  totals.array() -= reference_output_;
  Matrix normalized = raw;
  const Vector shift =
      (totals - raw.rowwise().sum()) / static_cast<double>(raw.cols());
  normalized.colwise() += shift;
  return normalized;
}

std::vector<RankingVector> PredictRanking(const Mlp& encoder, const Mlp& head,
                                          const Matrix& instances) {
  const Matrix out = encoder.num_layers() == 0
                         ? head.Forward(instances)
                         : head.Forward(encoder.Forward(instances));
  const int m = static_cast<int>(std::lround(std::sqrt(out.cols())));
  return RankingsFromOutputs(out, m);
}

}  // namespace rtxlab
