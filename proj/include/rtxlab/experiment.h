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

#ifndef RTXLAB_EXPERIMENT_H_
#define RTXLAB_EXPERIMENT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtxlab/augment.h"
#include "rtxlab/common.h"
#include "rtxlab/contrastive.h"
#include "rtxlab/data.h"
#include "rtxlab/heads.h"
#include "rtxlab/metrics.h"
#include "rtxlab/oracle.h"
#include "rtxlab/synthetic.h"

namespace rtxlab {

using Json = nlohmann::ordered_json;

// Built-in defaults for every config key. User configs are merged on top.
Json DefaultConfigJson();

// Applies "a.b.c=value" overrides. The value is parsed as JSON when possible
// and kept as a string otherwise. Unknown keys are rejected.
void ApplyOverride(Json& config, const std::string& assignment);

// Merges `patch` into `base`, rejecting keys absent from `base`.
void MergeConfig(Json& base, const Json& patch, const std::string& prefix = "");

// FNV-1a of the compact dump without name and output_dir, as 16 hex digits.
std::string ConfigHash(const Json& config);

// Typed view of a resolved config. Every field maps to one JSON key.
struct ExperimentConfig {
  Json raw;
  std::string name;
  uint64_t seed = 0;
  std::string output_dir;

  // dataset
  std::string dataset_source;  // "synthetic" or "csv"
  SyntheticModelSpec synthetic;
  int train_size = 0;
  int test_size = 0;
  std::string train_csv;
  std::string test_csv;
  std::string target_checkpoint;
  OutputLink target_link = OutputLink::kIdentity;

  ReferencePolicy reference_policy = ReferencePolicy::kMean;
  std::vector<double> reference_values;

  OracleConfig oracle;
  AugmentConfig augment;
  ContrastiveConfig contrastive;
  EncoderSpec encoder;

  HeadSpec head;
  FinetuneOptions finetune;
  double head_fraction = 1.0;
  bool rank_by_magnitude = false;
  HeadSpec supervised;

  std::vector<double> sweep_fractions;
  std::vector<uint64_t> sweep_seeds;
  double ablation_fraction = 0.25;
  std::vector<PositiveSelector> ablation_selectors;

  std::vector<int64_t> estimator_budgets;
  int estimator_instances = 0;
  int estimator_seeds = 0;

  std::vector<int64_t> frontier_ks_budgets;
  std::vector<int64_t> frontier_ps_budgets;
  int frontier_instances = 0;
  int frontier_repetitions = 0;

  CurveScore curve_score = CurveScore::kTop1Accuracy;
  int curve_bootstrap = 20;

  std::string hash;

  static ExperimentConfig FromJson(const Json& resolved);
  std::string RunDir() const;
};

// Loads a config file (or the defaults when `path` is empty) and applies the
// overrides in order.
ExperimentConfig LoadExperimentConfig(const std::string& path,
                                      const std::vector<std::string>& overrides);

// Everything a command needs about the benchmark.
struct Workspace {
  TabularDataset train;
  TabularDataset test;
  ModelFn target;
  std::optional<NetTarget> net_target;
  // Lipschitz bound of the target, zero when unknown.
  double target_lipschitz = 0.0;
  ReferenceVector reference;
  double reference_output = 0.0;
};

Workspace LoadWorkspace(const ExperimentConfig& config);

// Exact or estimated labels for both splits, read from the run directory or
// computed and written there when `create` is set.
struct LabelSet {
  Matrix train;
  Matrix test;
  std::vector<RankingVector> train_rankings;
  std::vector<RankingVector> test_rankings;
};
LabelSet EnsureLabels(const ExperimentConfig& config, const Workspace& ws,
                      bool create);

// Scores of one pipeline on the test split.
struct PipelineScores {
  double l2_error = 0.0;
  double rank_acc = 0.0;
};

// Trains the encoder with the given pipeline seed and selector.
EncoderTrainingResult TrainPipelineEncoder(const ExperimentConfig& config,
                                           const Workspace& ws, uint64_t seed,
                                           PositiveSelector selector);

// Heads on frozen (or jointly tuned) embeddings and the supervised baseline.
PipelineScores EvaluateCortx(const ExperimentConfig& config,
                             const Workspace& ws, const LabelSet& labels,
                             const Mlp& encoder, HeadTask task,
                             double fraction, uint64_t seed);
PipelineScores EvaluateSupervised(const ExperimentConfig& config,
                                  const Workspace& ws, const LabelSet& labels,
                                  HeadTask task, double fraction,
                                  uint64_t seed);

// Subcommands. Each writes under config.RunDir() and returns 0.
int CmdOracle(const ExperimentConfig& config);
int CmdTrain(const ExperimentConfig& config);
int CmdFinetune(const ExperimentConfig& config);
int CmdEval(const ExperimentConfig& config);
int CmdSweepLabels(const ExperimentConfig& config);
int CmdAblation(const ExperimentConfig& config);
int CmdFrontier(const ExperimentConfig& config);

// Dispatches by name; maps ConfigError to 1 and other failures to 2.
int RunCommand(const std::string& command, const ExperimentConfig& config);

// Row of the label sweep and ablation tables.
struct SweepRow {
  std::string method;
  double fraction = 0.0;
  uint64_t seed = 0;
  double l2_error = 0.0;
  double rank_acc = 0.0;
};
std::vector<SweepRow> ReadSweepCsv(const std::string& path);

struct FrontierRow {
  std::string method;
  int64_t budget = 0;
  double throughput = 0.0;
  double rank_acc = 0.0;
  double l2_error = 0.0;
};
std::vector<FrontierRow> ReadFrontierCsv(const std::string& path);

}  // namespace rtxlab

#endif  // RTXLAB_EXPERIMENT_H_
