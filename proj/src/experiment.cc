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

#include "rtxlab/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "rtxlab/rng.h"

namespace rtxlab {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shortest text that reads back to the same double.
std::string Num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void WriteText(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed: " + path.string());
}

void WriteJson(const fs::path& path, const Json& json) {
  WriteText(path, json.dump(2) + "\n");
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// Rows of a CSV file as header-keyed maps.
std::vector<std::map<std::string, std::string>> ReadCsvRows(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) return {};
  const std::vector<std::string> header = SplitCsvLine(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = SplitCsvLine(line);
    if (cells.size() != header.size()) {
      throw RuntimeError(path + ": row has " + std::to_string(cells.size()) +
                         " cells, header has " + std::to_string(header.size()));
    }
    std::map<std::string, std::string> row;
    for (size_t c = 0; c < header.size(); ++c) row[header[c]] = cells[c];
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
T Get(const Json& json, const char* key) {
  if (!json.contains(key)) {
    throw ConfigError(std::string("config: missing key '") + key + "'");
  }
  try {
    return json.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: key '") + key +
                      "' has the wrong type");
  }
}

const Json& Section(const Json& json, const char* key) {
  if (!json.contains(key) || !json.at(key).is_object()) {
    throw ConfigError(std::string("config: missing section '") + key + "'");
  }
  return json.at(key);
}

void Manifest(const ExperimentConfig& config, const std::string& command,
              const std::vector<std::string>& files, double wall_seconds) {
  Json manifest;
  manifest["format"] = "rtxlab-manifest";
  manifest["command"] = command;
  manifest["name"] = config.name;
  manifest["config_hash"] = config.hash;
  manifest["seed"] = config.seed;
  std::vector<std::string> sorted = files;
  std::sort(sorted.begin(), sorted.end());
  manifest["files"] = sorted;
  manifest["wall_seconds"] = wall_seconds;
  const fs::path dir(config.RunDir());
  WriteJson(dir / ("manifest_" + command + ".json"), manifest);
  WriteJson(dir / "manifest.json", manifest);
}

void WriteResolvedConfig(const ExperimentConfig& config) {
  WriteJson(fs::path(config.RunDir()) / "config.resolved", config.raw);
}

std::string LabelPath(const ExperimentConfig& config, SplitTag split) {
  return (fs::path(config.RunDir()) /
          (split == SplitTag::kTrain ? "labels.jsonl" : "labels_test.jsonl"))
      .string();
}

bool IsJoint(const ExperimentConfig& config, HeadTask task) {
  const Json& joint = config.raw.at("head").at("joint_tasks");
  for (const auto& t : joint) {
    if (t.get<std::string>() == HeadTaskName(task)) return true;
  }
  return false;
}

Vector TargetTotals(const Workspace& ws, const Matrix& x) {
  Vector totals = ws.target(x);
  totals.array() -= ws.reference_output;
  return totals;
}

FinetuneOptions PipelineFinetuneOptions(const ExperimentConfig& config,
                                        HeadTask task, uint64_t seed) {
  FinetuneOptions options = config.finetune;
  options.seed = SubSeed(seed, "finetune");
  options.joint = IsJoint(config, task);
  return options;
}

LabelBudget PipelineBudget(double fraction, uint64_t seed) {
  return LabelBudget{fraction, SubSeed(seed, "label-subset")};
}

// A trained explanation pipeline for one task.
struct TrainedHead {
  Mlp encoder;  // empty for the supervised baseline
  Mlp head;
  std::vector<int> labeled_indices;
  double selected_weight_decay = 0.0;
};

Matrix PipelineOutputs(const TrainedHead& model, const Matrix& x) {
  if (model.encoder.num_layers() == 0) return model.head.Forward(x);
  return model.head.Forward(model.encoder.Forward(x));
}

PipelineScores ScoreHead(const ExperimentConfig& config, const Workspace& ws,
                         const LabelSet& labels, const TrainedHead& model,
                         HeadTask task) {
  const Matrix out = PipelineOutputs(model, ws.test.features);
  PipelineScores scores;
  if (task == HeadTask::kMse) {
    const Matrix att = EfficientNormalizeRows(out, TargetTotals(ws, ws.test.features));
    scores.l2_error = L2ErrorReport(att, labels.test).mean;
    scores.rank_acc =
        RankAccReport(MakeRankingLabels(att, config.rank_by_magnitude),
                      labels.test_rankings)
            .mean;
  } else {
    scores.l2_error = std::nan("");
    scores.rank_acc =
        RankAccReport(RankingsFromOutputs(out, ws.test.num_features()),
                      labels.test_rankings)
            .mean;
  }
  return scores;
}

TrainedHead FitCortxHead(const ExperimentConfig& config, const Workspace& ws,
                         const LabelSet& labels, const Mlp& encoder,
                         HeadTask task, double fraction, uint64_t seed) {
  const FinetuneOptions options = PipelineFinetuneOptions(config, task, seed);
  const LabelBudget budget = PipelineBudget(fraction, seed);
  TrainedHead trained;
  if (options.joint) {
    const int m = ws.train.num_features();
    std::vector<int> dims{encoder.output_dim()};
    dims.insert(dims.end(), config.head.hidden.begin(), config.head.hidden.end());
    dims.push_back(task == HeadTask::kMse ? m : m * m);
    Rng rng = MakeRng(options.seed, "head-init");
    const Mlp head = Mlp::Create(dims, rng);
    FinetuneResult fit = FitNetwork(
        Compose(encoder, head), ws.train.features,
        task == HeadTask::kMse ? &labels.train : nullptr,
        task == HeadTask::kCe ? &labels.train_rankings : nullptr, task, budget,
        options);
    auto [enc, hd] = SplitComposed(fit.model, encoder.num_layers());
    trained.encoder = std::move(enc);
    trained.head = std::move(hd);
    trained.labeled_indices = fit.labeled_indices;
    trained.selected_weight_decay = fit.selected_weight_decay;
    return trained;
  }
  const Matrix h = Embed(encoder, ws.train.features);
  FinetuneResult fit =
      task == HeadTask::kMse
          ? FinetuneMseHead(h, labels.train, budget, config.head, options)
          : FinetuneCeHead(h, labels.train_rankings, budget, config.head,
                           options);
  trained.encoder = encoder;
  trained.head = std::move(fit.model);
  trained.labeled_indices = fit.labeled_indices;
  trained.selected_weight_decay = fit.selected_weight_decay;
  return trained;
}

TrainedHead FitSupervised(const ExperimentConfig& config, const Workspace& ws,
                          const LabelSet& labels, HeadTask task,
                          double fraction, uint64_t seed) {
  FinetuneOptions options = PipelineFinetuneOptions(config, task, seed);
  FinetuneResult fit = SupervisedRtx(
      ws.train.features, task == HeadTask::kMse ? &labels.train : nullptr,
      task == HeadTask::kCe ? &labels.train_rankings : nullptr, task,
      PipelineBudget(fraction, seed), config.supervised, options);
  TrainedHead trained;
  trained.head = std::move(fit.model);
  trained.labeled_indices = fit.labeled_indices;
  trained.selected_weight_decay = fit.selected_weight_decay;
  return trained;
}

std::string SweepHeader() {
  return "config_hash,seed,method,fraction,l2_error,rank_acc\n";
}

std::string SweepLine(const ExperimentConfig& config, const SweepRow& row) {
  return config.hash + "," + std::to_string(row.seed) + "," + row.method + "," +
         Num(row.fraction) + "," + Num(row.l2_error) + "," +
         Num(row.rank_acc) + "\n";
}

void AppendLine(const fs::path& path, const std::string& header,
                const std::string& line) {
  const bool fresh = !fs::exists(path);
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  if (fresh) out << header;
  out << line;
}

// Existing rows of a resumable table, rejecting rows from another config.
std::vector<SweepRow> ExistingRows(const ExperimentConfig& config,
                                   const fs::path& path) {
  if (!fs::exists(path)) return {};
  for (const auto& row : ReadCsvRows(path.string())) {
    if (row.at("config_hash") != config.hash) {
      throw ConfigError(path.string() +
                        " was written by a different config (hash " +
                        row.at("config_hash") + "); use a new run name");
    }
  }
  return ReadSweepCsv(path.string());
}

bool HasRow(const std::vector<SweepRow>& rows, const std::string& method,
            double fraction, uint64_t seed) {
  return std::any_of(rows.begin(), rows.end(), [&](const SweepRow& r) {
    return r.method == method && r.seed == seed &&
           std::abs(r.fraction - fraction) < 1e-12;
  });
}

// mean and sample std per (method, fraction), NaN entries skipped.
void WriteSweepSummary(const ExperimentConfig& config,
                       const std::vector<SweepRow>& rows,
                       const fs::path& path) {
  std::map<std::pair<std::string, double>, std::vector<const SweepRow*>> cells;
  for (const SweepRow& r : rows) cells[{r.method, r.fraction}].push_back(&r);
  auto stats = [](const std::vector<double>& v) {
    if (v.empty()) return std::pair<double, double>{std::nan(""), std::nan("")};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair<double, double>{
        mean, v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0};
  };
  std::string text =
      "config_hash,seed,method,fraction,runs,l2_error_mean,l2_error_std,"
      "rank_acc_mean,rank_acc_std\n";
  for (const auto& [key, group] : cells) {
    std::vector<double> l2;
    std::vector<double> acc;
    for (const SweepRow* r : group) {
      if (!std::isnan(r->l2_error)) l2.push_back(r->l2_error);
      if (!std::isnan(r->rank_acc)) acc.push_back(r->rank_acc);
    }
    const auto [l2m, l2s] = stats(l2);
    const auto [am, as] = stats(acc);
    text += config.hash + "," + std::to_string(config.seed) + "," + key.first +
            "," + Num(key.second) + "," + std::to_string(group.size()) + "," +
            Num(l2m) + "," + Num(l2s) + "," + Num(am) + "," + Num(as) + "\n";
  }
  WriteText(path, text);
}

EncoderSpec ResolveEncoderSpec(const ExperimentConfig& config, int m) {
  EncoderSpec spec = config.encoder;
  if (spec.hidden.empty()) {
    spec.hidden = DefaultEncoderSpec(m).hidden;
  }
  return spec;
}

}  // namespace

// ---- Config ---------------------------------------------------------------

Json DefaultConfigJson() {
  return Json::parse(R"({
  "name": "default",
  "seed": 0,
  "output_dir": "runs",
  "dataset": {
    "source": "synthetic",
    "synthetic": {
      "kind": "mlp-random",
      "num_features": 8,
      "hidden": [64, 64],
      "model_seed": 7,
      "active_features": 4,
      "inactive_scale": 0.0,
      "link": "sigmoid",
      "weights": [],
      "pairs": [],
      "bias": 0.0
    },
    "train_size": 2000,
    "test_size": 500,
    "train_csv": "",
    "test_csv": "",
    "target_checkpoint": "",
    "target_link": "sigmoid"
  },
  "reference": {"policy": "mean", "values": []},
  "oracle": {"source": "exact-shapley", "budget": 0},
  "augment": {"m": 30, "lambda": 0.5, "selector": "compact"},
  "contrastive": {
    "tau": 0.2,
    "batch_size": 256,
    "max_epochs": 100,
    "patience": 10,
    "rel_tol": 1e-4,
    "learning_rate": 5e-3,
    "weight_decay": 0.0,
    "normalize": false,
    "encoder": {"hidden": [], "embedding_dim": 64}
  },
  "head": {
    "hidden": [128, 128],
    "fraction": 1.0,
    "max_epochs": 400,
    "batch_size": 64,
    "learning_rate": 5e-3,
    "weight_decays": [1.0, 0.1, 0.01, 1e-3, 1e-4],
    "holdout_fraction": 0.2,
    "patience": 40,
    "joint_tasks": ["mse"],
    "rank_by_magnitude": false
  },
  "supervised": {"hidden": [128, 128, 128, 128, 128]},
  "sweep": {"fractions": [0.01, 0.05, 0.1, 0.25, 0.5, 1.0],
            "seeds": [0, 1, 2, 3, 4]},
  "ablation": {"fraction": 0.25,
               "selectors": ["compact", "random", "max-alignment"]},
  "estimator": {"budgets": [8, 32, 128, 512], "instances": 100, "seeds": 1},
  "frontier": {"ks_budgets": [16, 32, 64, 128, 256, 512, 1024],
               "ps_budgets": [2, 4, 8, 16, 32, 64, 128],
               "instances": 200, "repetitions": 5},
  "eval": {"curve_score": "top1-accuracy", "bootstrap": 20}
})");
}

void MergeConfig(Json& base, const Json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    Json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) {
        throw ConfigError("config: '" + path + "' must be an object");
      }
      MergeConfig(slot, value, path);
    } else {
      slot = value;
    }
  }
}

void ApplyOverride(Json& config, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  // Build a nested patch and reuse the merge checks.
  Json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    Json wrapped = Json::object();
    wrapped[*it] = patch;
    patch = wrapped;
  }
  MergeConfig(config, patch);
}

std::string ConfigHash(const Json& config) {
  // name and output_dir are left out.
  Json content = config;
  if (content.is_object()) {
    content.erase("name");
    content.erase("output_dir");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a(content.dump())));
  return buf;
}

ExperimentConfig ExperimentConfig::FromJson(const Json& resolved) {
  ExperimentConfig c;
  c.raw = resolved;
  c.name = Get<std::string>(resolved, "name");
  if (c.name.empty() || c.name.find('/') != std::string::npos) {
    throw ConfigError("config: name must be a non-empty path component");
  }
  c.seed = Get<uint64_t>(resolved, "seed");
  c.output_dir = Get<std::string>(resolved, "output_dir");

  const Json& ds = Section(resolved, "dataset");
  c.dataset_source = Get<std::string>(ds, "source");
  if (c.dataset_source != "synthetic" && c.dataset_source != "csv") {
    throw ConfigError("config: dataset.source must be synthetic or csv");
  }
  const Json& syn = Section(ds, "synthetic");
  c.synthetic.kind = ParseSyntheticKind(Get<std::string>(syn, "kind"));
  c.synthetic.num_features = Get<int>(syn, "num_features");
  c.synthetic.hidden = Get<std::vector<int>>(syn, "hidden");
  c.synthetic.model_seed = Get<uint64_t>(syn, "model_seed");
  c.synthetic.active_features = Get<int>(syn, "active_features");
  c.synthetic.inactive_scale = Get<double>(syn, "inactive_scale");
  c.synthetic.link = ParseOutputLink(Get<std::string>(syn, "link"));
  const auto weights = Get<std::vector<double>>(syn, "weights");
  c.synthetic.weights =
      Eigen::Map<const Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  for (const Json& p : syn.at("pairs")) {
    c.synthetic.pairs.push_back(PairTerm{Get<int>(p, "i"), Get<int>(p, "j"),
                                         Get<double>(p, "coef")});
  }
  c.synthetic.bias = Get<double>(syn, "bias");
  c.train_size = Get<int>(ds, "train_size");
  c.test_size = Get<int>(ds, "test_size");
  c.train_csv = Get<std::string>(ds, "train_csv");
  c.test_csv = Get<std::string>(ds, "test_csv");
  c.target_checkpoint = Get<std::string>(ds, "target_checkpoint");
  c.target_link = ParseOutputLink(Get<std::string>(ds, "target_link"));
  if (c.dataset_source == "synthetic") {
    c.synthetic.Validate();
    if (c.train_size < 2 || c.test_size < 1) {
      throw ConfigError("config: need train_size >= 2 and test_size >= 1");
    }
  } else if (c.train_csv.empty() || c.test_csv.empty() ||
             c.target_checkpoint.empty()) {
    throw ConfigError(
        "config: csv datasets need train_csv, test_csv and target_checkpoint");
  }

  const Json& ref = Section(resolved, "reference");
  c.reference_policy = ParseReferencePolicy(Get<std::string>(ref, "policy"));
  c.reference_values = Get<std::vector<double>>(ref, "values");

  const Json& oracle = Section(resolved, "oracle");
  c.oracle.source = ParseSource(Get<std::string>(oracle, "source"));
  c.oracle.weighting = c.oracle.source == AttributionSource::kExactUniform
                           ? Weighting::kUniform
                           : Weighting::kShapley;
  c.oracle.budget = Get<int64_t>(oracle, "budget");
  c.oracle.seed = SubSeed(c.seed, "oracle");

  const Json& aug = Section(resolved, "augment");
  c.augment.m = Get<int>(aug, "m");
  c.augment.lambda = Get<double>(aug, "lambda");
  c.augment.selector = ParseSelector(Get<std::string>(aug, "selector"));
  c.augment.Validate();

  const Json& con = Section(resolved, "contrastive");
  c.contrastive.tau = Get<double>(con, "tau");
  c.contrastive.batch_size = Get<int>(con, "batch_size");
  c.contrastive.max_epochs = Get<int>(con, "max_epochs");
  c.contrastive.patience = Get<int>(con, "patience");
  c.contrastive.rel_tol = Get<double>(con, "rel_tol");
  c.contrastive.learning_rate = Get<double>(con, "learning_rate");
  c.contrastive.weight_decay = Get<double>(con, "weight_decay");
  c.contrastive.normalize = Get<bool>(con, "normalize");
  c.contrastive.Validate();
  const Json& enc = Section(con, "encoder");
  c.encoder.hidden = Get<std::vector<int>>(enc, "hidden");
  c.encoder.embedding_dim = Get<int>(enc, "embedding_dim");
  if (c.encoder.embedding_dim < 1) {
    throw ConfigError("config: embedding_dim must be >= 1");
  }

  const Json& head = Section(resolved, "head");
  c.head.hidden = Get<std::vector<int>>(head, "hidden");
  c.head_fraction = Get<double>(head, "fraction");
  LabelBudget::SubsetSize(c.head_fraction, 1);
  c.finetune.max_epochs = Get<int>(head, "max_epochs");
  c.finetune.batch_size = Get<int>(head, "batch_size");
  c.finetune.learning_rate = Get<double>(head, "learning_rate");
  c.finetune.weight_decays = Get<std::vector<double>>(head, "weight_decays");
  c.finetune.holdout_fraction = Get<double>(head, "holdout_fraction");
  c.finetune.patience = Get<int>(head, "patience");
  for (const Json& t : head.at("joint_tasks")) {
    ParseHeadTask(t.get<std::string>());
  }
  c.rank_by_magnitude = Get<bool>(head, "rank_by_magnitude");
  c.supervised.hidden =
      Get<std::vector<int>>(Section(resolved, "supervised"), "hidden");

  const Json& sweep = Section(resolved, "sweep");
  c.sweep_fractions = Get<std::vector<double>>(sweep, "fractions");
  for (double f : c.sweep_fractions) LabelBudget::SubsetSize(f, 1);
  c.sweep_seeds = Get<std::vector<uint64_t>>(sweep, "seeds");

  const Json& abl = Section(resolved, "ablation");
  c.ablation_fraction = Get<double>(abl, "fraction");
  LabelBudget::SubsetSize(c.ablation_fraction, 1);
  for (const Json& s : abl.at("selectors")) {
    c.ablation_selectors.push_back(ParseSelector(s.get<std::string>()));
  }

  const Json& est = Section(resolved, "estimator");
  c.estimator_budgets = Get<std::vector<int64_t>>(est, "budgets");
  c.estimator_instances = Get<int>(est, "instances");
  c.estimator_seeds = Get<int>(est, "seeds");

  const Json& fr = Section(resolved, "frontier");
  c.frontier_ks_budgets = Get<std::vector<int64_t>>(fr, "ks_budgets");
  c.frontier_ps_budgets = Get<std::vector<int64_t>>(fr, "ps_budgets");
  c.frontier_instances = Get<int>(fr, "instances");
  c.frontier_repetitions = Get<int>(fr, "repetitions");

  const Json& ev = Section(resolved, "eval");
  c.curve_score = ParseCurveScore(Get<std::string>(ev, "curve_score"));
  c.curve_bootstrap = Get<int>(ev, "bootstrap");

  c.hash = ConfigHash(resolved);
  return c;
}

std::string ExperimentConfig::RunDir() const {
  return (fs::path(output_dir) / name).string();
}

ExperimentConfig LoadExperimentConfig(
    const std::string& path, const std::vector<std::string>& overrides) {
  Json config = DefaultConfigJson();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    Json user;
    try {
      user = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + path + ": " + e.what());
    }
    MergeConfig(config, user);
  }
  for (const std::string& o : overrides) ApplyOverride(config, o);
  return ExperimentConfig::FromJson(config);
}

// ---- Workspace ------------------------------------------------------------

Workspace LoadWorkspace(const ExperimentConfig& config) {
  Workspace ws;
  if (config.dataset_source == "synthetic") {
    SyntheticBenchmark train = GenerateSynthetic(
        config.synthetic, config.train_size, SubSeed(config.seed, "data-train"),
        SplitTag::kTrain);
    SyntheticBenchmark test = GenerateSynthetic(
        config.synthetic, config.test_size, SubSeed(config.seed, "data-test"),
        SplitTag::kTest);
    ws.train = std::move(train.data);
    ws.test = std::move(test.data);
    ws.target = train.model;
    ws.net_target = train.target;
  } else {
    Mlp net = LoadMlp(config.target_checkpoint);
    std::vector<std::string> schema;
    {
      std::ifstream in(config.train_csv);
      if (!in) throw ConfigError("cannot open " + config.train_csv);
      std::string header;
      std::getline(in, header);
      if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        header.erase(0, 3);
      }
      if (!header.empty() && header.back() == '\r') header.pop_back();
      schema = SplitCsvLine(header);
    }
    ws.train = LoadCsv(config.train_csv, schema, SplitTag::kTrain);
    ws.test = LoadCsv(config.test_csv, schema, SplitTag::kTest);
    if (net.input_dim() != ws.train.num_features() || net.output_dim() != 1) {
      throw ConfigError("target checkpoint must map the csv features to one output");
    }
    ws.net_target = NetTarget{std::move(net), config.target_link};
    ws.target = ws.net_target->AsModelFn();
  }
  if (ws.net_target) ws.target_lipschitz = ws.net_target->LipschitzBound();
  const int m = ws.train.num_features();
  if (config.reference_policy == ReferencePolicy::kCustom) {
    if (static_cast<int>(config.reference_values.size()) != m) {
      throw ConfigError("config: reference.values needs one value per feature");
    }
    ws.reference = CustomReference(Eigen::Map<const Vector>(
        config.reference_values.data(), m));
  } else {
    ws.reference = ComputeReference(ws.train, config.reference_policy);
  }
  ws.reference_output = ws.target(ws.reference.values.transpose())(0);
  config.oracle.Validate(m);
  return ws;
}

LabelSet EnsureLabels(const ExperimentConfig& config, const Workspace& ws,
                      bool create) {
  const std::string train_path = LabelPath(config, SplitTag::kTrain);
  const std::string test_path = LabelPath(config, SplitTag::kTest);
  const int m = ws.train.num_features();
  LabelSet labels;
  for (const std::string& path : {train_path, test_path}) {
    const bool is_train = path == train_path;
    const TabularDataset& data = is_train ? ws.train : ws.test;
    std::vector<LabelRecord> records;
    if (fs::exists(path)) {
      records = LoadLabelCache(path);
    } else if (create) {
      OracleConfig oc = config.oracle;
      oc.seed = SubSeed(config.oracle.seed, is_train ? "train" : "test");
      fs::create_directories(fs::path(path).parent_path());
      records = BuildLabelCache(ws.target, data, ws.reference, oc, path);
    } else {
      throw ConfigError("label cache not found: " + path +
                        " (run the oracle command first)");
    }
    (is_train ? labels.train : labels.test) =
        LabelMatrix(records, data.num_rows(), m);
  }
  labels.train_rankings = MakeRankingLabels(labels.train, config.rank_by_magnitude);
  labels.test_rankings = MakeRankingLabels(labels.test, config.rank_by_magnitude);
  return labels;
}

// ---- Pipelines --------------------------------------------------------------

EncoderTrainingResult TrainPipelineEncoder(const ExperimentConfig& config,
                                           const Workspace& ws, uint64_t seed,
                                           PositiveSelector selector) {
  AugmentConfig augment = config.augment;
  augment.selector = selector;
  augment.seed = SubSeed(seed, "augment");
  ContrastiveConfig contrastive = config.contrastive;
  contrastive.seed = SubSeed(seed, "contrastive");
  return TrainEncoder(ws.train, ws.target, ws.reference, augment, contrastive,
                      ResolveEncoderSpec(config, ws.train.num_features()));
}

PipelineScores EvaluateCortx(const ExperimentConfig& config,
                             const Workspace& ws, const LabelSet& labels,
                             const Mlp& encoder, HeadTask task,
                             double fraction, uint64_t seed) {
  const TrainedHead trained =
      FitCortxHead(config, ws, labels, encoder, task, fraction, seed);
  return ScoreHead(config, ws, labels, trained, task);
}

PipelineScores EvaluateSupervised(const ExperimentConfig& config,
                                  const Workspace& ws, const LabelSet& labels,
                                  HeadTask task, double fraction,
                                  uint64_t seed) {
  const TrainedHead trained =
      FitSupervised(config, ws, labels, task, fraction, seed);
  return ScoreHead(config, ws, labels, trained, task);
}

// ---- Commands ---------------------------------------------------------------

int CmdOracle(const ExperimentConfig& config) {
  const auto start = Clock::now();
  WriteResolvedConfig(config);
  const Workspace ws = LoadWorkspace(config);
  const int m = ws.train.num_features();
  // Both label caches are rebuilt on every run.
  fs::remove(LabelPath(config, SplitTag::kTrain));
  fs::remove(LabelPath(config, SplitTag::kTest));
  EnsureLabels(config, ws, /*create=*/true);

  std::vector<std::string> files{"config.resolved", "labels.jsonl",
                                 "labels_test.jsonl"};
  if (!config.estimator_budgets.empty() && config.estimator_instances > 0) {
    if (m > kMaxExactFeatures) {
      throw ConfigError("estimator table needs exact attributions; M = " +
                        std::to_string(m) + " exceeds " +
                        std::to_string(kMaxExactFeatures));
    }
    const int n = std::min(config.estimator_instances, ws.test.num_rows());
    std::vector<Vector> exact;
    for (int i = 0; i < n; ++i) {
      exact.push_back(
          ExactAttribution(ws.target, ws.test.row(i), ws.reference).scores);
    }
    std::string text =
        "config_hash,seed,estimator,budget,evaluations,trials,mean_l2_error,"
        "std_error,seconds_per_instance\n";
    for (const std::string name : {"aps", "ks", "ps"}) {
      for (int64_t budget : config.estimator_budgets) {
        std::vector<double> errors;
        int64_t evaluations = 0;
        const auto t0 = Clock::now();
        for (int r = 0; r < config.estimator_seeds; ++r) {
          for (int i = 0; i < n; ++i) {
            const uint64_t s = SubSeed(SubSeed(config.seed, "estimator", r),
                                       "instance", i);
            AttributionVector att;
            const Vector x = ws.test.row(i);
            if (name == "ps") {
              att = PermutationSampling(ws.target, x, ws.reference, budget, s);
            } else if (name == "aps") {
              att = AntitheticalPermutationSampling(ws.target, x, ws.reference,
                                                    budget, s);
            } else {
              // Matched evaluations: one ordering costs about M coalitions.
              att = KernelShap(ws.target, x, ws.reference, budget * m, s);
            }
            evaluations = att.budget;
            errors.push_back((att.scores - exact[i]).norm());
          }
        }
        const double secs = Seconds(t0) / std::max<size_t>(1, errors.size());
        const MetricReport rep = Summarize("l2_error", errors);
        text += config.hash + "," + std::to_string(config.seed) + "," + name +
                "," + std::to_string(budget) + "," +
                std::to_string(evaluations) + "," +
                std::to_string(errors.size()) + "," + Num(rep.mean) + "," +
                Num(rep.std_error) + "," + Num(secs) + "\n";
      }
    }
    WriteText(fs::path(config.RunDir()) / "metrics" / "estimator.csv", text);
    files.push_back("metrics/estimator.csv");
  }
  Manifest(config, "oracle", files, Seconds(start));
  return 0;
}

int CmdTrain(const ExperimentConfig& config) {
  const auto start = Clock::now();
  WriteResolvedConfig(config);
  const Workspace ws = LoadWorkspace(config);
  if (const auto note = config.augment.Advisory(ws.train.num_features())) {
    std::cerr << "warning: " << *note << "\n";
  }
  const EncoderTrainingResult result =
      TrainPipelineEncoder(config, ws, config.seed, config.augment.selector);
  const fs::path dir(config.RunDir());
  SaveMlp(result.encoder, (dir / "encoder.ckpt").string());
  fs::create_directories(dir / "metrics");
  WriteTrainingLog(result.log, (dir / "metrics" / "train_log.csv").string());
  Json summary;
  summary["config_hash"] = config.hash;
  summary["seed"] = config.seed;
  summary["epochs"] = result.log.size();
  summary["converged"] = result.converged;
  summary["final_loss"] = result.log.empty() ? 0.0 : result.log.back().mean_loss;
  WriteJson(dir / "metrics" / "train.json", summary);
  Manifest(config, "train",
           {"config.resolved", "encoder.ckpt", "metrics/train_log.csv",
            "metrics/train.json"},
           Seconds(start));
  return 0;
}

namespace {

Mlp LoadEncoderOrFail(const ExperimentConfig& config) {
  const fs::path path = fs::path(config.RunDir()) / "encoder.ckpt";
  if (!fs::exists(path)) {
    throw ConfigError("encoder checkpoint not found: " + path.string() +
                      " (run the train command first)");
  }
  return LoadMlp(path.string());
}

}  // namespace

int CmdFinetune(const ExperimentConfig& config) {
  const auto start = Clock::now();
  WriteResolvedConfig(config);
  const Workspace ws = LoadWorkspace(config);
  const LabelSet labels = EnsureLabels(config, ws, /*create=*/false);
  const Mlp encoder = LoadEncoderOrFail(config);
  const fs::path heads = fs::path(config.RunDir()) / "heads";
  fs::create_directories(heads);
  std::vector<std::string> files{"config.resolved"};
  Json subset;
  subset["config_hash"] = config.hash;
  subset["seed"] = config.seed;
  subset["fraction"] = config.head_fraction;
  for (HeadTask task : {HeadTask::kMse, HeadTask::kCe}) {
    const std::string name = HeadTaskName(task);
    const TrainedHead trained = FitCortxHead(
        config, ws, labels, encoder, task, config.head_fraction, config.seed);
    SaveMlp(trained.head, (heads / (name + ".ckpt")).string());
    SaveMlp(trained.encoder, (heads / (name + "_encoder.ckpt")).string());
    files.push_back("heads/" + name + ".ckpt");
    files.push_back("heads/" + name + "_encoder.ckpt");
    subset[name]["labeled_indices"] = trained.labeled_indices;
    subset[name]["selected_weight_decay"] = trained.selected_weight_decay;
    subset[name]["joint"] = IsJoint(config, task);
  }
  WriteJson(heads / "subset.json", subset);
  files.push_back("heads/subset.json");
  Manifest(config, "finetune", files, Seconds(start));
  return 0;
}

int CmdEval(const ExperimentConfig& config) {
  const auto start = Clock::now();
  WriteResolvedConfig(config);
  const Workspace ws = LoadWorkspace(config);
  const LabelSet labels = EnsureLabels(config, ws, /*create=*/false);
  const fs::path dir(config.RunDir());
  auto load = [&](const std::string& file) {
    const fs::path p = dir / "heads" / file;
    if (!fs::exists(p)) {
      throw ConfigError("head checkpoint not found: " + p.string() +
                        " (run the finetune command first)");
    }
    return LoadMlp(p.string());
  };
  const TrainedHead mse{load("mse_encoder.ckpt"), load("mse.ckpt"), {}, 0.0};
  const TrainedHead ce{load("ce_encoder.ckpt"), load("ce.ckpt"), {}, 0.0};
  const int m = ws.test.num_features();

  const Matrix raw = PipelineOutputs(mse, ws.test.features);
  const Matrix att = EfficientNormalizeRows(raw, TargetTotals(ws, ws.test.features));
  MetricReport l2 = L2ErrorReport(att, labels.test);
  MetricReport acc_mse = RankAccReport(
      MakeRankingLabels(att, config.rank_by_magnitude), labels.test_rankings);
  acc_mse.metric = "rank_acc_mse_head";
  MetricReport acc_ce = RankAccReport(
      RankingsFromOutputs(PipelineOutputs(ce, ws.test.features), m),
      labels.test_rankings);
  acc_ce.metric = "rank_acc_ce_head";
  for (MetricReport* r : {&l2, &acc_mse, &acc_ce}) {
    r->metadata["label_fraction"] = config.head_fraction;
    r->metadata["seed"] = config.seed;
    r->metadata["oracle"] = SourceName(config.oracle.source);
  }

  Json report;
  report["config_hash"] = config.hash;
  report["seed"] = config.seed;
  report["metrics"] = Json::array({l2.ToJson(), acc_mse.ToJson(), acc_ce.ToJson()});

  // Error bound diagnostic on the raw head.
  BoundInputs bound;
  bound.target = ws.target;
  bound.encoder = [&](const Matrix& x) { return mse.encoder.Forward(x); };
  bound.head = [&](const Matrix& h) { return mse.head.Forward(h); };
  bound.lipschitz_f = ws.target_lipschitz;
  bound.lipschitz_head = LipschitzUpperBound(mse.head).value;
  AugmentConfig augment = config.augment;
  augment.seed = SubSeed(config.seed, "bound-positives");
  const BoundDiagnostics diag =
      ExplanationErrorBound(bound, ws.train.features, labels.train,
                            ws.test.features, labels.test, ws.reference, augment);
  report["bound"] = diag.ToJson();

  std::vector<std::string> files{"config.resolved", "metrics/eval.json"};
  bool probabilistic = ws.net_target && ws.net_target->link == OutputLink::kSigmoid;
  if (probabilistic) {
    CurveOptions options;
    options.score = config.curve_score;
    options.bootstrap_resamples = config.curve_bootstrap;
    options.seed = SubSeed(config.seed, "curves");
    const CurveResult curves = InclusionExclusionCurves(
        ws.target, att, ws.test.features, ws.reference, options);
    WriteCurveCsv(curves, (dir / "metrics" / "curves_mse.csv").string());
    files.push_back("metrics/curves_mse.csv");
    Json c;
    c["score"] = CurveScoreName(config.curve_score);
    c["exclusion_auc"] = curves.exclusion.auc;
    c["inclusion_auc"] = curves.inclusion.auc;
    c["exclusion_auc_bootstrap"] = {{"mean", curves.exclusion_bootstrap.mean},
                                    {"std", curves.exclusion_bootstrap.std}};
    c["inclusion_auc_bootstrap"] = {{"mean", curves.inclusion_bootstrap.mean},
                                    {"std", curves.inclusion_bootstrap.std}};
    report["curves"] = c;
  }
  const ThroughputResult tp = MeasureThroughput(
      [&](const Matrix& x) {
        return EfficientNormalizeRows(PipelineOutputs(mse, x), TargetTotals(ws, x));
      },
      ws.test.features, 5);
  report["throughput"] = {{"instances_per_second", tp.instances_per_second},
                          {"median_seconds", tp.median_seconds}};
  WriteJson(dir / "metrics" / "eval.json", report);
  Manifest(config, "eval", files, Seconds(start));
  return 0;
}

int CmdSweepLabels(const ExperimentConfig& config) {
  const auto start = Clock::now();
  WriteResolvedConfig(config);
  const Workspace ws = LoadWorkspace(config);
  const LabelSet labels = EnsureLabels(config, ws, /*create=*/true);
  const fs::path table = fs::path(config.RunDir()) / "metrics" / "sweep_labels.csv";
  std::vector<SweepRow> rows = ExistingRows(config, table);
  static const char* kMethods[] = {"cortx-mse", "cortx-ce", "supervised-rtx"};
  for (uint64_t seed : config.sweep_seeds) {
    std::optional<Mlp> encoder;
    for (double fraction : config.sweep_fractions) {
      for (const char* method : kMethods) {
        if (HasRow(rows, method, fraction, seed)) continue;
        SweepRow row{method, fraction, seed, 0.0, 0.0};
        if (row.method == "supervised-rtx") {
          row.l2_error = EvaluateSupervised(config, ws, labels, HeadTask::kMse,
                                            fraction, seed)
                             .l2_error;
          row.rank_acc = EvaluateSupervised(config, ws, labels, HeadTask::kCe,
                                            fraction, seed)
                             .rank_acc;
        } else {
          if (!encoder) {
            encoder = TrainPipelineEncoder(config, ws, seed,
                                           config.augment.selector)
                          .encoder;
          }
          const HeadTask task =
              row.method == "cortx-mse" ? HeadTask::kMse : HeadTask::kCe;
          const PipelineScores s =
              EvaluateCortx(config, ws, labels, *encoder, task, fraction, seed);
          row.l2_error = s.l2_error;
          row.rank_acc = s.rank_acc;
        }
        AppendLine(table, SweepHeader(), SweepLine(config, row));
        rows.push_back(row);
        std::cerr << "sweep seed=" << seed << " fraction=" << fraction
                  << " method=" << method << " rank_acc=" << row.rank_acc
                  << " l2=" << row.l2_error << "\n";
      }
    }
  }
  WriteSweepSummary(config, ReadSweepCsv(table.string()),
                    fs::path(config.RunDir()) / "metrics" /
                        "sweep_labels_summary.csv");
  Manifest(config, "sweep-labels",
           {"config.resolved", "labels.jsonl", "labels_test.jsonl",
            "metrics/sweep_labels.csv", "metrics/sweep_labels_summary.csv"},
           Seconds(start));
  return 0;
}

int CmdAblation(const ExperimentConfig& config) {
  const auto start = Clock::now();
  WriteResolvedConfig(config);
  const Workspace ws = LoadWorkspace(config);
  const LabelSet labels = EnsureLabels(config, ws, /*create=*/true);
  const fs::path table = fs::path(config.RunDir()) / "metrics" / "ablation.csv";
  std::vector<SweepRow> rows = ExistingRows(config, table);
  const double fraction = config.ablation_fraction;
  for (uint64_t seed : config.sweep_seeds) {
    for (PositiveSelector selector : config.ablation_selectors) {
      const std::string method = SelectorName(selector);
      if (HasRow(rows, method, fraction, seed)) continue;
      // Every arm of a seed shares the batching, mask and init streams; only
      // the positive choice differs.
      const Mlp encoder =
          TrainPipelineEncoder(config, ws, seed, selector).encoder;
      SweepRow row{method, fraction, seed, 0.0, 0.0};
      row.l2_error = EvaluateCortx(config, ws, labels, encoder, HeadTask::kMse,
                                   fraction, seed)
                         .l2_error;
      row.rank_acc = EvaluateCortx(config, ws, labels, encoder, HeadTask::kCe,
                                   fraction, seed)
                         .rank_acc;
      AppendLine(table, SweepHeader(), SweepLine(config, row));
      rows.push_back(row);
      std::cerr << "ablation seed=" << seed << " selector=" << method
                << " rank_acc=" << row.rank_acc << " l2=" << row.l2_error
                << "\n";
    }
  }
  WriteSweepSummary(config, ReadSweepCsv(table.string()),
                    fs::path(config.RunDir()) / "metrics" /
                        "ablation_summary.csv");
  Manifest(config, "ablation",
           {"config.resolved", "labels.jsonl", "labels_test.jsonl",
            "metrics/ablation.csv", "metrics/ablation_summary.csv"},
           Seconds(start));
  return 0;
}

int CmdFrontier(const ExperimentConfig& config) {
  const auto start = Clock::now();
  WriteResolvedConfig(config);
  const Workspace ws = LoadWorkspace(config);
  const LabelSet labels = EnsureLabels(config, ws, /*create=*/true);
  const int m = ws.test.num_features();
  const int n = std::min(config.frontier_instances, ws.test.num_rows());
  if (n < 1) throw ConfigError("frontier: need at least one test instance");
  if (config.frontier_repetitions < 1) {
    throw ConfigError("frontier: repetitions must be >= 1");
  }
  const Matrix x = ws.test.features.topRows(n);
  const Matrix truth = labels.test.topRows(n);
  const std::vector<RankingVector> truth_rank(labels.test_rankings.begin(),
                                              labels.test_rankings.begin() + n);

  std::vector<FrontierRow> rows;
  // Amortized explainer: ranking from the CE head, attribution from the MSE
  // head; the timed pass is the ranking head.
  const Mlp encoder =
      TrainPipelineEncoder(config, ws, config.seed, config.augment.selector)
          .encoder;
  const TrainedHead ce = FitCortxHead(config, ws, labels, encoder, HeadTask::kCe,
                                      config.head_fraction, config.seed);
  const TrainedHead mse = FitCortxHead(config, ws, labels, encoder,
                                       HeadTask::kMse, config.head_fraction,
                                       config.seed);
  {
    FrontierRow row{"cortx", 0, 0.0, 0.0, 0.0};
    const ThroughputResult tp = MeasureThroughput(
        [&](const Matrix& batch) { return PipelineOutputs(ce, batch); }, x,
        config.frontier_repetitions);
    row.throughput = tp.instances_per_second;
    row.rank_acc =
        RankAccReport(RankingsFromOutputs(PipelineOutputs(ce, x), m), truth_rank)
            .mean;
    row.l2_error = L2ErrorReport(
                       EfficientNormalizeRows(PipelineOutputs(mse, x),
                                              TargetTotals(ws, x)),
                       truth)
                       .mean;
    rows.push_back(row);
  }
  auto sampled_row = [&](const std::string& method, int64_t budget) {
    auto explain = [&](const Matrix& batch) {
      Matrix out(batch.rows(), m);
      for (Eigen::Index i = 0; i < batch.rows(); ++i) {
        const uint64_t s = SubSeed(config.seed, "frontier-" + method, i);
        const Vector xi = batch.row(i).transpose();
        out.row(i) = (method == "ks"
                          ? KernelShap(ws.target, xi, ws.reference, budget, s)
                          : PermutationSampling(ws.target, xi, ws.reference,
                                                budget, s))
                         .scores.transpose();
      }
      return out;
    };
    FrontierRow row{method, budget, 0.0, 0.0, 0.0};
    const ThroughputResult tp =
        MeasureThroughput(explain, x, config.frontier_repetitions);
    const Matrix att = explain(x);
    row.throughput = tp.instances_per_second;
    row.rank_acc =
        RankAccReport(MakeRankingLabels(att, config.rank_by_magnitude),
                      truth_rank)
            .mean;
    row.l2_error = L2ErrorReport(att, truth).mean;
    rows.push_back(row);
  };
  for (int64_t b : config.frontier_ks_budgets) sampled_row("ks", b);
  for (int64_t b : config.frontier_ps_budgets) sampled_row("ps", b);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const FrontierRow& a, const FrontierRow& b) {
                     return std::tie(a.method, a.budget) <
                            std::tie(b.method, b.budget);
                   });
  std::string text =
      "config_hash,seed,method,budget,throughput,rank_acc,l2_error\n";
  for (const FrontierRow& r : rows) {
    text += config.hash + "," + std::to_string(config.seed) + "," + r.method +
            "," + std::to_string(r.budget) + "," + Num(r.throughput) + "," +
            Num(r.rank_acc) + "," + Num(r.l2_error) + "\n";
  }
  WriteText(fs::path(config.RunDir()) / "metrics" / "frontier.csv", text);
  Manifest(config, "frontier",
           {"config.resolved", "labels.jsonl", "labels_test.jsonl",
            "metrics/frontier.csv"},
           Seconds(start));
  return 0;
}

int RunCommand(const std::string& command, const ExperimentConfig& config) {
  try {
    if (command == "oracle") return CmdOracle(config);
    if (command == "train") return CmdTrain(config);
    if (command == "finetune") return CmdFinetune(config);
    if (command == "eval") return CmdEval(config);
    if (command == "sweep-labels") return CmdSweepLabels(config);
    if (command == "ablation") return CmdAblation(config);
    if (command == "frontier") return CmdFrontier(config);
    throw ConfigError("unknown command: " + command);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

std::vector<SweepRow> ReadSweepCsv(const std::string& path) {
  std::vector<SweepRow> rows;
  for (const auto& cells : ReadCsvRows(path)) {
    SweepRow row;
    row.method = cells.at("method");
    row.fraction = std::stod(cells.at("fraction"));
    row.seed = std::stoull(cells.at("seed"));
    row.l2_error = std::stod(cells.at("l2_error"));
    row.rank_acc = std::stod(cells.at("rank_acc"));
    rows.push_back(row);
  }
  return rows;
}

std::vector<FrontierRow> ReadFrontierCsv(const std::string& path) {
  std::vector<FrontierRow> rows;
  for (const auto& cells : ReadCsvRows(path)) {
    FrontierRow row;
    row.method = cells.at("method");
    row.budget = std::stoll(cells.at("budget"));
    row.throughput = std::stod(cells.at("throughput"));
    row.rank_acc = std::stod(cells.at("rank_acc"));
    row.l2_error = std::stod(cells.at("l2_error"));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rtxlab
