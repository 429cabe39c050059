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

#ifndef RTXLAB_METRICS_H_
#define RTXLAB_METRICS_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtxlab/augment.h"
#include "rtxlab/common.h"
#include "rtxlab/data.h"
#include "rtxlab/heads.h"

namespace rtxlab {

// Euclidean distance between two attribution vectors.
double L2Error(const Vector& predicted, const Vector& truth);

// Agreement per rank position weighted by 1/j (j counted from 1), divided by
// the harmonic number H_M. Equals 1 only for identical rankings.
double RankAcc(const RankingVector& predicted, const RankingVector& truth);

// Per-instance values plus their mean and standard error.
struct MetricReport {
  std::string metric;
  std::vector<double> values;
  double mean = 0.0;
  double std_error = 0.0;
  std::map<std::string, nlohmann::json> metadata;

  nlohmann::ordered_json ToJson() const;
};

MetricReport Summarize(const std::string& metric, std::vector<double> values);
MetricReport L2ErrorReport(const Matrix& predicted, const Matrix& truth);
MetricReport RankAccReport(const std::vector<RankingVector>& predicted,
                           const std::vector<RankingVector>& truth);

struct ThroughputResult {
  double instances_per_second = 0.0;
  double median_seconds = 0.0;
  std::vector<double> run_seconds;
};

// Times one batched explanation pass over `instances`; one warm-up pass, then
// the median over `repetitions` timed passes.
ThroughputResult MeasureThroughput(const BatchMap& explainer,
                                   const Matrix& instances, int repetitions);

inline constexpr double kProbabilityClamp = 1e-7;

double LogOdds(double p);
double DeltaLogOdds(double p_original, double p_masked);

enum class CurveScore { kTop1Accuracy, kLogOdds };
std::string CurveScoreName(CurveScore score);
CurveScore ParseCurveScore(const std::string& name);

struct Curve {
  std::vector<double> mean;  // index k = number of features masked/inserted
  std::vector<double> std;
  double auc = 0.0;
};

struct AucSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct CurveResult {
  Curve exclusion;
  Curve inclusion;
  AucSummary exclusion_bootstrap;
  AucSummary inclusion_bootstrap;
};

struct CurveOptions {
  CurveScore score = CurveScore::kTop1Accuracy;
  int bootstrap_resamples = 20;
  double bootstrap_share = 2.0 / 3.0;
  uint64_t seed = 0;
};

// Feature order per instance comes from `importance` (rows aligned with
// `instances`) oriented toward the predicted class: for instances with
// f(x) < 0.5 the scores are negated before sorting. Exclusion replaces the
// top-k features by the reference; inclusion starts fully masked and inserts
// the top-k features. The score is measured against the unmasked predicted
// class. f must return probabilities in [0, 1].
CurveResult InclusionExclusionCurves(const ModelFn& f, const Matrix& importance,
                                     const Matrix& instances,
                                     const ReferenceVector& ref,
                                     const CurveOptions& options);

// Trapezoid area over k/M in [0, 1].
double TrapezoidAuc(const std::vector<double>& curve);

void WriteCurveCsv(const CurveResult& curves, const std::string& path);

// Test-instance explanation error against the bound built from the target
// Lipschitz constant, the head Lipschitz constant, the worst training error
// and the embedding distance to the selected positive.
struct BoundDiagnostics {
  double lipschitz_f = 0.0;
  double lipschitz_head = 0.0;
  double epsilon = 0.0;
  std::vector<double> gamma;
  std::vector<double> lhs;
  std::vector<double> rhs;
  double holds_fraction = 0.0;

  nlohmann::ordered_json ToJson() const;
};

struct BoundInputs {
  ModelFn target;
  BatchMap encoder;
  BatchMap head;  // raw head outputs, no normalization
  double lipschitz_f = 0.0;
  double lipschitz_head = 0.0;
};

BoundDiagnostics ExplanationErrorBound(const BoundInputs& inputs,
                                       const Matrix& train_x,
                                       const Matrix& train_labels,
                                       const Matrix& test_x,
                                       const Matrix& test_labels,
                                       const ReferenceVector& ref,
                                       const AugmentConfig& augment);

}  // namespace rtxlab

#endif  // RTXLAB_METRICS_H_
