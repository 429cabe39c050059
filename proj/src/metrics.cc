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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "rtxlab/rng.h"

namespace rtxlab {

double L2Error(const Vector& predicted, const Vector& truth) {
  if (predicted.size() != truth.size()) {
    throw ConfigError("l2 error: length mismatch");
  }
  return (predicted - truth).norm();
}

double RankAcc(const RankingVector& predicted, const RankingVector& truth) {
  if (predicted.size() != truth.size()) {
    throw ConfigError("rank acc: length mismatch");
  }
  double hit = 0.0;
  double total = 0.0;
  for (int j = 0; j < truth.size(); ++j) {
    const double w = 1.0 / (j + 1);
    total += w;
    if (predicted.positions[j] == truth.positions[j]) hit += w;
  }
  return total == 0.0 ? 1.0 : hit / total;
}

nlohmann::ordered_json MetricReport::ToJson() const {
  nlohmann::ordered_json out;
  out["metric"] = metric;
  out["count"] = values.size();
  out["mean"] = mean;
  out["std_error"] = std_error;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [key, value] : metadata) meta[key] = value;
  out["metadata"] = meta;
  out["values"] = values;
  return out;
}

MetricReport Summarize(const std::string& metric, std::vector<double> values) {
  MetricReport report;
  report.metric = metric;
  report.values = std::move(values);
  const size_t n = report.values.size();
  if (n == 0) return report;
  report.mean =
      std::accumulate(report.values.begin(), report.values.end(), 0.0) / n;
  if (n > 1) {
    double ss = 0.0;
    for (double v : report.values) ss += (v - report.mean) * (v - report.mean);
    report.std_error = std::sqrt(ss / (n - 1)) / std::sqrt(double(n));
  }
  return report;
}

MetricReport L2ErrorReport(const Matrix& predicted, const Matrix& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
    throw ConfigError("l2 error: shape mismatch");
  }
  std::vector<double> values(predicted.rows());
  for (Eigen::Index i = 0; i < predicted.rows(); ++i) {
    values[i] = (predicted.row(i) - truth.row(i)).norm();
  }
  return Summarize("l2_error", std::move(values));
}

MetricReport RankAccReport(const std::vector<RankingVector>& predicted,
                           const std::vector<RankingVector>& truth) {
  if (predicted.size() != truth.size()) {
    throw ConfigError("rank acc: instance count mismatch");
  }
  std::vector<double> values(predicted.size());
  for (size_t i = 0; i < predicted.size(); ++i) {
    values[i] = RankAcc(predicted[i], truth[i]);
  }
  return Summarize("rank_acc", std::move(values));
}

ThroughputResult MeasureThroughput(const BatchMap& explainer,
                                   const Matrix& instances, int repetitions) {
  if (instances.rows() == 0) throw ConfigError("throughput: empty test set");
  if (repetitions < 1) throw ConfigError("throughput: repetitions must be >= 1");
  using Clock = std::chrono::steady_clock;
  volatile double sink = explainer(instances).sum();
  ThroughputResult result;
  for (int r = 0; r < repetitions; ++r) {
    const auto start = Clock::now();
    const Matrix out = explainer(instances);
    const auto stop = Clock::now();
    sink = sink + out(0, 0);
    result.run_seconds.push_back(
        std::chrono::duration<double>(stop - start).count());
  }
  std::vector<double> sorted = result.run_seconds;
  std::sort(sorted.begin(), sorted.end());
  const size_t mid = sorted.size() / 2;
  result.median_seconds = sorted.size() % 2 == 1
                              ? sorted[mid]
                              : 0.5 * (sorted[mid - 1] + sorted[mid]);
  result.instances_per_second =
      static_cast<double>(instances.rows()) /
      std::max(result.median_seconds, 1e-12);
  return result;
}

double LogOdds(double p) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return std::log(q / (1.0 - q));
}

double DeltaLogOdds(double p_original, double p_masked) {
  return LogOdds(p_original) - LogOdds(p_masked);
}

std::string CurveScoreName(CurveScore score) {
  return score == CurveScore::kTop1Accuracy ? "top1-accuracy" : "log-odds";
}

CurveScore ParseCurveScore(const std::string& name) {
  if (name == "top1-accuracy") return CurveScore::kTop1Accuracy;
  if (name == "log-odds") return CurveScore::kLogOdds;
  throw ConfigError("unknown curve score: " + name);
}

double TrapezoidAuc(const std::vector<double>& curve) {
  if (curve.size() < 2) return curve.empty() ? 0.0 : curve.front();
  const double h = 1.0 / static_cast<double>(curve.size() - 1);
  double area = 0.0;
  for (size_t k = 1; k < curve.size(); ++k) {
    area += 0.5 * h * (curve[k - 1] + curve[k]);
  }
  return area;
}

namespace {

// scores(i, k) for a single direction of masking.
Curve Aggregate(const Matrix& scores) {
  Curve curve;
  const Eigen::Index n = scores.rows();
  for (Eigen::Index k = 0; k < scores.cols(); ++k) {
    const double mean = scores.col(k).mean();
    const double var =
        n > 1 ? (scores.col(k).array() - mean).square().sum() / (n - 1) : 0.0;
    curve.mean.push_back(mean);
    curve.std.push_back(std::sqrt(var));
  }
  curve.auc = TrapezoidAuc(curve.mean);
  return curve;
}

AucSummary Bootstrap(const Matrix& scores, const CurveOptions& options) {
  const int n = static_cast<int>(scores.rows());
  const int take = std::max(
      1, static_cast<int>(std::lround(options.bootstrap_share * n)));
  std::vector<double> aucs;
  for (int b = 0; b < options.bootstrap_resamples; ++b) {
    Rng rng(SubSeed(options.seed, "curve-bootstrap", b));
    std::vector<int> order = RandomPermutation(n, rng);
    std::vector<double> mean(scores.cols(), 0.0);
    for (int t = 0; t < take; ++t) {
      for (Eigen::Index k = 0; k < scores.cols(); ++k) {
        mean[k] += scores(order[t], k) / take;
      }
    }
    aucs.push_back(TrapezoidAuc(mean));
  }
  AucSummary out;
  if (aucs.empty()) return out;
  out.mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / aucs.size();
  double ss = 0.0;
  for (double a : aucs) ss += (a - out.mean) * (a - out.mean);
  out.std = aucs.size() > 1 ? std::sqrt(ss / (aucs.size() - 1)) : 0.0;
  return out;
}

}  // namespace

CurveResult InclusionExclusionCurves(const ModelFn& f, const Matrix& importance,
                                     const Matrix& instances,
                                     const ReferenceVector& ref,
                                     const CurveOptions& options) {
  const Eigen::Index n = instances.rows();
  const int m = static_cast<int>(instances.cols());
  if (importance.rows() != n || importance.cols() != m ||
      ref.values.size() != m) {
    throw ConfigError("curves: shape mismatch");
  }
  if (n == 0) throw ConfigError("curves: empty test set");
  const Vector base = f(instances);
  if (((base.array() < 0.0) || (base.array() > 1.0) || !base.array().isFinite())
          .any()) {
    throw ConfigError("curves: target output is not a probability");
  }

  // Rows ordered as (instance, k) for exclusion then inclusion.
  const Eigen::Index points = static_cast<Eigen::Index>(m) + 1;
  Matrix batch(2 * n * points, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool positive_class = base(i) >= 0.5;
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double sa = positive_class ? importance(i, a) : -importance(i, a);
      const double sb = positive_class ? importance(i, b) : -importance(i, b);
      return sa > sb;
    });
    Vector excl = instances.row(i).transpose();
    Vector incl = ref.values;
    for (Eigen::Index k = 0; k < points; ++k) {
      if (k > 0) {
        excl(order[k - 1]) = ref.values(order[k - 1]);
        incl(order[k - 1]) = instances(i, order[k - 1]);
      }
      batch.row(i * points + k) = excl.transpose();
      batch.row(n * points + i * points + k) = incl.transpose();
    }
  }
  const Vector probs = f(batch);
  if (((probs.array() < 0.0) || (probs.array() > 1.0) ||
       !probs.array().isFinite())
          .any()) {
    throw ConfigError("curves: target output is not a probability");
  }

  Matrix excl_scores(n, points);
  Matrix incl_scores(n, points);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool positive_class = base(i) >= 0.5;
    for (Eigen::Index k = 0; k < points; ++k) {
      for (int dir = 0; dir < 2; ++dir) {
        const double p = probs(dir * n * points + i * points + k);
        double score;
        if (options.score == CurveScore::kTop1Accuracy) {
          score = ((p >= 0.5) == positive_class) ? 1.0 : 0.0;
        } else {
          score = LogOdds(positive_class ? p : 1.0 - p);
        }
        (dir == 0 ? excl_scores : incl_scores)(i, k) = score;
      }
    }
  }
  CurveResult result;
  result.exclusion = Aggregate(excl_scores);
  result.inclusion = Aggregate(incl_scores);
  result.exclusion_bootstrap = Bootstrap(excl_scores, options);
  result.inclusion_bootstrap = Bootstrap(incl_scores, options);
  return result;
}

void WriteCurveCsv(const CurveResult& curves, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path);
  out.precision(17);
  out << "curve,k,mean,std\n";
  for (size_t k = 0; k < curves.exclusion.mean.size(); ++k) {
    out << "exclusion," << k << ',' << curves.exclusion.mean[k] << ','
        << curves.exclusion.std[k] << '\n';
  }
  for (size_t k = 0; k < curves.inclusion.mean.size(); ++k) {
    out << "inclusion," << k << ',' << curves.inclusion.mean[k] << ','
        << curves.inclusion.std[k] << '\n';
  }
}

nlohmann::ordered_json BoundDiagnostics::ToJson() const {
  nlohmann::ordered_json out;
  out["lipschitz_f"] = lipschitz_f;
  out["lipschitz_head"] = lipschitz_head;
  out["epsilon"] = epsilon;
  out["holds_fraction"] = holds_fraction;
  out["gamma"] = gamma;
  out["lhs"] = lhs;
  out["rhs"] = rhs;
  return out;
}

BoundDiagnostics ExplanationErrorBound(const BoundInputs& inputs,
                                       const Matrix& train_x,
                                       const Matrix& train_labels,
                                       const Matrix& test_x,
                                       const Matrix& test_labels,
                                       const ReferenceVector& ref,
                                       const AugmentConfig& augment) {
  if (test_labels.rows() != test_x.rows() ||
      test_labels.cols() != test_x.cols()) {
    throw ConfigError("bound diagnostics: missing exact labels for test split");
  }
  if (train_labels.rows() != train_x.rows()) {
    throw ConfigError("bound diagnostics: missing exact labels for train split");
  }
  BoundDiagnostics d;
  d.lipschitz_f = inputs.lipschitz_f;
  d.lipschitz_head = inputs.lipschitz_head;
  if (train_x.rows() > 0) {
    const Matrix train_pred = inputs.head(inputs.encoder(train_x));
    d.epsilon = (train_pred - train_labels).rowwise().norm().maxCoeff();
  }
  const Eigen::Index n = test_x.rows();
  const int m = static_cast<int>(test_x.cols());
  if (n == 0) return d;

  std::vector<uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  const PositiveBatch pos =
      BuildPositiveBatch(inputs.target, test_x, ref, augment, ids);
  const Matrix h_x = inputs.encoder(test_x);
  const Matrix h_pos = inputs.encoder(pos.positives);
  const Matrix pred = inputs.head(h_x);
  int holds = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double gamma = inputs.lipschitz_f * test_x.row(k).norm();
    const double lhs = (test_labels.row(k) - pred.row(k)).norm();
    const double rhs = CompactAlignmentRhs(pos.gaps(k), gamma, m) + d.epsilon +
                       inputs.lipschitz_head * (h_pos.row(k) - h_x.row(k)).norm();
    d.gamma.push_back(gamma);
    d.lhs.push_back(lhs);
    d.rhs.push_back(rhs);
    if (lhs <= rhs + 1e-9) ++holds;
  }
  d.holds_fraction = static_cast<double>(holds) / static_cast<double>(n);
  return d;
}

}  // namespace rtxlab
