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

#include "rtxlab/augment.h"

#include <cmath>
#include <random>

#include "rtxlab/oracle.h"
#include "rtxlab/rng.h"

namespace rtxlab {
namespace {

constexpr double kAllOnesLambda = 1.0 - 1e-12;

void FillMasked(const Vector& x, const Vector& ref, double lambda, Rng& rng,
                Matrix::RowXpr out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool keep_all = lambda >= kAllOnesLambda;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool keep = keep_all || unit(rng) < lambda;
    out(i) = keep ? x(i) : ref(i);
  }
}

}  // namespace

std::string SelectorName(PositiveSelector selector) {
  switch (selector) {
    case PositiveSelector::kCompact:
      return "compact";
    case PositiveSelector::kRandom:
      return "random";
    case PositiveSelector::kMaxAlignment:
      return "max-alignment";
  }
  return "compact";
}

PositiveSelector ParseSelector(const std::string& name) {
  if (name == "compact") return PositiveSelector::kCompact;
  if (name == "random") return PositiveSelector::kRandom;
  if (name == "max-alignment") return PositiveSelector::kMaxAlignment;
  throw ConfigError("unknown positive selector: " + name);
}

void AugmentConfig::Validate() const {
  if (m < 1) throw ConfigError("augment: m must be >= 1");
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ConfigError("augment: lambda must lie in (0, 1)");
  }
}

std::optional<std::string> AugmentConfig::Advisory(int num_features) const {
  if (num_features < 62 &&
      static_cast<double>(m) > std::ldexp(1.0, num_features) / 4.0) {
    return "synthetic positive set size m = " + std::to_string(m) +
           " is not small relative to 2^M = 2^" + std::to_string(num_features) +
           "; positives may be near-copies of the anchor";
  }
  return std::nullopt;
}

Matrix SynthPositiveSet(const Vector& x, const ReferenceVector& ref,
                        const AugmentConfig& config) {
  config.Validate();
  if (ref.size() != x.size()) throw ConfigError("augment: dimension mismatch");
  Rng rng(config.seed);
  Matrix out(config.m, x.size());
  for (int k = 0; k < config.m; ++k) {
    FillMasked(x, ref.values, config.lambda, rng, out.row(k));
  }
  return out;
}

int SelectByGap(const Vector& gaps, PositiveSelector selector, uint64_t seed) {
  if (gaps.size() < 1) throw ConfigError("select_positive: no candidates");
  if (!gaps.allFinite()) {
    throw RuntimeError("select_positive: non-finite model output on a candidate");
  }
  int best = 0;
  switch (selector) {
    case PositiveSelector::kCompact:
      for (Eigen::Index k = 1; k < gaps.size(); ++k) {
        if (gaps(k) < gaps(best)) best = static_cast<int>(k);
      }
      break;
    case PositiveSelector::kMaxAlignment:
      for (Eigen::Index k = 1; k < gaps.size(); ++k) {
        if (gaps(k) > gaps(best)) best = static_cast<int>(k);
      }
      break;
    case PositiveSelector::kRandom: {
      Rng rng(seed);
      std::uniform_int_distribution<int> pick(0, static_cast<int>(gaps.size()) - 1);
      best = pick(rng);
      break;
    }
  }
  return best;
}

PositivePair SelectPositive(const ModelFn& f, const Vector& x,
                            const Matrix& candidates, PositiveSelector selector,
                            uint64_t seed) {
  if (candidates.rows() < 1) throw ConfigError("select_positive: no candidates");
  if (candidates.cols() != x.size()) {
    throw ConfigError("select_positive: dimension mismatch");
  }
  Matrix batch(candidates.rows() + 1, x.size());
  batch.row(0) = x.transpose();
  batch.bottomRows(candidates.rows()) = candidates;
  const Vector out = f(batch);
  if (out.size() != batch.rows() || !out.allFinite()) {
    throw RuntimeError("select_positive: non-finite model output on a candidate");
  }
  const Vector gaps = (out.tail(candidates.rows()).array() - out(0)).abs();
  PositivePair pair;
  pair.candidate_index = SelectByGap(gaps, selector, seed);
  pair.positive = candidates.row(pair.candidate_index).transpose();
  pair.prediction_gap = gaps(pair.candidate_index);
  return pair;
}

PositiveBatch BuildPositiveBatch(const ModelFn& f, const Matrix& anchors,
                                 const ReferenceVector& ref,
                                 const AugmentConfig& config,
                                 const std::vector<uint64_t>& stream_ids) {
  config.Validate();
  const Eigen::Index n = anchors.rows();
  const Eigen::Index dim = anchors.cols();
  if (static_cast<Eigen::Index>(stream_ids.size()) != n) {
    throw ConfigError("positive batch: one stream id per anchor required");
  }
  if (ref.size() != dim) throw ConfigError("positive batch: dimension mismatch");
  const int m = config.m;
  // Layout: [anchors; candidates of anchor 0; candidates of anchor 1; ...].
  Matrix batch(n + n * m, dim);
  batch.topRows(n) = anchors;
  for (Eigen::Index a = 0; a < n; ++a) {
    Rng rng(SubSeed(config.seed, "positive-masks", stream_ids[a]));
    const Vector x = anchors.row(a).transpose();
    for (int k = 0; k < m; ++k) {
      FillMasked(x, ref.values, config.lambda, rng, batch.row(n + a * m + k));
    }
  }
  const Vector out = f(batch);
  if (out.size() != batch.rows() || !out.allFinite()) {
    throw RuntimeError("positive batch: non-finite model output on a candidate");
  }
  PositiveBatch result;
  result.positives.resize(n, dim);
  result.gaps.resize(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const Vector gaps = (out.segment(n + a * m, m).array() - out(a)).abs();
    const int k = SelectByGap(
        gaps, config.selector,
        SubSeed(config.seed, "positive-select", stream_ids[a]));
    result.positives.row(a) = batch.row(n + a * m + k);
    result.gaps(a) = gaps(k);
  }
  return result;
}

std::string BoundStatusName(BoundStatus status) {
  switch (status) {
    case BoundStatus::kHolds:
      return "holds";
    case BoundStatus::kViolated:
      return "violated";
    case BoundStatus::kAssumptionFailed:
      return "assumption-failed";
  }
  return "holds";
}

double CompactAlignmentRhs(double prediction_gap, double gamma,
                           int num_features) {
  return (1.0 + std::sqrt(2.0) * gamma) * prediction_gap +
         std::sqrt(static_cast<double>(num_features)) * gamma;
}

BoundCheck CompactAlignmentBound(const ModelFn& f, const Vector& x,
                                 const Vector& x_tilde,
                                 const ReferenceVector& ref,
                                 double lipschitz_f) {
  if (x_tilde.size() != x.size() || ref.size() != x.size()) {
    throw ConfigError("bound check: dimension mismatch");
  }
  if (lipschitz_f < 0.0) throw ConfigError("bound check: K_f must be >= 0");
  const AttributionVector phi_x = ExactAttribution(f, x, ref, Weighting::kUniform);
  const AttributionVector phi_t =
      ExactAttribution(f, x_tilde, ref, Weighting::kUniform);
  Matrix pair(2, x.size());
  pair.row(0) = x.transpose();
  pair.row(1) = x_tilde.transpose();
  const Vector out = f(pair);

  BoundCheck check;
  check.gamma = lipschitz_f * x.norm();
  check.lhs = (phi_x.scores - phi_t.scores).norm();
  check.rhs = CompactAlignmentRhs(std::abs(out(0) - out(1)), check.gamma,
                                  static_cast<int>(x.size()));
  if (phi_t.scores.minCoeff() < -1e-12) {
    check.status = BoundStatus::kAssumptionFailed;
  } else {
    check.status = check.lhs <= check.rhs + 1e-9 ? BoundStatus::kHolds
                                                 : BoundStatus::kViolated;
  }
  return check;
}

}  // namespace rtxlab
