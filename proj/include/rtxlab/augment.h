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

#ifndef RTXLAB_AUGMENT_H_
#define RTXLAB_AUGMENT_H_

#include <cstdint>
#include <optional>
#include <string>

#include "rtxlab/common.h"
#include "rtxlab/data.h"

namespace rtxlab {

enum class PositiveSelector { kCompact, kRandom, kMaxAlignment };

std::string SelectorName(PositiveSelector selector);
PositiveSelector ParseSelector(const std::string& name);

struct AugmentConfig {
  int m = 30;            // synthetic positive set size
  double lambda = 0.5;   // per-feature keep probability
  PositiveSelector selector = PositiveSelector::kCompact;
  uint64_t seed = 0;

  void Validate() const;
  // Non-empty when m is not small relative to 2^M (m > 2^M / 4).
  std::optional<std::string> Advisory(int num_features) const;
};

struct PositivePair {
  int anchor_index = 0;
  int candidate_index = 0;
  Vector positive;
  double prediction_gap = 0.0;  // |f(x) - f(positive)|
};

// m perturbations of x, each keeping feature i with probability lambda and
// replacing it by ref_i otherwise. Rows of the result are the candidates.
// A lambda within 1e-12 of 1 keeps every feature.
Matrix SynthPositiveSet(const Vector& x, const ReferenceVector& ref,
                        const AugmentConfig& config);

// compact: argmin |f(x) - f(c)|; max-alignment: argmax; random: uniform pick
// driven by `seed`. Ties go to the lowest candidate index.
PositivePair SelectPositive(const ModelFn& f, const Vector& x,
                            const Matrix& candidates, PositiveSelector selector,
                            uint64_t seed = 0);

// Index-level selection given precomputed gaps.
int SelectByGap(const Vector& gaps, PositiveSelector selector, uint64_t seed);

// Positives for a batch of anchors, all candidates evaluated in one model
// call. `stream_ids[i]` keys the mask and selection streams of anchor i, so
// the same anchor in the same epoch sees the same candidates in every arm.
struct PositiveBatch {
  Matrix positives;
  Vector gaps;
};
PositiveBatch BuildPositiveBatch(const ModelFn& f, const Matrix& anchors,
                                 const ReferenceVector& ref,
                                 const AugmentConfig& config,
                                 const std::vector<uint64_t>& stream_ids);

enum class BoundStatus { kHolds, kViolated, kAssumptionFailed };
std::string BoundStatusName(BoundStatus status);

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double gamma = 0.0;
  BoundStatus status = BoundStatus::kHolds;
  bool holds() const { return status == BoundStatus::kHolds; }
};

// Compares ||Phi(x) - Phi(x_tilde)|| against
// (1 + sqrt(2) g)|f(x) - f(x_tilde)| + sqrt(M) g with g = K_f ||x||, using
// uniform-weighting exact attributions. Requires min_i Phi_i(x_tilde) >= 0;
// otherwise the status is kAssumptionFailed.
BoundCheck CompactAlignmentBound(const ModelFn& f, const Vector& x,
                                 const Vector& x_tilde,
                                 const ReferenceVector& ref,
                                 double lipschitz_f);

// Same bound from precomputed quantities.
double CompactAlignmentRhs(double prediction_gap, double gamma,
                           int num_features);

}  // namespace rtxlab

#endif  // RTXLAB_AUGMENT_H_
