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

#ifndef RTXLAB_ORACLE_H_
#define RTXLAB_ORACLE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "rtxlab/common.h"
#include "rtxlab/data.h"

namespace rtxlab {

// Subset weighting of the marginal-contribution average.
//   kShapley: |S|!(M-|S|-1)!/M! per subset S not containing i.
//   kUniform: 1/2^(M-1) per subset (Banzhaf-style).
enum class Weighting { kShapley, kUniform };

enum class AttributionSource { kExactShapley, kExactUniform, kPs, kAps, kKs,
                               kModelHead };

std::string WeightingName(Weighting weighting);
Weighting ParseWeighting(const std::string& name);
std::string SourceName(AttributionSource source);
AttributionSource ParseSource(const std::string& name);

struct AttributionVector {
  Vector scores;
  AttributionSource source = AttributionSource::kExactShapley;
  // Number of model evaluations spent on this vector.
  int64_t budget = 0;

  int size() const { return static_cast<int>(scores.size()); }
  double sum() const { return scores.sum(); }
};

// Largest feature count accepted by exact enumeration.
inline constexpr int kMaxExactFeatures = 24;

struct OracleConfig {
  AttributionSource source = AttributionSource::kExactShapley;
  Weighting weighting = Weighting::kShapley;
  // Permutations for ps/aps, sampled subsets for ks (0 = enumerate all).
  // Ignored by exact sources.
  int64_t budget = 0;
  uint64_t seed = 0;

  // Throws ConfigError when the config cannot be run on M features.
  void Validate(int num_features) const;
};

// Exact attribution by enumerating all 2^M coalitions. Each coalition value
// is evaluated once.
AttributionVector ExactAttribution(const ModelFn& f, const Vector& x,
                                   const ReferenceVector& ref,
                                   Weighting weighting = Weighting::kShapley);

// Average of marginal contributions along `budget` random feature orderings.
AttributionVector PermutationSampling(const ModelFn& f, const Vector& x,
                                      const ReferenceVector& ref,
                                      int64_t budget, uint64_t seed);

// Same estimator, but each drawn ordering is paired with its reversal.
// `budget` counts orderings and must be even.
AttributionVector AntitheticalPermutationSampling(const ModelFn& f,
                                                  const Vector& x,
                                                  const ReferenceVector& ref,
                                                  int64_t budget,
                                                  uint64_t seed);

// Mean marginal-contribution vector over the given explicit orderings.
Vector OrderingAverage(const ModelFn& f, const Vector& x,
                       const ReferenceVector& ref,
                       const std::vector<std::vector<int>>& orderings);

struct KernelShapOptions {
  // Sample each subset together with its complement.
  bool paired = true;
};

// Shapley-kernel weighted least squares with the efficiency constraint
// eliminated. `budget` is the number of sampled coalitions (>= M + 2), or 0
// to enumerate every proper non-empty coalition with exact kernel weights.
AttributionVector KernelShap(const ModelFn& f, const Vector& x,
                             const ReferenceVector& ref, int64_t budget,
                             uint64_t seed, KernelShapOptions options = {});

// Shapley kernel weight of one coalition of size s out of M.
double ShapleyKernelWeight(int num_features, int subset_size);

// phi_i + (target_sum - sum_j phi_j) / M.
AttributionVector EfficientNormalize(const AttributionVector& att,
                                     double target_sum);
// Row-wise version on an n x M matrix.
Matrix EfficientNormalizeRows(const Matrix& scores, const Vector& target_sums);

// Dispatches on config.source.
AttributionVector ComputeAttribution(const ModelFn& f, const Vector& x,
                                     const ReferenceVector& ref,
                                     const OracleConfig& config);

// One row of attributions per dataset row. Sampled sources use a per-row
// seed derived from config.seed.
Matrix ComputeAttributions(const ModelFn& f, const Matrix& instances,
                           const ReferenceVector& ref,
                           const OracleConfig& config);

// Seed used for instance `index` by the batch helpers above.
uint64_t InstanceSeed(uint64_t root_seed, int64_t index);

// ---- Label cache (JSON lines) ------------------------------------------

struct LabelRecord {
  int64_t instance_index = 0;
  Vector scores;
  AttributionSource source = AttributionSource::kExactShapley;
  int64_t budget = 0;
  uint64_t seed = 0;
};

// Computes one attribution per dataset row and writes
//   {"instance_index":i,"scores":[...],"source":"...","budget":b,"seed":s}
// per line. Output is a pure function of the inputs.
std::vector<LabelRecord> BuildLabelCache(const ModelFn& f,
                                         const TabularDataset& dataset,
                                         const ReferenceVector& ref,
                                         const OracleConfig& config,
                                         const std::string& path);

void WriteLabelCache(const std::vector<LabelRecord>& records,
                     const std::string& path);
std::vector<LabelRecord> LoadLabelCache(const std::string& path);

// Stacks records into an n x M matrix ordered by instance index. Throws when
// an index is missing or the width differs from `num_features`.
Matrix LabelMatrix(const std::vector<LabelRecord>& records, int num_rows,
                   int num_features);

}  // namespace rtxlab

#endif  // RTXLAB_ORACLE_H_
