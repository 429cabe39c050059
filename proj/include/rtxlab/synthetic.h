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

#ifndef RTXLAB_SYNTHETIC_H_
#define RTXLAB_SYNTHETIC_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rtxlab/common.h"
#include "rtxlab/data.h"
#include "rtxlab/net.h"
#include "rtxlab/oracle.h"

namespace rtxlab {

enum class SyntheticKind { kLinear, kPairwiseInteraction, kMlpRandom };
enum class OutputLink { kIdentity, kSigmoid };

std::string SyntheticKindName(SyntheticKind kind);
SyntheticKind ParseSyntheticKind(const std::string& name);
std::string OutputLinkName(OutputLink link);
OutputLink ParseOutputLink(const std::string& name);

// A target network with an optional sigmoid on its single output.
struct NetTarget {
  Mlp net;
  OutputLink link = OutputLink::kIdentity;

  Vector Predict(const Matrix& batch) const;
  ModelFn AsModelFn() const;
  // Upper bound on the Lipschitz constant of Predict.
  double LipschitzBound() const;
};

struct PairTerm {
  int i = 0;
  int j = 0;
  double coef = 0.0;
};

// Test-oracle scaffolding: a known target model over N(0, 1) features.
//   linear:               f(x) = w.x + b
//   pairwise-interaction: f(x) = w.x + sum c_ij x_i x_j + b
//   mlp-random:           f(x) = link(net(x)), net drawn from model_seed
struct SyntheticModelSpec {
  SyntheticKind kind = SyntheticKind::kLinear;
  int num_features = 0;
  Vector weights;
  std::vector<PairTerm> pairs;
  double bias = 0.0;
  std::vector<int> hidden;
  uint64_t model_seed = 0;
  // mlp-random only: when positive, the first-layer weights of features at
  // index >= active_features are multiplied by inactive_scale (0 removes
  // them from the model).
  int active_features = 0;
  double inactive_scale = 0.0;
  OutputLink link = OutputLink::kIdentity;

  void Validate() const;
};

// Exact attribution of the synthetic model at x against ref.
using AttributionClosure =
    std::function<AttributionVector(const Vector&, const ReferenceVector&,
                                    Weighting)>;

struct SyntheticBenchmark {
  TabularDataset data;
  ModelFn model;
  AttributionClosure exact;
  // Set for the mlp-random kind.
  std::optional<NetTarget> target;
};

// The model and its closure only; no data is drawn.
SyntheticBenchmark MakeSyntheticModel(const SyntheticModelSpec& spec);

// Draws n instances from N(0, 1)^M with `seed`. The closure is analytic for
// linear and pairwise kinds and brute-force enumeration for mlp-random.
SyntheticBenchmark GenerateSynthetic(const SyntheticModelSpec& spec, int n,
                                     uint64_t seed,
                                     SplitTag split = SplitTag::kTrain);

std::vector<std::string> DefaultFeatureNames(int num_features);

}  // namespace rtxlab

#endif  // RTXLAB_SYNTHETIC_H_
