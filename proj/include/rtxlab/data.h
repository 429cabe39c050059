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

#ifndef RTXLAB_DATA_H_
#define RTXLAB_DATA_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rtxlab/common.h"

namespace rtxlab {

enum class SplitTag { kTrain, kValid, kTest };

std::string SplitTagName(SplitTag tag);
SplitTag ParseSplitTag(const std::string& name);

// Numeric feature matrix. Every row holds exactly M finite values.
struct TabularDataset {
  Matrix features;
  std::vector<std::string> feature_names;
  SplitTag split = SplitTag::kTrain;
  std::optional<Vector> labels;

  int num_rows() const { return static_cast<int>(features.rows()); }
  int num_features() const { return static_cast<int>(features.cols()); }
  Vector row(int i) const { return features.row(i).transpose(); }

  // Throws ConfigError when the invariants above are violated.
  void Validate() const;
};

enum class ReferencePolicy { kMean, kZeros, kCustom };

std::string ReferencePolicyName(ReferencePolicy policy);
ReferencePolicy ParseReferencePolicy(const std::string& name);

// Stand-in values substituted for masked-out features.
struct ReferenceVector {
  Vector values;
  ReferencePolicy policy = ReferencePolicy::kMean;

  int size() const { return static_cast<int>(values.size()); }
};

// Binary coalition indicator: bit i is 1 when feature i is kept.
class MaskVector {
 public:
  MaskVector() = default;
  explicit MaskVector(std::vector<uint8_t> bits);
  static MaskVector FromBits(uint64_t bits, int num_features);
  static MaskVector AllOnes(int num_features);

  int size() const { return static_cast<int>(bits_.size()); }
  bool operator[](int i) const { return bits_[i] != 0; }
  const std::vector<uint8_t>& bits() const { return bits_; }
  int count() const;

  friend bool operator==(const MaskVector&, const MaskVector&) = default;

 private:
  std::vector<uint8_t> bits_;
};

// Reads a comma-separated file whose header equals `schema` (optionally
// followed by `label_column`). Errors name the offending row and column.
TabularDataset LoadCsv(const std::string& path,
                       const std::vector<std::string>& schema,
                       SplitTag split = SplitTag::kTrain,
                       const std::optional<std::string>& label_column = {});

void SaveCsv(const TabularDataset& dataset, const std::string& path);

ReferenceVector ComputeReference(const TabularDataset& dataset,
                                 ReferencePolicy policy);
ReferenceVector CustomReference(Vector values);

// x_S = S * x + (1 - S) * ref.
Vector ApplyMask(const Vector& x, const MaskVector& mask,
                 const ReferenceVector& ref);

// Same, with the mask given as the low `x.size()` bits of `bits`. Writes into
// `out`, which may be a row of a larger batch.
template <typename Out>
void ApplyMaskBits(const Vector& x, uint64_t bits, const Vector& ref,
                   Out&& out) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) = ((bits >> i) & 1ULL) ? x(i) : ref(i);
  }
}

}  // namespace rtxlab

#endif  // RTXLAB_DATA_H_
