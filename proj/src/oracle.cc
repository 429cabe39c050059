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

#include "rtxlab/oracle.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "rtxlab/rng.h"

namespace rtxlab {
namespace {

// Rows evaluated per model call when the total would be large.
constexpr int64_t kChunkRows = 1 << 15;

void CheckInstance(const Vector& x, const ReferenceVector& ref) {
  if (x.size() < 1) throw ConfigError("instance has no features");
  if (ref.size() != x.size()) {
    throw ConfigError("reference and instance dimensions differ");
  }
}

Vector Evaluate(const ModelFn& f, const Matrix& batch) {
  Vector out = f(batch);
  if (out.size() != batch.rows()) {
    throw RuntimeError("model returned " + std::to_string(out.size()) +
                       " outputs for " + std::to_string(batch.rows()) +
                       " rows");
  }
  if (!out.allFinite()) throw RuntimeError("model produced a non-finite output");
  return out;
}

// Coalition values v(S) for the given bit masks.
Vector CoalitionValues(const ModelFn& f, const Vector& x, const Vector& ref,
                       const std::vector<uint64_t>& masks) {
  const int64_t n = static_cast<int64_t>(masks.size());
  Vector values(n);
  Matrix batch;
  for (int64_t start = 0; start < n; start += kChunkRows) {
    const int64_t rows = std::min(kChunkRows, n - start);
    batch.resize(rows, x.size());
    for (int64_t r = 0; r < rows; ++r) {
      ApplyMaskBits(x, masks[start + r], ref, batch.row(r));
    }
    values.segment(start, rows) = Evaluate(f, batch);
  }
  return values;
}

double LogChoose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Accumulates marginal contributions along `orderings` into a sum vector.
// The empty and full coalitions are shared by every ordering.
Vector SumOrderingMarginals(const ModelFn& f, const Vector& x,
                            const Vector& ref,
                            const std::vector<std::vector<int>>& orderings) {
  const int m = static_cast<int>(x.size());
  Vector sums = Vector::Zero(m);
  const Vector ends = CoalitionValues(f, x, ref, {0ULL, (1ULL << m) - 1ULL});
  const double empty_value = ends(0);
  const double full_value = ends(1);
  const int64_t per_ordering = m - 1;
  const int64_t chunk = std::max<int64_t>(1, kChunkRows / std::max(1, m));
  Matrix batch;
  for (size_t start = 0; start < orderings.size(); start += chunk) {
    const size_t count = std::min<size_t>(chunk, orderings.size() - start);
    batch.resize(static_cast<Eigen::Index>(count * per_ordering), m);
    for (size_t p = 0; p < count; ++p) {
      const std::vector<int>& order = orderings[start + p];
      uint64_t bits = 0;
      for (int k = 0; k < per_ordering; ++k) {
        bits |= 1ULL << order[k];
        ApplyMaskBits(x, bits, ref, batch.row(p * per_ordering + k));
      }
    }
    const Vector values =
        per_ordering > 0 ? Evaluate(f, batch) : Vector(Vector::Zero(0));
    for (size_t p = 0; p < count; ++p) {
      const std::vector<int>& order = orderings[start + p];
      double previous = empty_value;
      for (int k = 0; k < m; ++k) {
        const double current =
            (k + 1 == m) ? full_value : values(p * per_ordering + k);
        sums(order[k]) += current - previous;
        previous = current;
      }
    }
  }
  return sums;
}

void CheckOrdering(const std::vector<int>& order, int m) {
  if (static_cast<int>(order.size()) != m) {
    throw ConfigError("ordering length differs from feature count");
  }
  std::vector<bool> seen(m, false);
  for (int i : order) {
    if (i < 0 || i >= m || seen[i]) throw ConfigError("ordering is not a permutation");
    seen[i] = true;
  }
}

uint64_t RandomSubsetOfSize(int m, int size, Rng& rng) {
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  uint64_t bits = 0;
  for (int k = 0; k < size; ++k) {
    std::uniform_int_distribution<int> pick(k, m - 1);
    std::swap(idx[k], idx[pick(rng)]);
    bits |= 1ULL << idx[k];
  }
  return bits;
}

struct KsSolveResult {
  bool ok = false;
  Vector phi;
};

// Weighted least squares on interior coalitions with sum(phi) = total
// imposed by eliminating the last feature.
KsSolveResult SolveKernelRegression(const std::vector<uint64_t>& masks,
                                    const Vector& weights,
                                    const Vector& values, double empty_value,
                                    double total, int m) {
  const int k = m - 1;
  Matrix normal = Matrix::Zero(k, k);
  Vector rhs = Vector::Zero(k);
  Vector row(k);
  for (size_t s = 0; s < masks.size(); ++s) {
    const uint64_t bits = masks[s];
    const double last = static_cast<double>((bits >> (m - 1)) & 1ULL);
    for (int i = 0; i < k; ++i) {
      row(i) = static_cast<double>((bits >> i) & 1ULL) - last;
    }
    const double target = values(s) - empty_value - last * total;
    normal.selfadjointView<Eigen::Lower>().rankUpdate(row, weights(s));
    rhs += weights(s) * target * row;
  }
  normal = normal.selfadjointView<Eigen::Lower>();
  Eigen::ColPivHouseholderQR<Matrix> qr(normal);
  qr.setThreshold(1e-10);
  KsSolveResult result;
  if (qr.rank() < k) return result;
  const Vector head = qr.solve(rhs);
  result.phi.resize(m);
  result.phi.head(k) = head;
  result.phi(m - 1) = total - head.sum();
  result.ok = result.phi.allFinite();
  return result;
}

}  // namespace

std::string WeightingName(Weighting weighting) {
  return weighting == Weighting::kShapley ? "shapley" : "uniform";
}

Weighting ParseWeighting(const std::string& name) {
  if (name == "shapley") return Weighting::kShapley;
  if (name == "uniform") return Weighting::kUniform;
  throw ConfigError("unknown weighting: " + name);
}

std::string SourceName(AttributionSource source) {
  switch (source) {
    case AttributionSource::kExactShapley:
      return "exact-shapley";
    case AttributionSource::kExactUniform:
      return "exact-uniform";
    case AttributionSource::kPs:
      return "ps";
    case AttributionSource::kAps:
      return "aps";
    case AttributionSource::kKs:
      return "ks";
    case AttributionSource::kModelHead:
      return "model-head";
  }
  return "exact-shapley";
}

AttributionSource ParseSource(const std::string& name) {
  if (name == "exact-shapley" || name == "exact") {
    return AttributionSource::kExactShapley;
  }
  if (name == "exact-uniform") return AttributionSource::kExactUniform;
  if (name == "ps") return AttributionSource::kPs;
  if (name == "aps") return AttributionSource::kAps;
  if (name == "ks") return AttributionSource::kKs;
  if (name == "model-head") return AttributionSource::kModelHead;
  throw ConfigError("unknown attribution source: " + name);
}

void OracleConfig::Validate(int num_features) const {
  if (num_features < 1) throw ConfigError("oracle: need at least one feature");
  switch (source) {
    case AttributionSource::kExactShapley:
    case AttributionSource::kExactUniform:
      if (num_features > kMaxExactFeatures) {
        throw ConfigError("exact enumeration needs M <= " +
                          std::to_string(kMaxExactFeatures) + ", got M = " +
                          std::to_string(num_features));
      }
      break;
    case AttributionSource::kPs:
      if (budget < 1) throw ConfigError("ps budget must be >= 1");
      break;
    case AttributionSource::kAps:
      if (budget < 2 || budget % 2 != 0) {
        throw ConfigError("aps budget must be a positive even number");
      }
      break;
    case AttributionSource::kKs:
      if (budget == 0) {
        if (num_features > kMaxExactFeatures) {
          throw ConfigError("ks full enumeration needs M <= " +
                            std::to_string(kMaxExactFeatures));
        }
      } else if (budget < num_features + 2) {
        throw ConfigError("ks budget must be >= M + 2 (or 0 to enumerate)");
      }
      break;
    case AttributionSource::kModelHead:
      throw ConfigError("model-head is not an oracle source");
  }
}

AttributionVector ExactAttribution(const ModelFn& f, const Vector& x,
                                   const ReferenceVector& ref,
                                   Weighting weighting) {
  CheckInstance(x, ref);
  const int m = static_cast<int>(x.size());
  if (m > kMaxExactFeatures) {
    throw ConfigError("exact enumeration needs M <= " +
                      std::to_string(kMaxExactFeatures));
  }
  const uint64_t num_masks = 1ULL << m;
  std::vector<uint64_t> masks(num_masks);
  std::iota(masks.begin(), masks.end(), 0ULL);
  const Vector values = CoalitionValues(f, x, ref.values, masks);

  std::vector<double> weight_by_size(m);
  for (int s = 0; s < m; ++s) {
    weight_by_size[s] =
        weighting == Weighting::kShapley
            ? std::exp(-std::log(static_cast<double>(m)) - LogChoose(m - 1, s))
            : std::ldexp(1.0, -(m - 1));
  }

  Vector phi = Vector::Zero(m);
  for (uint64_t bits = 0; bits < num_masks; ++bits) {
    const int size = std::popcount(bits);
    if (size == m) continue;
    const double w = weight_by_size[size];
    for (int i = 0; i < m; ++i) {
      const uint64_t bit = 1ULL << i;
      if (bits & bit) continue;
      phi(i) += w * (values(bits | bit) - values(bits));
    }
  }
  return AttributionVector{std::move(phi),
                           weighting == Weighting::kShapley
                               ? AttributionSource::kExactShapley
                               : AttributionSource::kExactUniform,
                           static_cast<int64_t>(num_masks)};
}

Vector OrderingAverage(const ModelFn& f, const Vector& x,
                       const ReferenceVector& ref,
                       const std::vector<std::vector<int>>& orderings) {
  CheckInstance(x, ref);
  if (orderings.empty()) throw ConfigError("no orderings given");
  for (const auto& order : orderings) {
    CheckOrdering(order, static_cast<int>(x.size()));
  }
  return SumOrderingMarginals(f, x, ref.values, orderings) /
         static_cast<double>(orderings.size());
}

AttributionVector PermutationSampling(const ModelFn& f, const Vector& x,
                                      const ReferenceVector& ref,
                                      int64_t budget, uint64_t seed) {
  CheckInstance(x, ref);
  if (budget < 1) throw ConfigError("permutation sampling needs budget >= 1");
  const int m = static_cast<int>(x.size());
  Rng rng(seed);
  std::vector<std::vector<int>> orderings;
  orderings.reserve(budget);
  for (int64_t p = 0; p < budget; ++p) {
    orderings.push_back(RandomPermutation(m, rng));
  }
  Vector phi = SumOrderingMarginals(f, x, ref.values, orderings) /
               static_cast<double>(budget);
  return AttributionVector{std::move(phi), AttributionSource::kPs,
                           2 + budget * (m - 1)};
}

AttributionVector AntitheticalPermutationSampling(const ModelFn& f,
                                                  const Vector& x,
                                                  const ReferenceVector& ref,
                                                  int64_t budget,
                                                  uint64_t seed) {
  CheckInstance(x, ref);
  if (budget < 2 || budget % 2 != 0) {
    throw ConfigError("antithetical sampling needs an even budget >= 2");
  }
  const int m = static_cast<int>(x.size());
  Rng rng(seed);
  std::vector<std::vector<int>> orderings;
  orderings.reserve(budget);
  for (int64_t p = 0; p < budget / 2; ++p) {
    std::vector<int> order = RandomPermutation(m, rng);
    orderings.push_back(order);
    std::reverse(order.begin(), order.end());
    orderings.push_back(std::move(order));
  }
  Vector phi = SumOrderingMarginals(f, x, ref.values, orderings) /
               static_cast<double>(budget);
  return AttributionVector{std::move(phi), AttributionSource::kAps,
                           2 + budget * (m - 1)};
}

double ShapleyKernelWeight(int num_features, int subset_size) {
  const int m = num_features;
  const int s = subset_size;
  if (s <= 0 || s >= m) return 0.0;
  return (m - 1.0) /
         (std::exp(LogChoose(m, s)) * static_cast<double>(s) * (m - s));
}

AttributionVector KernelShap(const ModelFn& f, const Vector& x,
                             const ReferenceVector& ref, int64_t budget,
                             uint64_t seed, KernelShapOptions options) {
  CheckInstance(x, ref);
  const int m = static_cast<int>(x.size());
  const uint64_t full = (m >= 64) ? ~0ULL : ((1ULL << m) - 1ULL);
  const Vector ends = CoalitionValues(f, x, ref.values, {0ULL, full});
  const double empty_value = ends(0);
  const double total = ends(1) - ends(0);
  if (m == 1) {
    return AttributionVector{Vector::Constant(1, total), AttributionSource::kKs,
                             2};
  }

  if (budget == 0) {
    if (m > kMaxExactFeatures) {
      throw ConfigError("kernel_shap enumeration needs M <= " +
                        std::to_string(kMaxExactFeatures));
    }
    std::vector<uint64_t> masks;
    masks.reserve(full - 1);
    for (uint64_t bits = 1; bits < full; ++bits) masks.push_back(bits);
    Vector weights(static_cast<Eigen::Index>(masks.size()));
    for (size_t s = 0; s < masks.size(); ++s) {
      weights(s) = ShapleyKernelWeight(m, std::popcount(masks[s]));
    }
    const Vector values = CoalitionValues(f, x, ref.values, masks);
    KsSolveResult solved =
        SolveKernelRegression(masks, weights, values, empty_value, total, m);
    if (!solved.ok) throw RuntimeError("kernel_shap: singular regression system");
    return AttributionVector{std::move(solved.phi), AttributionSource::kKs,
                             static_cast<int64_t>(masks.size()) + 2};
  }

  if (budget < m + 2) {
    throw ConfigError("kernel_shap needs budget >= M + 2 (got " +
                      std::to_string(budget) + ")");
  }
  if (m > 63) throw ConfigError("kernel_shap supports at most 63 features");

  // Subset sizes are drawn proportionally to the kernel mass of each size,
  // (M-1)/(s(M-s)); the sampled coalitions then carry equal weight.
  std::vector<double> size_mass;
  for (int s = 1; s < m; ++s) size_mass.push_back(1.0 / (s * (m - s)));
  std::discrete_distribution<int> size_dist(size_mass.begin(), size_mass.end());

  Rng rng(seed);
  bool paired = options.paired;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<uint64_t> masks;
    masks.reserve(budget);
    while (static_cast<int64_t>(masks.size()) < budget) {
      const int size = size_dist(rng) + 1;
      const uint64_t bits = RandomSubsetOfSize(m, size, rng);
      masks.push_back(bits);
      if (paired && static_cast<int64_t>(masks.size()) < budget) {
        masks.push_back(full & ~bits);
      }
    }
    const Vector weights = Vector::Ones(static_cast<Eigen::Index>(masks.size()));
    const Vector values = CoalitionValues(f, x, ref.values, masks);
    KsSolveResult solved =
        SolveKernelRegression(masks, weights, values, empty_value, total, m);
    if (solved.ok) {
      return AttributionVector{std::move(solved.phi), AttributionSource::kKs,
                               budget + 2};
    }
    paired = false;
  }
  throw RuntimeError(
      "kernel_shap: singular regression system; increase the budget");
}

AttributionVector EfficientNormalize(const AttributionVector& att,
                                     double target_sum) {
  if (att.size() < 1) throw ConfigError("cannot normalize an empty vector");
  AttributionVector out = att;
  out.scores.array() += (target_sum - att.scores.sum()) / att.size();
  return out;
}

Matrix EfficientNormalizeRows(const Matrix& scores, const Vector& target_sums) {
  if (scores.rows() != target_sums.size()) {
    throw ConfigError("normalize: row count differs from target count");
  }
  if (scores.cols() < 1) throw ConfigError("cannot normalize an empty vector");
  const Vector shift =
      (target_sums - scores.rowwise().sum()) / static_cast<double>(scores.cols());
  Matrix out = scores;
  out.colwise() += shift;
  return out;
}

AttributionVector ComputeAttribution(const ModelFn& f, const Vector& x,
                                     const ReferenceVector& ref,
                                     const OracleConfig& config) {
  config.Validate(static_cast<int>(x.size()));
  switch (config.source) {
    case AttributionSource::kExactShapley:
      return ExactAttribution(f, x, ref, Weighting::kShapley);
    case AttributionSource::kExactUniform:
      return ExactAttribution(f, x, ref, Weighting::kUniform);
    case AttributionSource::kPs:
      return PermutationSampling(f, x, ref, config.budget, config.seed);
    case AttributionSource::kAps:
      return AntitheticalPermutationSampling(f, x, ref, config.budget,
                                             config.seed);
    case AttributionSource::kKs:
      return KernelShap(f, x, ref, config.budget, config.seed);
    case AttributionSource::kModelHead:
      break;
  }
  throw ConfigError("model-head is not an oracle source");
}

uint64_t InstanceSeed(uint64_t root_seed, int64_t index) {
  return SubSeed(root_seed, "oracle-instance", static_cast<uint64_t>(index));
}

Matrix ComputeAttributions(const ModelFn& f, const Matrix& instances,
                           const ReferenceVector& ref,
                           const OracleConfig& config) {
  config.Validate(static_cast<int>(instances.cols()));
  Matrix out(instances.rows(), instances.cols());
  OracleConfig per_row = config;
  for (Eigen::Index r = 0; r < instances.rows(); ++r) {
    per_row.seed = InstanceSeed(config.seed, r);
    out.row(r) = ComputeAttribution(f, instances.row(r).transpose(), ref,
                                    per_row)
                     .scores.transpose();
  }
  return out;
}

std::vector<LabelRecord> BuildLabelCache(const ModelFn& f,
                                         const TabularDataset& dataset,
                                         const ReferenceVector& ref,
                                         const OracleConfig& config,
                                         const std::string& path) {
  dataset.Validate();
  if (ref.size() != dataset.num_features()) {
    throw ConfigError("label cache: reference width " +
                      std::to_string(ref.size()) + " differs from dataset M = " +
                      std::to_string(dataset.num_features()));
  }
  config.Validate(dataset.num_features());
  const Matrix scores = ComputeAttributions(f, dataset.features, ref, config);
  const int64_t recorded_budget =
      (config.source == AttributionSource::kExactShapley ||
       config.source == AttributionSource::kExactUniform)
          ? (int64_t{1} << dataset.num_features())
          : config.budget;
  std::vector<LabelRecord> records;
  records.reserve(dataset.num_rows());
  for (int r = 0; r < dataset.num_rows(); ++r) {
    records.push_back(LabelRecord{r, scores.row(r).transpose(), config.source,
                                  recorded_budget, config.seed});
  }
  if (!path.empty()) WriteLabelCache(records, path);
  return records;
}

void WriteLabelCache(const std::vector<LabelRecord>& records,
                     const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeError("cannot write label cache: " + path);
  for (const LabelRecord& record : records) {
    nlohmann::ordered_json j;
    j["instance_index"] = record.instance_index;
    j["scores"] = std::vector<double>(
        record.scores.data(), record.scores.data() + record.scores.size());
    j["source"] = SourceName(record.source);
    j["budget"] = record.budget;
    j["seed"] = record.seed;
    out << j.dump() << "\n";
  }
  if (!out) throw RuntimeError("write failed: " + path);
}

std::vector<LabelRecord> LoadLabelCache(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("label cache not found: " + path);
  std::vector<LabelRecord> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      LabelRecord record;
      record.instance_index = j.at("instance_index").get<int64_t>();
      const auto scores = j.at("scores").get<std::vector<double>>();
      record.scores = Eigen::Map<const Vector>(
          scores.data(), static_cast<Eigen::Index>(scores.size()));
      record.source = ParseSource(j.at("source").get<std::string>());
      record.budget = j.at("budget").get<int64_t>();
      record.seed = j.at("seed").get<uint64_t>();
      records.push_back(std::move(record));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + ": malformed record on line " +
                        std::to_string(line_number) + ": " + e.what());
    }
  }
  return records;
}

Matrix LabelMatrix(const std::vector<LabelRecord>& records, int num_rows,
                   int num_features) {
  Matrix out(num_rows, num_features);
  std::vector<bool> seen(num_rows, false);
  for (const LabelRecord& record : records) {
    if (record.instance_index < 0 || record.instance_index >= num_rows) continue;
    if (record.scores.size() != num_features) {
      throw ConfigError("label record width differs from the dataset");
    }
    out.row(record.instance_index) = record.scores.transpose();
    seen[record.instance_index] = true;
  }
  for (int r = 0; r < num_rows; ++r) {
    if (!seen[r]) {
      throw ConfigError("label cache has no record for instance " +
                        std::to_string(r));
    }
  }
  return out;
}

}  // namespace rtxlab
