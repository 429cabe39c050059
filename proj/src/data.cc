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

#include "rtxlab/data.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

namespace rtxlab {
namespace {

std::string Trim(std::string_view s) {
  size_t begin = 0;
  size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return std::string(s.substr(begin, end - begin));
}

std::vector<std::string> SplitLine(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(Trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string JoinNames(const std::vector<std::string>& names) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i > 0) out += ",";
    out += names[i];
  }
  return out;
}

}  // namespace

std::string SplitTagName(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain:
      return "train";
    case SplitTag::kValid:
      return "valid";
    case SplitTag::kTest:
      return "test";
  }
  return "train";
}

SplitTag ParseSplitTag(const std::string& name) {
  if (name == "train") return SplitTag::kTrain;
  if (name == "valid") return SplitTag::kValid;
  if (name == "test") return SplitTag::kTest;
  throw ConfigError("unknown split tag: " + name);
}

void TabularDataset::Validate() const {
  if (features.cols() < 1) throw ConfigError("dataset has no features");
  if (features.rows() < 1) throw ConfigError("no instances");
  if (static_cast<Eigen::Index>(feature_names.size()) != features.cols()) {
    throw ConfigError("feature name count does not match column count");
  }
  if (!features.allFinite()) throw ConfigError("dataset has non-finite cells");
  if (labels && labels->size() != features.rows()) {
    throw ConfigError("label count does not match row count");
  }
}

std::string ReferencePolicyName(ReferencePolicy policy) {
  switch (policy) {
    case ReferencePolicy::kMean:
      return "mean";
    case ReferencePolicy::kZeros:
      return "zeros";
    case ReferencePolicy::kCustom:
      return "custom";
  }
  return "mean";
}

ReferencePolicy ParseReferencePolicy(const std::string& name) {
  if (name == "mean") return ReferencePolicy::kMean;
  if (name == "zeros") return ReferencePolicy::kZeros;
  if (name == "custom") return ReferencePolicy::kCustom;
  throw ConfigError("unknown reference policy: " + name);
}

MaskVector::MaskVector(std::vector<uint8_t> bits) : bits_(std::move(bits)) {
  for (uint8_t b : bits_) {
    if (b > 1) throw ConfigError("mask entries must be 0 or 1");
  }
}

MaskVector MaskVector::FromBits(uint64_t bits, int num_features) {
  std::vector<uint8_t> out(num_features);
  for (int i = 0; i < num_features; ++i) out[i] = (bits >> i) & 1ULL;
  return MaskVector(std::move(out));
}

MaskVector MaskVector::AllOnes(int num_features) {
  return MaskVector(std::vector<uint8_t>(num_features, 1));
}

int MaskVector::count() const {
  int n = 0;
  for (uint8_t b : bits_) n += b;
  return n;
}

TabularDataset LoadCsv(const std::string& path,
                       const std::vector<std::string>& schema,
                       SplitTag split,
                       const std::optional<std::string>& label_column) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> expected = schema;
  if (label_column) expected.push_back(*label_column);
  const std::vector<std::string> header = SplitLine(line);
  if (header != expected) {
    throw ConfigError(path + ": header mismatch, expected [" +
                      JoinNames(expected) + "] got [" + JoinNames(header) +
                      "]");
  }

  const size_t num_cols = expected.size();
  std::vector<double> values;
  int rows = 0;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    const std::vector<std::string> cells = SplitLine(line);
    if (cells.size() != num_cols) {
      throw ConfigError(path + ": row " + std::to_string(line_number) +
                        " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(num_cols));
    }
    for (size_t c = 0; c < num_cols; ++c) {
      const std::string& cell = cells[c];
      double value = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(first, last, value);
      if (cell.empty() || ec != std::errc() || ptr != last ||
          !std::isfinite(value)) {
        throw ConfigError(path + ": non-numeric cell '" + cell + "' at row " +
                          std::to_string(line_number) + ", column " +
                          std::to_string(c + 1) + " (" + expected[c] + ")");
      }
      values.push_back(value);
    }
    ++rows;
  }
  if (rows == 0) throw ConfigError(path + ": no instances");

  TabularDataset dataset;
  dataset.feature_names = schema;
  dataset.split = split;
  dataset.features.resize(rows, static_cast<Eigen::Index>(schema.size()));
  Vector labels(rows);
  for (int r = 0; r < rows; ++r) {
    for (size_t c = 0; c < schema.size(); ++c) {
      dataset.features(r, c) = values[r * num_cols + c];
    }
    if (label_column) labels(r) = values[r * num_cols + schema.size()];
  }
  if (label_column) dataset.labels = std::move(labels);
  dataset.Validate();
  return dataset;
}

void SaveCsv(const TabularDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write CSV file: " + path);
  out << JoinNames(dataset.feature_names);
  if (dataset.labels) out << ",label";
  out << "\n" << std::setprecision(17);
  for (int r = 0; r < dataset.num_rows(); ++r) {
    for (int c = 0; c < dataset.num_features(); ++c) {
      if (c > 0) out << ",";
      out << dataset.features(r, c);
    }
    if (dataset.labels) out << "," << (*dataset.labels)(r);
    out << "\n";
  }
  if (!out) throw RuntimeError("write failed: " + path);
}

ReferenceVector ComputeReference(const TabularDataset& dataset,
                                 ReferencePolicy policy) {
  if (dataset.num_rows() < 1) throw ConfigError("no instances");
  ReferenceVector ref;
  ref.policy = policy;
  switch (policy) {
    case ReferencePolicy::kMean:
      ref.values = dataset.features.colwise().mean().transpose();
      break;
    case ReferencePolicy::kZeros:
      ref.values = Vector::Zero(dataset.num_features());
      break;
    case ReferencePolicy::kCustom:
      throw ConfigError("custom reference values must be supplied explicitly");
  }
  return ref;
}

ReferenceVector CustomReference(Vector values) {
  if (!values.allFinite()) throw ConfigError("reference must be finite");
  return ReferenceVector{std::move(values), ReferencePolicy::kCustom};
}

Vector ApplyMask(const Vector& x, const MaskVector& mask,
                 const ReferenceVector& ref) {
  if (mask.size() != x.size() || ref.size() != x.size()) {
    throw ConfigError("apply_mask: dimension mismatch");
  }
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) = mask[static_cast<int>(i)] ? x(i) : ref.values(i);
  }
  return out;
}

}  // namespace rtxlab
