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

#ifndef RTXLAB_COMMON_H_
#define RTXLAB_COMMON_H_

#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rtxlab {

// Rows are instances, columns are features (or embedding dimensions).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A scalar-output model evaluated on a batch of instances. Row i of the
// input maps to entry i of the output.
using ModelFn = std::function<Vector(const Matrix&)>;

// A batched map from one matrix to another with the same row count
// (encoders, heads, explainers).
using BatchMap = std::function<Matrix(const Matrix&)>;

// Invalid configuration or arguments supplied by the caller.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while running a computation on valid inputs.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool AllFinite(const Matrix& m) { return m.allFinite(); }

}  // namespace rtxlab

#endif  // RTXLAB_COMMON_H_
