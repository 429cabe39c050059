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

#ifndef RTXLAB_NET_H_
#define RTXLAB_NET_H_

#include <cstdint>
#include <string>
#include <vector>

#include "rtxlab/common.h"
#include "rtxlab/rng.h"

namespace rtxlab {

enum class Activation { kRelu, kIdentity };

std::string ActivationName(Activation activation);
Activation ParseActivation(const std::string& name);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::kIdentity;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

// Activations retained by a forward pass for the matching backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;           // input to each layer
  std::vector<Matrix> pre_activations;  // affine output of each layer
  bool valid = false;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
};

// Dense feedforward network: relu on hidden layers, identity on the last.
// Serves as the target model, the explanation encoder and the heads.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  // He-style uniform init scaled by fan-in; biases start at zero.
  static Mlp Create(const std::vector<int>& layer_dims, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  int num_layers() const { return static_cast<int>(layers_.size()); }
  std::vector<int> layer_dims() const;
  int64_t num_parameters() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  Matrix Forward(const Matrix& batch) const;
  Matrix Forward(const Matrix& batch, ForwardCache* cache) const;

  // Gradients of sum(output .* output_grad) with respect to the parameters.
  // When `input_grad` is non-null it receives the gradient w.r.t. the batch.
  Gradients Backward(const ForwardCache& cache, const Matrix& output_grad,
                     Matrix* input_grad = nullptr) const;

  // Flat parameter view, layer by layer, weights row-major then bias.
  Vector GetParameters() const;
  void SetParameters(const Vector& params);
  Vector FlattenGradients(const Gradients& grads) const;

  void Validate() const;

 private:
  std::vector<DenseLayer> layers_;
};

// Adam with decoupled weight decay.
struct AdamOptions {
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

class AdamOptimizer {
 public:
  AdamOptimizer(AdamOptions options, int64_t num_parameters);

  void Step(Vector& params, const Vector& grads);
  void Step(Mlp& net, const Gradients& grads);

  int64_t step_count() const { return step_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  Vector first_moment_;
  Vector second_moment_;
  int64_t step_ = 0;
};

struct LipschitzEstimate {
  double value = 0.0;
};

// Largest singular value by power iteration on W^T W.
double SpectralNorm(const Matrix& weights, int max_iterations = 50,
                    double tolerance = 1e-8);

// Product of layer spectral norms; relu and identity are 1-Lipschitz.
LipschitzEstimate LipschitzUpperBound(const Mlp& net);

// Versioned JSON checkpoint container. See README for the layout.
void SaveMlp(const Mlp& net, const std::string& path);
Mlp LoadMlp(const std::string& path);
std::string MlpToJsonString(const Mlp& net);
Mlp MlpFromJsonString(const std::string& text);

}  // namespace rtxlab

#endif  // RTXLAB_NET_H_
