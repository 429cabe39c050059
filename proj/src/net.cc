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

#include "rtxlab/net.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rtxlab {
namespace {

constexpr int kCheckpointVersion = 1;
constexpr char kCheckpointFormat[] = "rtxlab-mlp";

}  // namespace

std::string ActivationName(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "identity";
}

Activation ParseActivation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unsupported activation: " + name);
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  Validate();
}

Mlp Mlp::Create(const std::vector<int>& layer_dims, Rng& rng) {
  if (layer_dims.size() < 2) {
    throw ConfigError("an MLP needs at least input and output dimensions");
  }
  std::vector<DenseLayer> layers;
  for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int in = layer_dims[l];
    const int out = layer_dims[l + 1];
    if (in < 1 || out < 1) throw ConfigError("layer dimensions must be >= 1");
    const double limit = std::sqrt(6.0 / in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weights.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weights(r, c) = dist(rng);
    }
    layer.bias = Vector::Zero(out);
    layer.activation = (l + 2 == layer_dims.size()) ? Activation::kIdentity
                                                    : Activation::kRelu;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

void Mlp::Validate() const {
  if (layers_.empty()) throw ConfigError("MLP has no layers");
  for (size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.bias.size() != layer.weights.rows()) {
      throw ConfigError("layer " + std::to_string(l) +
                        ": bias size does not match output dimension");
    }
    if (l > 0 && layers_[l - 1].out_dim() != layer.in_dim()) {
      throw ConfigError("layer " + std::to_string(l) +
                        ": input dimension does not match previous layer");
    }
  }
}

int Mlp::input_dim() const { return layers_.front().in_dim(); }
int Mlp::output_dim() const { return layers_.back().out_dim(); }

std::vector<int> Mlp::layer_dims() const {
  std::vector<int> dims;
  if (layers_.empty()) return dims;
  dims.push_back(input_dim());
  for (const DenseLayer& layer : layers_) dims.push_back(layer.out_dim());
  return dims;
}

int64_t Mlp::num_parameters() const {
  int64_t n = 0;
  for (const DenseLayer& layer : layers_) {
    n += layer.weights.size() + layer.bias.size();
  }
  return n;
}

Matrix Mlp::Forward(const Matrix& batch) const {
  return Forward(batch, nullptr);
}

Matrix Mlp::Forward(const Matrix& batch, ForwardCache* cache) const {
  if (layers_.empty()) throw ConfigError("forward on an empty MLP");
  if (batch.cols() != input_dim()) {
    throw ConfigError("forward: batch has " + std::to_string(batch.cols()) +
                      " columns, network expects " +
                      std::to_string(input_dim()));
  }
  for (const DenseLayer& layer : layers_) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw RuntimeError("forward: non-finite parameter detected");
    }
  }
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre_activations.clear();
  }
  Matrix current = batch;
  for (const DenseLayer& layer : layers_) {
    Matrix z = current * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(current));
      cache->pre_activations.push_back(z);
    }
    if (layer.activation == Activation::kRelu) {
      current = z.cwiseMax(0.0);
    } else {
      current = std::move(z);
    }
  }
  if (cache != nullptr) cache->valid = true;
  return current;
}

Gradients Mlp::Backward(const ForwardCache& cache, const Matrix& output_grad,
                        Matrix* input_grad) const {
  if (!cache.valid || cache.inputs.size() != layers_.size()) {
    throw RuntimeError("backward called without a matching forward pass");
  }
  const Eigen::Index batch = cache.inputs.front().rows();
  if (output_grad.rows() != batch || output_grad.cols() != output_dim()) {
    throw ConfigError("backward: output gradient has the wrong shape");
  }
  Gradients grads;
  grads.weights.resize(layers_.size());
  grads.bias.resize(layers_.size());
  Matrix delta = output_grad;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const DenseLayer& layer = layers_[l];
    if (layer.activation == Activation::kRelu) {
      delta = delta.cwiseProduct(
          (cache.pre_activations[l].array() > 0.0).cast<double>().matrix());
    }
    grads.weights[l] = delta.transpose() * cache.inputs[l];
    grads.bias[l] = delta.colwise().sum().transpose();
    if (l > 0 || input_grad != nullptr) {
      delta = delta * layer.weights;
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(delta);
  return grads;
}

Vector Mlp::GetParameters() const {
  Vector params(num_parameters());
  Eigen::Index offset = 0;
  for (const DenseLayer& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        params(offset++) = layer.weights(r, c);
      }
    }
    params.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return params;
}

void Mlp::SetParameters(const Vector& params) {
  if (params.size() != num_parameters()) {
    throw ConfigError("parameter vector has the wrong length");
  }
  Eigen::Index offset = 0;
  for (DenseLayer& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = params(offset++);
      }
    }
    layer.bias = params.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
}

Vector Mlp::FlattenGradients(const Gradients& grads) const {
  if (grads.weights.size() != layers_.size() ||
      grads.bias.size() != layers_.size()) {
    throw ConfigError("gradient layer count does not match the network");
  }
  Vector flat(num_parameters());
  Eigen::Index offset = 0;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Matrix& w = grads.weights[l];
    if (w.rows() != layers_[l].weights.rows() ||
        w.cols() != layers_[l].weights.cols() ||
        grads.bias[l].size() != layers_[l].bias.size()) {
      throw ConfigError("gradient shape does not match layer " +
                        std::to_string(l));
    }
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat(offset++) = w(r, c);
    }
    flat.segment(offset, grads.bias[l].size()) = grads.bias[l];
    offset += grads.bias[l].size();
  }
  return flat;
}

AdamOptimizer::AdamOptimizer(AdamOptions options, int64_t num_parameters)
    : options_(options),
      first_moment_(Vector::Zero(num_parameters)),
      second_moment_(Vector::Zero(num_parameters)) {
  if (!(options_.learning_rate > 0.0)) {
    throw ConfigError("learning rate must be positive");
  }
  if (options_.weight_decay < 0.0) {
    throw ConfigError("weight decay must be non-negative");
  }
}

void AdamOptimizer::Step(Vector& params, const Vector& grads) {
  if (params.size() != first_moment_.size() ||
      grads.size() != first_moment_.size()) {
    throw ConfigError("optimizer: parameter and gradient shapes disagree");
  }
  if (!grads.allFinite()) throw RuntimeError("optimizer: non-finite gradient");
  ++step_;
  const double lr = options_.learning_rate;
  if (options_.weight_decay > 0.0) params *= (1.0 - lr * options_.weight_decay);
  first_moment_ = options_.beta1 * first_moment_ + (1.0 - options_.beta1) * grads;
  second_moment_ = options_.beta2 * second_moment_ +
                   (1.0 - options_.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  params.array() -= lr * (first_moment_.array() / c1) /
                    ((second_moment_.array() / c2).sqrt() + options_.epsilon);
}

void AdamOptimizer::Step(Mlp& net, const Gradients& grads) {
  if (net.num_parameters() != first_moment_.size() ||
      grads.weights.size() != static_cast<size_t>(net.num_layers()) ||
      grads.bias.size() != static_cast<size_t>(net.num_layers())) {
    throw ConfigError("optimizer: parameter and gradient shapes disagree");
  }
  for (int l = 0; l < net.num_layers(); ++l) {
    const DenseLayer& layer = net.layers()[l];
    if (grads.weights[l].rows() != layer.weights.rows() ||
        grads.weights[l].cols() != layer.weights.cols() ||
        grads.bias[l].size() != layer.bias.size()) {
      throw ConfigError("gradient shape does not match layer " +
                        std::to_string(l));
    }
    if (!grads.weights[l].allFinite() || !grads.bias[l].allFinite()) {
      throw RuntimeError("optimizer: non-finite gradient");
    }
  }
  ++step_;
  const double lr = options_.learning_rate;
  const double decay = 1.0 - lr * options_.weight_decay;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  // Same arithmetic as the flat Step. Moments are stored per block in the
  // storage order of the parameters, so this overload and the flat one must
  // not be mixed on one optimizer.
  auto update = [&](auto param, const auto& grad, Eigen::Index offset) {
    const Eigen::Index rows = grad.rows();
    const Eigen::Index cols = grad.cols();
    Eigen::Map<Matrix> m(first_moment_.data() + offset, rows, cols);
    Eigen::Map<Matrix> v(second_moment_.data() + offset, rows, cols);
    if (options_.weight_decay > 0.0) param *= decay;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + options_.epsilon);
  };
  Eigen::Index offset = 0;
  for (int l = 0; l < net.num_layers(); ++l) {
    DenseLayer& layer = net.mutable_layers()[l];
    update(Eigen::Ref<Matrix>(layer.weights), grads.weights[l], offset);
    offset += layer.weights.size();
    update(Eigen::Ref<Matrix>(layer.bias), Matrix(grads.bias[l]),
           offset);
    offset += layer.bias.size();
  }
}

double SpectralNorm(const Matrix& weights, int max_iterations,
                    double tolerance) {
  if (weights.size() == 0) return 0.0;
  const Eigen::Index n = weights.cols();
  // Slightly tilted start so it is not orthogonal to axis-aligned singular
  // vectors.
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.01 * static_cast<double>(i);
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    const Vector u = weights * v;
    const double unorm = u.norm();
    if (unorm == 0.0) break;
    Vector next = weights.transpose() * u;
    const double nnorm = next.norm();
    if (nnorm == 0.0) break;
    // ||W^T W v|| / ||W v|| >= ||W v|| and approaches sigma from below.
    const double estimate = nnorm / unorm;
    v = next / nnorm;
    const bool converged =
        std::abs(estimate - sigma) <= tolerance * std::max(1.0, estimate);
    sigma = estimate;
    if (converged) break;
  }
  if (sigma == 0.0 && weights.norm() > 0.0) {
    // Start vector was in the null space; fall back to the Frobenius bound.
    sigma = weights.norm();
  }
  return sigma;
}

LipschitzEstimate LipschitzUpperBound(const Mlp& net) {
  LipschitzEstimate estimate{1.0};
  for (const DenseLayer& layer : net.layers()) {
    if (layer.activation != Activation::kRelu &&
        layer.activation != Activation::kIdentity) {
      throw ConfigError("lipschitz bound: unsupported activation");
    }
    estimate.value *= SpectralNorm(layer.weights);
  }
  return estimate;
}

std::string MlpToJsonString(const Mlp& net) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["layer_dims"] = net.layer_dims();
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& layer : net.layers()) {
    std::vector<double> weights;
    weights.reserve(layer.weights.size());
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        weights.push_back(layer.weights(r, c));
      }
    }
    layers.push_back({{"activation", ActivationName(layer.activation)},
                      {"weights", weights},
                      {"bias", std::vector<double>(layer.bias.data(),
                                                   layer.bias.data() +
                                                       layer.bias.size())}});
  }
  j["layers"] = std::move(layers);
  return j.dump();
}

Mlp MlpFromJsonString(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) {
    throw ConfigError("not an rtxlab MLP checkpoint");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version");
  }
  const auto dims = j.at("layer_dims").get<std::vector<int>>();
  const auto& layers_json = j.at("layers");
  if (dims.size() != layers_json.size() + 1) {
    throw ConfigError("checkpoint layer_dims do not match layer count");
  }
  std::vector<DenseLayer> layers;
  for (size_t l = 0; l < layers_json.size(); ++l) {
    const auto& lj = layers_json[l];
    const auto weights = lj.at("weights").get<std::vector<double>>();
    const auto bias = lj.at("bias").get<std::vector<double>>();
    const int in = dims[l];
    const int out = dims[l + 1];
    if (static_cast<int>(weights.size()) != in * out ||
        static_cast<int>(bias.size()) != out) {
      throw ConfigError("checkpoint layer " + std::to_string(l) +
                        " has the wrong parameter count");
    }
    DenseLayer layer;
    layer.activation = ParseActivation(lj.at("activation").get<std::string>());
    layer.weights.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weights(r, c) = weights[r * in + c];
    }
    layer.bias = Eigen::Map<const Vector>(bias.data(), out);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

void SaveMlp(const Mlp& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write checkpoint: " + path);
  out << MlpToJsonString(net) << "\n";
  if (!out) throw RuntimeError("write failed: " + path);
}

Mlp LoadMlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return MlpFromJsonString(buffer.str());
}

}  // namespace rtxlab
