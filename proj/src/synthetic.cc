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

#include "rtxlab/synthetic.h"

#include <cmath>
#include <memory>
#include <random>

#include "rtxlab/rng.h"

namespace rtxlab {

std::string SyntheticKindName(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kLinear:
      return "linear";
    case SyntheticKind::kPairwiseInteraction:
      return "pairwise-interaction";
    case SyntheticKind::kMlpRandom:
      return "mlp-random";
  }
  return "linear";
}

SyntheticKind ParseSyntheticKind(const std::string& name) {
  if (name == "linear") return SyntheticKind::kLinear;
  if (name == "pairwise-interaction") return SyntheticKind::kPairwiseInteraction;
  if (name == "mlp-random") return SyntheticKind::kMlpRandom;
  throw ConfigError("unknown synthetic model kind: " + name);
}

std::string OutputLinkName(OutputLink link) {
  return link == OutputLink::kSigmoid ? "sigmoid" : "identity";
}

OutputLink ParseOutputLink(const std::string& name) {
  if (name == "identity") return OutputLink::kIdentity;
  if (name == "sigmoid") return OutputLink::kSigmoid;
  throw ConfigError("unknown output link: " + name);
}

Vector NetTarget::Predict(const Matrix& batch) const {
  if (net.output_dim() != 1) {
    throw ConfigError("target network must have a single output");
  }
  Vector out = net.Forward(batch).col(0);
  if (link == OutputLink::kSigmoid) {
    out = (1.0 + (-out.array()).exp()).inverse().matrix();
  }
  return out;
}

ModelFn NetTarget::AsModelFn() const {
  auto shared = std::make_shared<const NetTarget>(*this);
  return [shared](const Matrix& batch) { return shared->Predict(batch); };
}

double NetTarget::LipschitzBound() const {
  const double k = LipschitzUpperBound(net).value;
  return link == OutputLink::kSigmoid ? 0.25 * k : k;
}

void SyntheticModelSpec::Validate() const {
  if (num_features < 1) throw ConfigError("synthetic spec: M must be >= 1");
  switch (kind) {
    case SyntheticKind::kLinear:
    case SyntheticKind::kPairwiseInteraction:
      if (weights.size() != num_features) {
        throw ConfigError("synthetic spec: need one weight per feature");
      }
      if (!weights.allFinite() || !std::isfinite(bias)) {
        throw ConfigError("synthetic spec: parameters must be finite");
      }
      if (link != OutputLink::kIdentity) {
        throw ConfigError("synthetic spec: only mlp-random supports a link");
      }
      for (const PairTerm& p : pairs) {
        if (p.i < 0 || p.j < 0 || p.i >= num_features || p.j >= num_features) {
          throw ConfigError("synthetic spec: pair index out of range");
        }
      }
      if (kind == SyntheticKind::kLinear && !pairs.empty()) {
        throw ConfigError("synthetic spec: linear kind has no pair terms");
      }
      break;
    case SyntheticKind::kMlpRandom:
      for (int h : hidden) {
        if (h < 1) throw ConfigError("synthetic spec: hidden widths must be >= 1");
      }
      if (active_features < 0 || active_features > num_features) {
        throw ConfigError("synthetic spec: active_features must lie in [0, M]");
      }
      if (!(inactive_scale >= 0.0 && inactive_scale <= 1.0)) {
        throw ConfigError("synthetic spec: inactive_scale must lie in [0, 1]");
      }
      break;
  }
}

SyntheticBenchmark MakeSyntheticModel(const SyntheticModelSpec& spec) {
  spec.Validate();
  SyntheticBenchmark bench;
  switch (spec.kind) {
    case SyntheticKind::kLinear:
    case SyntheticKind::kPairwiseInteraction: {
      const Vector w = spec.weights;
      const std::vector<PairTerm> pairs = spec.pairs;
      const double b = spec.bias;
      bench.model = [w, pairs, b](const Matrix& batch) {
        if (batch.cols() != w.size()) {
          throw ConfigError("synthetic model: dimension mismatch");
        }
        Vector out = batch * w;
        out.array() += b;
        for (const PairTerm& p : pairs) {
          out.array() += p.coef * batch.col(p.i).array() * batch.col(p.j).array();
        }
        return out;
      };
      bench.exact = [w, pairs](const Vector& x, const ReferenceVector& ref,
                                Weighting) {
        if (x.size() != w.size() || ref.size() != w.size()) {
          throw ConfigError("synthetic closure: dimension mismatch");
        }
        const Vector d = x - ref.values;
        // Marginals of a linear term are subset-free; a product term splits
        // evenly between its two factors under either weighting.
        Vector phi = w.cwiseProduct(d);
        for (const PairTerm& p : pairs) {
          phi(p.i) += 0.5 * p.coef * d(p.i) * (x(p.j) + ref.values(p.j));
          phi(p.j) += 0.5 * p.coef * d(p.j) * (x(p.i) + ref.values(p.i));
        }
        return AttributionVector{std::move(phi),
                                 AttributionSource::kExactShapley, 0};
      };
      break;
    }
    case SyntheticKind::kMlpRandom: {
      std::vector<int> dims{spec.num_features};
      dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
      dims.push_back(1);
      Rng rng = MakeRng(spec.model_seed, "synthetic-target");
      Mlp net = Mlp::Create(dims, rng);
      // Non-zero biases so the coalition game is not homogeneous.
      std::uniform_real_distribution<double> bias_dist(-0.5, 0.5);
      for (DenseLayer& layer : net.mutable_layers()) {
        for (Eigen::Index k = 0; k < layer.bias.size(); ++k) {
          layer.bias(k) = bias_dist(rng);
        }
      }
      if (spec.active_features > 0) {
        Matrix& w0 = net.mutable_layers().front().weights;
        for (int j = spec.active_features; j < spec.num_features; ++j) {
          w0.col(j) *= spec.inactive_scale;
        }
      }
      NetTarget target{std::move(net), spec.link};
      bench.model = target.AsModelFn();
      ModelFn model = bench.model;
      bench.exact = [model](const Vector& x, const ReferenceVector& ref,
                            Weighting weighting) {
        return ExactAttribution(model, x, ref, weighting);
      };
      bench.target = std::move(target);
      break;
    }
  }
  return bench;
}

std::vector<std::string> DefaultFeatureNames(int num_features) {
  std::vector<std::string> names;
  for (int i = 0; i < num_features; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

SyntheticBenchmark GenerateSynthetic(const SyntheticModelSpec& spec, int n,
                                     uint64_t seed, SplitTag split) {
  if (n < 1) throw ConfigError("generate_synthetic: n must be >= 1");
  SyntheticBenchmark bench = MakeSyntheticModel(spec);
  Rng rng = MakeRng(seed, "synthetic-features");
  std::normal_distribution<double> normal(0.0, 1.0);
  bench.data.features.resize(n, spec.num_features);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < spec.num_features; ++c) {
      bench.data.features(r, c) = normal(rng);
    }
  }
  bench.data.feature_names = DefaultFeatureNames(spec.num_features);
  bench.data.split = split;
  bench.data.Validate();
  return bench;
}

}  // namespace rtxlab
