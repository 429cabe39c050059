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

#ifndef RTXLAB_RNG_H_
#define RTXLAB_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace rtxlab {

using Rng = std::mt19937_64;

// Derives an independent seed for a named sub-stream of `root`. Experiment
// arms that must share randomness (e.g. batching) request the same name.
uint64_t SubSeed(uint64_t root, std::string_view name);
uint64_t SubSeed(uint64_t root, std::string_view name, uint64_t index);

inline Rng MakeRng(uint64_t root, std::string_view name) {
  return Rng(SubSeed(root, name));
}

// 64-bit FNV-1a, used for stream names and config hashes.
uint64_t Fnv1a(std::string_view bytes);

// Uniform permutation of 0..n-1.
std::vector<int> RandomPermutation(int n, Rng& rng);

}  // namespace rtxlab

#endif  // RTXLAB_RNG_H_
