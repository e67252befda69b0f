// Copyright 2026 The MSKD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mskd/sampler.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace mskd {
namespace {

std::size_t UniformIndex(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// First `count` entries of a partial Fisher-Yates shuffle.
template <typename T>
void PartialShuffle(std::vector<T>& v, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + UniformIndex(rng, v.size() - i);
    std::swap(v[i], v[j]);
  }
}

}  // namespace

std::vector<std::size_t> pk_sample(const PseudoLabeling& labels, int p, int k,
                                   std::mt19937_64& rng) {
  if (labels.num_clusters <= 0) throw std::invalid_argument("no clusters this epoch");
  if (p < 1 || k < 1) throw std::invalid_argument("pk_sample: P and K must be >= 1");
  auto members = labels.members();
  std::vector<std::size_t> clusters(members.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) clusters[c] = c;
  const std::size_t num_ids = std::min(static_cast<std::size_t>(p), clusters.size());
  PartialShuffle(clusters, num_ids, rng);

  const auto per_id = static_cast<std::size_t>(k);
  std::vector<std::size_t> batch;
  batch.reserve(num_ids * per_id);
  for (std::size_t c = 0; c < num_ids; ++c) {
    auto& pool = members[clusters[c]];
    if (pool.size() >= per_id) {
      PartialShuffle(pool, per_id, rng);
      batch.insert(batch.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_id));
    } else {
      for (std::size_t i = 0; i < per_id; ++i) batch.push_back(pool[UniformIndex(rng, pool.size())]);
    }
  }
  return batch;
}

}  // namespace mskd
