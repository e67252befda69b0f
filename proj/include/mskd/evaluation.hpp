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

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "mskd/clustering.hpp"
#include "mskd/data.hpp"
#include "mskd/encoder.hpp"

namespace mskd {

inline constexpr std::array<int, 3> kCmcRanks = {1, 5, 10};

struct EvaluationReport {
  double mean_ap = 0.0;
  std::array<double, kCmcRanks.size()> cmc{};  // aligned with kCmcRanks
  std::size_t num_queries = 0;
  std::size_t num_gallery = 0;
  std::size_t skipped = 0;

  double rank1() const { return cmc[0]; }
  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

nlohmann::json to_json(const EvaluationReport& report);

// Global-branch embeddings (eval-mode batch norm), one unit row per input.
Matrix extract_global(const EncoderParams& params, const Matrix& inputs,
                      bool batch_norm = true);

// Mean over relevant positions i (1-based) of (#relevant in top i) / i.
// nullopt when nothing is relevant.
std::optional<double> average_precision(const std::vector<bool>& ranked_relevance);

// Ranks the gallery by ascending cosine distance per query (ties by gallery
// index), drops gallery items sharing both identity and camera with the
// query, and scores the remaining ranking. Queries without any relevant
// item left are skipped and excluded from every average.
EvaluationReport evaluate_embeddings(const Matrix& query, std::span<const int> query_ids,
                                     std::span<const int> query_cams, const Matrix& gallery,
                                     std::span<const int> gallery_ids,
                                     std::span<const int> gallery_cams);

EvaluationReport evaluate(const EncoderParams& params, const LabeledSet& query,
                          const LabeledSet& gallery, bool batch_norm = true);

struct ClusterQuality {
  std::optional<double> ari;     // over non-outlier instances
  std::optional<double> purity;  // mean over clusters of the majority share
  std::size_t num_outliers = 0;
};

ClusterQuality cluster_quality(const PseudoLabeling& pseudo, std::span<const int> truth);

// Adjusted Rand index of two equally long labelings.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace mskd
