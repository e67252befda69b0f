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

#include "mskd/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mskd/numerics.hpp"

namespace mskd {

nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json cmc = nlohmann::json::object();
  for (std::size_t i = 0; i < kCmcRanks.size(); ++i) {
    cmc["rank" + std::to_string(kCmcRanks[i])] = r.cmc[i];
  }
  return {{"type", "evaluation"},
          {"mAP", r.mean_ap},
          {"cmc", cmc},
          {"num_queries", r.num_queries},
          {"num_gallery", r.num_gallery},
          {"skipped", r.skipped}};
}

Matrix extract_global(const EncoderParams& params, const Matrix& inputs, bool batch_norm) {
  if (inputs.rows() == 0) return Matrix(0, params.shape.channels);
  const auto result = forward(params, inputs, {Mode::kEval, batch_norm});
  Matrix out(inputs.rows(), params.shape.channels);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const Vec& g = result.embeddings[i].global();
    std::copy(g.begin(), g.end(), out.row(i).begin());
  }
  return out;
}

std::optional<double> average_precision(const std::vector<bool>& ranked_relevance) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked_relevance.size(); ++i) {
    if (!ranked_relevance[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

EvaluationReport evaluate_embeddings(const Matrix& query, std::span<const int> query_ids,
                                     std::span<const int> query_cams, const Matrix& gallery,
                                     std::span<const int> gallery_ids,
                                     std::span<const int> gallery_cams) {
  if (query_ids.size() != query.rows() || query_cams.size() != query.rows() ||
      gallery_ids.size() != gallery.rows() || gallery_cams.size() != gallery.rows()) {
    throw std::invalid_argument("evaluate: label arrays do not match the embeddings");
  }
  EvaluationReport report;
  report.num_queries = query.rows();
  report.num_gallery = gallery.rows();
  if (query.rows() == 0) return report;
  const Matrix dist = cosine_distance_matrix(query, gallery);

  std::vector<std::size_t> order(gallery.rows());
  std::vector<bool> relevance;
  double ap_sum = 0.0;
  std::array<std::size_t, kCmcRanks.size()> hits{};
  std::size_t evaluated = 0;
  for (std::size_t q = 0; q < query.rows(); ++q) {
    std::iota(order.begin(), order.end(), 0);
    const auto row = dist.row(q);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    relevance.clear();
    for (std::size_t g : order) {
      const bool same_id = gallery_ids[g] == query_ids[q];
      if (same_id && gallery_cams[g] == query_cams[q]) continue;
      relevance.push_back(same_id && query_ids[q] != kUnknownIdentity);
    }
    const auto ap = average_precision(relevance);
    if (!ap) {
      ++report.skipped;
      continue;
    }
    ++evaluated;
    ap_sum += *ap;
    const auto first = static_cast<std::size_t>(
        std::find(relevance.begin(), relevance.end(), true) - relevance.begin());
    for (std::size_t r = 0; r < kCmcRanks.size(); ++r) {
      if (first < static_cast<std::size_t>(kCmcRanks[r])) ++hits[r];
    }
  }
  if (evaluated > 0) {
    report.mean_ap = ap_sum / static_cast<double>(evaluated);
    for (std::size_t r = 0; r < kCmcRanks.size(); ++r) {
      report.cmc[r] = static_cast<double>(hits[r]) / static_cast<double>(evaluated);
    }
  }
  return report;
}

EvaluationReport evaluate(const EncoderParams& params, const LabeledSet& query,
                          const LabeledSet& gallery, bool batch_norm) {
  const Matrix q = extract_global(params, query.inputs, batch_norm);
  const Matrix g = extract_global(params, gallery.inputs, batch_norm);
  return evaluate_embeddings(q, query.identities, query.cameras, g, gallery.identities,
                             gallery.cameras);
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("ari: length mismatch");
  const double n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto comb2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, count] : table) index += comb2(count);
  for (const auto& [key, count] : rows) sum_rows += comb2(count);
  for (const auto& [key, count] : cols) sum_cols += comb2(count);
  const double total = comb2(n);
  const double expected = total > 0.0 ? sum_rows * sum_cols / total : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  // Zero denominator only when both labelings are trivial in the same way.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

ClusterQuality cluster_quality(const PseudoLabeling& pseudo, std::span<const int> truth) {
  if (truth.size() != pseudo.assignment.size()) {
    throw std::invalid_argument("cluster_quality: length mismatch");
  }
  ClusterQuality q;
  q.num_outliers = pseudo.num_outliers();
  std::vector<int> kept_pseudo, kept_truth;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pseudo.assignment[i] == kOutlier) continue;
    kept_pseudo.push_back(pseudo.assignment[i]);
    kept_truth.push_back(truth[i]);
  }
  if (kept_pseudo.empty()) return q;
  q.ari = adjusted_rand_index(kept_pseudo, kept_truth);
  std::map<int, std::map<int, std::size_t>> by_cluster;
  for (std::size_t i = 0; i < kept_pseudo.size(); ++i) ++by_cluster[kept_pseudo[i]][kept_truth[i]];
  double purity = 0.0;
  for (const auto& [cluster, counts] : by_cluster) {
    std::size_t total = 0, best = 0;
    for (const auto& [id, c] : counts) {
      total += c;
      best = std::max(best, c);
    }
    purity += static_cast<double>(best) / static_cast<double>(total);
  }
  q.purity = purity / static_cast<double>(by_cluster.size());
  return q;
}

}  // namespace mskd
