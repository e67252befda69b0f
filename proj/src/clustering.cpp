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

#include "mskd/clustering.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <unordered_map>

#include "mskd/kernels.hpp"

namespace mskd {

std::size_t PseudoLabeling::num_outliers() const {
  std::size_t n = 0;
  for (int a : assignment) n += a == kOutlier;
  return n;
}

std::vector<std::vector<std::size_t>> PseudoLabeling::members() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(num_clusters));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != kOutlier) out[static_cast<std::size_t>(assignment[i])].push_back(i);
  }
  return out;
}

Matrix blended_distance(const Matrix& d_global, const Matrix& d_up, const Matrix& d_down,
                        double lambda1) {
  if (!(lambda1 >= 0.0 && lambda1 < 0.5)) {
    throw std::invalid_argument("blended_distance: lambda1 must lie in [0, 0.5)");
  }
  const std::size_t n = d_global.rows();
  if (d_global.cols() != n || d_up.rows() != n || d_up.cols() != n || d_down.rows() != n ||
      d_down.cols() != n) {
    throw std::invalid_argument("blended_distance: shape mismatch");
  }
  Matrix out(n, n);
  kernels::active().blend3(1.0 - 2.0 * lambda1, d_global.flat().data(), lambda1,
                           d_up.flat().data(), lambda1, d_down.flat().data(),
                           out.flat().data(), out.flat().size());
  // The vector body and the scalar tail round differently; mirror the upper
  // triangle so symmetry is exact.
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) out(j, i) = out(i, j);
  }
  return out;
}

std::vector<int> dbscan(const Matrix& d, const DbscanConfig& cfg) {
  if (!(cfg.eps > 0.0)) throw std::invalid_argument("dbscan: eps must be > 0");
  if (cfg.min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");
  const std::size_t n = d.rows();
  if (d.cols() != n) throw std::invalid_argument("dbscan: distance matrix must be square");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(d(i, i)) || std::abs(d(i, i)) > 1e-12) {
      throw std::invalid_argument("dbscan: diagonal must be zero");
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::isnan(d(i, j)) || std::isnan(d(j, i))) {
        throw std::invalid_argument("dbscan: NaN distance");
      }
      if (d(i, j) != d(j, i)) throw std::invalid_argument("dbscan: asymmetric distance matrix");
    }
  }

  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (d(i, j) <= cfg.eps) neighbors[i].push_back(j);
    }
  }
  auto is_core = [&](std::size_t i) {
    return neighbors[i].size() >= static_cast<std::size_t>(cfg.min_pts);
  };

  constexpr int kUnassigned = -2;
  std::vector<int> labels(n, kUnassigned);
  int next_cluster = 0;
  std::deque<std::size_t> frontier;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= 0) continue;
    if (!is_core(i)) {
      labels[i] = kNoise;  // may still be claimed as a border point later
      continue;
    }
    const int cluster = next_cluster++;
    labels[i] = cluster;
    frontier.assign(1, i);
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      for (std::size_t q : neighbors[p]) {
        if (labels[q] >= 0) continue;
        labels[q] = cluster;
        if (is_core(q)) frontier.push_back(q);
      }
    }
  }
  for (int& l : labels) {
    if (l == kUnassigned) l = kNoise;
  }
  return labels;
}

PseudoLabeling compact_labels(std::span<const int> raw, int epoch) {
  PseudoLabeling out;
  out.epoch = epoch;
  out.assignment.reserve(raw.size());
  std::unordered_map<int, int> remap;
  for (int r : raw) {
    if (r < 0) {
      out.assignment.push_back(kOutlier);
      continue;
    }
    auto [it, inserted] = remap.try_emplace(r, out.num_clusters);
    if (inserted) ++out.num_clusters;
    out.assignment.push_back(it->second);
  }
  return out;
}

PseudoLabeling generate_pseudo_labels(std::span<const MultiScaleEmbedding> embeddings,
                                      double lambda1, const DbscanConfig& cfg, int epoch,
                                      unsigned threads) {
  std::array<Matrix, kNumBranches> dist;
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    std::vector<Vec> rows;
    rows.reserve(embeddings.size());
    for (const auto& e : embeddings) rows.push_back(e.branch[b]);
    const Matrix m = stack_rows(rows);
    dist[b] = cosine_distance_matrix(m, m, threads);
  }
  const Matrix blended = blended_distance(dist[0], dist[1], dist[2], lambda1);
  return compact_labels(dbscan(blended, cfg), epoch);
}

}  // namespace mskd
