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

#include "mskd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mskd/kernels.hpp"

namespace mskd {
namespace {

double BranchWeight(Branch b, double lambda2) {
  return b == Branch::kGlobal ? 1.0 - lambda2 : lambda2;
}

// Accumulates (1 - lambda2) L_global + lambda2 (L_up + L_down); the sum is
// formed in that exact order in both stage losses.
BranchLoss Combine(const std::array<LossValue, kNumBranches>& parts, double lambda2) {
  BranchLoss out;
  const std::size_t g = static_cast<std::size_t>(Branch::kGlobal);
  const std::size_t u = static_cast<std::size_t>(Branch::kUp);
  const std::size_t d = static_cast<std::size_t>(Branch::kDown);
  out.loss = (1.0 - lambda2) * parts[g].loss + lambda2 * (parts[u].loss + parts[d].loss);
  for (Branch b : kAllBranches) {
    const double w = BranchWeight(b, lambda2);
    Vec grad = parts[static_cast<std::size_t>(b)].grad;
    for (double& x : grad) x *= w;
    out.grad[b] = std::move(grad);
  }
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("loss: tau must be > 0");
  if (!(lambda2 >= 0.0 && lambda2 <= 0.5)) {
    throw std::invalid_argument("loss: lambda2 must lie in [0, 0.5]");
  }
  if (!(mu >= 0.0)) throw std::invalid_argument("loss: mu must be >= 0");
}

LossValue cluster_nce(std::span<const double> u_q, const Matrix& centroids,
                      std::size_t positive, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("cluster_nce: tau must be > 0");
  const std::size_t clusters = centroids.rows();
  if (clusters == 0) throw std::invalid_argument("cluster_nce: no centroids");
  if (positive >= clusters) {
    throw std::out_of_range("cluster_nce: positive id " + std::to_string(positive) +
                            " out of range");
  }
  if (u_q.size() != centroids.cols()) {
    throw std::invalid_argument("cluster_nce: dimension mismatch");
  }
  LossValue out;
  out.grad.assign(u_q.size(), 0.0);
  if (clusters == 1) return out;

  const auto& k = kernels::active();
  Vec logits(clusters);
  for (std::size_t c = 0; c < clusters; ++c) {
    logits[c] = k.dot(centroids.row(c).data(), u_q.data(), u_q.size()) / tau;
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - max_logit);
  const double log_denom = max_logit + std::log(denom);
  out.loss = log_denom - logits[positive];

  // (sum_k p_k phi_k - phi_+) / tau
  for (std::size_t c = 0; c < clusters; ++c) {
    double weight = std::exp(logits[c] - log_denom);
    if (c == positive) weight -= 1.0;
    k.axpy(weight / tau, centroids.row(c).data(), out.grad.data(), u_q.size());
  }
  return out;
}

BranchLoss stage1_loss(const MultiScaleEmbedding& query, const ClusterMemoryBank& bank,
                       std::size_t positive, const LossConfig& cfg) {
  cfg.validate();
  std::array<LossValue, kNumBranches> parts;
  for (Branch b : kAllBranches) {
    parts[static_cast<std::size_t>(b)] = cluster_nce(query[b], bank.centroids(b), positive, cfg.tau);
  }
  return Combine(parts, cfg.lambda2);
}

LossValue distill_l2(std::span<const double> student, std::span<const double> teacher,
                     double mu) {
  if (student.size() != teacher.size()) {
    throw std::invalid_argument("distill_l2: dimension mismatch");
  }
  const Vec s_hat = l2_normalize(student);
  const Vec t_hat = l2_normalize(teacher);
  Vec diff(s_hat.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = s_hat[i] - t_hat[i];
    sq += diff[i] * diff[i];
  }
  LossValue out;
  out.loss = mu * sq;
  for (double& d : diff) d *= 2.0 * mu;
  out.grad = l2_normalize_backward(student, diff);
  return out;
}

BranchLoss stage2_loss(const MultiScaleEmbedding& student, const MultiScaleEmbedding& teacher,
                       const ClusterMemoryBank& bank, std::size_t positive,
                       const LossConfig& cfg) {
  cfg.validate();
  std::array<LossValue, kNumBranches> parts;
  for (Branch b : kAllBranches) {
    LossValue nce = cluster_nce(student[b], bank.centroids(b), positive, cfg.tau);
    const LossValue kd = distill_l2(student[b], teacher[b], cfg.mu);
    nce.loss += kd.loss;
    for (std::size_t i = 0; i < nce.grad.size(); ++i) nce.grad[i] += kd.grad[i];
    parts[static_cast<std::size_t>(b)] = std::move(nce);
  }
  return Combine(parts, cfg.lambda2);
}

}  // namespace mskd
