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

#include "mskd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <span>

#include "mskd/encoder.hpp"
#include "mskd/losses.hpp"
#include "mskd/memory.hpp"
#include "mskd/numerics.hpp"

namespace mskd {
namespace {

Vec RandomVec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vec v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

Vec RandomUnit(std::mt19937_64& rng, std::size_t n) { return l2_normalize(RandomVec(rng, n)); }

MultiScaleEmbedding RandomEmbedding(std::mt19937_64& rng, std::size_t d) {
  MultiScaleEmbedding e;
  for (auto& b : e.branch) b = RandomUnit(rng, d);
  return e;
}

ClusterMemoryBank RandomBank(std::mt19937_64& rng, std::size_t clusters, std::size_t d) {
  std::array<Matrix, kNumBranches> c;
  for (auto& m : c) {
    m = Matrix(clusters, d);
    for (std::size_t r = 0; r < clusters; ++r) {
      const Vec u = RandomUnit(rng, d);
      std::copy(u.begin(), u.end(), m.row(r).begin());
    }
  }
  return ClusterMemoryBank(std::move(c), 0.1);
}

Vec Flatten(const MultiScaleEmbedding& e) {
  Vec out;
  for (const auto& b : e.branch) out.insert(out.end(), b.begin(), b.end());
  return out;
}

MultiScaleEmbedding Unflatten(std::span<const double> x, std::size_t d) {
  MultiScaleEmbedding e;
  for (std::size_t b = 0; b < kNumBranches; ++b) e.branch[b].assign(x.begin() + b * d, x.begin() + (b + 1) * d);
  return e;
}

std::size_t UniformInt(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double UniformReal(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

GradcheckResult Finish(std::string name, int trials, double worst, double tol) {
  return {std::move(name), trials, worst, worst < tol};
}

GradcheckResult CheckClusterNce(std::mt19937_64& rng, const GradcheckOptions& o) {
  double worst = 0.0;
  for (int t = 0; t < o.trials; ++t) {
    const std::size_t d = UniformInt(rng, 2, 12);
    const std::size_t c = UniformInt(rng, 2, 10);
    Matrix centroids(c, d);
    for (double& x : centroids.flat()) x = std::normal_distribution<double>(0.0, 0.5)(rng);
    const Vec u = RandomUnit(rng, d);
    const std::size_t pos = UniformInt(rng, 0, c - 1);
    const double tau = UniformReal(rng, 0.05, 1.0);
    const LossValue analytic = cluster_nce(u, centroids, pos, tau);
    const Vec numeric = finite_diff_gradient(
        [&](std::span<const double> x) { return cluster_nce(x, centroids, pos, tau).loss; }, u, o.step);
    worst = std::max(worst, relative_error(analytic.grad, numeric));
  }
  return Finish("cluster_nce", o.trials, worst, o.tolerance);
}

GradcheckResult CheckDistill(std::mt19937_64& rng, const GradcheckOptions& o) {
  double worst = 0.0;
  for (int t = 0; t < o.trials; ++t) {
    const std::size_t d = UniformInt(rng, 2, 12);
    const Vec u = RandomVec(rng, d, UniformReal(rng, 0.3, 3.0));
    const Vec teacher = RandomVec(rng, d);
    const double mu = UniformReal(rng, 0.1, 2.0);
    const LossValue analytic = distill_l2(u, teacher, mu);
    const Vec numeric = finite_diff_gradient(
        [&](std::span<const double> x) { return distill_l2(x, teacher, mu).loss; }, u, o.step);
    worst = std::max(worst, relative_error(analytic.grad, numeric));
  }
  return Finish("distill_l2", o.trials, worst, o.tolerance);
}

GradcheckResult CheckStageLoss(std::mt19937_64& rng, const GradcheckOptions& o, bool stage2) {
  double worst = 0.0;
  for (int t = 0; t < o.trials; ++t) {
    const std::size_t d = UniformInt(rng, 2, 10);
    const std::size_t c = UniformInt(rng, 2, 8);
    const ClusterMemoryBank bank = RandomBank(rng, c, d);
    const MultiScaleEmbedding student = RandomEmbedding(rng, d);
    const MultiScaleEmbedding teacher = RandomEmbedding(rng, d);
    const std::size_t pos = UniformInt(rng, 0, c - 1);
    const LossConfig cfg{UniformReal(rng, 0.05, 1.0), UniformReal(rng, 0.0, 0.5),
                         UniformReal(rng, 0.0, 2.0)};
    auto loss = [&](const MultiScaleEmbedding& e) {
      return stage2 ? stage2_loss(e, teacher, bank, pos, cfg) : stage1_loss(e, bank, pos, cfg);
    };
    const Vec analytic = Flatten(loss(student).grad);
    const Vec numeric = finite_diff_gradient(
        [&](std::span<const double> x) { return loss(Unflatten(x, d)).loss; }, Flatten(student), o.step);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return Finish(stage2 ? "stage2_loss" : "stage1_loss", o.trials, worst, o.tolerance);
}

// Pre-activations far enough from the ReLU and GEM-clamp kinks that a
// finite-difference probe cannot cross them.
bool AwayFromKinks(const ForwardCache& cache) {
  constexpr double kMargin = 1e-3;
  for (double z : cache.hidden_pre.flat()) {
    if (std::abs(z) < kMargin) return false;
  }
  for (double z : cache.map_pre.flat()) {
    if (std::abs(z) < kMargin || std::abs(z - kGemClampEps) < kMargin) return false;
  }
  return true;
}

GradcheckResult CheckEncoder(std::mt19937_64& rng, const GradcheckOptions& o, const ForwardOptions& fwd,
                             std::string name) {
  const EncoderShape shape{5, 6, 4, 2, 4};
  const std::size_t batch = 3;
  double worst = 0.0;
  for (int t = 0; t < o.trials; ++t) {
    EncoderParams params;
    Matrix inputs(batch, shape.input_dim);
    for (int attempt = 0;; ++attempt) {
      params = init_encoder(shape, rng);
      for (double& b : params.b1) b = std::normal_distribution<double>(0.0, 0.3)(rng);
      for (double& b : params.b2) b = std::normal_distribution<double>(0.3, 0.3)(rng);
      for (std::size_t b = 0; b < kNumBranches; ++b) {
        for (double& s : params.bn_scale[b]) s = UniformReal(rng, 0.5, 1.5);
        for (double& s : params.bn_shift[b]) s = UniformReal(rng, -0.5, 0.5);
        for (double& m : params.bn_running_mean[b]) m = UniformReal(rng, 0.0, 1.0);
        for (double& v : params.bn_running_var[b]) v = UniformReal(rng, 0.5, 2.0);
      }
      for (double& x : inputs.flat()) x = std::normal_distribution<double>(0.0, 1.0)(rng);
      if (AwayFromKinks(forward(params, inputs, fwd).cache) || attempt > 200) break;
    }
    const std::size_t c = 4;
    const ClusterMemoryBank bank = RandomBank(rng, c, shape.channels);
    std::vector<MultiScaleEmbedding> teacher;
    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < batch; ++i) {
      teacher.push_back(RandomEmbedding(rng, shape.channels));
      positives.push_back(UniformInt(rng, 0, c - 1));
    }
    const LossConfig cfg{0.3, 0.2, 0.7};
    auto batch_loss = [&](const EncoderParams& p, std::vector<EmbeddingGrad>* grads) {
      const auto result = forward(p, inputs, fwd);
      double total = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        BranchLoss l = stage2_loss(result.embeddings[i], teacher[i], bank, positives[i], cfg);
        total += l.loss / batch;
        if (grads) {
          for (auto& g : l.grad.branch) {
            for (double& x : g) x /= batch;
          }
          grads->push_back(std::move(l.grad));
        }
      }
      return std::pair{total, result.cache};
    };

    std::vector<EmbeddingGrad> upstream;
    const auto [value, cache] = batch_loss(params, &upstream);
    const EncoderGrads grads = backward(params, cache, upstream);
    Vec analytic, flat_params;
    for (auto tensor : trainable_tensors(grads)) analytic.insert(analytic.end(), tensor.begin(), tensor.end());
    for (auto tensor : trainable_tensors(std::as_const(params))) {
      flat_params.insert(flat_params.end(), tensor.begin(), tensor.end());
    }
    EncoderParams probe = params;
    const Vec numeric = finite_diff_gradient(
        [&](std::span<const double> x) {
          std::size_t offset = 0;
          for (auto tensor : trainable_tensors(probe)) {
            std::copy(x.begin() + offset, x.begin() + offset + tensor.size(), tensor.begin());
            offset += tensor.size();
          }
          return batch_loss(probe, nullptr).first;
        },
        flat_params, o.step);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return Finish(std::move(name), o.trials, worst, o.tolerance);
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<GradcheckResult> results;
  results.push_back(CheckClusterNce(rng, options));
  results.push_back(CheckDistill(rng, options));
  results.push_back(CheckStageLoss(rng, options, false));
  results.push_back(CheckStageLoss(rng, options, true));
  results.push_back(CheckEncoder(rng, options, {Mode::kTrain, true}, "encoder_train_bn"));
  results.push_back(CheckEncoder(rng, options, {Mode::kEval, true}, "encoder_eval_bn"));
  results.push_back(CheckEncoder(rng, options, {Mode::kEval, false}, "encoder_no_bn"));
  return results;
}

}  // namespace mskd
