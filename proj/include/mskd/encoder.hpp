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
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mskd/numerics.hpp"

namespace mskd {

enum class Branch : std::size_t { kGlobal = 0, kUp = 1, kDown = 2 };
inline constexpr std::size_t kNumBranches = 3;
inline constexpr std::array<Branch, kNumBranches> kAllBranches = {
    Branch::kGlobal, Branch::kUp, Branch::kDown};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct EncoderShape {
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t rows = 4;
  std::size_t cols = 4;
  std::size_t channels = 32;

  std::size_t cells() const { return rows * cols; }
  std::size_t map_size() const { return rows * cols * channels; }
  friend bool operator==(const EncoderShape&, const EncoderShape&) = default;
};

// Toy encoder: x -> relu(x W1 + b1) -> relu(. W2 + b2) reshaped to a
// rows x cols x channels grid. W1 is input_dim x hidden_dim and W2 is
// hidden_dim x map_size, both row-major. Each branch then applies GEM
// pooling, batch norm and L2 normalization.
struct EncoderParams {
  EncoderShape shape;
  Vec w1, b1, w2, b2;
  std::array<Vec, kNumBranches> bn_scale, bn_shift;
  std::array<Vec, kNumBranches> bn_running_mean, bn_running_var;
  double gem_p = 3.0;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Same layout as the trainable part of EncoderParams.
struct EncoderGrads {
  Vec w1, b1, w2, b2;
  std::array<Vec, kNumBranches> bn_scale, bn_shift;
};

// He-initialized affine layers, identity batch norm.
EncoderParams init_encoder(const EncoderShape& shape, std::mt19937_64& rng,
                           double gem_p = 3.0);
EncoderGrads zero_grads(const EncoderShape& shape);

// Trainable tensors in checkpoint order: w1, b1, w2, b2, bn_scale x3,
// bn_shift x3.
std::vector<std::span<double>> trainable_tensors(EncoderParams& params);
std::vector<std::span<const double>> trainable_tensors(const EncoderParams& params);
std::vector<std::span<double>> trainable_tensors(EncoderGrads& grads);
std::vector<std::span<const double>> trainable_tensors(const EncoderGrads& grads);
std::size_t num_trainable(const EncoderShape& shape);

void validate(const EncoderParams& params);

struct FeatureMap {
  std::size_t rows = 0, cols = 0, channels = 0;
  Vec values;  // (row * cols + col) * channels + channel

  double at(std::size_t r, std::size_t c, std::size_t ch) const {
    return values[(r * cols + c) * channels + ch];
  }
  // Cells of rows [row_begin, row_end) as a (cells x channels) matrix.
  Matrix region(std::size_t row_begin, std::size_t row_end) const;
};

// Up half = rows [0, R/2), down half = rows [R/2, R).
// Throws std::invalid_argument("odd row count") for odd R.
std::pair<Matrix, Matrix> split_feature_map(const FeatureMap& map);

// GEM-pooled (pre batch norm) vectors of the global, up and down regions.
std::array<Vec, kNumBranches> pool_branches(const FeatureMap& map, double p);

struct MultiScaleEmbedding {
  std::array<Vec, kNumBranches> branch;

  Vec& operator[](Branch b) { return branch[static_cast<std::size_t>(b)]; }
  const Vec& operator[](Branch b) const { return branch[static_cast<std::size_t>(b)]; }
  const Vec& global() const { return (*this)[Branch::kGlobal]; }
  const Vec& up() const { return (*this)[Branch::kUp]; }
  const Vec& down() const { return (*this)[Branch::kDown]; }

  friend bool operator==(const MultiScaleEmbedding&, const MultiScaleEmbedding&) = default;
};

// Upstream gradients share the three-branch layout.
using EmbeddingGrad = MultiScaleEmbedding;

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  Mode mode = Mode::kEval;
  // false replaces batch norm with the identity.
  bool batch_norm = true;
};

struct ForwardCache {
  Mode mode = Mode::kEval;
  bool batch_norm = true;
  std::uint64_t params_fingerprint = 0;
  Matrix inputs;       // B x input_dim
  Matrix hidden_pre;   // B x hidden_dim
  Matrix map_pre;      // B x map_size, before the output ReLU
  std::vector<std::array<Vec, kNumBranches>> pooled;      // GEM outputs
  std::vector<std::array<Vec, kNumBranches>> normalized;  // batch-norm x_hat
  std::vector<std::array<Vec, kNumBranches>> bn_out;      // pre L2-normalize
  std::array<Vec, kNumBranches> batch_mean, batch_var;    // train mode only

  std::size_t batch_size() const { return inputs.rows(); }
  FeatureMap feature_map(std::size_t i, const EncoderShape& shape) const;
};

struct ForwardResult {
  std::vector<MultiScaleEmbedding> embeddings;
  ForwardCache cache;
};

// Forward pass over a batch (one input per row). Train mode normalizes with
// the batch statistics and needs at least two rows; eval mode uses the
// running statistics. The parameters are not modified; see
// update_running_stats.
ForwardResult forward(const EncoderParams& params, const Matrix& inputs,
                      const ForwardOptions& options);
MultiScaleEmbedding forward_one(const EncoderParams& params, std::span<const double> input,
                                const ForwardOptions& options = {});

// Folds a train-mode cache's batch statistics into the running statistics.
void update_running_stats(EncoderParams& params, const ForwardCache& cache,
                          double momentum = kBatchNormMomentum);

// Replaces the running statistics with the statistics of one train-mode
// pass over `inputs` (at least two rows). Used once before training so that
// eval-mode features start centered on the target data. Channels that are
// constant over `inputs` get variance kBatchNormEps so the variance stays
// positive.
void calibrate_batch_norm(EncoderParams& params, const Matrix& inputs);

// Reverse pass for the scalar loss whose embedding gradients are given.
// Throws std::logic_error when the cache was produced by different
// parameters.
EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      std::span<const EmbeddingGrad> grad_embeddings);

std::uint64_t fingerprint(const EncoderParams& params);

// "MSKD-CKPT v1 <Din> <H> <R> <Wc> <Dm>\n" followed by every parameter as a
// little-endian 64-bit float: w1, b1, w2, b2, bn_scale x3, bn_shift x3,
// bn_running_mean x3, bn_running_var x3, gem_p.
void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mskd
