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

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mskd/clustering.hpp"
#include "mskd/data.hpp"
#include "mskd/encoder.hpp"
#include "mskd/losses.hpp"
#include "mskd/memory.hpp"
#include "mskd/optimizer.hpp"

namespace mskd {

struct TrainConfig {
  // Pseudo labels.
  double lambda1 = 0.2;
  double eps = 0.6;
  int min_pts = 4;
  bool rerank = false;  // only plain blended distances are implemented

  // Objectives.
  double lambda2 = 0.1;
  double mu = 1.0;
  double tau = 0.05;

  // Cluster memory.
  double momentum = 0.1;
  bool renormalize_centroids = false;

  // Batches and schedule. num_iterations == 0 means one pass over the
  // clustered instances per epoch.
  int p = 16;
  int k = 16;
  int num_iterations = 0;
  int num_epochs = 50;
  int warmup_multiplier = 2;
  double lr = 3.5e-4;
  double weight_decay = 5e-4;
  int lr_decay_every = 20;
  double lr_decay_factor = 0.1;

  // Encoder; input_dim is taken from the dataset.
  EncoderShape shape;
  double gem_p = 3.0;
  bool batch_norm = true;
  bool calibrate_bn = true;  // running statistics from the training split before epoch 1

  // Run control.
  std::uint64_t seed = 1;
  bool deterministic = true;
  bool eval_each_epoch = true;
  int collapse_patience = 3;

  void validate() const;
  DbscanConfig dbscan() const { return {eps, min_pts}; }
  LossConfig loss() const { return {tau, lambda2, mu}; }
  AdamConfig adam() const { return {0.9, 0.999, 1e-8, weight_decay}; }
  unsigned threads() const;
};

struct EpochRecord {
  std::string phase;  // "teacher", "warmup" or "student"
  int epoch = 0;
  int num_clusters = 0;
  std::size_t num_outliers = 0;
  int iterations = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  std::optional<double> mean_ap;
  std::optional<double> rank1;
  std::optional<double> ari;  // pseudo labels vs. planted identities
  std::optional<double> wall_seconds;  // left empty in deterministic runs

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

struct TrainHooks {
  // Receives step names in execution order: "extract", "cluster",
  // "init_memory", "sample", "loss", "update_memory", "backward", "adam_step".
  std::function<void(std::string_view)> trace;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainState {
  EncoderParams params;
  AdamState adam;
  PseudoLabeling labels;
  ClusterMemoryBank bank;
  std::mt19937_64 rng;
};

// Fresh encoder and optimizer seeded from cfg.seed. Teacher and student
// start from the same initialization.
TrainState init_train_state(const TrainConfig& cfg, std::size_t input_dim);

struct TrainResult {
  EncoderParams params;
  AdamState adam;
  std::vector<EpochRecord> records;
  PseudoLabeling final_labels;
};

// Eval-mode embeddings of every row of `inputs`.
std::vector<MultiScaleEmbedding> extract_embeddings(const EncoderParams& params,
                                                    const Matrix& inputs, bool batch_norm);

int iterations_per_epoch(const TrainConfig& cfg, const PseudoLabeling& labels);

// Teacher: per epoch extract -> cluster -> init memory -> batches of
// stage-1 loss with momentum updates. Throws std::runtime_error
// ("clustering collapsed") after collapse_patience epochs in a row
// without clusters.
TrainResult train_teacher(const Dataset& dataset, const TrainConfig& cfg,
                          const TrainHooks& hooks = {});

// Clusters teacher embeddings once, builds a frozen bank from them and runs
// num_iterations * warmup_multiplier stage-1 batches on the student
// without memory updates.
EpochRecord warmup_student(const EncoderParams& teacher, TrainState& student,
                           const Dataset& dataset, const TrainConfig& cfg,
                           const TrainHooks& hooks = {});

// Warm-up, then teacher-style epochs on the student with the stage-2
// (distillation) loss. The teacher is only read.
TrainResult train_student(const EncoderParams& teacher, const Dataset& dataset,
                          const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace mskd
