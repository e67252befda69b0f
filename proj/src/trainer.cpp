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

#include "mskd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "mskd/evaluation.hpp"
#include "mskd/sampler.hpp"

namespace mskd {
namespace {

using Clock = std::chrono::steady_clock;

void Trace(const TrainHooks& hooks, std::string_view step) {
  if (hooks.trace) hooks.trace(step);
}

Matrix GatherRows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = m.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

struct BatchContext {
  const TrainConfig& cfg;
  const TrainHooks& hooks;
  const Matrix& inputs;
  const PseudoLabeling& labels;
  const EncoderParams* teacher;  // non-null selects the stage-2 loss
  bool update_memory;
  double lr;
};

// One optimizer step; returns the batch-mean loss.
double RunBatch(TrainState& state, ClusterMemoryBank& bank, const BatchContext& ctx) {
  Trace(ctx.hooks, "sample");
  const auto idx = pk_sample(ctx.labels, ctx.cfg.p, ctx.cfg.k, state.rng);
  const Matrix batch = GatherRows(ctx.inputs, idx);
  const auto fwd = forward(state.params, batch, {Mode::kTrain, ctx.cfg.batch_norm});
  std::vector<MultiScaleEmbedding> teacher_emb;
  if (ctx.teacher) teacher_emb = forward(*ctx.teacher, batch, {Mode::kEval, ctx.cfg.batch_norm}).embeddings;

  Trace(ctx.hooks, "loss");
  const LossConfig loss_cfg = ctx.cfg.loss();
  const double inv_batch = 1.0 / static_cast<double>(idx.size());
  std::vector<EmbeddingGrad> grads(idx.size());
  double total = 0.0;
  for (std::size_t q = 0; q < idx.size(); ++q) {
    const auto positive = static_cast<std::size_t>(ctx.labels.assignment[idx[q]]);
    BranchLoss l = ctx.teacher ? stage2_loss(fwd.embeddings[q], teacher_emb[q], bank, positive, loss_cfg)
                               : stage1_loss(fwd.embeddings[q], bank, positive, loss_cfg);
    total += l.loss;
    for (auto& g : l.grad.branch) {
      for (double& x : g) x *= inv_batch;
    }
    grads[q] = std::move(l.grad);
  }

  if (ctx.update_memory) {
    Trace(ctx.hooks, "update_memory");
    for (std::size_t q = 0; q < idx.size(); ++q) {
      bank.momentum_update(static_cast<std::size_t>(ctx.labels.assignment[idx[q]]),
                           fwd.embeddings[q]);
    }
  }

  Trace(ctx.hooks, "backward");
  const EncoderGrads enc_grads = backward(state.params, fwd.cache, grads);
  Trace(ctx.hooks, "adam_step");
  adam_step(state.params, state.adam, enc_grads, ctx.lr, ctx.cfg.adam());
  update_running_stats(state.params, fwd.cache);
  return total * inv_batch;
}

void Evaluate(const EncoderParams& params, const Dataset& dataset, const TrainConfig& cfg,
              const PseudoLabeling& labels, const LabeledSet& train, EpochRecord& record) {
  if (!labels.assignment.empty()) {
    bool known = std::none_of(train.identities.begin(), train.identities.end(),
                              [](int id) { return id == kUnknownIdentity; });
    if (known) record.ari = cluster_quality(labels, train.identities).ari;
  }
  if (!cfg.eval_each_epoch) return;
  const LabeledSet query = dataset.subset(Split::kQuery);
  const LabeledSet gallery = dataset.subset(Split::kGallery);
  if (query.size() == 0 || gallery.size() == 0) return;
  const EvaluationReport report = evaluate(params, query, gallery, cfg.batch_norm);
  record.mean_ap = report.mean_ap;
  record.rank1 = report.rank1();
}

// Extract -> cluster -> init memory -> batches, shared by teacher epochs and
// student distillation epochs.
EpochRecord RunEpoch(TrainState& state, const Dataset& dataset, const LabeledSet& train,
                     const TrainConfig& cfg, const TrainHooks& hooks, int epoch_index,
                     const EncoderParams* teacher) {
  const auto start = Clock::now();
  EpochRecord record;
  record.phase = teacher ? "student" : "teacher";
  record.epoch = epoch_index + 1;
  record.lr = scheduled_lr(cfg.lr, epoch_index, cfg.lr_decay_every, cfg.lr_decay_factor);

  Trace(hooks, "extract");
  const auto embeddings = extract_embeddings(state.params, train.inputs, cfg.batch_norm);
  Trace(hooks, "cluster");
  state.labels = generate_pseudo_labels(embeddings, cfg.lambda1, cfg.dbscan(), record.epoch,
                                        cfg.threads());
  record.num_clusters = state.labels.num_clusters;
  record.num_outliers = state.labels.num_outliers();

  if (state.labels.num_clusters > 0) {
    Trace(hooks, "init_memory");
    state.bank = init_memory(embeddings, state.labels, cfg.momentum);
    state.bank.renormalize_centroids = cfg.renormalize_centroids;
    record.iterations = iterations_per_epoch(cfg, state.labels);
    const BatchContext ctx{cfg, hooks, train.inputs, state.labels, teacher, true, record.lr};
    double loss_sum = 0.0;
    for (int it = 0; it < record.iterations; ++it) loss_sum += RunBatch(state, state.bank, ctx);
    if (record.iterations > 0) record.mean_loss = loss_sum / record.iterations;
  }

  Evaluate(state.params, dataset, cfg, state.labels, train, record);
  if (!cfg.deterministic) {
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  }
  return record;
}

void Calibrate(TrainState& state, const Dataset& dataset, const TrainConfig& cfg) {
  if (!cfg.batch_norm || !cfg.calibrate_bn) return;
  const LabeledSet train = dataset.subset(Split::kTrain);
  if (train.inputs.rows() < 2) return;
  calibrate_batch_norm(state.params, train.inputs);
}

TrainResult RunEpochs(TrainState& state, const Dataset& dataset, const TrainConfig& cfg,
                      const TrainHooks& hooks, const EncoderParams* teacher,
                      std::vector<EpochRecord> records) {
  const LabeledSet train = dataset.subset(Split::kTrain);
  int empty_streak = 0;
  for (int e = 0; e < cfg.num_epochs; ++e) {
    EpochRecord record = RunEpoch(state, dataset, train, cfg, hooks, e, teacher);
    empty_streak = record.num_clusters == 0 ? empty_streak + 1 : 0;
    records.push_back(record);
    if (hooks.on_epoch) hooks.on_epoch(record);
    if (empty_streak >= cfg.collapse_patience) {
      throw std::runtime_error("clustering collapsed: no clusters for " +
                               std::to_string(empty_streak) + " consecutive epochs");
    }
  }
  return {state.params, state.adam, std::move(records), state.labels};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda1 >= 0.0 && lambda1 < 0.5)) throw std::invalid_argument("config: lambda1 must lie in [0, 0.5)");
  if (!(eps > 0.0)) throw std::invalid_argument("config: eps must be > 0");
  if (min_pts < 1) throw std::invalid_argument("config: min_pts must be >= 1");
  if (rerank) throw std::invalid_argument("config: rerank is not supported (only 'off')");
  loss().validate();
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw std::invalid_argument("config: momentum must lie in [0, 1]");
  if (p < 1 || k < 1) throw std::invalid_argument("config: P and K must be >= 1");
  if (batch_norm && p * k < 2) throw std::invalid_argument("config: batch norm needs P*K >= 2");
  if (num_iterations < 0 || num_epochs < 0 || warmup_multiplier < 0) {
    throw std::invalid_argument("config: iteration and epoch counts must be >= 0");
  }
  if (!(lr > 0.0) || !(weight_decay >= 0.0) || !(lr_decay_factor > 0.0)) {
    throw std::invalid_argument("config: invalid learning-rate settings");
  }
  if (shape.rows % 2 != 0) throw std::invalid_argument("odd row count");
  if (!(gem_p >= 1.0)) throw std::invalid_argument("config: gem_p must be >= 1");
  if (collapse_patience < 1) throw std::invalid_argument("config: collapse_patience must be >= 1");
}

unsigned TrainConfig::threads() const {
  if (deterministic) return 1;
  return std::max(1u, std::thread::hardware_concurrency());
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"type", "epoch"},
                      {"phase", r.phase},
                      {"epoch", r.epoch},
                      {"num_clusters", r.num_clusters},
                      {"num_outliers", r.num_outliers},
                      {"iterations", r.iterations},
                      {"lr", r.lr},
                      {"mean_loss", r.mean_loss}};
  if (r.mean_ap) j["mAP"] = *r.mean_ap;
  if (r.rank1) j["rank1"] = *r.rank1;
  if (r.ari) j["ari"] = *r.ari;
  if (r.wall_seconds) j["wall_seconds"] = *r.wall_seconds;
  return j;
}

EpochRecord epoch_record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.phase = j.at("phase").get<std::string>();
  r.epoch = j.at("epoch").get<int>();
  r.num_clusters = j.at("num_clusters").get<int>();
  r.num_outliers = j.at("num_outliers").get<std::size_t>();
  r.iterations = j.at("iterations").get<int>();
  r.lr = j.at("lr").get<double>();
  r.mean_loss = j.at("mean_loss").get<double>();
  if (j.contains("mAP")) r.mean_ap = j["mAP"].get<double>();
  if (j.contains("rank1")) r.rank1 = j["rank1"].get<double>();
  if (j.contains("ari")) r.ari = j["ari"].get<double>();
  if (j.contains("wall_seconds")) r.wall_seconds = j["wall_seconds"].get<double>();
  return r;
}

TrainState init_train_state(const TrainConfig& cfg, std::size_t input_dim) {
  cfg.validate();
  TrainState state;
  state.rng.seed(cfg.seed);
  EncoderShape shape = cfg.shape;
  shape.input_dim = input_dim;
  state.params = init_encoder(shape, state.rng, cfg.gem_p);
  state.adam = init_adam(shape);
  return state;
}

std::vector<MultiScaleEmbedding> extract_embeddings(const EncoderParams& params,
                                                    const Matrix& inputs, bool batch_norm) {
  if (inputs.rows() == 0) return {};
  return forward(params, inputs, {Mode::kEval, batch_norm}).embeddings;
}

int iterations_per_epoch(const TrainConfig& cfg, const PseudoLabeling& labels) {
  if (cfg.num_iterations > 0) return cfg.num_iterations;
  const std::size_t clustered = labels.assignment.size() - labels.num_outliers();
  const std::size_t batch = static_cast<std::size_t>(cfg.p) * static_cast<std::size_t>(cfg.k);
  return static_cast<int>((clustered + batch - 1) / batch);
}

TrainResult train_teacher(const Dataset& dataset, const TrainConfig& cfg, const TrainHooks& hooks) {
  if (dataset.count(Split::kTrain) == 0) throw std::invalid_argument("train: empty training split");
  TrainState state = init_train_state(cfg, dataset.input_dim);
  Calibrate(state, dataset, cfg);
  return RunEpochs(state, dataset, cfg, hooks, nullptr, {});
}

EpochRecord warmup_student(const EncoderParams& teacher, TrainState& student,
                           const Dataset& dataset, const TrainConfig& cfg,
                           const TrainHooks& hooks) {
  const auto start = Clock::now();
  const LabeledSet train = dataset.subset(Split::kTrain);
  EpochRecord record;
  record.phase = "warmup";
  record.epoch = 0;
  record.lr = scheduled_lr(cfg.lr, 0, cfg.lr_decay_every, cfg.lr_decay_factor);

  Trace(hooks, "extract");
  const auto teacher_emb = extract_embeddings(teacher, train.inputs, cfg.batch_norm);
  Trace(hooks, "cluster");
  student.labels = generate_pseudo_labels(teacher_emb, cfg.lambda1, cfg.dbscan(), 0, cfg.threads());
  record.num_clusters = student.labels.num_clusters;
  record.num_outliers = student.labels.num_outliers();
  if (student.labels.num_clusters == 0) {
    throw std::runtime_error("warm-up: teacher embeddings produced no clusters");
  }
  Trace(hooks, "init_memory");
  student.bank = init_memory(teacher_emb, student.labels, cfg.momentum);
  student.bank.freeze();

  record.iterations = iterations_per_epoch(cfg, student.labels) * cfg.warmup_multiplier;
  const BatchContext ctx{cfg, hooks, train.inputs, student.labels, nullptr, false, record.lr};
  double loss_sum = 0.0;
  for (int it = 0; it < record.iterations; ++it) loss_sum += RunBatch(student, student.bank, ctx);
  if (record.iterations > 0) record.mean_loss = loss_sum / record.iterations;

  Evaluate(student.params, dataset, cfg, student.labels, train, record);
  if (!cfg.deterministic) {
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  }
  return record;
}

TrainResult train_student(const EncoderParams& teacher, const Dataset& dataset,
                          const TrainConfig& cfg, const TrainHooks& hooks) {
  if (dataset.count(Split::kTrain) == 0) throw std::invalid_argument("train: empty training split");
  validate(teacher);
  if (teacher.shape.input_dim != dataset.input_dim) {
    throw std::invalid_argument("train: teacher input dimension does not match the dataset");
  }
  TrainState state = init_train_state(cfg, dataset.input_dim);
  if (!(state.params.shape == teacher.shape)) {
    throw std::invalid_argument("train: teacher and student architectures differ");
  }
  Calibrate(state, dataset, cfg);
  EpochRecord warm = warmup_student(teacher, state, dataset, cfg, hooks);
  if (hooks.on_epoch) hooks.on_epoch(warm);
  return RunEpochs(state, dataset, cfg, hooks, &teacher, {warm});
}

}  // namespace mskd
