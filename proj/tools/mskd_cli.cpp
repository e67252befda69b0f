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

// Command-line front end: dataset generation, teacher and student training,
// evaluation and the gradient check.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mskd/config.hpp"
#include "mskd/data.hpp"
#include "mskd/encoder.hpp"
#include "mskd/evaluation.hpp"
#include "mskd/gradcheck.hpp"
#include "mskd/optimizer.hpp"
#include "mskd/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheckFailed = 3;

namespace fs = std::filesystem;

// Precedence: --seed, then MSKD_SEED, then the config file.
mskd::RunConfig LoadRunConfig(const std::string& path, std::optional<std::uint64_t> seed) {
  mskd::RunConfig cfg = path.empty() ? mskd::RunConfig{} : mskd::load_config(path);
  mskd::apply_seed_override(cfg);
  if (seed) cfg.synth.seed = cfg.train.seed = *seed;
  return cfg;
}

// Each training run starts a fresh log.
mskd::TrainHooks MetricsHooks(const fs::path& metrics) {
  std::ofstream truncate(metrics, std::ios::trunc);
  if (!truncate) throw std::runtime_error("cannot write metrics file: " + metrics.string());
  mskd::TrainHooks hooks;
  hooks.on_epoch = [metrics](const mskd::EpochRecord& r) {
    mskd::append_metrics(mskd::to_json(r), metrics);
  };
  return hooks;
}

void SaveRun(const mskd::TrainResult& result, const fs::path& out) {
  mskd::save_checkpoint(result.params, out);
  fs::path opt = out;
  opt += ".opt";
  mskd::save_optimizer_state(result.adam, opt);
}

void PrintSummary(const mskd::TrainResult& result) {
  if (result.records.empty()) return;
  const auto& last = result.records.back();
  std::cout << mskd::to_json(last).dump() << "\n";
}

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::string metrics;
  std::string teacher;
  std::string ckpt;
  std::string report;
  std::optional<std::uint64_t> seed;
  int trials = 50;
};

int GenData(const Options& o) {
  const mskd::RunConfig cfg = LoadRunConfig(o.config, o.seed);
  mskd::save_dataset(mskd::generate_synthetic(cfg.synth), o.out);
  return kExitOk;
}

int TrainTeacher(const Options& o) {
  const mskd::RunConfig cfg = LoadRunConfig(o.config, std::nullopt);
  const mskd::Dataset ds = mskd::load_dataset(o.data);
  const mskd::TrainResult result = mskd::train_teacher(ds, cfg.train, MetricsHooks(o.metrics));
  SaveRun(result, o.out);
  PrintSummary(result);
  return kExitOk;
}

int TrainStudent(const Options& o) {
  const mskd::RunConfig cfg = LoadRunConfig(o.config, std::nullopt);
  const mskd::Dataset ds = mskd::load_dataset(o.data);
  const mskd::EncoderParams teacher = mskd::load_checkpoint(o.teacher);
  const mskd::TrainResult result =
      mskd::train_student(teacher, ds, cfg.train, MetricsHooks(o.metrics));
  SaveRun(result, o.out);
  PrintSummary(result);
  return kExitOk;
}

int Evaluate(const Options& o) {
  const mskd::EncoderParams params = mskd::load_checkpoint(o.ckpt);
  const mskd::Dataset ds = mskd::load_dataset(o.data);
  if (params.shape.input_dim != ds.input_dim) {
    throw std::invalid_argument("checkpoint input dimension does not match the dataset");
  }
  const auto report = mskd::evaluate(params, ds.subset(mskd::Split::kQuery),
                                     ds.subset(mskd::Split::kGallery));
  const nlohmann::json j = mskd::to_json(report);
  std::cout << j.dump() << "\n";
  if (!o.report.empty()) mskd::append_metrics(j, o.report);
  return kExitOk;
}

int Gradcheck(const Options& o) {
  mskd::GradcheckOptions options;
  options.trials = o.trials;
  bool ok = true;
  for (const auto& r : mskd::run_gradcheck(options)) {
    std::printf("%-18s trials=%d max_rel_err=%.3e %s\n", r.name.c_str(), r.trials,
                r.max_relative_error, r.passed ? "ok" : "FAILED");
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale cluster-contrast training with teacher-guided distillation"};
  app.require_subcommand(1);
  Options o;
  int (*action)(const Options&) = nullptr;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic identity dataset");
  gen->add_option("--config", o.config, "Config file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "Dataset file to write")->required();
  gen->add_option("--seed", o.seed, "Overrides the configured seed");
  gen->callback([&] { action = GenData; });

  auto* teacher = app.add_subcommand("train-teacher", "Train a teacher from scratch");
  teacher->add_option("--config", o.config, "Config file")->required()->check(CLI::ExistingFile);
  teacher->add_option("--data", o.data, "Dataset file")->required()->check(CLI::ExistingFile);
  teacher->add_option("--out", o.out, "Checkpoint to write")->required();
  teacher->add_option("--metrics", o.metrics, "Per-epoch metrics log")->required();
  teacher->callback([&] { action = TrainTeacher; });

  auto* student = app.add_subcommand("train-student", "Train a student guided by a teacher");
  student->add_option("--config", o.config, "Config file")->required()->check(CLI::ExistingFile);
  student->add_option("--data", o.data, "Dataset file")->required()->check(CLI::ExistingFile);
  student->add_option("--teacher", o.teacher, "Teacher checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  student->add_option("--out", o.out, "Checkpoint to write")->required();
  student->add_option("--metrics", o.metrics, "Per-epoch metrics log")->required();
  student->callback([&] { action = TrainStudent; });

  auto* eval = app.add_subcommand("evaluate", "Retrieval metrics of a checkpoint");
  eval->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", o.data, "Dataset file")->required()->check(CLI::ExistingFile);
  eval->add_option("--report", o.report, "Append the report to this file");
  eval->callback([&] { action = Evaluate; });

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("--trials", o.trials, "Random instances per check")
      ->check(CLI::PositiveNumber);
  grad->callback([&] { action = Gradcheck; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
