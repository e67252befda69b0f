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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 3 when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "mskd/clustering.hpp"
#include "mskd/data.hpp"
#include "mskd/encoder.hpp"
#include "mskd/evaluation.hpp"
#include "mskd/gradcheck.hpp"
#include "mskd/losses.hpp"
#include "mskd/memory.hpp"
#include "mskd/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace mskd {
namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures += " [failed: " + what + "]";
    }
  }
};

std::string Fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

bool BytesEqual(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.flat().data(), b.flat().data(), a.flat().size_bytes()) == 0;
}

bool BytesEqual(const Vec& a, const Vec& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool BytesEqual(const ClusterMemoryBank& a, const ClusterMemoryBank& b) {
  for (Branch br : {Branch::kGlobal, Branch::kUp, Branch::kDown}) {
    if (!BytesEqual(a.centroids(br), b.centroids(br))) return false;
  }
  return true;
}

// ---------------------------------------------------------------- 1
void GradientSuite(Outcome& out) {
  const auto start = Clock::now();
  GradcheckOptions opt;
  opt.trials = 20;
  opt.step = 1e-5;
  opt.tolerance = 1e-4;
  const auto results = run_gradcheck(opt);
  const double elapsed = Seconds(start);
  double worst = 0.0;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_relative_error);
    out.require(r.passed && r.trials >= 20 && r.max_relative_error < 1e-4, r.name);
  }
  out.require(results.size() >= 5, "all gradient checks present");
  out.require(elapsed < 30.0, "runtime < 30 s");
  out.detail << results.size() << " checks x 20 trials, max rel err " << worst << ", "
             << Fmt(elapsed, 2) << " s";
}

// ---------------------------------------------------------------- 2
void DbscanOracle(Outcome& out) {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(1, 64);
  std::uniform_real_distribution<double> eps(0.01, 0.5);
  std::uniform_int_distribution<int> min_pts(1, 10);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix d = oracle::RandomPlaneDistances(size(rng), rng);
    const DbscanConfig cfg{eps(rng), min_pts(rng)};
    if (dbscan(d, cfg) != oracle::BruteForceDbscan(d, cfg.eps, cfg.min_pts)) ++mismatches;
  }
  const double elapsed = Seconds(start);
  out.require(mismatches == 0, "exact partition match");
  out.require(elapsed < 60.0, "runtime < 60 s");
  out.detail << "1000 instances, " << mismatches << " mismatches, " << Fmt(elapsed, 2) << " s";
}

// ---------------------------------------------------------------- 3
void LossClosedForms(Outcome& out) {
  std::mt19937_64 rng(3);
  Matrix one = oracle::RandomUnitRows(1, 6, rng);
  const double single = cluster_nce(oracle::RandomUnit(6, rng), one, 0, 0.05).loss;
  out.require(single == 0.0, "C=1 loss is exactly 0");

  Matrix two(2, 2);
  two(0, 0) = 1.0;
  two(1, 1) = 1.0;
  const double pair = cluster_nce(Vec{1.0, 0.0}, two, 0, 1.0).loss;
  const double expected = std::log1p(std::exp(-1.0));
  out.require(std::abs(pair - expected) < 1e-10, "two-cluster loss");
  out.require(std::abs(pair - 0.313262) < 1e-6, "two-cluster loss ~ 0.313262");

  bool bit_equal = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::array<Matrix, kNumBranches> c;
    for (auto& m : c) m = oracle::RandomUnitRows(5, 8, rng);
    const ClusterMemoryBank bank(c, 0.1);
    MultiScaleEmbedding s, t;
    for (auto& v : s.branch) v = oracle::RandomUnit(8, rng);
    for (auto& v : t.branch) v = oracle::RandomUnit(8, rng);
    LossConfig cfg;
    cfg.mu = 0.0;
    const std::size_t pos = static_cast<std::size_t>(trial % 5);
    const BranchLoss a = stage1_loss(s, bank, pos, cfg);
    const BranchLoss b = stage2_loss(s, t, bank, pos, cfg);
    bit_equal = bit_equal && std::memcmp(&a.loss, &b.loss, sizeof(double)) == 0;
    for (std::size_t br = 0; br < kNumBranches; ++br) {
      bit_equal = bit_equal && BytesEqual(a.grad.branch[br], b.grad.branch[br]);
    }
  }
  out.require(bit_equal, "stage2(mu=0) bit-equal to stage1");
  out.detail << "C=1 loss " << single << ", two-cluster " << Fmt(pair, 12) << " vs "
             << Fmt(expected, 12) << ", stage2(mu=0) " << (bit_equal ? "bit-equal" : "differs");
}

// ---------------------------------------------------------------- 4
void MemoryAlgebra(Outcome& out) {
  std::mt19937_64 rng(4);
  std::array<Matrix, kNumBranches> c;
  for (auto& m : c) m = oracle::RandomUnitRows(4, 6, rng);
  const Vec u = oracle::RandomUnit(6, rng);

  ClusterMemoryBank keep(c, 1.0);
  keep.momentum_update(Branch::kGlobal, 2, u);
  out.require(BytesEqual(keep.centroids(Branch::kGlobal), c[0]), "m=1 no-op");

  ClusterMemoryBank replace(c, 0.0);
  replace.momentum_update(Branch::kGlobal, 2, u);
  const auto row = replace.centroids(Branch::kGlobal).row(2);
  out.require(std::equal(row.begin(), row.end(), u.begin()), "m=0 replacement");

  double worst = 0.0;
  for (double m : {0.1, 0.5, 0.9, 0.99}) {
    ClusterMemoryBank bank(c, m);
    const int steps = 30;
    for (int t = 0; t < steps; ++t) bank.momentum_update(Branch::kUp, 1, u);
    const double mt = std::pow(m, steps);
    for (std::size_t j = 0; j < u.size(); ++j) {
      const double closed = mt * c[1](1, j) + (1.0 - mt) * u[j];
      worst = std::max(worst, std::abs(bank.centroids(Branch::kUp)(1, j) - closed));
    }
  }
  out.require(worst < 1e-10, "closed form m^t");

  // Warm-up against an independently built frozen bank.
  SynthConfig synth;
  const Dataset ds = generate_synthetic(synth);
  TrainConfig cfg;
  cfg.num_iterations = 3;
  cfg.warmup_multiplier = 2;
  const LabeledSet train = ds.subset(Split::kTrain);
  EncoderParams teacher = init_train_state(cfg, ds.input_dim).params;
  std::mt19937_64 other(99);
  teacher = init_encoder(teacher.shape, other);
  calibrate_batch_norm(teacher, train.inputs);
  const auto emb = extract_embeddings(teacher, train.inputs, cfg.batch_norm);
  ClusterMemoryBank reference =
      init_memory(emb, generate_pseudo_labels(emb, cfg.lambda1, cfg.dbscan()), cfg.momentum);
  TrainState student = init_train_state(cfg, ds.input_dim);
  const EncoderParams before = student.params;
  const EpochRecord warm = warmup_student(teacher, student, ds, cfg);
  const bool stable = student.bank.frozen() && BytesEqual(student.bank, reference);
  out.require(warm.iterations > 0, "warm-up ran batches");
  out.require(!(student.params == before), "warm-up trained the student");
  out.require(stable, "frozen bank byte-stable through warm-up");
  bool rejected = false;
  try {
    student.bank.momentum_update(0, emb.front());
  } catch (const std::logic_error&) {
    rejected = true;
  }
  out.require(rejected && BytesEqual(student.bank, reference), "frozen bank rejects updates");
  out.detail << "closed-form max err " << worst << ", warm-up " << warm.iterations
             << " batches over " << warm.num_clusters << " clusters, bank "
             << (stable ? "byte-stable" : "changed");
}

// ---------------------------------------------------------------- 5
void BlendCollapse(Outcome& out) {
  Matrix g(2, 2), up(2, 2), down(2, 2);
  g(0, 1) = g(1, 0) = 0.5;
  up(0, 1) = up(1, 0) = 0.3;
  down(0, 1) = down(1, 0) = 0.1;
  const double entry = blended_distance(g, up, down, 0.2)(0, 1);
  out.require(std::abs(entry - 0.38) < 1e-15, "blend entry 0.38");

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> eps(0.05, 0.8);
  std::uniform_int_distribution<int> min_pts(1, 6);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MultiScaleEmbedding> emb(40);
    for (auto& e : emb) {
      for (auto& v : e.branch) v = oracle::RandomUnit(4, rng);
    }
    std::vector<Vec> rows;
    for (const auto& e : emb) rows.push_back(e.global());
    const Matrix gm = stack_rows(rows);
    const DbscanConfig cfg{eps(rng), min_pts(rng)};
    const PseudoLabeling global_only = compact_labels(dbscan(cosine_distance_matrix(gm, gm), cfg));
    if (!(generate_pseudo_labels(emb, 0.0, cfg) == global_only)) ++mismatches;
  }
  out.require(mismatches == 0, "lambda1=0 equals global-only clustering");
  out.detail << "blend(0.5,0.3,0.1) = " << Fmt(entry, 15) << ", lambda1=0 mismatches "
             << mismatches << "/200";
}

// ---------------------------------------------------------------- 6 and 7
// Pair-level agreement over every training instance; each outlier counts as
// its own singleton cluster.
double StrictAri(const PseudoLabeling& labels, const std::vector<int>& truth) {
  std::vector<int> pred = labels.assignment;
  int next = labels.num_clusters;
  for (int& p : pred) {
    if (p == kOutlier) p = next++;
  }
  return adjusted_rand_index(pred, truth);
}

TrainConfig CriterionConfig(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.num_epochs = 15;
  cfg.seed = seed;
  cfg.deterministic = true;
  return cfg;
}

SynthConfig CriterionData(std::uint64_t seed) {
  SynthConfig synth;
  synth.seed = seed;
  return synth;
}

// 1-based epoch index of the first record with mAP >= 0.90, or 0.
int EpochsToTarget(const std::vector<EpochRecord>& records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].mean_ap && *records[i].mean_ap >= 0.90) return static_cast<int>(i) + 1;
  }
  return 0;
}

TrainResult teacher_seed1;
bool teacher_seed1_ok = false;

void EndToEndTeacher(Outcome& out) {
  const auto start = Clock::now();
  const Dataset ds = generate_synthetic(CriterionData(1));
  const TrainConfig cfg = CriterionConfig(1);
  try {
    teacher_seed1 = train_teacher(ds, cfg);
    teacher_seed1_ok = true;
  } catch (const std::exception& e) {
    out.require(false, std::string("training threw: ") + e.what());
    return;
  }
  const double elapsed = Seconds(start);
  const LabeledSet train = ds.subset(Split::kTrain);
  const auto emb = extract_embeddings(teacher_seed1.params, train.inputs, cfg.batch_norm);
  const PseudoLabeling final_labels = generate_pseudo_labels(emb, cfg.lambda1, cfg.dbscan());
  const double ari = StrictAri(final_labels, train.identities);
  const EvaluationReport rep =
      evaluate(teacher_seed1.params, ds.subset(Split::kQuery), ds.subset(Split::kGallery));
  out.require(ari >= 0.95, "pseudo-label ARI >= 0.95");
  out.require(rep.mean_ap >= 0.90, "mAP >= 0.90");
  out.require(rep.rank1() >= 0.95, "R1 >= 0.95");
  out.require(elapsed < 300.0, "runtime < 5 min");
  out.detail << "clusters " << final_labels.num_clusters << " (20 identities), outliers "
             << final_labels.num_outliers() << ", ARI " << Fmt(ari) << ", mAP "
             << Fmt(rep.mean_ap) << ", R1 " << Fmt(rep.rank1()) << ", " << Fmt(elapsed, 1)
             << " s";
}

void DistillationSpeedup(Outcome& out) {
  const auto start = Clock::now();
  std::vector<int> teacher_counts, student_counts;
  std::ostringstream per_seed;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const Dataset ds = generate_synthetic(CriterionData(seed));
    const TrainConfig cfg = CriterionConfig(seed);
    TrainState init = init_train_state(cfg, ds.input_dim);
    calibrate_batch_norm(init.params, ds.subset(Split::kTrain).inputs);
    const double init_map =
        evaluate(init.params, ds.subset(Split::kQuery), ds.subset(Split::kGallery)).mean_ap;
    try {
      const TrainResult teacher =
          seed == 1 && teacher_seed1_ok ? teacher_seed1 : train_teacher(ds, cfg);
      const TrainResult student = train_student(teacher.params, ds, cfg);
      // A run that never reaches the target counts as one epoch past its budget.
      const int t = EpochsToTarget(teacher.records);
      const int s = EpochsToTarget(student.records);
      teacher_counts.push_back(t > 0 ? t : cfg.num_epochs + 1);
      student_counts.push_back(s > 0 ? s : cfg.num_epochs + 2);
      per_seed << " seed " << seed << ": init mAP " << Fmt(init_map) << ", teacher "
               << teacher_counts.back() << ", student " << student_counts.back() << ";";
    } catch (const std::exception& e) {
      out.require(false, std::string("seed ") + std::to_string(seed) + " threw: " + e.what());
      return;
    }
  }
  std::sort(teacher_counts.begin(), teacher_counts.end());
  std::sort(student_counts.begin(), student_counts.end());
  const int t_med = teacher_counts[1];
  const int s_med = student_counts[1];
  const double elapsed = Seconds(start);
  out.require(2 * s_med <= t_med, "student epochs <= 50% of teacher epochs");
  out.require(elapsed < 900.0, "runtime < 15 min");
  out.detail << "median epochs to mAP>=0.90: student " << s_med << " (warm-up counted) vs teacher "
             << t_med << ";" << per_seed.str() << " " << Fmt(elapsed, 1) << " s";
}

// ---------------------------------------------------------------- 8
int RunCli(const std::string& args, const std::filesystem::path& stdout_file) {
  const std::string cmd =
      std::string(MSKD_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void CliDeterminism(Outcome& out) {
  testing::TempDir dir;
  testing::WriteFile(dir / "cfg.txt",
                     "num_epochs = 3\n"
                     "deterministic = true\n"
                     "seed = 8\n");
  const std::string cfg = (dir / "cfg.txt").string();
  std::vector<std::string> produced;
  for (const std::string tag : {"a_", "b_"}) {
    const auto p = [&](const std::string& name) { return (dir / (tag + name)).string(); };
    const std::vector<std::pair<std::string, std::string>> steps = {
        {"gen-data", "gen-data --config " + cfg + " --out " + p("data.txt")},
        {"train-teacher", "train-teacher --config " + cfg + " --data " + p("data.txt") +
                              " --out " + p("t.ckpt") + " --metrics " + p("t.jsonl")},
        {"train-student", "train-student --config " + cfg + " --data " + p("data.txt") +
                              " --teacher " + p("t.ckpt") + " --out " + p("s.ckpt") +
                              " --metrics " + p("s.jsonl")},
        {"evaluate", "evaluate --ckpt " + p("s.ckpt") + " --data " + p("data.txt") +
                         " --report " + p("r.jsonl")},
        {"gradcheck", "gradcheck --trials 3"},
    };
    for (const auto& [name, args] : steps) {
      const int code = RunCli(args, p(name + ".out"));
      out.require(code == 0, name + " exit code " + std::to_string(code));
    }
  }
  const std::vector<std::string> files = {
      "data.txt",          "t.ckpt",         "t.ckpt.opt",        "t.jsonl",
      "s.ckpt",            "s.ckpt.opt",     "s.jsonl",           "r.jsonl",
      "gen-data.out",      "train-teacher.out", "train-student.out", "evaluate.out",
      "gradcheck.out"};
  int compared = 0;
  for (const auto& f : files) {
    const auto a = dir / ("a_" + f);
    const auto b = dir / ("b_" + f);
    if (!std::filesystem::exists(a) || !std::filesystem::exists(b)) {
      out.require(false, f + " missing");
      continue;
    }
    const std::string ba = testing::ReadFile(a);
    if (!f.ends_with(".out")) out.require(!ba.empty(), f + " empty");
    out.require(ba == testing::ReadFile(b), f + " differs");
    ++compared;
  }
  out.detail << compared << " artifacts across 5 subcommands compared byte for byte";
}

// ---------------------------------------------------------------- 9
void EvaluationOracle(Outcome& out) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> nq(1, 12), ng(1, 30);
  std::uniform_int_distribution<int> id(-1, 5), cam(0, 2);
  double worst = 0.0;
  std::size_t skipped = 0, excluded = 0;
  int count_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    // A small pool of directions produces exact distance ties.
    const Matrix pool = oracle::RandomUnitRows(7, 6, rng);
    std::uniform_int_distribution<std::size_t> pick(0, pool.rows() - 1);
    const std::size_t q_rows = nq(rng), g_rows = ng(rng);
    Matrix q(q_rows, 6), g(g_rows, 6);
    std::vector<int> qid, qcam, gid, gcam;
    for (std::size_t i = 0; i < q_rows; ++i) {
      const auto src = pool.row(pick(rng));
      std::copy(src.begin(), src.end(), q.row(i).begin());
      qid.push_back(id(rng));
      qcam.push_back(cam(rng));
    }
    for (std::size_t j = 0; j < g_rows; ++j) {
      const auto src = pool.row(pick(rng));
      std::copy(src.begin(), src.end(), g.row(j).begin());
      gid.push_back(id(rng));
      gcam.push_back(cam(rng));
    }
    for (std::size_t i = 0; i < q_rows; ++i) {
      for (std::size_t j = 0; j < g_rows; ++j) excluded += qid[i] == gid[j] && qcam[i] == gcam[j];
    }
    const EvaluationReport r = evaluate_embeddings(q, qid, qcam, g, gid, gcam);
    const auto n = oracle::NaiveEvaluate(q, qid, qcam, g, gid, gcam);
    worst = std::max(worst, std::abs(r.mean_ap - n.mean_ap));
    for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(r.cmc[k] - n.cmc[k]));
    count_mismatch += r.skipped != n.skipped || r.num_queries != q_rows;
    skipped += r.skipped;
  }
  out.require(worst <= 1e-12, "metrics within 1e-12");
  out.require(count_mismatch == 0, "skipped-query counts");
  out.require(skipped > 0 && excluded > 0, "exercise exclusion and skipping");
  out.detail << "100 instances, max abs diff " << worst << ", " << excluded
             << " same-camera exclusions, " << skipped << " skipped queries";
}

}  // namespace
}  // namespace mskd

int main() {
  using mskd::Outcome;
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"gradient suite", mskd::GradientSuite},
      {"DBSCAN oracle equivalence", mskd::DbscanOracle},
      {"loss closed forms", mskd::LossClosedForms},
      {"memory algebra", mskd::MemoryAlgebra},
      {"blend collapse", mskd::BlendCollapse},
      {"end-to-end teacher", mskd::EndToEndTeacher},
      {"distillation speed-up", mskd::DistillationSpeedup},
      {"CLI determinism", mskd::CliDeterminism},
      {"evaluation oracle", mskd::EvaluationOracle},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      criteria[i].second(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    failed += out.pass ? 0 : 1;
    std::printf("%s criterion %zu (%s): %s\n", out.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), (out.detail.str() + out.failures).c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 3;
}
