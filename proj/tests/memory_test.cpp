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

#include "mskd/memory.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace mskd {
namespace {

MultiScaleEmbedding Embedding(std::mt19937_64& rng, std::size_t dim) {
  MultiScaleEmbedding e;
  for (auto& v : e.branch) v = oracle::RandomUnit(dim, rng);
  return e;
}

ClusterMemoryBank RandomBank(std::mt19937_64& rng, std::size_t clusters, std::size_t dim,
                             double m) {
  std::array<Matrix, kNumBranches> c;
  for (auto& mat : c) mat = oracle::RandomUnitRows(clusters, dim, rng);
  return ClusterMemoryBank(c, m);
}

TEST(MemoryTest, InitializesToClusterMeansAndSkipsOutliers) {
  std::mt19937_64 rng(1);
  std::vector<MultiScaleEmbedding> emb;
  for (int i = 0; i < 6; ++i) emb.push_back(Embedding(rng, 4));
  PseudoLabeling labels{{1, 0, kOutlier, 1, 0, 1}, 2, 0};
  const ClusterMemoryBank bank = init_memory(emb, labels, 0.2);
  ASSERT_EQ(bank.num_clusters(), 2u);
  EXPECT_EQ(bank.momentum(), 0.2);
  for (Branch b : kAllBranches) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(bank.centroids(b)(0, c), (emb[1][b][c] + emb[4][b][c]) / 2.0, 1e-15);
      EXPECT_NEAR(bank.centroids(b)(1, c), (emb[0][b][c] + emb[3][b][c] + emb[5][b][c]) / 3.0,
                  1e-15);
    }
  }
  EXPECT_THROW(init_memory(emb, PseudoLabeling{std::vector<int>(6, kOutlier), 0, 0}, 0.2),
               std::invalid_argument);
}

TEST(MemoryTest, MomentumOneIsNoOpAndZeroReplaces) {
  std::mt19937_64 rng(2);
  ClusterMemoryBank keep = RandomBank(rng, 3, 5, 1.0);
  const ClusterMemoryBank before = keep;
  const Vec u = oracle::RandomUnit(5, rng);
  keep.momentum_update(Branch::kUp, 1, u);
  EXPECT_EQ(keep, before);

  ClusterMemoryBank replace = RandomBank(rng, 3, 5, 0.0);
  replace.momentum_update(Branch::kDown, 2, u);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(replace.centroids(Branch::kDown)(2, c), u[c]);
}

TEST(MemoryTest, RepeatedUpdatesMatchClosedForm) {
  std::mt19937_64 rng(3);
  for (double m : {0.1, 0.5, 0.9, 0.99}) {
    ClusterMemoryBank bank = RandomBank(rng, 2, 6, m);
    const Matrix phi0 = bank.centroids(Branch::kGlobal);
    const Vec u = oracle::RandomUnit(6, rng);
    for (int t = 1; t <= 25; ++t) {
      bank.momentum_update(Branch::kGlobal, 0, u);
      const double mt = std::pow(m, t);
      for (std::size_t c = 0; c < 6; ++c) {
        EXPECT_NEAR(bank.centroids(Branch::kGlobal)(0, c), mt * phi0(0, c) + (1.0 - mt) * u[c],
                    1e-10);
      }
    }
    for (std::size_t c = 0; c < 6; ++c) {
      EXPECT_EQ(bank.centroids(Branch::kGlobal)(1, c), phi0(1, c));
    }
  }
}

TEST(MemoryTest, SharedIdUpdatesEveryBranch) {
  std::mt19937_64 rng(4);
  ClusterMemoryBank bank = RandomBank(rng, 2, 3, 0.0);
  const MultiScaleEmbedding q = Embedding(rng, 3);
  bank.momentum_update(1, q);
  for (Branch b : kAllBranches) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(bank.centroids(b)(1, c), q[b][c]);
  }
}

TEST(MemoryTest, FrozenBankRefusesUpdates) {
  std::mt19937_64 rng(5);
  ClusterMemoryBank bank = RandomBank(rng, 2, 3, 0.1);
  bank.freeze();
  const ClusterMemoryBank before = bank;
  EXPECT_THROW(bank.momentum_update(Branch::kGlobal, 0, Vec(3, 0.5)), std::logic_error);
  EXPECT_THROW(bank.momentum_update(0, Embedding(rng, 3)), std::logic_error);
  EXPECT_EQ(bank, before);
}

TEST(MemoryTest, BadIdsAndDimensions) {
  std::mt19937_64 rng(6);
  ClusterMemoryBank bank = RandomBank(rng, 2, 3, 0.1);
  EXPECT_THROW(bank.momentum_update(Branch::kGlobal, 2, Vec(3, 0.5)), std::out_of_range);
  EXPECT_THROW(bank.momentum_update(Branch::kGlobal, 0, Vec(4, 0.5)), std::invalid_argument);
  EXPECT_THROW(RandomBank(rng, 2, 3, 1.5), std::invalid_argument);
}

TEST(MemoryTest, OptionalRenormalization) {
  std::mt19937_64 rng(7);
  ClusterMemoryBank bank = RandomBank(rng, 1, 4, 0.5);
  bank.renormalize_centroids = true;
  bank.momentum_update(Branch::kUp, 0, oracle::RandomUnit(4, rng));
  EXPECT_NEAR(l2_norm(bank.centroids(Branch::kUp).row(0)), 1.0, 1e-12);
}

TEST(MemoryTest, SimilarityRowIsDotProducts) {
  std::mt19937_64 rng(8);
  const ClusterMemoryBank bank = RandomBank(rng, 4, 5, 0.1);
  const Vec u = oracle::RandomUnit(5, rng);
  const Vec s = bank.similarity_row(Branch::kDown, u);
  ASSERT_EQ(s.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    double dot = 0.0;
    for (std::size_t c = 0; c < 5; ++c) dot += u[c] * bank.centroids(Branch::kDown)(k, c);
    EXPECT_NEAR(s[k], dot, 1e-14);
  }
}

}  // namespace
}  // namespace mskd
