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

#include "mskd/kernels.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mskd/encoder.hpp"
#include "oracles.hpp"

namespace mskd::kernels {
namespace {

std::vector<double> RandomVec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double AbsDot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] * y[i]);
  return s;
}

TEST(KernelsTest, ScalarMatchesPlainLoops) {
  std::mt19937_64 rng(3);
  const KernelTable& t = scalar_table();
  for (std::size_t n = 0; n < 68; ++n) {
    const auto x = RandomVec(n, rng), y = RandomVec(n, rng), z = RandomVec(n, rng);
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += x[i] * y[i];
    EXPECT_EQ(t.dot(x.data(), y.data(), n), dot);

    auto y1 = y;
    t.axpy(0.7, x.data(), y1.data(), n);
    auto y2 = y;
    t.axpby(0.3, x.data(), -1.5, y2.data(), n);
    std::vector<double> out(n);
    t.blend3(0.6, x.data(), 0.2, y.data(), 0.2, z.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(y1[i], y[i] + 0.7 * x[i]);
      EXPECT_EQ(y2[i], 0.3 * x[i] + -1.5 * y[i]);
      EXPECT_EQ(out[i], 0.6 * x[i] + 0.2 * y[i] + 0.2 * z[i]);
    }
  }
}

class Avx2Test : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!backend_available(Backend::kAvx2)) GTEST_SKIP() << "AVX2/FMA not available";
  }
};

TEST_F(Avx2Test, MatchesScalarOnEveryLength) {
  std::mt19937_64 rng(5);
  const KernelTable& s = table_for(Backend::kScalar);
  const KernelTable& v = table_for(Backend::kAvx2);
  for (std::size_t n = 0; n < 68; ++n) {
    const auto x = RandomVec(n, rng), y = RandomVec(n, rng), z = RandomVec(n, rng);
    EXPECT_NEAR(v.dot(x.data(), y.data(), n), s.dot(x.data(), y.data(), n),
                1e-14 * (1.0 + AbsDot(x, y)))
        << "n=" << n;

    auto ys = y, yv = y;
    s.axpy(-0.37, x.data(), ys.data(), n);
    v.axpy(-0.37, x.data(), yv.data(), n);
    auto bs = y, bv = y;
    s.axpby(1.25, x.data(), 0.5, bs.data(), n);
    v.axpby(1.25, x.data(), 0.5, bv.data(), n);
    std::vector<double> os(n), ov(n);
    s.blend3(0.6, x.data(), 0.2, y.data(), 0.2, z.data(), os.data(), n);
    v.blend3(0.6, x.data(), 0.2, y.data(), 0.2, z.data(), ov.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(yv[i], ys[i], 1e-15);
      EXPECT_NEAR(bv[i], bs[i], 1e-15);
      EXPECT_NEAR(ov[i], os[i], 1e-15);
    }
  }
}

TEST_F(Avx2Test, OneMinusDotsMatchesScalar) {
  std::mt19937_64 rng(6);
  for (std::size_t n : {1u, 3u, 4u, 15u, 16u, 17u, 32u, 33u}) {
    const std::size_t rows = 7;
    const auto a = RandomVec(rows * n, rng), b = RandomVec(n, rng);
    std::vector<double> os(rows), ov(rows);
    table_for(Backend::kScalar).one_minus_dots(a.data(), rows, b.data(), n, os.data());
    table_for(Backend::kAvx2).one_minus_dots(a.data(), rows, b.data(), n, ov.data());
    for (std::size_t r = 0; r < rows; ++r) EXPECT_NEAR(ov[r], os[r], 1e-14);
  }
}

TEST_F(Avx2Test, UnalignedPointersAndRepeatability) {
  std::mt19937_64 rng(8);
  const auto x = RandomVec(101, rng), y = RandomVec(101, rng);
  const KernelTable& v = table_for(Backend::kAvx2);
  for (std::size_t off = 0; off < 4; ++off) {
    const double first = v.dot(x.data() + off, y.data() + 1, 97);
    const double second = v.dot(x.data() + off, y.data() + 1, 97);
    EXPECT_EQ(first, second);
    EXPECT_NEAR(first, table_for(Backend::kScalar).dot(x.data() + off, y.data() + 1, 97), 1e-13);
  }
}

TEST_F(Avx2Test, EncoderForwardAgreesAcrossBackends) {
  std::mt19937_64 rng(11);
  const EncoderParams params = init_encoder(EncoderShape{}, rng);
  Matrix inputs(6, params.shape.input_dim);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& x : inputs.flat()) x = nd(rng);

  ForwardResult scalar, vector;
  {
    ScopedBackend use(Backend::kScalar);
    scalar = forward(params, inputs, {Mode::kTrain, true});
  }
  {
    ScopedBackend use(Backend::kAvx2);
    vector = forward(params, inputs, {Mode::kTrain, true});
  }
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    for (Branch b : kAllBranches) {
      for (std::size_t c = 0; c < params.shape.channels; ++c) {
        EXPECT_NEAR(scalar.embeddings[i][b][c], vector.embeddings[i][b][c], 1e-10);
      }
    }
  }
}

TEST(KernelsTest, ScopedBackendRestoresPrevious) {
  const Backend before = active_backend();
  {
    ScopedBackend use(Backend::kScalar);
    EXPECT_EQ(active_backend(), Backend::kScalar);
    EXPECT_EQ(&active(), &scalar_table());
  }
  EXPECT_EQ(active_backend(), before);
  EXPECT_EQ(backend_name(Backend::kScalar), "scalar");
  EXPECT_EQ(backend_name(Backend::kAvx2), "avx2");
  if (!backend_available(Backend::kAvx2)) {
    EXPECT_THROW(select_backend(Backend::kAvx2), std::invalid_argument);
  }
}

}  // namespace
}  // namespace mskd::kernels
