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

#include "mskd/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "mskd/kernels.hpp"

namespace mskd {
namespace {

void FillNormal(Vec& v, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : v) x = dist(rng);
}

// Row ranges of the three pooling regions.
std::array<std::pair<std::size_t, std::size_t>, kNumBranches> BranchRows(std::size_t rows) {
  if (rows % 2 != 0) throw std::invalid_argument("odd row count");
  return {{{0, rows}, {0, rows / 2}, {rows / 2, rows}}};
}

template <typename Span, typename P>
std::vector<Span> Tensors(P& p) {
  std::vector<Span> out{p.w1, p.b1, p.w2, p.b2};
  for (auto& v : p.bn_scale) out.emplace_back(v);
  for (auto& v : p.bn_shift) out.emplace_back(v);
  return out;
}

}  // namespace

EncoderParams init_encoder(const EncoderShape& shape, std::mt19937_64& rng, double gem_p) {
  EncoderParams p;
  p.shape = shape;
  p.gem_p = gem_p;
  p.w1.assign(shape.input_dim * shape.hidden_dim, 0.0);
  p.b1.assign(shape.hidden_dim, 0.0);
  p.w2.assign(shape.hidden_dim * shape.map_size(), 0.0);
  p.b2.assign(shape.map_size(), 0.0);
  FillNormal(p.w1, rng, std::sqrt(2.0 / static_cast<double>(shape.input_dim)));
  FillNormal(p.w2, rng, std::sqrt(2.0 / static_cast<double>(shape.hidden_dim)));
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    p.bn_scale[b].assign(shape.channels, 1.0);
    p.bn_shift[b].assign(shape.channels, 0.0);
    p.bn_running_mean[b].assign(shape.channels, 0.0);
    p.bn_running_var[b].assign(shape.channels, 1.0);
  }
  validate(p);
  return p;
}

EncoderGrads zero_grads(const EncoderShape& shape) {
  EncoderGrads g;
  g.w1.assign(shape.input_dim * shape.hidden_dim, 0.0);
  g.b1.assign(shape.hidden_dim, 0.0);
  g.w2.assign(shape.hidden_dim * shape.map_size(), 0.0);
  g.b2.assign(shape.map_size(), 0.0);
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    g.bn_scale[b].assign(shape.channels, 0.0);
    g.bn_shift[b].assign(shape.channels, 0.0);
  }
  return g;
}

std::vector<std::span<double>> trainable_tensors(EncoderParams& params) {
  return Tensors<std::span<double>>(params);
}
std::vector<std::span<const double>> trainable_tensors(const EncoderParams& params) {
  return Tensors<std::span<const double>>(params);
}
std::vector<std::span<double>> trainable_tensors(EncoderGrads& grads) {
  return Tensors<std::span<double>>(grads);
}
std::vector<std::span<const double>> trainable_tensors(const EncoderGrads& grads) {
  return Tensors<std::span<const double>>(grads);
}

std::size_t num_trainable(const EncoderShape& s) {
  return s.input_dim * s.hidden_dim + s.hidden_dim + s.hidden_dim * s.map_size() +
         s.map_size() + 2 * kNumBranches * s.channels;
}

void validate(const EncoderParams& p) {
  const EncoderShape& s = p.shape;
  if (s.input_dim == 0 || s.hidden_dim == 0 || s.rows == 0 || s.cols == 0 ||
      s.channels == 0) {
    throw std::invalid_argument("encoder: zero dimension");
  }
  if (s.rows % 2 != 0) throw std::invalid_argument("odd row count");
  if (p.w1.size() != s.input_dim * s.hidden_dim || p.b1.size() != s.hidden_dim ||
      p.w2.size() != s.hidden_dim * s.map_size() || p.b2.size() != s.map_size()) {
    throw std::invalid_argument("encoder: parameter shape mismatch");
  }
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    if (p.bn_scale[b].size() != s.channels || p.bn_shift[b].size() != s.channels ||
        p.bn_running_mean[b].size() != s.channels ||
        p.bn_running_var[b].size() != s.channels) {
      throw std::invalid_argument("encoder: batch-norm shape mismatch");
    }
    for (double v : p.bn_running_var[b]) {
      if (!(v > 0.0)) throw std::invalid_argument("encoder: running variance must be > 0");
    }
  }
  if (!(p.gem_p >= 1.0)) throw std::invalid_argument("encoder: gem_p must be >= 1");
}

Matrix FeatureMap::region(std::size_t row_begin, std::size_t row_end) const {
  Matrix out((row_end - row_begin) * cols, channels);
  std::copy(values.begin() + static_cast<std::ptrdiff_t>(row_begin * cols * channels),
            values.begin() + static_cast<std::ptrdiff_t>(row_end * cols * channels),
            out.flat().begin());
  return out;
}

std::pair<Matrix, Matrix> split_feature_map(const FeatureMap& map) {
  if (map.rows % 2 != 0) throw std::invalid_argument("odd row count");
  return {map.region(0, map.rows / 2), map.region(map.rows / 2, map.rows)};
}

std::array<Vec, kNumBranches> pool_branches(const FeatureMap& map, double p) {
  const auto ranges = BranchRows(map.rows);
  std::array<Vec, kNumBranches> out;
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    out[b] = gem_pool(map.region(ranges[b].first, ranges[b].second), p);
  }
  return out;
}

FeatureMap ForwardCache::feature_map(std::size_t i, const EncoderShape& shape) const {
  FeatureMap map{shape.rows, shape.cols, shape.channels, Vec(shape.map_size())};
  const auto pre = map_pre.row(i);
  std::transform(pre.begin(), pre.end(), map.values.begin(),
                 [](double z) { return std::max(z, 0.0); });
  return map;
}

std::uint64_t fingerprint(const EncoderParams& params) {
  std::uint64_t h = detail::kFnvOffset;
  for (auto t : trainable_tensors(params)) h = detail::fnv1a(t, h);
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    h = detail::fnv1a(params.bn_running_mean[b], h);
    h = detail::fnv1a(params.bn_running_var[b], h);
  }
  const double p = params.gem_p;
  return detail::fnv1a(std::span<const double>(&p, 1), h);
}

ForwardResult forward(const EncoderParams& params, const Matrix& inputs,
                      const ForwardOptions& options) {
  validate(params);
  const EncoderShape& s = params.shape;
  if (inputs.cols() != s.input_dim) {
    throw std::invalid_argument("encoder: input dimension mismatch (expected " +
                                std::to_string(s.input_dim) + ", got " +
                                std::to_string(inputs.cols()) + ")");
  }
  const std::size_t batch = inputs.rows();
  if (batch == 0) throw std::invalid_argument("encoder: empty batch");
  const bool batch_stats = options.batch_norm && options.mode == Mode::kTrain;
  if (batch_stats && batch < 2) {
    throw std::invalid_argument("encoder: train-mode batch norm needs at least 2 inputs");
  }

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.mode = options.mode;
  cache.batch_norm = options.batch_norm;
  cache.params_fingerprint = fingerprint(params);
  cache.inputs = inputs;
  cache.hidden_pre = Matrix(batch, s.hidden_dim);
  cache.map_pre = Matrix(batch, s.map_size());
  cache.pooled.resize(batch);

  const auto ranges = BranchRows(s.rows);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < batch; ++i) {
    auto z1 = cache.hidden_pre.row(i);
    std::copy(params.b1.begin(), params.b1.end(), z1.begin());
    const auto x = inputs.row(i);
    for (std::size_t d = 0; d < s.input_dim; ++d) {
      k.axpy(x[d], params.w1.data() + d * s.hidden_dim, z1.data(), s.hidden_dim);
    }
    auto z2 = cache.map_pre.row(i);
    std::copy(params.b2.begin(), params.b2.end(), z2.begin());
    for (std::size_t j = 0; j < s.hidden_dim; ++j) {
      const double h = std::max(z1[j], 0.0);
      if (h != 0.0) k.axpy(h, params.w2.data() + j * s.map_size(), z2.data(), s.map_size());
    }
    const FeatureMap map = cache.feature_map(i, s);
    for (std::size_t b = 0; b < kNumBranches; ++b) {
      cache.pooled[i][b] = gem_pool(map.region(ranges[b].first, ranges[b].second), params.gem_p);
    }
  }

  cache.normalized.resize(batch);
  cache.bn_out.resize(batch);
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    Vec mean(s.channels, 0.0), var(s.channels, 0.0);
    if (batch_stats) {
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t c = 0; c < s.channels; ++c) mean[c] += cache.pooled[i][b][c];
      }
      for (double& m : mean) m /= static_cast<double>(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t c = 0; c < s.channels; ++c) {
          const double d = cache.pooled[i][b][c] - mean[c];
          var[c] += d * d;
        }
      }
      for (double& v : var) v /= static_cast<double>(batch);
      cache.batch_mean[b] = mean;
      cache.batch_var[b] = var;
    } else if (options.batch_norm) {
      mean = params.bn_running_mean[b];
      var = params.bn_running_var[b];
    }
    for (std::size_t i = 0; i < batch; ++i) {
      const Vec& g = cache.pooled[i][b];
      if (!options.batch_norm) {
        cache.normalized[i][b] = g;
        cache.bn_out[i][b] = g;
        continue;
      }
      Vec xhat(s.channels), y(s.channels);
      for (std::size_t c = 0; c < s.channels; ++c) {
        xhat[c] = (g[c] - mean[c]) / std::sqrt(var[c] + kBatchNormEps);
        y[c] = params.bn_scale[b][c] * xhat[c] + params.bn_shift[b][c];
      }
      cache.normalized[i][b] = std::move(xhat);
      cache.bn_out[i][b] = std::move(y);
    }
  }

  result.embeddings.resize(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t b = 0; b < kNumBranches; ++b) {
      result.embeddings[i].branch[b] = l2_normalize(cache.bn_out[i][b]);
    }
  }
  return result;
}

MultiScaleEmbedding forward_one(const EncoderParams& params, std::span<const double> input,
                                const ForwardOptions& options) {
  Matrix m(1, input.size());
  std::copy(input.begin(), input.end(), m.row(0).begin());
  return std::move(forward(params, m, options).embeddings.front());
}

void update_running_stats(EncoderParams& params, const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::kTrain || !cache.batch_norm) return;
  const double n = static_cast<double>(cache.batch_size());
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    for (std::size_t c = 0; c < params.shape.channels; ++c) {
      const double unbiased = cache.batch_var[b][c] * n / (n - 1.0);
      params.bn_running_mean[b][c] =
          (1.0 - momentum) * params.bn_running_mean[b][c] + momentum * cache.batch_mean[b][c];
      params.bn_running_var[b][c] =
          (1.0 - momentum) * params.bn_running_var[b][c] + momentum * unbiased;
    }
  }
}

void calibrate_batch_norm(EncoderParams& params, const Matrix& inputs) {
  const ForwardResult pass = forward(params, inputs, {Mode::kTrain, true});
  update_running_stats(params, pass.cache, 1.0);
  for (auto& var : params.bn_running_var) {
    for (double& v : var) v = std::max(v, kBatchNormEps);
  }
}

EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      std::span<const EmbeddingGrad> grad_embeddings) {
  if (cache.params_fingerprint != fingerprint(params)) {
    throw std::logic_error("encoder: stale forward cache");
  }
  const EncoderShape& s = params.shape;
  const std::size_t batch = cache.batch_size();
  if (grad_embeddings.size() != batch) {
    throw std::invalid_argument("encoder: gradient batch size mismatch");
  }
  EncoderGrads grads = zero_grads(s);

  // L2 normalize, then batch norm, per branch.
  std::vector<std::array<Vec, kNumBranches>> grad_pooled(batch);
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    std::vector<Vec> grad_y(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      if (grad_embeddings[i].branch[b].size() != s.channels) {
        throw std::invalid_argument("encoder: gradient dimension mismatch");
      }
      grad_y[i] = l2_normalize_backward(cache.bn_out[i][b], grad_embeddings[i].branch[b]);
    }
    if (!cache.batch_norm) {
      for (std::size_t i = 0; i < batch; ++i) grad_pooled[i][b] = std::move(grad_y[i]);
      continue;
    }
    const Vec& scale = params.bn_scale[b];
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        grads.bn_scale[b][c] += grad_y[i][c] * cache.normalized[i][b][c];
        grads.bn_shift[b][c] += grad_y[i][c];
      }
    }
    if (cache.mode == Mode::kEval) {
      for (std::size_t i = 0; i < batch; ++i) {
        Vec g(s.channels);
        for (std::size_t c = 0; c < s.channels; ++c) {
          g[c] = grad_y[i][c] * scale[c] /
                 std::sqrt(params.bn_running_var[b][c] + kBatchNormEps);
        }
        grad_pooled[i][b] = std::move(g);
      }
      continue;
    }
    // Batch statistics: dx = (N dxhat - sum dxhat - xhat sum(dxhat xhat)) / (N sigma)
    const double n = static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) grad_pooled[i][b].assign(s.channels, 0.0);
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double inv_std = 1.0 / std::sqrt(cache.batch_var[b][c] + kBatchNormEps);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        const double dxhat = grad_y[i][c] * scale[c];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * cache.normalized[i][b][c];
      }
      for (std::size_t i = 0; i < batch; ++i) {
        const double dxhat = grad_y[i][c] * scale[c];
        grad_pooled[i][b][c] =
            (n * dxhat - sum_dxhat - cache.normalized[i][b][c] * sum_dxhat_xhat) * inv_std / n;
      }
    }
  }

  // GEM pooling, ReLU/clamp, both affine layers.
  const auto ranges = BranchRows(s.rows);
  const auto& k = kernels::active();
  const std::size_t region_stride = s.cols * s.channels;
  Vec grad_map(s.map_size()), hidden(s.hidden_dim), grad_hidden(s.hidden_dim);
  for (std::size_t i = 0; i < batch; ++i) {
    const FeatureMap map = cache.feature_map(i, s);
    std::fill(grad_map.begin(), grad_map.end(), 0.0);
    for (std::size_t b = 0; b < kNumBranches; ++b) {
      const auto [begin, end] = ranges[b];
      const Matrix region = map.region(begin, end);
      const Matrix g = gem_pool_backward(region, params.gem_p, cache.pooled[i][b],
                                         grad_pooled[i][b]);
      k.axpy(1.0, g.flat().data(), grad_map.data() + begin * region_stride, g.flat().size());
    }
    // gem_pool_backward already zeroes cells at or below the clamp, which
    // covers every cell the ReLU zeroed.
    const auto z1 = cache.hidden_pre.row(i);
    for (std::size_t j = 0; j < s.hidden_dim; ++j) hidden[j] = std::max(z1[j], 0.0);
    k.axpy(1.0, grad_map.data(), grads.b2.data(), s.map_size());
    for (std::size_t j = 0; j < s.hidden_dim; ++j) {
      if (hidden[j] != 0.0) {
        k.axpy(hidden[j], grad_map.data(), grads.w2.data() + j * s.map_size(), s.map_size());
      }
      grad_hidden[j] = z1[j] > 0.0
                           ? k.dot(params.w2.data() + j * s.map_size(), grad_map.data(), s.map_size())
                           : 0.0;
    }
    k.axpy(1.0, grad_hidden.data(), grads.b1.data(), s.hidden_dim);
    const auto x = cache.inputs.row(i);
    for (std::size_t d = 0; d < s.input_dim; ++d) {
      if (x[d] != 0.0) {
        k.axpy(x[d], grad_hidden.data(), grads.w1.data() + d * s.hidden_dim, s.hidden_dim);
      }
    }
  }
  return grads;
}

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  validate(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  const EncoderShape& s = params.shape;
  out << "MSKD-CKPT v1 " << s.input_dim << ' ' << s.hidden_dim << ' ' << s.rows << ' '
      << s.cols << ' ' << s.channels << '\n';
  for (auto t : trainable_tensors(params)) detail::write_f64_le(out, t);
  for (const auto& v : params.bn_running_mean) detail::write_f64_le(out, v);
  for (const auto& v : params.bn_running_var) detail::write_f64_le(out, v);
  detail::write_f64_le(out, std::span<const double>(&params.gem_p, 1));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("checkpoint: missing header");
  std::istringstream hs(header);
  std::string magic, version;
  EncoderShape s;
  hs >> magic >> version;
  if (magic != "MSKD-CKPT") throw std::runtime_error("checkpoint: malformed header");
  if (version != "v1") throw std::runtime_error("checkpoint: version mismatch");
  if (!(hs >> s.input_dim >> s.hidden_dim >> s.rows >> s.cols >> s.channels)) {
    throw std::runtime_error("checkpoint: malformed header");
  }
  EncoderParams p;
  p.shape = s;
  p.w1.resize(s.input_dim * s.hidden_dim);
  p.b1.resize(s.hidden_dim);
  p.w2.resize(s.hidden_dim * s.map_size());
  p.b2.resize(s.map_size());
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    p.bn_scale[b].resize(s.channels);
    p.bn_shift[b].resize(s.channels);
    p.bn_running_mean[b].resize(s.channels);
    p.bn_running_var[b].resize(s.channels);
  }
  for (auto t : trainable_tensors(p)) detail::read_f64_le(in, t, "checkpoint");
  for (auto& v : p.bn_running_mean) detail::read_f64_le(in, v, "checkpoint");
  for (auto& v : p.bn_running_var) detail::read_f64_le(in, v, "checkpoint");
  detail::read_f64_le(in, std::span<double>(&p.gem_p, 1), "checkpoint");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint: trailing bytes");
  }
  validate(p);
  return p;
}

}  // namespace mskd
