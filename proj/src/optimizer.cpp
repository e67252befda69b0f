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

#include "mskd/optimizer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"

namespace mskd {

AdamState init_adam(const EncoderShape& shape) {
  return {zero_grads(shape), zero_grads(shape), 0};
}

double scheduled_lr(double base_lr, int epoch, int decay_every, double decay_factor) {
  if (decay_every <= 0 || epoch < 0) return base_lr;
  return base_lr * std::pow(decay_factor, epoch / decay_every);
}

void adam_step(EncoderParams& params, AdamState& state, const EncoderGrads& grads, double lr,
               const AdamConfig& cfg) {
  auto p = trainable_tensors(params);
  const auto g = trainable_tensors(grads);
  auto m = trainable_tensors(state.first_moment);
  auto v = trainable_tensors(state.second_moment);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw std::invalid_argument("adam: tensor count mismatch");
  }
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t].size() != p[t].size() || m[t].size() != p[t].size() || v[t].size() != p[t].size()) {
      throw std::invalid_argument("adam: tensor shape mismatch");
    }
    if (!all_finite(g[t])) {
      throw std::domain_error("adam: non-finite gradient in tensor " + std::to_string(t));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double grad = g[k][i] + cfg.weight_decay * p[k][i];
      m[k][i] = cfg.beta1 * m[k][i] + (1.0 - cfg.beta1) * grad;
      v[k][i] = cfg.beta2 * v[k][i] + (1.0 - cfg.beta2) * grad * grad;
      const double m_hat = m[k][i] / bias1;
      const double v_hat = v[k][i] / bias2;
      p[k][i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void save_optimizer_state(const AdamState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open optimizer state for writing: " + path.string());
  std::size_t count = 0;
  for (auto t : trainable_tensors(state.first_moment)) count += t.size();
  out << "MSKD-OPT v1 " << count << ' ' << state.step << '\n';
  for (auto t : trainable_tensors(state.first_moment)) detail::write_f64_le(out, t);
  for (auto t : trainable_tensors(state.second_moment)) detail::write_f64_le(out, t);
  if (!out) throw std::runtime_error("failed writing optimizer state: " + path.string());
}

AdamState load_optimizer_state(const EncoderShape& shape, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open optimizer state: " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version;
  std::size_t count = 0;
  AdamState state = init_adam(shape);
  hs >> magic >> version;
  if (magic != "MSKD-OPT") throw std::runtime_error("optimizer state: malformed header");
  if (version != "v1") throw std::runtime_error("optimizer state: version mismatch");
  if (!(hs >> count >> state.step)) throw std::runtime_error("optimizer state: malformed header");
  if (count != num_trainable(shape)) {
    throw std::runtime_error("optimizer state: parameter count does not match the encoder");
  }
  for (auto t : trainable_tensors(state.first_moment)) detail::read_f64_le(in, t, "optimizer state");
  for (auto t : trainable_tensors(state.second_moment)) detail::read_f64_le(in, t, "optimizer state");
  return state;
}

}  // namespace mskd
