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

#include "mskd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mskd {
namespace {

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T ParseValue(std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("cannot parse '" + std::string(v) + "'");
  }
  return out;
}

bool ParseBool(std::string_view v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw std::invalid_argument("cannot parse boolean '" + std::string(v) + "'");
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Key Field(std::string name, T SynthConfig::*field) {
  return {std::move(name),
          [field](RunConfig& c, std::string_view v) { c.synth.*field = ParseValue<T>(v); },
          [field](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.synth.*field);
            else return std::to_string(c.synth.*field);
          }};
}

template <typename T>
Key Field(std::string name, T TrainConfig::*field) {
  return {std::move(name),
          [field](RunConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<T, bool>) c.train.*field = ParseBool(v);
            else c.train.*field = ParseValue<T>(v);
          },
          [field](const RunConfig& c) {
            if constexpr (std::is_same_v<T, bool>) return std::string(c.train.*field ? "true" : "false");
            else if constexpr (std::is_floating_point_v<T>) return format_double(c.train.*field);
            else return std::to_string(c.train.*field);
          }};
}

Key ShapeField(std::string name, std::size_t EncoderShape::*field) {
  return {std::move(name),
          [field](RunConfig& c, std::string_view v) { c.train.shape.*field = ParseValue<std::size_t>(v); },
          [field](const RunConfig& c) { return std::to_string(c.train.shape.*field); }};
}

const std::vector<Key>& Keys() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back({"seed",
                 [](RunConfig& c, std::string_view v) {
                   c.synth.seed = c.train.seed = ParseValue<std::uint64_t>(v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    k.push_back(Field("num_identities", &SynthConfig::num_identities));
    k.push_back(Field("instances_per_identity", &SynthConfig::instances_per_identity));
    k.push_back(Field("query_per_identity", &SynthConfig::query_per_identity));
    k.push_back(Field("gallery_per_identity", &SynthConfig::gallery_per_identity));
    k.push_back(Field("num_cameras", &SynthConfig::num_cameras));
    k.push_back(Field("input_dim", &SynthConfig::input_dim));
    k.push_back(Field("identity_spread", &SynthConfig::identity_spread));
    k.push_back(Field("camera_offset_scale", &SynthConfig::camera_offset_scale));
    k.push_back(Field("noise_scale", &SynthConfig::noise_scale));
    k.push_back(Field("lambda1", &TrainConfig::lambda1));
    k.push_back(Field("eps", &TrainConfig::eps));
    k.push_back(Field("min_pts", &TrainConfig::min_pts));
    k.push_back(Field("rerank", &TrainConfig::rerank));
    k.push_back(Field("lambda2", &TrainConfig::lambda2));
    k.push_back(Field("mu", &TrainConfig::mu));
    k.push_back(Field("tau", &TrainConfig::tau));
    k.push_back(Field("momentum", &TrainConfig::momentum));
    k.push_back(Field("renormalize_centroids", &TrainConfig::renormalize_centroids));
    k.push_back(Field("P", &TrainConfig::p));
    k.push_back(Field("K", &TrainConfig::k));
    k.push_back(Field("num_iterations", &TrainConfig::num_iterations));
    k.push_back(Field("num_epochs", &TrainConfig::num_epochs));
    k.push_back(Field("warmup_multiplier", &TrainConfig::warmup_multiplier));
    k.push_back(Field("lr", &TrainConfig::lr));
    k.push_back(Field("weight_decay", &TrainConfig::weight_decay));
    k.push_back(Field("lr_decay_every", &TrainConfig::lr_decay_every));
    k.push_back(Field("lr_decay_factor", &TrainConfig::lr_decay_factor));
    k.push_back(ShapeField("hidden_dim", &EncoderShape::hidden_dim));
    k.push_back(ShapeField("rows", &EncoderShape::rows));
    k.push_back(ShapeField("cols", &EncoderShape::cols));
    k.push_back(ShapeField("channels", &EncoderShape::channels));
    k.push_back(Field("gem_p", &TrainConfig::gem_p));
    k.push_back(Field("bn", &TrainConfig::batch_norm));
    k.push_back(Field("calibrate_bn", &TrainConfig::calibrate_bn));
    k.push_back(Field("deterministic", &TrainConfig::deterministic));
    k.push_back(Field("eval_each_epoch", &TrainConfig::eval_each_epoch));
    k.push_back(Field("collapse_patience", &TrainConfig::collapse_patience));
    return k;
  }();
  return keys;
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw std::invalid_argument(where + "expected key = value");
    const std::string_view key = Trim(line.substr(0, eq));
    const std::string_view value = Trim(line.substr(eq + 1));
    const auto& keys = Keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return k.name == key; });
    if (it == keys.end()) throw std::invalid_argument(where + "unknown key '" + std::string(key) + "'");
    if (!seen.emplace(key).second) throw std::invalid_argument(where + "repeated key '" + std::string(key) + "'");
    try {
      it->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  cfg.train.shape.input_dim = cfg.synth.input_dim;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : Keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

void apply_seed_override(RunConfig& cfg) {
  if (const char* env = std::getenv("MSKD_SEED")) {
    try {
      cfg.synth.seed = cfg.train.seed = ParseValue<std::uint64_t>(Trim(env));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("MSKD_SEED is not an unsigned integer");
    }
  }
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return to_config_text(a) == to_config_text(b);
}

}  // namespace mskd
