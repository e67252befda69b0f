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

#include "mskd/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace mskd {
namespace {

template <typename T>
T ParseNumber(std::string_view token, const std::string& what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw std::runtime_error(what + ": cannot parse '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> Tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kQuery:
      return "query";
    case Split::kGallery:
      return "gallery";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "query") return Split::kQuery;
  if (s == "gallery") return Split::kGallery;
  throw std::runtime_error("unknown split tag '" + std::string(s) + "'");
}

LabeledSet Dataset::subset(Split s) const {
  LabeledSet out;
  out.inputs = Matrix(count(s), input_dim);
  std::size_t r = 0;
  for (const auto& inst : instances) {
    if (inst.split != s) continue;
    std::copy(inst.input.begin(), inst.input.end(), out.inputs.row(r++).begin());
    out.identities.push_back(inst.identity);
    out.cameras.push_back(inst.camera);
    out.instance_ids.push_back(inst.instance_id);
  }
  return out;
}

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      instances.begin(), instances.end(), [s](const Instance& i) { return i.split == s; }));
}

void Dataset::validate() const {
  std::unordered_set<std::int64_t> ids;
  std::set<std::pair<int, int>> gallery_id_cam;
  for (const auto& inst : instances) {
    if (!ids.insert(inst.instance_id).second) {
      throw std::invalid_argument("dataset: duplicate instance id " +
                                  std::to_string(inst.instance_id));
    }
    if (inst.input.size() != input_dim) {
      throw std::invalid_argument("dataset: input dimension mismatch");
    }
    if (!all_finite(inst.input)) throw std::invalid_argument("dataset: non-finite input");
    if (inst.split == Split::kGallery) gallery_id_cam.emplace(inst.identity, inst.camera);
  }
  for (const auto& inst : instances) {
    if (inst.split != Split::kQuery) continue;
    const bool ok = std::any_of(gallery_id_cam.begin(), gallery_id_cam.end(), [&](auto p) {
      return p.first == inst.identity && p.second != inst.camera;
    });
    if (!ok) {
      throw std::invalid_argument("dataset: query " + std::to_string(inst.instance_id) +
                                  " has no gallery match under another camera");
    }
  }
}

void SynthConfig::validate() const {
  if (num_identities <= 0 || instances_per_identity <= 0 || num_cameras <= 0 ||
      input_dim == 0) {
    throw std::invalid_argument("synth: counts must be positive");
  }
  if (query_per_identity < 0 || gallery_per_identity < 0 ||
      query_per_identity + gallery_per_identity > instances_per_identity) {
    throw std::invalid_argument("synth: query + gallery exceeds instances per identity");
  }
  if (!(identity_spread > 0.0) || !(camera_offset_scale >= 0.0) || !(noise_scale >= 0.0)) {
    throw std::invalid_argument("synth: scales must be non-negative (spread positive)");
  }
  if (query_per_identity > 0 && (num_cameras < 2 || gallery_per_identity == 0)) {
    throw std::invalid_argument(
        "synth: infeasible split, queries need a gallery match under another camera");
  }
  if (query_per_identity > 0 && gallery_per_identity == 1 &&
      query_per_identity >= num_cameras) {
    // Round-robin cameras would put the lone gallery item on a query camera.
    throw std::invalid_argument("synth: infeasible split for the camera layout");
  }
}

Dataset generate_synthetic(const SynthConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = cfg.input_dim;
  std::vector<Vec> prototypes(static_cast<std::size_t>(cfg.num_identities), Vec(d));
  for (auto& p : prototypes) {
    for (double& x : p) x = cfg.identity_spread * normal(rng);
  }
  std::vector<Vec> offsets(static_cast<std::size_t>(cfg.num_cameras), Vec(d));
  for (auto& o : offsets) {
    for (double& x : o) x = cfg.camera_offset_scale * normal(rng);
  }

  Dataset ds;
  ds.input_dim = d;
  std::int64_t next_id = 0;
  for (int id = 0; id < cfg.num_identities; ++id) {
    for (int j = 0; j < cfg.instances_per_identity; ++j) {
      Instance inst;
      inst.instance_id = next_id++;
      inst.identity = id;
      inst.camera = (id + j) % cfg.num_cameras;
      inst.split = j < cfg.query_per_identity ? Split::kQuery
                   : j < cfg.query_per_identity + cfg.gallery_per_identity ? Split::kGallery
                                                                            : Split::kTrain;
      inst.input.resize(d);
      const auto& proto = prototypes[static_cast<std::size_t>(id)];
      const auto& off = offsets[static_cast<std::size_t>(inst.camera)];
      for (std::size_t k = 0; k < d; ++k) {
        inst.input[k] = proto[k] + off[k] + cfg.noise_scale * normal(rng);
      }
      ds.instances.push_back(std::move(inst));
    }
  }
  ds.validate();
  return ds;
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  return generate_synthetic(cfg, rng);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open dataset for writing: " + path.string());
  out << "MSKD-DATA v1 " << ds.instances.size() << ' ' << ds.input_dim << '\n';
  for (const auto& inst : ds.instances) {
    out << inst.instance_id << ' ' << inst.identity << ' ' << inst.camera << ' '
        << split_name(inst.split);
    for (double v : inst.input) out << ' ' << format_double(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing dataset: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: malformed header");
  const auto header = Tokens(line);
  if (header.size() != 4 || header[0] != "MSKD-DATA") {
    throw std::runtime_error("dataset: malformed header");
  }
  if (header[1] != "v1") throw std::runtime_error("dataset: version mismatch");
  const auto n = ParseNumber<std::size_t>(header[2], "dataset header");
  Dataset ds;
  ds.input_dim = ParseNumber<std::size_t>(header[3], "dataset header");
  ds.instances.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("dataset: truncated records");
    const auto tok = Tokens(line);
    if (tok.size() != 4 + ds.input_dim) {
      throw std::runtime_error("dataset: record " + std::to_string(i) + " has " +
                               std::to_string(tok.size()) + " fields");
    }
    Instance inst;
    inst.instance_id = ParseNumber<std::int64_t>(tok[0], "dataset record");
    inst.identity = ParseNumber<int>(tok[1], "dataset record");
    inst.camera = ParseNumber<int>(tok[2], "dataset record");
    inst.split = parse_split(tok[3]);
    inst.input.reserve(ds.input_dim);
    for (std::size_t k = 0; k < ds.input_dim; ++k) {
      inst.input.push_back(ParseNumber<double>(tok[4 + k], "dataset record"));
    }
    ds.instances.push_back(std::move(inst));
  }
  while (std::getline(in, line)) {
    if (!Tokens(line).empty()) throw std::runtime_error("dataset: trailing records");
  }
  ds.validate();
  return ds;
}

void append_metrics(const nlohmann::json& record, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open metrics log: " + path.string());
  out << record.dump() << '\n';
  if (!out) throw std::runtime_error("failed writing metrics log: " + path.string());
}

std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics log: " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace mskd
