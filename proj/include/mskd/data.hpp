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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mskd/numerics.hpp"

namespace mskd {

inline constexpr int kUnknownIdentity = -1;

enum class Split { kTrain, kQuery, kGallery };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct Instance {
  std::int64_t instance_id = 0;
  int identity = kUnknownIdentity;  // never read by training
  int camera = 0;
  Split split = Split::kTrain;
  Vec input;

  friend bool operator==(const Instance&, const Instance&) = default;
};

// Inputs, identities and cameras of one split, index-aligned.
struct LabeledSet {
  Matrix inputs;
  std::vector<int> identities;
  std::vector<int> cameras;
  std::vector<std::int64_t> instance_ids;

  std::size_t size() const { return inputs.rows(); }
};

struct Dataset {
  std::size_t input_dim = 0;
  std::vector<Instance> instances;

  LabeledSet subset(Split s) const;
  std::size_t count(Split s) const;
  // Unique ids, consistent dims, and every query identity present in the
  // gallery under a different camera. Throws std::invalid_argument.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SynthConfig {
  int num_identities = 20;
  int instances_per_identity = 16;  // query and gallery included
  int query_per_identity = 2;
  int gallery_per_identity = 4;
  int num_cameras = 4;
  std::size_t input_dim = 32;
  double identity_spread = 1.0;
  double camera_offset_scale = 0.1;
  double noise_scale = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
};

// Identity prototypes ~ N(0, spread^2 I), camera offsets ~ N(0, scale^2 I),
// input = prototype + camera offset + N(0, noise^2 I). Per identity the first
// instances become queries, the next gallery items, the rest training data;
// cameras are assigned round-robin starting at a per-identity rotation.
Dataset generate_synthetic(const SynthConfig& cfg, std::mt19937_64& rng);
Dataset generate_synthetic(const SynthConfig& cfg);

// "MSKD-DATA v1 <N> <Din>" then one line per instance:
// "instance_id identity camera split v1 ... vDin" with shortest
// round-trip decimal values.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Appends one JSON object as a single line. Single writer per file.
void append_metrics(const nlohmann::json& record, const std::filesystem::path& path);
std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace mskd
