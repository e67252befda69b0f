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

#include <filesystem>
#include <string>
#include <string_view>

#include "mskd/data.hpp"
#include "mskd/trainer.hpp"

namespace mskd {

// Everything one config file can set. `seed` feeds both sections.
struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
};

// Flat "key = value" lines; '#' starts a comment. Unknown keys, repeated
// keys and unparsable values throw std::invalid_argument naming the line.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Every key in a fixed order; parse_config(to_config_text(c)) == c.
std::string to_config_text(const RunConfig& cfg);

// Applies MSKD_SEED from the environment when set.
void apply_seed_override(RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace mskd
