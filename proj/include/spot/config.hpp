// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

// Run configuration and its text form.
//
// One `key = value` per line; blank lines and lines starting with '#' are
// ignored, as is anything after a " #" on a value line. Lists are comma
// separated. A `preset` key (desk, paper, micro) is applied before every other
// key regardless of its position.

#pragma once

#include "spot/geometry.hpp"
#include "spot/network.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace spot {

struct RunConfig {
    std::string preset = "desk";
    ModelConfig model = ModelConfig::desk();
    LossWeights loss;
    bool staged_fine = true;
    int epochs = 60;
    int batch_size = 8;
    double lr = 1e-3;
    double lr_decay = 0.7;
    int lr_decay_every = 40;
    std::uint64_t seed = 1;
    double val_fraction = 0.2;
    std::string dataset;
    std::string checkpoint;
    std::string log;

    /// Throws DataError on out-of-range settings.
    void validate() const;
};

RunConfig preset_config(const std::string& name);

/// Sets one key from its text value. Throws DataError naming the key.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Throws ParseError citing the key and line.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes every key; parse_run_config(serialize_run_config(c)) reproduces c.
std::string serialize_run_config(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

} // namespace spot
