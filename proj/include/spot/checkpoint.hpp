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

// Parameter checkpoints.
//
// Layout (all integers little-endian):
//   "SPOT" | u32 version (=1) | u32 count
//   count x { u32 name_len | name bytes (UTF-8) | u32 rank | rank x u64 extent | f64 payload }
//   u32 config_len | config bytes (key=value text, may be empty)

#pragma once

#include "spot/nn.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace spot {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::vector<NamedParameter> parameters;
    std::string config_text;
};

void write_checkpoint(std::ostream& os, const std::vector<NamedParameter>& params, const std::string& config_text);
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedParameter>& params,
                      const std::string& config_text);
Checkpoint read_checkpoint(std::istream& is);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies values by name into `store`. Every stored parameter must be present
/// in the checkpoint with an identical shape.
void load_parameters(ParameterStore& store, const Checkpoint& ckpt);

namespace binio {
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
void write_f32(std::ostream& os, float v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
float read_f32(std::istream& is);
} // namespace binio

} // namespace spot
