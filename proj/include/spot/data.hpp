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

// Synthetic complete/partial pairs and point-cloud file formats.
//
// Dataset file (little-endian):
//   "SPDS" | u32 version (=1) | u32 count | count x sample
//   sample: u32 kind | f32 params[3] | f32 rotation[9] (row-major)
//           | f32 translation[3] | u64 seed | f32 crop_direction[3]
//           | f32 keep_fraction | f32 center[3] | f32 scale
//           | u32 n_partial | f32 xyz[n_partial * 3]
//           | u32 n_complete | f32 xyz[n_complete * 3]

#pragma once

#include "spot/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace spot {

enum class ShapeKind : std::uint32_t { sphere = 0, box = 1, cylinder = 2, torus = 3 };

std::string to_string(ShapeKind kind);
/// Throws DataError for unknown names.
ShapeKind parse_shape_kind(const std::string& name);
std::vector<ShapeKind> all_shape_kinds();

struct ShapeSpec {
    ShapeKind kind = ShapeKind::sphere;
    /// sphere: (radius, -, -); box: half extents; cylinder: (radius, half
    /// height, -); torus: (major radius, minor radius, -).
    Eigen::Vector3d params{1.0, 1.0, 1.0};
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::RowVector3d translation = Eigen::RowVector3d::Zero();
    std::uint64_t seed = 0;

    /// Throws DataError on non-positive dimensions or a non-orthonormal rotation.
    void validate() const;
};

/// Area-uniform samples on the posed surface.
Points sample_surface(const ShapeSpec& spec, Index n, std::mt19937_64& rng);

/// Keeps the round(keep_fraction * N) points with the smallest projection onto
/// `direction` (ties by index), in their original order. A positive
/// `target_n` then resizes the result: a random subset when there are more
/// kept points, random repetition when there are fewer.
Points crop_halfspace(const Points& cloud, const Eigen::RowVector3d& direction, double keep_fraction,
                      Index target_n = 0, std::mt19937_64* rng = nullptr);

struct Sample {
    Points partial;
    Points complete;
    ShapeSpec spec;
    Eigen::RowVector3d crop_direction = Eigen::RowVector3d::UnitZ();
    double keep_fraction = 0.5;
    /// Normalization of the complete cloud, shared by both clouds.
    Eigen::RowVector3d center = Eigen::RowVector3d::Zero();
    double scale = 1.0;
};

struct DatasetOptions {
    Index count = 400;
    std::vector<ShapeKind> kinds = all_shape_kinds();
    std::uint64_t seed = 7;
    Index input_n = 512;
    Index out_n = 2048;
    double keep_min = 0.4;
    double keep_max = 0.7;
};

/// splitmix64 step; used to derive independent per-sample seeds.
std::uint64_t splitmix64(std::uint64_t& state);

Sample make_sample(ShapeKind kind, std::uint64_t seed, const DatasetOptions& opts);
std::vector<Sample> make_dataset(const DatasetOptions& opts);

void write_ply(const Points& cloud, std::ostream& os);
void write_ply(const Points& cloud, const std::filesystem::path& path);
/// ASCII PLY 1.0; the vertex element must declare x, y and z. Other vertex
/// properties and trailing elements are skipped. Throws ParseError.
Points read_ply(std::istream& is);
Points read_ply(const std::filesystem::path& path);

void write_sample(std::ostream& os, const Sample& s);
Sample read_sample(std::istream& is);
void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

} // namespace spot
