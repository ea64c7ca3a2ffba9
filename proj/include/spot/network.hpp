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

// The completion network.
//
// Pipeline for a partial cloud P:
//   per-point residual MLP -> nested FPS levels P1 > P2 > P3
//   -> two local-inference stages building spots^2 and spots^3
//   -> two relation stages (local attention + multi-scale attention)
//   -> coarse-to-fine decoding: recovery at level 3, fusion at levels 2 and 1,
//      and a final aggregation to out_n points.
//
// Level m carries C_m = 3 * out_n / N_m feature channels. Global spots at
// level m have shape [N_m, S_m, C_m] with S_3 = 1, S_2 = N_1 / N_2 and
// S_1 = out_n / N_1, so that N_1 * S_1 = out_n.

#pragma once

#include "spot/attention.hpp"
#include "spot/geometry.hpp"
#include "spot/nn.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace spot {

struct ModelConfig {
    Index input_n = 512;
    std::array<Index, 3> level_n{512, 128, 32};
    Index out_n = 2048;
    Index base_c = 16;
    Index neighbor_s = 16;
    /// Ball-query radius per local-inference stage; 0 selects 2 / sqrt(N_{m+1}).
    std::array<double, 2> radii{0.0, 0.0};
    std::vector<Index> pdma_scales{2, 4};
    Index pla_heads = 2;
    Index pdma_heads = 2;
    bool use_pla = true;
    bool use_pdma = true;
    bool pdma_dense = true;
    bool pdma_vanilla = false;
    bool use_dra = true;
    bool cd_squared = true;
    bool canonical_input = true;
    std::uint64_t init_seed = 1;

    static ModelConfig desk();
    static ModelConfig paper();
    static ModelConfig micro();

    /// Throws ShapeError when the level schedule is inconsistent.
    void validate() const;

    Index level(int m) const { return level_n.at(m - 1); }
    /// C_m for m in 1..3.
    Index spot_width(int m) const { return 3 * out_n / level(m); }
    /// S_m for m in 1..3.
    Index global_slots(int m) const;
    double radius(int stage) const;
    Index preprocess_width() const { return base_c; }
    /// Hidden width of the residual MLP in local-inference stage 0 or 1.
    Index inference_width(int stage) const { return base_c * (Index{2} << stage); }
    PdmaGroupConfig pdma_config() const;
};

struct SpotSet {
    Tensor points; // [N_m, 3]
    Tensor feats;  // [N_m, C_m]
    std::optional<NeighborIndex> neighbors; // into the next finer level
};

struct GlobalSpotSet {
    Tensor feats; // [N_m, S_m, C_m]
};

struct ResMlpWeights {
    std::vector<LinearLayer> layers;
};

ResMlpWeights make_res_mlp(ParameterStore& store, const std::string& name, Index in, const std::vector<Index>& widths);

/// Stacked per-point linear+ReLU layers. The output is the sum of the first
/// and last layer activations, plus the input when its width matches. A
/// single-layer stack returns that layer's activation (plus the input).
Tensor res_mlp(const Tensor& x, const ResMlpWeights& w);

struct LocalInferenceWeights {
    LinearLayer map_coarse; // C_0 -> C_fine
    ResMlpWeights fuse;     // 2 C_fine + 6 -> hidden
    LinearLayer out;        // hidden -> C_coarse
};

/// Groups fine spots around each coarse point, concatenates [fine features,
/// relative offsets, mapped coarse features, coarse coordinates], applies the
/// residual MLP, max-pools over the neighborhood, and projects to the coarse
/// spot width.
SpotSet sgr_local_inference(const SpotSet& fine, const Tensor& coarse_points, const Tensor& coarse_feats,
                            const LocalInferenceWeights& w, double radius, Index samples);

struct RelationWeights {
    std::optional<LinearLayer> group_mlp;
    std::optional<AttentionWeights> local;
    std::optional<LinearLayer> local_out;
    std::optional<PdmaWeights> multi_scale;
    std::optional<AttentionWeights> vanilla;
    std::optional<LinearLayer> vanilla_out;
    LinearLayer fuse;
};

struct RelationOptions {
    bool use_pla = true;
    bool use_pdma = true;
    bool pdma_dense = true;
    bool pdma_vanilla = false;
    PdmaGroupConfig pdma;
};

/// Updates the coarse spots with the sum of a local-attention branch (with a
/// residual connection) and a multi-scale attention branch, then one MLP
/// layer. A disabled branch contributes nothing; with both disabled the MLP
/// sees the input features directly.
SpotSet dra_stage(const SpotSet& fine, const SpotSet& coarse, const RelationWeights& w, const RelationOptions& opts,
                  std::vector<Tensor>* pdma_groups = nullptr);

struct RecoveryWeights {
    LinearLayer hidden; // C_3 -> C_3
    LinearLayer coords; // C_3 -> 3
    LinearLayer global; // C_3 -> S_3 * C_3
};

struct Recovered {
    Tensor points;       // [N_3, 3]
    GlobalSpotSet global; // [N_3, S_3, C_3]
};

Recovered spot_recovery(const SpotSet& spots, const RecoveryWeights& w, Index slots);

struct FusionWeights {
    LinearLayer complete_hidden; // C_m -> C_m (the intermediate features f)
    LinearLayer complete_coords; // C_m -> 3
    LinearLayer refine_expand;   // C_{m+1} -> e * S_m * C_m
    LinearLayer refine_local;    // C_m -> C_m
    LinearLayer fuse;            // S_m * C_m + C_m + 3 -> S_m * C_m
};

/// Complete path generates PC_m from spots^m; refine path reshapes the coarse
/// global spots to N_m rows, exposes S_m slots per row, and fuses them with
/// the intermediate features and PC_m into [N_m, S_m, C_m].
Recovered point_fusion(const GlobalSpotSet& coarse, const SpotSet& spots, const FusionWeights& w, Index slots);

struct AggregationWeights {
    LinearLayer hidden; // C_1 -> base_c
    LinearLayer coords; // base_c -> 3
};

/// Flattens [N_1, S_1, C_1] to out_n rows and decodes each to a point inside
/// the unit ball.
Tensor aggregate_fine(const GlobalSpotSet& g1, const AggregationWeights& w, Index out_n);

struct ForwardTrace {
    std::array<SpotSet, 3> spots;
    std::array<GlobalSpotSet, 3> global;
    std::vector<Tensor> pdma_groups; // multi-scale group outputs of the last relation stage
};

class CompletionModel {
public:
    explicit CompletionModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }

    /// Runs the network on a partial cloud in model units. Clouds with fewer
    /// than input_n points are padded by seeded repetition; larger clouds are
    /// reduced by FPS.
    StageClouds forward(const Points& partial, ForwardTrace* trace = nullptr) const;

private:
    ModelConfig cfg_;
    ParameterStore store_;
    ResMlpWeights preprocess_;
    LinearLayer lift_;
    std::array<LocalInferenceWeights, 2> inference_;
    std::array<RelationWeights, 2> relation_;
    RecoveryWeights recovery_;
    std::array<FusionWeights, 2> fusion_; // [0]: level 2, [1]: level 1
    AggregationWeights aggregation_;
};

/// Brings a partial cloud to exactly `n` rows: canonical ordering (optional),
/// seeded repetition when short, FPS when long.
Points prepare_input(const Points& partial, Index n, bool canonical);

} // namespace spot
