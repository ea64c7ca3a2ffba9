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

// Attention variants over point features.
//
//  * vanilla_attention: multi-head self-attention over N rows.
//  * local_augment_attention: each query row attends only to its own S
//    grouped neighbor rows.
//  * pdma: grouped multi-scale self-attention where group n works at width
//    base_dim * scale_n and, in dense mode, reads the concatenation of the
//    input and every earlier group output.
//
// Heads split the projected channels evenly; scores are divided by
// sqrt(head width).

#pragma once

#include "spot/nn.hpp"

#include <string>
#include <vector>

namespace spot {

struct AttentionWeights {
    LinearLayer query; // bias-free, [C_q, heads * head_dim]
    LinearLayer key;   // bias-free, [C_kv, heads * head_dim]
    LinearLayer value; // bias-free, [C_kv, heads * head_dim]
    Index heads = 1;

    Index width() const { return query.out_features(); }
    Index head_dim() const { return width() / heads; }
    double key_scale() const;
};

AttentionWeights make_attention_weights(ParameterStore& store, const std::string& name, Index query_in, Index kv_in,
                                        Index heads, Index head_dim);

/// f[N, C_F] -> [N, heads * head_dim]. When `weights_out` is given it receives
/// one [N, N] attention matrix per head.
Tensor vanilla_attention(const Tensor& f, const AttentionWeights& w, std::vector<Tensor>* weights_out = nullptr);

/// query[N, C_q], grouped[N, S, C_g] -> [N, heads * head_dim]. Row i mixes only
/// the S value vectors of its own neighborhood. `weights_out` receives one
/// [N, 1, S] matrix per head.
Tensor local_augment_attention(const Tensor& query_feats, const Tensor& grouped_feats, const AttentionWeights& w,
                               std::vector<Tensor>* weights_out = nullptr);

struct PdmaGroupConfig {
    Index base_dim = 64;
    std::vector<Index> scale_factors{2, 4};
    Index heads_per_group = 4;

    Index group_width(std::size_t n) const { return base_dim * scale_factors.at(n); }
};

struct PdmaWeights {
    std::vector<AttentionWeights> groups; // group n: heads of width group_width(n)
    std::vector<LinearLayer> merge;       // heads * group_width(n) -> group_width(n)
    LinearLayer output;                   // sum of group widths -> C_out
    bool dense = true;
};

PdmaWeights make_pdma_weights(ParameterStore& store, const std::string& name, Index in_dim, const PdmaGroupConfig& cfg,
                              Index out_dim, bool dense);

/// Throws ShapeError naming the group whose input width disagrees with its
/// projections (for instance weights built for the other connection mode).
/// `group_outputs` receives F_1..F_n.
Tensor pdma(const Tensor& f0, const PdmaGroupConfig& cfg, const PdmaWeights& w, bool dense,
            std::vector<Tensor>* group_outputs = nullptr);

} // namespace spot
