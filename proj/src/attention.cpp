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

#include "spot/attention.hpp"

#include <cmath>

namespace spot {

double AttentionWeights::key_scale() const { return std::sqrt(static_cast<double>(head_dim())); }

AttentionWeights make_attention_weights(ParameterStore& store, const std::string& name, Index query_in, Index kv_in,
                                        Index heads, Index head_dim) {
    if (heads < 1 || head_dim < 1) throw ShapeError("attention " + name + ": heads and head_dim must be positive");
    AttentionWeights w;
    w.query = make_linear(store, name + ".q", query_in, heads * head_dim, false);
    w.key = make_linear(store, name + ".k", kv_in, heads * head_dim, false);
    w.value = make_linear(store, name + ".v", kv_in, heads * head_dim, false);
    w.heads = heads;
    return w;
}

Tensor vanilla_attention(const Tensor& f, const AttentionWeights& w, std::vector<Tensor>* weights_out) {
    if (f.rank() != 2) throw ShapeError("vanilla_attention: expected [N, C], got " + shape_string(f.shape()));
    if (f.dim(1) != w.query.in_features()) {
        throw ShapeError("vanilla_attention: input width " + std::to_string(f.dim(1)) + " but projections expect " +
                         std::to_string(w.query.in_features()));
    }
    const Tensor q = linear_forward(w.query, f);
    const Tensor k = linear_forward(w.key, f);
    const Tensor v = linear_forward(w.value, f);
    const Index d = w.head_dim();
    const double inv = 1.0 / w.key_scale();
    std::vector<Tensor> heads;
    for (Index h = 0; h < w.heads; ++h) {
        const Tensor qh = slice(q, 1, h * d, d);
        const Tensor kh = slice(k, 1, h * d, d);
        const Tensor vh = slice(v, 1, h * d, d);
        const Tensor a = softmax(scale(matmul(qh, transpose(kh)), inv), -1);
        if (weights_out) weights_out->push_back(a);
        heads.push_back(matmul(a, vh));
    }
    return heads.size() == 1 ? heads.front() : concat(heads, 1);
}

Tensor local_augment_attention(const Tensor& query_feats, const Tensor& grouped_feats, const AttentionWeights& w,
                               std::vector<Tensor>* weights_out) {
    if (query_feats.rank() != 2 || grouped_feats.rank() != 3 || grouped_feats.dim(0) != query_feats.dim(0)) {
        throw ShapeError("local_augment_attention: query " + shape_string(query_feats.shape()) + " and grouped " +
                         shape_string(grouped_feats.shape()) + " are not aligned");
    }
    if (query_feats.dim(1) != w.query.in_features() || grouped_feats.dim(2) != w.key.in_features()) {
        throw ShapeError("local_augment_attention: widths do not match projections");
    }
    const Index n = query_feats.dim(0);
    const Tensor q = reshape(linear_forward(w.query, query_feats), {n, 1, w.width()});
    const Tensor k = linear_forward(w.key, grouped_feats);
    const Tensor v = linear_forward(w.value, grouped_feats);
    const Index d = w.head_dim();
    const double inv = 1.0 / w.key_scale();
    std::vector<Tensor> heads;
    for (Index h = 0; h < w.heads; ++h) {
        const Tensor qh = slice(q, 2, h * d, d);
        const Tensor kh = slice(k, 2, h * d, d);
        const Tensor vh = slice(v, 2, h * d, d);
        const Tensor a = softmax(scale(matmul(qh, transpose(kh)), inv), -1); // [n, 1, s]
        if (weights_out) weights_out->push_back(a);
        heads.push_back(reshape(matmul(a, vh), {n, d}));
    }
    return heads.size() == 1 ? heads.front() : concat(heads, 1);
}

PdmaWeights make_pdma_weights(ParameterStore& store, const std::string& name, Index in_dim, const PdmaGroupConfig& cfg,
                              Index out_dim, bool dense) {
    if (cfg.scale_factors.empty()) throw ShapeError("pdma " + name + ": needs at least one group");
    PdmaWeights w;
    w.dense = dense;
    Index dense_width = in_dim;
    Index prev_width = in_dim;
    Index total = 0;
    for (std::size_t g = 0; g < cfg.scale_factors.size(); ++g) {
        if (cfg.scale_factors[g] < 1) throw ShapeError("pdma " + name + ": scale factors must be positive");
        const Index width = cfg.group_width(g);
        const Index input = dense ? dense_width : prev_width;
        const std::string gname = name + ".group" + std::to_string(g);
        w.groups.push_back(make_attention_weights(store, gname, input, input, cfg.heads_per_group, width));
        w.merge.push_back(make_linear(store, gname + ".merge", cfg.heads_per_group * width, width));
        dense_width += width;
        prev_width = width;
        total += width;
    }
    w.output = make_linear(store, name + ".out", total, out_dim);
    return w;
}

Tensor pdma(const Tensor& f0, const PdmaGroupConfig& cfg, const PdmaWeights& w, bool dense,
            std::vector<Tensor>* group_outputs) {
    if (w.groups.empty() || w.groups.size() != cfg.scale_factors.size()) {
        throw ShapeError("pdma: weights do not match the group configuration");
    }
    std::vector<Tensor> history{f0};
    std::vector<Tensor> outputs;
    for (std::size_t g = 0; g < w.groups.size(); ++g) {
        const Tensor input = dense ? (history.size() == 1 ? history.front() : concat(history, 1)) : history.back();
        if (input.dim(1) != w.groups[g].query.in_features()) {
            throw ShapeError("pdma group " + std::to_string(g) + ": input width " + std::to_string(input.dim(1)) +
                             " but projections expect " + std::to_string(w.groups[g].query.in_features()));
        }
        const Tensor fg = linear_forward(w.merge[g], vanilla_attention(input, w.groups[g]));
        if (fg.dim(1) != cfg.group_width(g)) {
            throw ShapeError("pdma group " + std::to_string(g) + ": output width " + std::to_string(fg.dim(1)) +
                             " != " + std::to_string(cfg.group_width(g)));
        }
        history.push_back(fg);
        outputs.push_back(fg);
    }
    if (group_outputs) *group_outputs = outputs;
    return linear_forward(w.output, outputs.size() == 1 ? outputs.front() : concat(outputs, 1));
}

} // namespace spot
