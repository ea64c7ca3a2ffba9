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

#include "spot/network.hpp"

#include <cmath>
#include <random>

namespace spot {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
    ModelConfig c;
    c.input_n = 2048;
    c.level_n = {2048, 512, 128};
    c.out_n = 16384;
    c.base_c = 64;
    c.neighbor_s = 48;
    c.pla_heads = 4;
    c.pdma_heads = 4;
    return c;
}

ModelConfig ModelConfig::micro() {
    ModelConfig c;
    c.input_n = 16;
    c.level_n = {16, 8, 4};
    c.out_n = 32;
    c.base_c = 4;
    c.neighbor_s = 4;
    c.pla_heads = 2;
    c.pdma_heads = 2;
    return c;
}

void ModelConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw ShapeError("model config: " + msg); };
    if (!(level_n[0] > level_n[1] && level_n[1] > level_n[2] && level_n[2] >= 1)) fail("levels must satisfy N1 > N2 > N3 >= 1");
    if (input_n < level_n[0]) fail("input_n must be >= N1");
    for (Index n : level_n) {
        if (out_n % n != 0) fail("out_n must be divisible by every level size");
    }
    if (level_n[0] % level_n[1] != 0 || level_n[1] % level_n[2] != 0) fail("each level size must divide the finer one");
    if (base_c < 1 || neighbor_s < 1 || pla_heads < 1 || pdma_heads < 1) fail("widths, heads and S must be positive");
    if (pdma_scales.empty()) fail("pdma needs at least one scale factor");
    for (Index s : pdma_scales) {
        if (s < 1) fail("pdma scale factors must be positive");
    }
    for (double r : radii) {
        if (r < 0.0) fail("radii must be non-negative");
    }
}

Index ModelConfig::global_slots(int m) const {
    switch (m) {
    case 3: return 1;
    case 2: return level(1) / level(2);
    case 1: return out_n / level(1);
    default: throw ShapeError("global_slots: level must be 1..3");
    }
}

double ModelConfig::radius(int stage) const {
    const double r = radii.at(stage);
    if (r > 0.0) return r;
    return 2.0 * std::sqrt(1.0 / static_cast<double>(level(stage + 2)));
}

PdmaGroupConfig ModelConfig::pdma_config() const {
    PdmaGroupConfig g;
    g.base_dim = base_c;
    g.scale_factors = pdma_scales;
    g.heads_per_group = pdma_heads;
    return g;
}

ResMlpWeights make_res_mlp(ParameterStore& store, const std::string& name, Index in, const std::vector<Index>& widths) {
    if (widths.empty()) throw ShapeError("res_mlp " + name + ": needs at least one layer");
    ResMlpWeights w;
    Index prev = in;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        w.layers.push_back(make_linear(store, name + ".layer" + std::to_string(i), prev, widths[i]));
        prev = widths[i];
    }
    return w;
}

Tensor res_mlp(const Tensor& x, const ResMlpWeights& w) {
    Tensor first = relu(linear_forward(w.layers.front(), x));
    Tensor h = first;
    for (std::size_t i = 1; i < w.layers.size(); ++i) h = relu(linear_forward(w.layers[i], h));
    Tensor out = w.layers.size() > 1 ? add(first, h) : first;
    if (x.dim(-1) == out.dim(-1)) out = add(out, x);
    return out;
}

SpotSet sgr_local_inference(const SpotSet& fine, const Tensor& coarse_points, const Tensor& coarse_feats,
                            const LocalInferenceWeights& w, double radius, Index samples) {
    const Index nc = coarse_points.dim(0);
    const Index cf = fine.feats.dim(1);
    const Eigen::Map<const Points> q(coarse_points.data().data(), nc, 3);
    const Eigen::Map<const Points> src(fine.points.data().data(), fine.points.dim(0), 3);
    NeighborIndex nbr = ball_query(q, src, radius, samples);

    const GroupedFeatures grouped = group_features(nbr, fine.points, fine.feats, coarse_points);
    const Tensor mapped = relu(linear_forward(w.map_coarse, coarse_feats));
    if (mapped.dim(1) != cf) {
        throw ShapeError("sgr_local_inference: mapped coarse width " + std::to_string(mapped.dim(1)) +
                         " != fine width " + std::to_string(cf));
    }
    const Tensor mapped_b = expand(reshape(mapped, {nc, 1, cf}), 1, samples);
    const Tensor coords_b = expand(reshape(coarse_points, {nc, 1, 3}), 1, samples);
    const Tensor joined = concat({grouped.feats, grouped.rel_coords, mapped_b, coords_b}, 2);
    const Tensor pooled = max_pool(res_mlp(joined, w.fuse), 1);

    SpotSet out;
    out.points = coarse_points;
    out.feats = relu(linear_forward(w.out, pooled));
    out.neighbors = std::move(nbr);
    return out;
}

SpotSet dra_stage(const SpotSet& fine, const SpotSet& coarse, const RelationWeights& w, const RelationOptions& opts,
                  std::vector<Tensor>* pdma_groups) {
    if (!coarse.neighbors) throw ShapeError("dra_stage: coarse spots carry no neighborhood index");
    const NeighborIndex& nbr = *coarse.neighbors;
    const Index n = coarse.feats.dim(0);
    std::optional<Tensor> acc;
    const auto accumulate = [&acc](const Tensor& t) { acc = acc ? add(*acc, t) : t; };

    if (opts.use_pla) {
        const std::span<const Index> idx(nbr.indices.data(), static_cast<std::size_t>(nbr.indices.size()));
        const Tensor grouped = relu(linear_forward(*w.group_mlp, gather_rows(fine.feats, idx, {n, nbr.samples()})));
        const Tensor local = local_augment_attention(coarse.feats, grouped, *w.local);
        accumulate(add(linear_forward(*w.local_out, local), coarse.feats));
    }
    if (opts.use_pdma) {
        if (opts.pdma_vanilla) {
            accumulate(linear_forward(*w.vanilla_out, vanilla_attention(coarse.feats, *w.vanilla)));
        } else {
            accumulate(pdma(coarse.feats, opts.pdma, *w.multi_scale, opts.pdma_dense, pdma_groups));
        }
    }
    SpotSet out = coarse;
    out.feats = relu(linear_forward(w.fuse, acc ? *acc : coarse.feats));
    return out;
}

Recovered spot_recovery(const SpotSet& spots, const RecoveryWeights& w, Index slots) {
    const Index n = spots.feats.dim(0);
    const Index c = spots.feats.dim(1);
    Recovered r;
    r.points = radial_tanh(linear_forward(w.coords, relu(linear_forward(w.hidden, spots.feats))));
    r.global.feats = reshape(relu(linear_forward(w.global, spots.feats)), {n, slots, c});
    return r;
}

Recovered point_fusion(const GlobalSpotSet& coarse, const SpotSet& spots, const FusionWeights& w, Index slots) {
    const Index nm = spots.feats.dim(0);
    const Index cm = spots.feats.dim(1);
    const Tensor& g = coarse.feats;
    if (g.rank() != 3) throw ShapeError("point_fusion: global spots must be [N, S, C], got " + shape_string(g.shape()));
    const Index rows = g.dim(0) * g.dim(1);
    if (nm % rows != 0) {
        throw ShapeError("point_fusion: " + std::to_string(rows) + " coarse slots do not tile " + std::to_string(nm) +
                         " spots");
    }
    const Index expand_factor = nm / rows;
    if (w.refine_expand.out_features() != expand_factor * slots * cm) {
        throw ShapeError("point_fusion: refine projection width does not match the slot schedule");
    }

    // Complete path.
    const Tensor f = relu(linear_forward(w.complete_hidden, spots.feats));
    const Tensor pc = radial_tanh(linear_forward(w.complete_coords, f));

    // Refine path: r(g) -> phi -> r -> phi.
    const Tensor flat = reshape(g, {rows, g.dim(2)});
    const Tensor expanded = reshape(relu(linear_forward(w.refine_expand, flat)), {nm, slots, cm});
    const Tensor refined = reshape(relu(linear_forward(w.refine_local, expanded)), {nm, slots * cm});

    Recovered r;
    r.points = pc;
    r.global.feats = reshape(relu(linear_forward(w.fuse, concat({refined, f, pc}, 1))), {nm, slots, cm});
    return r;
}

Tensor aggregate_fine(const GlobalSpotSet& g1, const AggregationWeights& w, Index out_n) {
    const Tensor& g = g1.feats;
    if (g.rank() != 3 || g.dim(0) * g.dim(1) != out_n) {
        throw ShapeError("aggregate_fine: global spots " + shape_string(g.shape()) + " do not flatten to " +
                         std::to_string(out_n) + " points");
    }
    const Tensor rows = reshape(g, {out_n, g.dim(2)});
    return radial_tanh(linear_forward(w.coords, relu(linear_forward(w.hidden, rows))));
}

CompletionModel::CompletionModel(const ModelConfig& cfg) : cfg_(cfg), store_(cfg.init_seed) {
    cfg_.validate();
    const Index c0 = cfg_.preprocess_width();
    preprocess_ = make_res_mlp(store_, "preprocess", 3, {c0, c0});
    lift_ = make_linear(store_, "lift", c0, cfg_.spot_width(1));

    for (int stage = 0; stage < 2; ++stage) {
        const std::string name = "inference" + std::to_string(stage);
        const Index cf = cfg_.spot_width(stage + 1);
        const Index hidden = cfg_.inference_width(stage);
        auto& w = inference_[stage];
        w.map_coarse = make_linear(store_, name + ".map", c0, cf);
        w.fuse = make_res_mlp(store_, name + ".fuse", 2 * cf + 6, {hidden, hidden, hidden});
        w.out = make_linear(store_, name + ".out", hidden, cfg_.spot_width(stage + 2));
    }

    if (cfg_.use_dra) {
        const PdmaGroupConfig pcfg = cfg_.pdma_config();
        for (int stage = 0; stage < 2; ++stage) {
            const std::string name = "relation" + std::to_string(stage);
            const Index cf = cfg_.spot_width(stage + 1);
            const Index cc = cfg_.spot_width(stage + 2);
            auto& w = relation_[stage];
            if (cfg_.use_pla) {
                w.group_mlp = make_linear(store_, name + ".group", cf, cf);
                w.local = make_attention_weights(store_, name + ".local", cc, cf, cfg_.pla_heads, cfg_.base_c);
                w.local_out = make_linear(store_, name + ".local_out", cfg_.pla_heads * cfg_.base_c, cc);
            }
            if (cfg_.use_pdma) {
                if (cfg_.pdma_vanilla) {
                    w.vanilla = make_attention_weights(store_, name + ".vanilla", cc, cc, cfg_.pdma_heads, cfg_.base_c);
                    w.vanilla_out = make_linear(store_, name + ".vanilla_out", cfg_.pdma_heads * cfg_.base_c, cc);
                } else {
                    w.multi_scale = make_pdma_weights(store_, name + ".pdma", cc, pcfg, cc, cfg_.pdma_dense);
                }
            }
            w.fuse = make_linear(store_, name + ".fuse", cc, cc);
        }
    }

    const Index c3 = cfg_.spot_width(3);
    recovery_.hidden = make_linear(store_, "recovery.hidden", c3, c3);
    recovery_.coords = make_linear(store_, "recovery.coords", c3, 3);
    recovery_.global = make_linear(store_, "recovery.global", c3, cfg_.global_slots(3) * c3);

    for (int i = 0; i < 2; ++i) {
        const int m = 2 - i; // fusion_[0] builds level 2, fusion_[1] level 1
        const std::string name = "fusion" + std::to_string(m);
        const Index cm = cfg_.spot_width(m);
        const Index cc = cfg_.spot_width(m + 1);
        const Index sm = cfg_.global_slots(m);
        const Index coarse_rows = cfg_.level(m + 1) * cfg_.global_slots(m + 1);
        const Index e = cfg_.level(m) / coarse_rows;
        auto& w = fusion_[i];
        w.complete_hidden = make_linear(store_, name + ".complete_hidden", cm, cm);
        w.complete_coords = make_linear(store_, name + ".complete_coords", cm, 3);
        w.refine_expand = make_linear(store_, name + ".refine_expand", cc, e * sm * cm);
        w.refine_local = make_linear(store_, name + ".refine_local", cm, cm);
        w.fuse = make_linear(store_, name + ".fuse", sm * cm + cm + 3, sm * cm);
    }

    aggregation_.hidden = make_linear(store_, "aggregation.hidden", cfg_.spot_width(1), cfg_.base_c);
    aggregation_.coords = make_linear(store_, "aggregation.coords", cfg_.base_c, 3);
}

Points prepare_input(const Points& partial, Index n, bool canonical) {
    if (partial.rows() == 0) throw ShapeError("prepare_input: empty cloud");
    Points pts = partial;
    if (canonical) {
        const auto order = canonical_order(partial);
        for (Index i = 0; i < partial.rows(); ++i) pts.row(i) = partial.row(order[i]);
    }
    if (pts.rows() == n) return pts;
    Points out(n, 3);
    if (pts.rows() < n) {
        std::mt19937_64 rng(0x5eedu);
        std::uniform_int_distribution<Index> pick(0, pts.rows() - 1);
        out.topRows(pts.rows()) = pts;
        for (Index i = pts.rows(); i < n; ++i) out.row(i) = pts.row(pick(rng));
        return out;
    }
    const auto idx = farthest_point_sample(pts, n);
    for (Index i = 0; i < n; ++i) out.row(i) = pts.row(idx[i]);
    return out;
}

StageClouds CompletionModel::forward(const Points& partial, ForwardTrace* trace) const {
    const Points input = prepare_input(partial, cfg_.input_n, cfg_.canonical_input);
    const Tensor coords = Tensor::from_matrix(input);
    const Tensor features = res_mlp(coords, preprocess_);

    // Nested FPS: each level is a prefix-ordered subset of the previous one.
    std::array<Tensor, 3> level_points;
    std::array<Tensor, 3> level_feats;
    Tensor parent_points = coords;
    Tensor parent_feats = features;
    for (int m = 0; m < 3; ++m) {
        const Eigen::Map<const Points> pts(parent_points.data().data(), parent_points.dim(0), 3);
        const auto idx = farthest_point_sample(pts, cfg_.level_n[m]);
        const Shape shape{cfg_.level_n[m]};
        level_points[m] = gather_rows(parent_points, idx, shape);
        level_feats[m] = gather_rows(parent_feats, idx, shape);
        parent_points = level_points[m];
        parent_feats = level_feats[m];
    }

    std::array<SpotSet, 3> spots;
    spots[0].points = level_points[0];
    spots[0].feats = relu(linear_forward(lift_, level_feats[0]));
    for (int stage = 0; stage < 2; ++stage) {
        spots[stage + 1] = sgr_local_inference(spots[stage], level_points[stage + 1], level_feats[stage + 1],
                                               inference_[stage], cfg_.radius(stage), cfg_.neighbor_s);
    }

    std::vector<Tensor> pdma_groups;
    if (cfg_.use_dra) {
        RelationOptions opts;
        opts.use_pla = cfg_.use_pla;
        opts.use_pdma = cfg_.use_pdma;
        opts.pdma_dense = cfg_.pdma_dense;
        opts.pdma_vanilla = cfg_.pdma_vanilla;
        opts.pdma = cfg_.pdma_config();
        for (int stage = 0; stage < 2; ++stage) {
            spots[stage + 1] = dra_stage(spots[stage], spots[stage + 1], relation_[stage], opts,
                                         trace ? &pdma_groups : nullptr);
        }
    }

    const Recovered r3 = spot_recovery(spots[2], recovery_, cfg_.global_slots(3));
    const Recovered r2 = point_fusion(r3.global, spots[1], fusion_[0], cfg_.global_slots(2));
    const Recovered r1 = point_fusion(r2.global, spots[0], fusion_[1], cfg_.global_slots(1));

    StageClouds out;
    out.p3 = r3.points;
    out.p2 = r2.points;
    out.p1 = r1.points;
    out.fine = aggregate_fine(r1.global, aggregation_, cfg_.out_n);
    if (trace) {
        trace->spots = spots;
        trace->global = {r1.global, r2.global, r3.global};
        trace->pdma_groups = std::move(pdma_groups);
    }
    return out;
}

} // namespace spot
