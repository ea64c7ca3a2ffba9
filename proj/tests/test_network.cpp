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

#include "spot/errors.hpp"
#include "spot/network.hpp"
#include "support/oracles.hpp"
#include "support/suites.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace spot;

namespace {

void zero(Tensor t) {
    for (double& v : t.mutable_data()) v = 0.0;
}

void zero(const LinearLayer& l) {
    zero(l.weight);
    if (l.bias.defined()) zero(l.bias);
}

std::vector<Index> shuffled(Index n, std::uint64_t seed) {
    std::vector<Index> p(n);
    std::iota(p.begin(), p.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

Points unit_sphere_points(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Points p = oracle::random_points(rng, n);
    p.rowwise().normalize();
    return p;
}

std::vector<std::array<double, 3>> sorted_rows(const Tensor& t) {
    std::vector<std::array<double, 3>> rows(t.dim(0));
    for (Index i = 0; i < t.dim(0); ++i) rows[i] = {t.at({i, 0}), t.at({i, 1}), t.at({i, 2})};
    std::sort(rows.begin(), rows.end());
    return rows;
}

constexpr Index kDeskParameterCount = 582412;

double max_row_norm(const Tensor& t) {
    return Eigen::Map<const Points>(t.data().data(), t.dim(0), 3).rowwise().norm().maxCoeff();
}

} // namespace

TEST(ModelConfig, DeskSchedule) {
    const ModelConfig c = ModelConfig::desk();
    EXPECT_EQ(c.spot_width(1), 12);
    EXPECT_EQ(c.spot_width(2), 48);
    EXPECT_EQ(c.spot_width(3), 192);
    EXPECT_EQ(c.global_slots(3), 1);
    EXPECT_EQ(c.global_slots(2), 4);
    EXPECT_EQ(c.global_slots(1), 4);
    EXPECT_DOUBLE_EQ(c.radius(0), 2.0 / std::sqrt(128.0));
    EXPECT_DOUBLE_EQ(c.radius(1), 2.0 / std::sqrt(32.0));
}

TEST(ModelConfig, RejectsInconsistentLevels) {
    ModelConfig c = ModelConfig::desk();
    c.level_n = {128, 512, 32};
    EXPECT_THROW(c.validate(), ShapeError);
    c = ModelConfig::desk();
    c.out_n = 2000;
    EXPECT_THROW(c.validate(), ShapeError);
    c = ModelConfig::desk();
    c.input_n = 100;
    EXPECT_THROW(CompletionModel{c}, ShapeError);
}

TEST(ResMlp, ZeroWeightsMatchDirectGraph) {
    ParameterStore store(1);
    const ResMlpWeights w = make_res_mlp(store, "r", 3, {4, 4});
    zero(w.layers[0].weight);
    zero(w.layers[1].weight);
    const auto b1 = w.layers[0].bias.data(), b2 = w.layers[1].bias.data();
    std::mt19937_64 rng(2);
    const Tensor y = res_mlp(oracle::random_tensor(rng, {5, 3}), w);
    for (Index i = 0; i < 5; ++i)
        for (Index c = 0; c < 4; ++c) EXPECT_EQ(y.at({i, c}), std::max(b1[c], 0.0) + std::max(b2[c], 0.0));
}

TEST(ResMlp, SkipAddsInputWhenWidthsMatch) {
    ParameterStore store(3);
    const ResMlpWeights w = make_res_mlp(store, "r", 4, {4});
    zero(w.layers[0]);
    std::mt19937_64 rng(4);
    const Tensor x = oracle::random_tensor(rng, {3, 4});
    const Tensor y = res_mlp(x, w);
    EXPECT_TRUE(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
}

TEST(ResMlp, PointwiseAndPaperWidth) {
    ParameterStore store(5);
    const ResMlpWeights w = make_res_mlp(store, "r", 3, {64, 64});
    std::mt19937_64 rng(6);
    const Tensor x = oracle::random_tensor(rng, {9, 3});
    const Tensor y = res_mlp(x, w);
    EXPECT_EQ(y.shape(), (Shape{9, 64}));
    const auto perm = shuffled(9, 7);
    const Tensor yp = res_mlp(gather_rows(x, perm, {9}), w);
    for (Index i = 0; i < 9; ++i)
        for (Index c = 0; c < 64; ++c) EXPECT_EQ(yp.at({i, c}), y.at({perm[i], c}));
}

TEST(LocalInference, DeskOutputShape) {
    const ModelConfig cfg = ModelConfig::desk();
    ParameterStore store(8);
    LocalInferenceWeights w;
    w.map_coarse = make_linear(store, "map", 16, 12);
    w.fuse = make_res_mlp(store, "fuse", 2 * 12 + 6, {32, 32, 32});
    w.out = make_linear(store, "out", 32, 48);
    const Points fine_pts = unit_sphere_points(512, 9);
    std::mt19937_64 rng(10);
    const SpotSet fine{Tensor::from_matrix(fine_pts), oracle::random_tensor(rng, {512, 12}), std::nullopt};
    const Tensor coarse_pts = Tensor::from_matrix(Points(fine_pts.topRows(128)));
    const SpotSet s2 = sgr_local_inference(fine, coarse_pts, oracle::random_tensor(rng, {128, 16}), w, cfg.radius(0),
                                           cfg.neighbor_s);
    EXPECT_EQ(s2.feats.shape(), (Shape{128, 48}));
    ASSERT_TRUE(s2.neighbors.has_value());
    EXPECT_EQ(s2.neighbors->samples(), 16);
    for (Index i = 0; i < 128; ++i) EXPECT_GE(s2.neighbors->valid_counts[i], 1); // each coarse point is in the fine set
}

TEST(LocalInference, MaxPoolIgnoresNeighborOrder) {
    ParameterStore store(11);
    const ResMlpWeights w = make_res_mlp(store, "r", 5, {6, 6});
    std::mt19937_64 rng(12);
    const Tensor grouped = oracle::random_tensor(rng, {4, 7, 5});
    const Tensor out = max_pool(res_mlp(grouped, w), 1);
    std::vector<Index> rows;
    for (Index i = 0; i < 4; ++i)
        for (Index s : shuffled(7, 13 + i)) rows.push_back(i * 7 + s);
    const Tensor permuted = reshape(gather_rows(reshape(grouped, {28, 5}), rows, {28}), {4, 7, 5});
    const Tensor out_p = max_pool(res_mlp(permuted, w), 1);
    EXPECT_TRUE(std::equal(out.data().begin(), out.data().end(), out_p.data().begin()));
}

TEST(Relation, BothBranchesDisabledIsPlainMlp) {
    ParameterStore store(14);
    std::mt19937_64 rng(15);
    const Points fp = unit_sphere_points(16, 16);
    const SpotSet fine{Tensor::from_matrix(fp), oracle::random_tensor(rng, {16, 4}), std::nullopt};
    SpotSet coarse{Tensor::from_matrix(Points(fp.topRows(4))), oracle::random_tensor(rng, {4, 6}),
                   ball_query(Points(fp.topRows(4)), fp, 0.8, 3)};
    RelationWeights w;
    w.fuse = make_linear(store, "fuse", 6, 6);
    RelationOptions opts;
    opts.use_pla = false;
    opts.use_pdma = false;
    const SpotSet out = dra_stage(fine, coarse, w, opts);
    const Tensor want = relu(linear_forward(w.fuse, coarse.feats));
    EXPECT_EQ(out.feats.shape(), coarse.feats.shape());
    EXPECT_TRUE(std::equal(out.feats.data().begin(), out.feats.data().end(), want.data().begin()));
}

TEST(Relation, FullStageKeepsShape) {
    ParameterStore store(17);
    std::mt19937_64 rng(18);
    const Points fp = unit_sphere_points(16, 19);
    const SpotSet fine{Tensor::from_matrix(fp), oracle::random_tensor(rng, {16, 4}), std::nullopt};
    SpotSet coarse{Tensor::from_matrix(Points(fp.topRows(4))), oracle::random_tensor(rng, {4, 6}),
                   ball_query(Points(fp.topRows(4)), fp, 0.8, 3)};
    RelationOptions opts;
    opts.pdma.base_dim = 2;
    opts.pdma.scale_factors = {1, 2};
    opts.pdma.heads_per_group = 2;
    RelationWeights w;
    w.group_mlp = make_linear(store, "g", 4, 4);
    w.local = make_attention_weights(store, "l", 6, 4, 2, 2);
    w.local_out = make_linear(store, "lo", 4, 6);
    w.multi_scale = make_pdma_weights(store, "p", 6, opts.pdma, 6, true);
    w.fuse = make_linear(store, "f", 6, 6);
    std::vector<Tensor> groups;
    const SpotSet out = dra_stage(fine, coarse, w, opts, &groups);
    EXPECT_EQ(out.feats.shape(), (Shape{4, 6}));
    EXPECT_EQ(groups.size(), 2u);
    coarse.neighbors.reset();
    EXPECT_THROW(dra_stage(fine, coarse, w, opts), ShapeError);
}

TEST(SpotRecovery, DeskShapesAndBounds) {
    ParameterStore store(20);
    RecoveryWeights w{make_linear(store, "h", 192, 192), make_linear(store, "c", 192, 3), make_linear(store, "g", 192, 192)};
    std::mt19937_64 rng(21);
    const SpotSet s{Tensor::from_matrix(unit_sphere_points(32, 22)), oracle::random_tensor(rng, {32, 192}, false, -20, 20),
                    std::nullopt};
    const Recovered r = spot_recovery(s, w, 1);
    EXPECT_EQ(r.points.shape(), (Shape{32, 3}));
    EXPECT_EQ(r.global.feats.shape(), (Shape{32, 1, 192}));
    EXPECT_LE(max_row_norm(r.points), 1.0);
    zero(w.hidden);
    zero(w.coords);
    const Recovered zeroed = spot_recovery(s, w, 1);
    for (double v : zeroed.points.data()) EXPECT_EQ(v, 0.0);
}

TEST(PointFusion, DeskShapeChain) {
    ParameterStore store(23);
    FusionWeights w{make_linear(store, "ch", 48, 48), make_linear(store, "cc", 48, 3),
                    make_linear(store, "re", 192, 1 * 4 * 48 * 4), make_linear(store, "rl", 48, 48),
                    make_linear(store, "f", 4 * 48 + 48 + 3, 4 * 48)};
    std::mt19937_64 rng(24);
    const GlobalSpotSet g3{oracle::random_tensor(rng, {32, 1, 192})};
    const SpotSet s2{Tensor::from_matrix(unit_sphere_points(128, 25)), oracle::random_tensor(rng, {128, 48}), std::nullopt};
    const Recovered r = point_fusion(g3, s2, w, 4);
    EXPECT_EQ(r.points.shape(), (Shape{128, 3}));
    EXPECT_EQ(r.global.feats.shape(), (Shape{128, 4, 48}));
    EXPECT_LE(max_row_norm(r.points), 1.0);

    // The complete path is row-aligned with the spots.
    const auto perm = shuffled(128, 26);
    const SpotSet sp{gather_rows(s2.points, perm, {128}), gather_rows(s2.feats, perm, {128}), std::nullopt};
    const Recovered rp = point_fusion(g3, sp, w, 4);
    for (Index i = 0; i < 128; ++i)
        for (Index c = 0; c < 3; ++c) EXPECT_EQ(rp.points.at({i, c}), r.points.at({perm[i], c}));

    EXPECT_THROW(point_fusion(g3, s2, w, 2), ShapeError);
    EXPECT_THROW(point_fusion(GlobalSpotSet{oracle::random_tensor(rng, {24, 1, 192})}, s2, w, 4), ShapeError);
}

TEST(Aggregation, DeskShapeAndBounds) {
    ParameterStore store(27);
    AggregationWeights w{make_linear(store, "h", 12, 16), make_linear(store, "c", 16, 3)};
    std::mt19937_64 rng(28);
    const GlobalSpotSet g1{oracle::random_tensor(rng, {512, 4, 12}, false, -10, 10)};
    const Tensor fine = aggregate_fine(g1, w, 2048);
    EXPECT_EQ(fine.shape(), (Shape{2048, 3}));
    EXPECT_LE(max_row_norm(fine), 1.0);
    for (double v : fine.data()) EXPECT_TRUE(std::isfinite(v));
    zero(w.hidden);
    zero(w.coords);
    const Tensor zeroed = aggregate_fine(g1, w, 2048);
    for (double v : zeroed.data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(aggregate_fine(g1, w, 1024), ShapeError);
}

TEST(Model, DeskForwardShapesAndWidths) {
    const CompletionModel model(ModelConfig::desk());
    ForwardTrace trace;
    const StageClouds out = model.forward(unit_sphere_points(700, 29), &trace);
    EXPECT_EQ(out.p3.shape(), (Shape{32, 3}));
    EXPECT_EQ(out.p2.shape(), (Shape{128, 3}));
    EXPECT_EQ(out.p1.shape(), (Shape{512, 3}));
    EXPECT_EQ(out.fine.shape(), (Shape{2048, 3}));
    for (int m = 0; m < 3; ++m) {
        const Index n = model.config().level(m + 1);
        EXPECT_EQ(trace.spots[m].feats.shape(), (Shape{n, 3 * 2048 / n}));
    }
    EXPECT_EQ(trace.global[2].feats.shape(), (Shape{32, 1, 192}));
    EXPECT_EQ(trace.global[1].feats.shape(), (Shape{128, 4, 48}));
    EXPECT_EQ(trace.global[0].feats.shape(), (Shape{512, 4, 12}));
    for (const Tensor* t : {&out.p1, &out.p2, &out.p3, &out.fine}) EXPECT_LE(max_row_norm(*t), 1.0);
}

TEST(Model, ForwardIsDeterministic) {
    const CompletionModel model(ModelConfig::desk());
    const Points in = unit_sphere_points(512, 30);
    const Tensor a = model.forward(in).fine, b = model.forward(in).fine;
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Model, CanonicalInputMakesOutputPermutationInvariant) {
    const CompletionModel model(ModelConfig::desk());
    const Points in = unit_sphere_points(512, 31);
    const auto perm = shuffled(512, 32);
    Points permuted(512, 3);
    for (Index i = 0; i < 512; ++i) permuted.row(i) = in.row(perm[i]);
    const auto a = sorted_rows(model.forward(in).fine), b = sorted_rows(model.forward(permuted).fine);
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(a[i][c] - b[i][c]));
    EXPECT_LE(worst, 1e-9);
}

TEST(Model, ShortInputIsRepeatedAndLongInputReduced) {
    const Points shortp = unit_sphere_points(100, 33);
    const Points up = prepare_input(shortp, 512, false);
    EXPECT_EQ(up.rows(), 512);
    EXPECT_TRUE(up.topRows(100).isApprox(shortp, 0.0));
    const Points down = prepare_input(unit_sphere_points(900, 34), 512, true);
    EXPECT_EQ(down.rows(), 512);
    EXPECT_THROW(prepare_input(Points(0, 3), 512, true), ShapeError);
}

TEST(Model, WithoutRelationStagesStillValid) {
    ModelConfig c = ModelConfig::desk();
    c.use_dra = false;
    const CompletionModel model(c);
    const StageClouds out = model.forward(unit_sphere_points(512, 35));
    EXPECT_EQ(out.fine.shape(), (Shape{2048, 3}));
    EXPECT_LT(model.parameters().scalar_count(), CompletionModel(ModelConfig::desk()).parameters().scalar_count());
}

TEST(Model, AblationFlagsChangeParameterSet) {
    ModelConfig c = ModelConfig::desk();
    c.use_pla = false;
    EXPECT_THROW(CompletionModel(c).parameters().find("relation0.local.q"), DataError);
    c = ModelConfig::desk();
    c.pdma_vanilla = true;
    const CompletionModel m(c);
    EXPECT_NO_THROW(m.forward(unit_sphere_points(512, 36)));
}

TEST(Model, DeskParameterCountIsFrozen) {
    EXPECT_EQ(CompletionModel(ModelConfig::desk()).parameters().scalar_count(), kDeskParameterCount);
}

TEST(Model, PaperWidthChain) {
    for (const auto& r : spot::testing::paper_shape_suite()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}
