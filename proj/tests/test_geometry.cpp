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
#include "spot/geometry.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace spot;

namespace {

Points pts(std::initializer_list<std::array<double, 3>> rows) {
    Points p(static_cast<Index>(rows.size()), 3);
    Index i = 0;
    for (const auto& r : rows) p.row(i++) << r[0], r[1], r[2];
    return p;
}

Tensor single(double x, double y = 0, double z = 0) { return Tensor::from({1, 3}, {x, y, z}); }

} // namespace

TEST(FarthestPointSample, ExhaustionIsPermutation) {
    std::mt19937_64 rng(1);
    const Points p = oracle::random_points(rng, 17);
    auto idx = farthest_point_sample(p, 17);
    std::sort(idx.begin(), idx.end());
    std::vector<Index> all(17);
    std::iota(all.begin(), all.end(), Index{0});
    EXPECT_EQ(idx, all);
}

TEST(FarthestPointSample, ColinearExample) {
    const Points p = pts({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {10, 0, 0}});
    EXPECT_EQ(farthest_point_sample(p, 2), (std::vector<Index>{0, 3}));
    EXPECT_EQ(farthest_point_sample(p, 3), (std::vector<Index>{0, 3, 2}));
    EXPECT_EQ(farthest_point_sample(p, 3), oracle::fps(p, 3));
    EXPECT_THROW(farthest_point_sample(p, 5), ShapeError);
}

TEST(BallQuery, SingleAndPairInsideRadius) {
    const Points q = pts({{0, 0, 0}});
    const Points s = pts({{0.5, 0, 0}, {2, 0, 0}});
    const NeighborIndex one = ball_query(q, s, 1.0, 4);
    EXPECT_EQ(one.valid_counts[0], 1);
    for (Index k = 0; k < 4; ++k) EXPECT_EQ(one.indices(0, k), 0);
    const NeighborIndex two = ball_query(q, s, 3.0, 4);
    EXPECT_EQ(two.valid_counts[0], 2);
    EXPECT_EQ(two.indices(0, 0), 0);
    EXPECT_EQ(two.indices(0, 1), 1);
    EXPECT_EQ(two.indices(0, 2), 0);
    EXPECT_EQ(two.indices(0, 3), 0);
}

TEST(BallQuery, EmptyNeighborhoodFallsBackToNearest) {
    const NeighborIndex n = ball_query(pts({{0, 0, 0}}), pts({{5, 0, 0}, {3, 0, 0}, {4, 0, 0}}), 1.0, 3);
    EXPECT_EQ(n.valid_counts[0], 0);
    for (Index k = 0; k < 3; ++k) EXPECT_EQ(n.indices(0, k), 1);
}

TEST(BallQuery, RadiusIsStrict) {
    const NeighborIndex n = ball_query(pts({{0, 0, 0}}), pts({{1, 0, 0}, {0.5, 0, 0}}), 1.0, 2);
    EXPECT_EQ(n.valid_counts[0], 1);
    EXPECT_EQ(n.indices(0, 0), 1);
}

TEST(BallQuery, MatchesExhaustiveScan) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 25; ++t) {
        const Points s = oracle::random_points(rng, 64), q = oracle::random_points(rng, 10);
        const NeighborIndex got = ball_query(q, s, 0.3, 8);
        const auto want = oracle::ball_query(q, s, 0.3, 8);
        for (Index i = 0; i < q.rows(); ++i) {
            EXPECT_EQ(got.valid_counts[i], want.valid[i]);
            for (Index k = 0; k < 8; ++k) EXPECT_EQ(got.indices(i, k), want.indices[i][k]);
        }
    }
}

TEST(BallQuery, RejectsBadArguments) {
    const Points s = pts({{0, 0, 0}});
    EXPECT_THROW(ball_query(s, Points(0, 3), 1.0, 2), ShapeError);
    EXPECT_THROW(ball_query(s, s, 0.0, 2), ShapeError);
    EXPECT_THROW(ball_query(s, s, 1.0, 0), ShapeError);
}

TEST(GroupFeatures, SelfNeighborIsZeroOffset) {
    std::mt19937_64 rng(3);
    const Points p = oracle::random_points(rng, 6);
    NeighborIndex nbr;
    nbr.indices.resize(6, 1);
    nbr.valid_counts.resize(6);
    for (Index i = 0; i < 6; ++i) nbr.indices(i, 0) = i, nbr.valid_counts[i] = 1;
    const Tensor feats = oracle::random_tensor(rng, {6, 5});
    const GroupedFeatures g = group_features(nbr, Tensor::from_matrix(p), feats, Tensor::from_matrix(p));
    EXPECT_EQ(g.rel_coords.shape(), (Shape{6, 1, 3}));
    for (double v : g.rel_coords.data()) EXPECT_EQ(v, 0.0);
    EXPECT_TRUE(std::equal(g.feats.data().begin(), g.feats.data().end(), feats.data().begin()));
}

TEST(GroupFeatures, MatchesLoopOracle) {
    std::mt19937_64 rng(4);
    const Points s = oracle::random_points(rng, 30), q = oracle::random_points(rng, 7);
    const NeighborIndex nbr = ball_query(q, s, 0.8, 5);
    const Tensor feats = oracle::random_tensor(rng, {30, 4});
    const GroupedFeatures g = group_features(nbr, Tensor::from_matrix(s), feats, Tensor::from_matrix(q));
    for (Index i = 0; i < 7; ++i)
        for (Index k = 0; k < 5; ++k) {
            const Index j = nbr.indices(i, k);
            for (int c = 0; c < 3; ++c) EXPECT_EQ(g.rel_coords.at({i, k, c}), s(j, c) - q(i, c));
            for (Index c = 0; c < 4; ++c) EXPECT_EQ(g.feats.at({i, k, c}), feats.at({j, c}));
        }
}

TEST(Chamfer, IdentityAndTwoPoints) {
    std::mt19937_64 rng(5);
    const Tensor a = Tensor::from_matrix(oracle::random_points(rng, 12));
    EXPECT_EQ(chamfer_distance(a, a, true).item(), 0.0);
    EXPECT_EQ(chamfer_distance(a, a, false).item(), 0.0);
    EXPECT_DOUBLE_EQ(chamfer_distance(single(0), single(2), false).item(), 4.0);
    EXPECT_DOUBLE_EQ(chamfer_distance(single(0), single(2), true).item(), 8.0);
}

TEST(Chamfer, MatchesDoubleLoop) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 30; ++t) {
        const Points a = oracle::random_points(rng, 16), b = oracle::random_points(rng, 16);
        for (bool sq : {true, false})
            EXPECT_NEAR(chamfer_distance(Tensor::from_matrix(a), Tensor::from_matrix(b), sq).item(),
                        oracle::chamfer(a, b, sq), 1e-12);
        const ChamferValues v = chamfer_values(a, b);
        EXPECT_NEAR(v.squared, oracle::chamfer(a, b, true), 1e-12);
        EXPECT_NEAR(v.norm, oracle::chamfer(a, b, false), 1e-12);
    }
}

TEST(Chamfer, BothVariantsFromOnePass) {
    std::mt19937_64 rng(7);
    const Tensor a = Tensor::from_matrix(oracle::random_points(rng, 40));
    const Tensor b = Tensor::from_matrix(oracle::random_points(rng, 33));
    ChamferValues both;
    const double sq = chamfer_distance(a, b, true, &both).item();
    EXPECT_EQ(both.squared, sq);
    EXPECT_EQ(both.norm, chamfer_distance(a, b, false).item());
}

TEST(Chamfer, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    for (bool sq : {true, false}) {
        const Tensor a = oracle::random_tensor(rng, {10, 3}, true, -1, 1);
        const Tensor b = oracle::random_tensor(rng, {8, 3}, true, -1, 1);
        const auto e = spot::testing::check_gradients([sq](const auto& x) { return chamfer_distance(x[0], x[1], sq); }, {a, b});
        EXPECT_LT(e.max_rel, 1e-5) << (sq ? "squared" : "norm");
    }
}

TEST(Chamfer, RejectsEmptyAndMalformedClouds) {
    EXPECT_THROW(chamfer_values(Points(0, 3), pts({{0, 0, 0}})), ShapeError);
    EXPECT_THROW(chamfer_distance(Tensor::zeros({4, 2}), single(0), true), ShapeError);
}

TEST(CompositeLoss, ZeroWeightsAndPerfectFine) {
    std::mt19937_64 rng(9);
    StageClouds out{Tensor::from_matrix(oracle::random_points(rng, 8)), Tensor::from_matrix(oracle::random_points(rng, 4)),
                    Tensor::from_matrix(oracle::random_points(rng, 2)), Tensor::from_matrix(oracle::random_points(rng, 16))};
    const Tensor gt = Tensor::from_matrix(oracle::random_points(rng, 16));
    const TargetSubsets subsets = make_target_subsets(gt, 8, 4, 2);
    EXPECT_EQ(subsets.g1.dim(0), 8);
    EXPECT_EQ(subsets.g3.dim(0), 2);
    EXPECT_EQ(composite_loss(out, gt, LossWeights{0, 0, 0, 0}, subsets).total.item(), 0.0);
    out.fine = gt;
    EXPECT_EQ(composite_loss(out, gt, LossWeights{0, 0, 0, 1}, subsets).total.item(), 0.0);
    EXPECT_THROW(composite_loss(out, gt, LossWeights{-1, 0, 0, 1}, subsets), ShapeError);
}

TEST(CompositeLoss, WeightedSumOfKnownTerms) {
    // Single-point pairs at distances 1, 2, 3 and 0.5: squared CDs 2, 8, 18, 0.5.
    const StageClouds out{single(0), single(0), single(0), single(0)};
    const TargetSubsets subsets{single(1), single(0, 2), single(0, 0, 3)};
    const Tensor gt = single(0.5);
    const LossTerms t = composite_loss(out, gt, LossWeights{10, 0.5, 0.5, 1}, subsets);
    EXPECT_DOUBLE_EQ(t.cd1, 2.0);
    EXPECT_DOUBLE_EQ(t.cd2, 8.0);
    EXPECT_DOUBLE_EQ(t.cd3, 18.0);
    EXPECT_DOUBLE_EQ(t.cd_fine, 0.5);
    EXPECT_DOUBLE_EQ(t.total.item(), 10 * 2.0 + 0.5 * 8.0 + 0.5 * 18.0 + 0.5);
    EXPECT_DOUBLE_EQ(composite_loss(out, gt, LossWeights{10, 0.5, 0.5, 1}, subsets, false).total.item(),
                     10 * 2.0 + 0.5 * 4.0 + 0.5 * 6.0 + 1.0);
}

TEST(LossWeights, StagedFineSchedule) {
    EXPECT_EQ(LossWeights::staged_fine_weight(0, 60), 0.01);
    EXPECT_EQ(LossWeights::staged_fine_weight(4, 60), 0.01);
    EXPECT_EQ(LossWeights::staged_fine_weight(5, 60), 0.1);
    EXPECT_EQ(LossWeights::staged_fine_weight(15, 60), 0.5);
    EXPECT_EQ(LossWeights::staged_fine_weight(30, 60), 1.0);
    EXPECT_EQ(LossWeights::staged_fine_weight(59, 60), 1.0);
}

TEST(Normalize, UnitSphereRoundTrip) {
    std::mt19937_64 rng(10);
    Points p = oracle::random_points(rng, 50, 4, 6);
    const NormalizedCloud n = normalize_to_unit_sphere(p);
    EXPECT_LT(n.points.colwise().mean().norm(), 1e-12);
    EXPECT_NEAR(n.points.rowwise().norm().maxCoeff(), 1.0, 1e-12);
    EXPECT_LT((denormalize(n.points, n.center, n.scale) - p).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((apply_normalization(p, n.center, n.scale) - n.points).cwiseAbs().maxCoeff(), 1e-12);

    const NormalizedCloud again = normalize_to_unit_sphere(n.points);
    EXPECT_LT((again.points - n.points).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalize, OffsetCloudIsCentered) {
    const Points p = pts({{5, 5, 5}, {6, 5, 5}, {5, 6, 5}, {5, 5, 6}});
    const NormalizedCloud n = normalize_to_unit_sphere(p);
    EXPECT_NEAR(n.center(0), 5.25, 1e-15);
    EXPECT_LT(n.points.colwise().mean().norm(), 1e-12);
}

TEST(Normalize, DegenerateCloudThrows) {
    EXPECT_THROW(normalize_to_unit_sphere(pts({{1, 2, 3}, {1, 2, 3}})), ShapeError);
    EXPECT_THROW(normalize_to_unit_sphere(Points(0, 3)), ShapeError);
}

TEST(CanonicalOrder, LexicographicAndStable) {
    const Points p = pts({{1, 0, 0}, {0, 2, 0}, {0, 1, 5}, {1, 0, 0}});
    EXPECT_EQ(canonical_order(p), (std::vector<Index>{2, 1, 0, 3}));
}
