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

// Point-set kernels: sampling, neighborhoods, grouping, Chamfer metrics.
//
// The index-producing kernels (farthest point sampling, ball query, nearest
// neighbor matching) are templates over any Eigen expression with three
// columns. The differentiable entry points take Tensors.

#pragma once

#include "spot/tensor.hpp"

#include <Eigen/Core>

#include <limits>
#include <vector>

namespace spot {

template <typename Scalar>
using PointMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Points = PointMatrix<double>;

/// An N x 3 coordinate set backed by a tensor so that it can carry gradients.
struct PointCloud {
    Tensor coords;

    PointCloud() = default;
    explicit PointCloud(Tensor t);
    static PointCloud from_points(const Points& p, bool requires_grad = false);

    Index size() const { return coords.dim(0); }
    Eigen::Map<const Points> points() const;
};

/// Neighbor lists for each query point. Slots past `valid_counts[i]` repeat a
/// valid neighbor (or the nearest source point when none qualified).
struct NeighborIndex {
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> indices;
    Eigen::Matrix<Index, Eigen::Dynamic, 1> valid_counts;

    Index queries() const { return indices.rows(); }
    Index samples() const { return indices.cols(); }
};

/// Greedy max-min subset selection seeded at index 0. Returns `count`
/// distinct indices in selection order; ties go to the lowest index.
template <typename Derived>
std::vector<Index> farthest_point_sample(const Eigen::MatrixBase<Derived>& points, Index count) {
    using Scalar = typename Derived::Scalar;
    const Index n = points.rows();
    if (count < 1 || count > n) {
        throw ShapeError("farthest_point_sample: count " + std::to_string(count) + " not in [1, " +
                         std::to_string(n) + "]");
    }
    std::vector<Index> picked;
    picked.reserve(count);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nearest =
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Constant(n, std::numeric_limits<Scalar>::infinity());
    std::vector<bool> taken(n, false);
    Index current = 0;
    for (Index k = 0; k < count; ++k) {
        picked.push_back(current);
        taken[current] = true;
        const auto anchor = points.row(current);
        Index next = 0;
        Scalar best = Scalar(-1);
        for (Index i = 0; i < n; ++i) {
            const Scalar d = (points.row(i) - anchor).squaredNorm();
            if (d < nearest[i]) nearest[i] = d;
            if (!taken[i] && nearest[i] > best) {
                best = nearest[i];
                next = i;
            }
        }
        current = next;
    }
    return picked;
}

/// Radius-bounded neighbor search with a cap, ascending source-index order,
/// and first-hit padding. Queries with no point inside the radius get the
/// nearest source point in every slot and a valid count of zero.
template <typename DerivedQ, typename DerivedS>
NeighborIndex ball_query(const Eigen::MatrixBase<DerivedQ>& query, const Eigen::MatrixBase<DerivedS>& source,
                         double radius, Index max_samples) {
    using Scalar = typename DerivedS::Scalar;
    if (source.rows() == 0) throw ShapeError("ball_query: empty source cloud");
    if (!(radius > 0.0)) throw ShapeError("ball_query: radius must be positive");
    if (max_samples < 1) throw ShapeError("ball_query: max_samples must be >= 1");
    const Scalar r2 = static_cast<Scalar>(radius * radius);
    NeighborIndex out;
    out.indices.resize(query.rows(), max_samples);
    out.valid_counts.resize(query.rows());
    for (Index q = 0; q < query.rows(); ++q) {
        const auto center = query.row(q);
        Index found = 0;
        Index nearest = 0;
        Scalar nearest_d = std::numeric_limits<Scalar>::infinity();
        for (Index s = 0; s < source.rows(); ++s) {
            const Scalar d = (source.row(s) - center).squaredNorm();
            if (d < nearest_d) {
                nearest_d = d;
                nearest = s;
            }
            if (d < r2 && found < max_samples) out.indices(q, found++) = s;
        }
        out.valid_counts[q] = found;
        const Index pad = found > 0 ? out.indices(q, 0) : nearest;
        for (Index k = found; k < max_samples; ++k) out.indices(q, k) = pad;
    }
    return out;
}

/// For every row of `from`, the index of its nearest row in `to` (lowest index
/// on ties) and the squared distance to it.
template <typename DerivedA, typename DerivedB>
void nearest_neighbors(const Eigen::MatrixBase<DerivedA>& from, const Eigen::MatrixBase<DerivedB>& to,
                       std::vector<Index>& index, std::vector<typename DerivedA::Scalar>& squared) {
    using Scalar = typename DerivedA::Scalar;
    index.assign(from.rows(), 0);
    squared.assign(from.rows(), std::numeric_limits<Scalar>::infinity());
    for (Index i = 0; i < from.rows(); ++i) {
        for (Index j = 0; j < to.rows(); ++j) {
            const Scalar d = (from.row(i) - to.row(j)).squaredNorm();
            if (d < squared[i]) {
                squared[i] = d;
                index[i] = j;
            }
        }
    }
}

struct GroupedFeatures {
    Tensor rel_coords; // [N_q, S, 3]
    Tensor feats;      // [N_q, S, C]
};

/// Gathers neighborhood coordinates (relative to each query point) and
/// features. Gradients flow back into `source_feats` and both coordinate sets.
GroupedFeatures group_features(const NeighborIndex& neighbors, const Tensor& source_coords, const Tensor& source_feats,
                               const Tensor& query_coords);

struct ChamferValues {
    double squared = 0;
    double norm = 0;
};

/// Both Chamfer variants from one pass, without building a graph.
ChamferValues chamfer_values(const Points& a, const Points& b);

/// Symmetric Chamfer distance: mean nearest distance from `pc` to `pg` plus
/// the mean nearest distance back. `squared` selects squared L2 over the norm.
/// `both`, when given, receives the values of both variants.
Tensor chamfer_distance(const Tensor& pc, const Tensor& pg, bool squared, ChamferValues* both = nullptr);
inline Tensor chamfer_distance(const PointCloud& pc, const PointCloud& pg, bool squared) {
    return chamfer_distance(pc.coords, pg.coords, squared);
}

struct LossWeights {
    double coarse1 = 10.0;
    double coarse2 = 0.5;
    double coarse3 = 0.5;
    double fine = 1.0;

    /// Staged fine-term weight: 0.01, 0.1, 0.5, then 1 with boundaries at
    /// 1/12, 1/4 and 1/2 of `total_epochs` (5/15/30 of 60). `epoch` is 0-based.
    static double staged_fine_weight(int epoch, int total_epochs);
};

struct StageClouds {
    Tensor p1;   // [N1, 3]
    Tensor p2;   // [N2, 3]
    Tensor p3;   // [N3, 3]
    Tensor fine; // [out_n, 3]
};

/// Ground-truth subsets matched to each coarse output's resolution.
struct TargetSubsets {
    Tensor g1;
    Tensor g2;
    Tensor g3;
};

/// FPS subsets of `gt` with the row counts of each coarse output.
TargetSubsets make_target_subsets(const Tensor& gt, Index n1, Index n2, Index n3);

struct LossTerms {
    Tensor total;
    double cd1 = 0;
    double cd2 = 0;
    double cd3 = 0;
    double cd_fine = 0;
    ChamferValues fine_values; // both variants for the fine output
};

LossTerms composite_loss(const StageClouds& outputs, const Tensor& gt, const LossWeights& weights,
                         const TargetSubsets& subsets, bool squared = true);

struct NormalizedCloud {
    Points points;
    Eigen::RowVector3d center;
    double scale = 1.0; // original = points * scale + center
};

/// Centers at the centroid and scales so that the farthest point has norm 1.
/// Throws ShapeError for empty or degenerate (all points identical) input.
NormalizedCloud normalize_to_unit_sphere(const Points& cloud);
Points apply_normalization(const Points& cloud, const Eigen::RowVector3d& center, double scale);
Points denormalize(const Points& cloud, const Eigen::RowVector3d& center, double scale);

/// Stable lexicographic (x, y, z) ordering of the rows.
std::vector<Index> canonical_order(const Points& cloud);

} // namespace spot
