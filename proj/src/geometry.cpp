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

#include "spot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spot {

namespace {

void require_cloud(const Tensor& t, const char* what) {
    if (!t.defined() || t.rank() != 2 || t.dim(1) != 3) {
        throw ShapeError(std::string(what) + ": expected an [N,3] cloud, got " +
                         (t.defined() ? shape_string(t.shape()) : std::string("<undefined>")));
    }
}

} // namespace

PointCloud::PointCloud(Tensor t) : coords(std::move(t)) { require_cloud(coords, "PointCloud"); }

PointCloud PointCloud::from_points(const Points& p, bool requires_grad) {
    if (p.rows() == 0) throw ShapeError("PointCloud: empty cloud");
    return PointCloud(Tensor::from_matrix(p, requires_grad));
}

Eigen::Map<const Points> PointCloud::points() const {
    return Eigen::Map<const Points>(coords.data().data(), coords.dim(0), 3);
}

GroupedFeatures group_features(const NeighborIndex& neighbors, const Tensor& source_coords, const Tensor& source_feats,
                               const Tensor& query_coords) {
    require_cloud(source_coords, "group_features");
    require_cloud(query_coords, "group_features");
    if (source_feats.rank() != 2 || source_feats.dim(0) != source_coords.dim(0)) {
        throw ShapeError("group_features: features " + shape_string(source_feats.shape()) +
                         " not aligned with coordinates " + shape_string(source_coords.shape()));
    }
    const Index nq = neighbors.queries();
    const Index s = neighbors.samples();
    if (nq != query_coords.dim(0)) throw ShapeError("group_features: neighbor rows differ from query count");
    const std::span<const Index> idx(neighbors.indices.data(), static_cast<std::size_t>(nq * s));
    const Shape index_shape{nq, s};
    Tensor gathered = gather_rows(source_coords, idx, index_shape);
    Tensor centers = expand(reshape(query_coords, {nq, 1, 3}), 1, s);
    return {sub(gathered, centers), gather_rows(source_feats, idx, index_shape)};
}

// One pass over all pairs fills both nearest-neighbor tables. Ties resolve to
// the lowest index: rows take the first index attaining the minimum, and a
// column minimum only moves on a strict improvement while rows ascend.
static void nearest_tables(const double* c, Index nc, const double* g, Index ng, std::vector<double>& best_c,
                           std::vector<Index>& arg_c, std::vector<double>& best_g, std::vector<Index>& arg_g) {
    std::vector<double> gx(ng), gy(ng), gz(ng), d(ng);
    for (Index j = 0; j < ng; ++j) {
        gx[j] = g[3 * j];
        gy[j] = g[3 * j + 1];
        gz[j] = g[3 * j + 2];
    }
    best_c.assign(nc, std::numeric_limits<double>::infinity());
    best_g.assign(ng, std::numeric_limits<double>::infinity());
    arg_c.assign(nc, 0);
    arg_g.assign(ng, 0);
    double* bg = best_g.data();
    Index* ag = arg_g.data();
    for (Index i = 0; i < nc; ++i) {
        const double x = c[3 * i], y = c[3 * i + 1], z = c[3 * i + 2];
        for (Index j = 0; j < ng; ++j) {
            const double dx = x - gx[j], dy = y - gy[j], dz = z - gz[j];
            const double dist = dx * dx + dy * dy + dz * dz;
            d[j] = dist;
            const bool better = dist < bg[j];
            bg[j] = better ? dist : bg[j];
            ag[j] = better ? i : ag[j];
        }
        const double bc = Eigen::Map<const Eigen::ArrayXd>(d.data(), ng).minCoeff();
        Index ac = 0;
        while (ac + 1 < ng && !(d[ac] == bc)) ++ac;
        best_c[i] = bc;
        arg_c[i] = ac;
    }
}

static ChamferValues values_from_tables(const std::vector<double>& best_a, const std::vector<double>& best_b) {
    double sq_a = 0, sq_b = 0, n_a = 0, n_b = 0;
    for (double d : best_a) {
        sq_a += d;
        n_a += std::sqrt(d);
    }
    for (double d : best_b) {
        sq_b += d;
        n_b += std::sqrt(d);
    }
    const double ra = 1.0 / static_cast<double>(best_a.size()), rb = 1.0 / static_cast<double>(best_b.size());
    return {sq_a * ra + sq_b * rb, n_a * ra + n_b * rb};
}

Tensor chamfer_distance(const Tensor& pc, const Tensor& pg, bool squared, ChamferValues* both) {
    require_cloud(pc, "chamfer_distance");
    require_cloud(pg, "chamfer_distance");
    const Index nc = pc.dim(0);
    const Index ng = pg.dim(0);
    const double* c = pc.data().data();
    const double* g = pg.data().data();

    std::vector<double> best_c, best_g;
    std::vector<Index> arg_c, arg_g;
    nearest_tables(c, nc, g, ng, best_c, arg_c, best_g, arg_g);

    auto dist = [squared](double d2) { return squared ? d2 : std::sqrt(d2); };
    double term_c = 0.0, term_g = 0.0;
    for (double d : best_c) term_c += dist(d);
    for (double d : best_g) term_g += dist(d);
    const double value = term_c / static_cast<double>(nc) + term_g / static_cast<double>(ng);
    if (both) *both = values_from_tables(best_c, best_g);

    return Tensor::make_result(
        {}, {value}, {pc, pg},
        [nc, ng, squared, arg_c = std::move(arg_c), arg_g = std::move(arg_g)](Tensor::Node& self) {
            Tensor& tc = self.parents[0];
            Tensor& tg = self.parents[1];
            const double upstream = self.grad[0];
            const double* c = tc.data().data();
            const double* g = tg.data().data();
            double* dc = tc.requires_grad() ? tc.node().grad_buffer().data() : nullptr;
            double* dg = tg.requires_grad() ? tg.node().grad_buffer().data() : nullptr;
            // d/dp of |p - q|^2 is 2(p - q); of |p - q| it is (p - q)/|p - q|,
            // taken as zero at coincident points.
            auto pair_grad = [squared](const double* p, const double* q, double w, double* gp, double* gq) {
                double diff[3] = {p[0] - q[0], p[1] - q[1], p[2] - q[2]};
                double factor;
                if (squared) {
                    factor = 2.0 * w;
                } else {
                    const double n = std::sqrt(diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]);
                    factor = n > 0.0 ? w / n : 0.0;
                }
                for (int k = 0; k < 3; ++k) {
                    if (gp) gp[k] += factor * diff[k];
                    if (gq) gq[k] -= factor * diff[k];
                }
            };
            const double wc = upstream / static_cast<double>(nc);
            const double wg = upstream / static_cast<double>(ng);
            for (Index i = 0; i < nc; ++i) {
                const Index j = arg_c[i];
                pair_grad(c + 3 * i, g + 3 * j, wc, dc ? dc + 3 * i : nullptr, dg ? dg + 3 * j : nullptr);
            }
            for (Index j = 0; j < ng; ++j) {
                const Index i = arg_g[j];
                pair_grad(g + 3 * j, c + 3 * i, wg, dg ? dg + 3 * j : nullptr, dc ? dc + 3 * i : nullptr);
            }
        });
}

double LossWeights::staged_fine_weight(int epoch, int total_epochs) {
    const long e = static_cast<long>(epoch) * 60;
    const long t = std::max(total_epochs, 1);
    if (e < 5 * t) return 0.01;
    if (e < 15 * t) return 0.1;
    if (e < 30 * t) return 0.5;
    return 1.0;
}

TargetSubsets make_target_subsets(const Tensor& gt, Index n1, Index n2, Index n3) {
    require_cloud(gt, "make_target_subsets");
    const Eigen::Map<const Points> pts(gt.data().data(), gt.dim(0), 3);
    const auto order = farthest_point_sample(pts, std::max({n1, n2, n3}));
    // FPS is greedy, so every prefix of the order is itself an FPS subset.
    auto take = [&](Index n) {
        return gather_rows(gt.detach(), std::span<const Index>(order.data(), static_cast<std::size_t>(n)), {n});
    };
    return {take(n1), take(n2), take(n3)};
}

ChamferValues chamfer_values(const Points& a, const Points& b) {
    if (a.rows() == 0 || b.rows() == 0) throw ShapeError("chamfer_values: empty cloud");
    std::vector<double> best_a, best_b;
    std::vector<Index> arg_a, arg_b;
    nearest_tables(a.data(), a.rows(), b.data(), b.rows(), best_a, arg_a, best_b, arg_b);
    return values_from_tables(best_a, best_b);
}

LossTerms composite_loss(const StageClouds& outputs, const Tensor& gt, const LossWeights& weights,
                         const TargetSubsets& subsets, bool squared) {
    for (double w : {weights.coarse1, weights.coarse2, weights.coarse3, weights.fine}) {
        if (!(w >= 0.0)) throw ShapeError("composite_loss: weights must be non-negative");
    }
    const Tensor cd1 = chamfer_distance(outputs.p1, subsets.g1, squared);
    const Tensor cd2 = chamfer_distance(outputs.p2, subsets.g2, squared);
    const Tensor cd3 = chamfer_distance(outputs.p3, subsets.g3, squared);
    ChamferValues fine_values;
    const Tensor cdf = chamfer_distance(outputs.fine, gt, squared, &fine_values);
    Tensor total = add(add(scale(cd1, weights.coarse1), scale(cd2, weights.coarse2)),
                       add(scale(cd3, weights.coarse3), scale(cdf, weights.fine)));
    return {total, cd1.item(), cd2.item(), cd3.item(), cdf.item(), fine_values};
}

NormalizedCloud normalize_to_unit_sphere(const Points& cloud) {
    if (cloud.rows() == 0) throw ShapeError("normalize_to_unit_sphere: empty cloud");
    NormalizedCloud out;
    out.center = cloud.colwise().mean();
    const Points centered = cloud.rowwise() - out.center;
    const double radius = centered.rowwise().norm().maxCoeff();
    if (!(radius > 1e-12 * std::max(1.0, out.center.norm()))) {
        throw ShapeError("normalize_to_unit_sphere: degenerate cloud (all points identical)");
    }
    out.scale = radius;
    out.points = centered / radius;
    return out;
}

Points apply_normalization(const Points& cloud, const Eigen::RowVector3d& center, double scale) {
    return (cloud.rowwise() - center) / scale;
}

Points denormalize(const Points& cloud, const Eigen::RowVector3d& center, double scale) {
    return (cloud * scale).rowwise() + center;
}

std::vector<Index> canonical_order(const Points& cloud) {
    std::vector<Index> order(cloud.rows());
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        for (int k = 0; k < 3; ++k) {
            if (cloud(a, k) != cloud(b, k)) return cloud(a, k) < cloud(b, k);
        }
        return false;
    });
    return order;
}

} // namespace spot
