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

// Reference implementations written directly from the defining formulas with
// plain loops. They share nothing with the library beyond its data types.

#pragma once

#include "spot/attention.hpp"
#include "spot/geometry.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace spot::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
    const Index r = t.dim(0), c = t.dim(1);
    Mat m(r, std::vector<double>(c));
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m[i][j] = t.data()[i * c + j];
    return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    const std::size_t m = a.size(), k = b.size(), n = b.front().size();
    Mat c(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += a[i][t] * b[t][j];
            c[i][j] = s;
        }
    return c;
}

inline double sqdist(const Points& a, Index i, const Points& b, Index j) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
    return s;
}

/// Greedy max-min selection, recomputing every min-distance from scratch.
inline std::vector<Index> fps(const Points& p, Index count) {
    std::vector<Index> chosen{0};
    while (static_cast<Index>(chosen.size()) < count) {
        Index best = -1;
        double best_d = -1.0;
        for (Index i = 0; i < p.rows(); ++i) {
            bool used = false;
            for (Index c : chosen) used = used || c == i;
            if (used) continue;
            double dmin = std::numeric_limits<double>::infinity();
            for (Index c : chosen) dmin = std::min(dmin, sqdist(p, i, p, c));
            if (dmin > best_d) {
                best_d = dmin;
                best = i;
            }
        }
        chosen.push_back(best);
    }
    return chosen;
}

struct Neighbors {
    std::vector<std::vector<Index>> indices;
    std::vector<Index> valid;
};

inline Neighbors ball_query(const Points& q, const Points& s, double r, Index cap) {
    Neighbors out;
    for (Index i = 0; i < q.rows(); ++i) {
        std::vector<Index> hits;
        for (Index j = 0; j < s.rows(); ++j)
            if (std::sqrt(sqdist(q, i, s, j)) < r) hits.push_back(j);
        const Index valid = std::min<Index>(static_cast<Index>(hits.size()), cap);
        std::vector<Index> row(hits.begin(), hits.begin() + valid);
        Index pad;
        if (valid > 0) {
            pad = row.front();
        } else {
            pad = 0;
            for (Index j = 1; j < s.rows(); ++j)
                if (sqdist(q, i, s, j) < sqdist(q, i, s, pad)) pad = j;
        }
        while (static_cast<Index>(row.size()) < cap) row.push_back(pad);
        out.indices.push_back(row);
        out.valid.push_back(valid);
    }
    return out;
}

inline double chamfer(const Points& a, const Points& b, bool squared) {
    auto term = [squared](const Points& x, const Points& y) {
        double total = 0.0;
        for (Index i = 0; i < x.rows(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Index j = 0; j < y.rows(); ++j) best = std::min(best, sqdist(x, i, y, j));
            total += squared ? best : std::sqrt(best);
        }
        return total / static_cast<double>(x.rows());
    };
    return term(a, b) + term(b, a);
}

inline Mat project(const Mat& x, const LinearLayer& l) { return matmul(x, to_mat(l.weight)); }

inline std::vector<double> softmax(const std::vector<double>& s) {
    double m = s.front();
    for (double v : s) m = std::max(m, v);
    std::vector<double> e(s.size());
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) z += (e[i] = std::exp(s[i] - m));
    for (double& v : e) v /= z;
    return e;
}

/// softmax(Q K^T / sqrt(d)) V per head, heads concatenated.
inline Mat vanilla_attention(const Mat& f, const AttentionWeights& w) {
    const Mat q = project(f, w.query), k = project(f, w.key), v = project(f, w.value);
    const std::size_t n = f.size();
    const std::size_t d = static_cast<std::size_t>(w.width() / w.heads);
    Mat out(n, std::vector<double>(d * w.heads, 0.0));
    for (std::size_t h = 0; h < static_cast<std::size_t>(w.heads); ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> s(n, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t c = 0; c < d; ++c) s[j] += q[i][h * d + c] * k[j][h * d + c];
                s[j] /= std::sqrt(static_cast<double>(d));
            }
            const auto a = softmax(s);
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < d; ++c) out[i][h * d + c] += a[j] * v[j][h * d + c];
        }
    }
    return out;
}

/// Row i attends over its own S grouped rows only.
inline Mat local_attention(const Mat& query, const std::vector<Mat>& grouped, const AttentionWeights& w) {
    const Mat q = project(query, w.query);
    const std::size_t n = query.size();
    const std::size_t d = static_cast<std::size_t>(w.width() / w.heads);
    Mat out(n, std::vector<double>(d * w.heads, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const Mat k = project(grouped[i], w.key), v = project(grouped[i], w.value);
        const std::size_t s_n = grouped[i].size();
        for (std::size_t h = 0; h < static_cast<std::size_t>(w.heads); ++h) {
            std::vector<double> s(s_n, 0.0);
            for (std::size_t j = 0; j < s_n; ++j) {
                for (std::size_t c = 0; c < d; ++c) s[j] += q[i][h * d + c] * k[j][h * d + c];
                s[j] /= std::sqrt(static_cast<double>(d));
            }
            const auto a = softmax(s);
            for (std::size_t j = 0; j < s_n; ++j)
                for (std::size_t c = 0; c < d; ++c) out[i][h * d + c] += a[j] * v[j][h * d + c];
        }
    }
    return out;
}

inline double max_abs_diff(const Mat& a, const Tensor& b) {
    double m = 0.0;
    const Index c = b.dim(-1);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j)
            m = std::max(m, std::abs(a[i][j] - b.data()[static_cast<Index>(i) * c + static_cast<Index>(j)]));
    return m;
}

inline Points random_points(std::mt19937_64& rng, Index n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Points p(n, 3);
    for (Index i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) p(i, k) = u(rng);
    return p;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, bool grad = false, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

} // namespace spot::oracle
