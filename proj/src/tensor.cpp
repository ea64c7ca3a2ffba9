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

#include "spot/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace spot {

namespace {

std::atomic<std::uint64_t> next_node_id{1};

// Extents split around one axis: [outer, length, inner].
struct AxisSplit {
    Index outer = 1;
    Index length = 1;
    Index inner = 1;
};

AxisSplit split_at(const Shape& shape, Index axis) {
    AxisSplit s;
    for (Index i = 0; i < axis; ++i) s.outer *= shape[i];
    s.length = shape[axis];
    for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) s.inner *= shape[i];
    return s;
}

void check_shape(const Shape& shape) {
    for (Index e : shape) {
        if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
    }
}

bool is_suffix(const Shape& full, const Shape& tail) {
    if (tail.size() > full.size()) return false;
    return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

enum class Elementwise { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Elementwise kind) {
    const char* names[] = {"add", "sub", "mul"};
    if (!is_suffix(a.shape(), b.shape())) {
        throw ShapeError(std::string(names[static_cast<int>(kind)]) + ": shapes " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " are not broadcast-compatible");
    }
    const Index n = a.numel();
    const Index inner = b.numel();
    const auto ad = a.data();
    const auto bd = b.data();
    Buffer out(n);
    for (Index i = 0; i < n; ++i) {
        const double x = ad[i];
        const double y = bd[i % inner];
        switch (kind) {
        case Elementwise::add: out[i] = x + y; break;
        case Elementwise::sub: out[i] = x - y; break;
        case Elementwise::mul: out[i] = x * y; break;
        }
    }
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [kind, n, inner](Tensor::Node& self) {
        Tensor& pa = self.parents[0];
        Tensor& pb = self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad()) {
            auto& ga = pa.node().grad_buffer();
            if (kind == Elementwise::mul) {
                const auto bd = pb.data();
                for (Index i = 0; i < n; ++i) ga[i] += g[i] * bd[i % inner];
            } else {
                for (Index i = 0; i < n; ++i) ga[i] += g[i];
            }
        }
        if (pb.requires_grad()) {
            auto& gb = pb.node().grad_buffer();
            const double sign = kind == Elementwise::sub ? -1.0 : 1.0;
            if (kind == Elementwise::mul) {
                const auto ad = pa.data();
                for (Index i = 0; i < n; ++i) gb[i % inner] += g[i] * ad[i];
            } else {
                for (Index i = 0; i < n; ++i) gb[i % inner] += sign * g[i];
            }
        }
    });
}

} // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Index shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

Index normalize_axis(Index axis, Index rank) {
    const Index a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    }
    return a;
}

Buffer& Tensor::Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    return from_buffer(std::move(shape), Buffer(data.begin(), data.end()), requires_grad);
}

Tensor Tensor::from_buffer(Shape shape, Buffer data, bool requires_grad) {
    check_shape(shape);
    if (shape_numel(shape) != static_cast<Index>(data.size())) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->id = next_node_id++;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_shape(shape);
    const Index n = shape_numel(shape);
    return from_buffer(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::from_matrix(const RowMatrix& m, bool requires_grad) {
    return from_buffer({m.rows(), m.cols()}, Buffer(m.data(), m.data() + m.size()), requires_grad);
}

Tensor Tensor::make_result(Shape shape, Buffer data, std::vector<Tensor> parents,
                           BackwardFn backward) {
    Tensor out = from_buffer(std::move(shape), std::move(data), false);
    const bool tracked = std::any_of(parents.begin(), parents.end(),
                                     [](const Tensor& p) { return p.requires_grad(); });
    if (tracked) {
        out.node_->requires_grad = true;
        out.node_->parents = std::move(parents);
        out.node_->backward = std::move(backward);
    }
    return out;
}

const Shape& Tensor::shape() const { return node_->shape; }

Index Tensor::numel() const { return static_cast<Index>(node_->data.size()); }

Index Tensor::dim(Index axis) const { return node_->shape[normalize_axis(axis, rank())]; }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<Index> index) const {
    if (static_cast<Index>(index.size()) != rank()) throw ShapeError("index rank mismatch");
    Index flat = 0;
    Index i = 0;
    for (Index v : index) {
        if (v < 0 || v >= node_->shape[i]) throw ShapeError("index out of range");
        flat = flat * node_->shape[i] + v;
        ++i;
    }
    return node_->data[flat];
}

ConstMatrixMap Tensor::matrix() const {
    const Index cols = rank() == 0 ? 1 : shape().back();
    return ConstMatrixMap(node_->data.data(), numel() / cols, cols);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_buffer(shape(), node_->data, false); }

void Tensor::backward() const {
    if (numel() != 1) throw ShapeError("backward() requires a scalar loss, got shape " + shape_string(shape()));
    if (!requires_grad()) return;

    // Iterative post-order DFS; reversing it gives a valid topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].node_.get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (!(*it)->is_leaf()) (*it)->backward(**it);
    }
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Elementwise::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Elementwise::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Elementwise::mul); }

Tensor scale(const Tensor& x, double factor) {
    Buffer out(x.data().begin(), x.data().end());
    for (double& v : out) v *= factor;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [factor](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    });
}

namespace {

// Eigen's blocked GEMM has a fixed setup cost that dominates for the tiny
// per-batch products of neighborhood attention; below this size the
// coefficient-wise product is faster.
constexpr Index kLazyProductLimit = 8192;

template <typename Dst, typename Lhs, typename Rhs>
void product_into(Dst&& dst, const Lhs& lhs, const Rhs& rhs, bool accumulate) {
    if (lhs.rows() * lhs.cols() * rhs.cols() <= kLazyProductLimit) {
        if (accumulate) dst.noalias() += lhs.lazyProduct(rhs);
        else dst.noalias() = lhs.lazyProduct(rhs);
    } else {
        if (accumulate) dst.noalias() += lhs * rhs;
        else dst.noalias() = lhs * rhs;
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul needs rank >= 2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    }
    const Index m = a.dim(-2);
    const Index k = a.dim(-1);
    const Index n = b.dim(-1);
    if (b.dim(-2) != k) {
        throw ShapeError("matmul inner extents differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    const Index batch_rank = std::max(a.rank(), b.rank()) - 2;
    Shape a_batch(batch_rank, 1);
    Shape b_batch(batch_rank, 1);
    std::copy(a.shape().begin(), a.shape().end() - 2, a_batch.end() - (a.rank() - 2));
    std::copy(b.shape().begin(), b.shape().end() - 2, b_batch.end() - (b.rank() - 2));
    Shape out_shape(batch_rank);
    for (Index i = 0; i < batch_rank; ++i) {
        if (a_batch[i] != b_batch[i] && a_batch[i] != 1 && b_batch[i] != 1) {
            throw ShapeError("matmul batch extents not broadcastable: " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
        }
        out_shape[i] = std::max(a_batch[i], b_batch[i]);
    }
    const Index batches = shape_numel(out_shape);

    // Per-batch matrix offsets, honoring broadcast (stride 0) extents.
    std::vector<Index> a_off(batches), b_off(batches);
    for (Index t = 0; t < batches; ++t) {
        Index rem = t, ai = 0, bi = 0, a_stride = 1, b_stride = 1;
        for (Index d = batch_rank - 1; d >= 0; --d) {
            const Index coord = rem % out_shape[d];
            rem /= out_shape[d];
            if (a_batch[d] != 1) ai += coord * a_stride;
            if (b_batch[d] != 1) bi += coord * b_stride;
            a_stride *= a_batch[d];
            b_stride *= b_batch[d];
        }
        a_off[t] = ai * m * k;
        b_off[t] = bi * k * n;
    }

    out_shape.push_back(m);
    out_shape.push_back(n);
    Buffer out(batches * m * n);
    for (Index t = 0; t < batches; ++t) {
        product_into(MatrixMap(out.data() + t * m * n, m, n), ConstMatrixMap(a.data().data() + a_off[t], m, k),
                     ConstMatrixMap(b.data().data() + b_off[t], k, n), false);
    }
    return Tensor::make_result(
        std::move(out_shape), std::move(out), {a, b},
        [m, k, n, batches, a_off = std::move(a_off), b_off = std::move(b_off)](Tensor::Node& self) {
            Tensor& pa = self.parents[0];
            Tensor& pb = self.parents[1];
            for (Index t = 0; t < batches; ++t) {
                ConstMatrixMap gc(self.grad.data() + t * m * n, m, n);
                if (pa.requires_grad()) {
                    product_into(MatrixMap(pa.node().grad_buffer().data() + a_off[t], m, k), gc,
                                 ConstMatrixMap(pb.data().data() + b_off[t], k, n).transpose(), true);
                }
                if (pb.requires_grad()) {
                    product_into(MatrixMap(pb.node().grad_buffer().data() + b_off[t], k, n),
                                 ConstMatrixMap(pa.data().data() + a_off[t], m, k).transpose(), gc, true);
                }
            }
        });
}

Tensor relu(const Tensor& x) {
    Buffer out(x.data().begin(), x.data().end());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](Tensor::Node& self) {
        Tensor& p = self.parents[0];
        auto& g = p.node().grad_buffer();
        const auto xd = p.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xd[i] > 0.0) g[i] += self.grad[i];
        }
    });
}

Tensor tanh(const Tensor& x) {
    Buffer out(x.data().begin(), x.data().end());
    for (double& v : out) v = std::tanh(v);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = self.data[i];
            g[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

namespace {

// g(r) = tanh(r) / r and h(r) = g'(r) / r, with series near the origin.
void radial_factors(double r, double& g, double& h) {
    if (r < 1e-3) {
        const double r2 = r * r;
        g = 1.0 - r2 / 3.0 + 2.0 * r2 * r2 / 15.0;
        h = -2.0 / 3.0 + 8.0 * r2 / 15.0 - 34.0 * r2 * r2 / 105.0;
        return;
    }
    const double t = std::tanh(r);
    g = t / r;
    h = (r * (1.0 - t * t) - t) / (r * r * r);
}

} // namespace

Tensor radial_tanh(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("radial_tanh needs rank >= 1");
    const Index d = x.dim(-1);
    const Index rows = x.numel() / d;
    const auto xd = x.data();
    Buffer out(x.numel());
    for (Index i = 0; i < rows; ++i) {
        double r2 = 0.0;
        for (Index c = 0; c < d; ++c) r2 += xd[i * d + c] * xd[i * d + c];
        double g, h;
        radial_factors(std::sqrt(r2), g, h);
        for (Index c = 0; c < d; ++c) out[i * d + c] = g * xd[i * d + c];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [d, rows](Tensor::Node& self) {
        Tensor& p = self.parents[0];
        auto& gx = p.node().grad_buffer();
        const auto xd = p.data();
        for (Index i = 0; i < rows; ++i) {
            const double* v = xd.data() + i * d;
            const double* gy = self.grad.data() + i * d;
            double r2 = 0.0, dot = 0.0;
            for (Index c = 0; c < d; ++c) {
                r2 += v[c] * v[c];
                dot += v[c] * gy[c];
            }
            double g, h;
            radial_factors(std::sqrt(r2), g, h);
            for (Index c = 0; c < d; ++c) gx[i * d + c] += g * gy[c] + h * dot * v[c];
        }
    });
}

Tensor softmax(const Tensor& x, Index axis) {
    const Index ax = normalize_axis(axis, x.rank());
    const AxisSplit s = split_at(x.shape(), ax);
    const auto xd = x.data();
    for (double v : xd) {
        if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
    }
    Buffer out(x.numel());
    for (Index o = 0; o < s.outer; ++o) {
        for (Index i = 0; i < s.inner; ++i) {
            const Index base = o * s.length * s.inner + i;
            double mx = xd[base];
            for (Index k = 1; k < s.length; ++k) mx = std::max(mx, xd[base + k * s.inner]);
            double total = 0.0;
            for (Index k = 0; k < s.length; ++k) {
                const double e = std::exp(xd[base + k * s.inner] - mx);
                out[base + k * s.inner] = e;
                total += e;
            }
            for (Index k = 0; k < s.length; ++k) out[base + k * s.inner] /= total;
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [s](Tensor::Node& self) {
        auto& gx = self.parents[0].node().grad_buffer();
        const auto& y = self.data;
        const auto& gy = self.grad;
        for (Index o = 0; o < s.outer; ++o) {
            for (Index i = 0; i < s.inner; ++i) {
                const Index base = o * s.length * s.inner + i;
                double dot = 0.0;
                for (Index k = 0; k < s.length; ++k) dot += gy[base + k * s.inner] * y[base + k * s.inner];
                for (Index k = 0; k < s.length; ++k) {
                    const Index idx = base + k * s.inner;
                    gx[idx] += y[idx] * (gy[idx] - dot);
                }
            }
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, Index axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Index rank = parts.front().rank();
    const Index ax = normalize_axis(axis, rank);
    Shape out_shape = parts.front().shape();
    out_shape[ax] = 0;
    for (const Tensor& p : parts) {
        Shape probe = p.shape();
        if (p.rank() != rank) throw ShapeError("concat rank mismatch: " + shape_string(p.shape()));
        probe[ax] = 0;
        Shape ref = parts.front().shape();
        ref[ax] = 0;
        if (probe != ref) {
            throw ShapeError("concat shapes " + shape_string(parts.front().shape()) + " and " +
                             shape_string(p.shape()) + " differ off axis " + std::to_string(ax));
        }
        out_shape[ax] += p.shape()[ax];
    }
    const AxisSplit s = split_at(out_shape, ax);
    Buffer out(shape_numel(out_shape));
    std::vector<Index> widths;
    Index col = 0;
    for (const Tensor& p : parts) {
        const Index w = p.shape()[ax] * s.inner;
        widths.push_back(w);
        const auto pd = p.data();
        for (Index o = 0; o < s.outer; ++o) {
            std::copy_n(pd.begin() + o * w, w, out.begin() + o * s.length * s.inner + col);
        }
        col += w;
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), parts,
                               [s, widths = std::move(widths)](Tensor::Node& self) {
                                   Index col = 0;
                                   for (std::size_t j = 0; j < self.parents.size(); ++j) {
                                       Tensor& p = self.parents[j];
                                       const Index w = widths[j];
                                       if (p.requires_grad()) {
                                           auto& g = p.node().grad_buffer();
                                           for (Index o = 0; o < s.outer; ++o) {
                                               const double* src = self.grad.data() + o * s.length * s.inner + col;
                                               for (Index c = 0; c < w; ++c) g[o * w + c] += src[c];
                                           }
                                       }
                                       col += w;
                                   }
                               });
}

Tensor slice(const Tensor& x, Index axis, Index start, Index length) {
    const Index ax = normalize_axis(axis, x.rank());
    const AxisSplit s = split_at(x.shape(), ax);
    if (start < 0 || length <= 0 || start + length > s.length) {
        throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of range for " +
                         shape_string(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[ax] = length;
    const Index w = length * s.inner;
    const Index row = s.length * s.inner;
    const Index off = start * s.inner;
    Buffer out(s.outer * w);
    const auto xd = x.data();
    for (Index o = 0; o < s.outer; ++o) std::copy_n(xd.begin() + o * row + off, w, out.begin() + o * w);
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [s, w, row, off](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (Index o = 0; o < s.outer; ++o) {
            for (Index c = 0; c < w; ++c) g[o * row + off + c] += self.grad[o * w + c];
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    check_shape(shape);
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape) + " changes size");
    }
    Buffer out(x.data().begin(), x.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor transpose(const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_string(x.shape()));
    const Index m = x.dim(-2);
    const Index n = x.dim(-1);
    const Index batches = x.numel() / (m * n);
    Shape out_shape = x.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    Buffer out(x.numel());
    for (Index t = 0; t < batches; ++t) {
        MatrixMap(out.data() + t * m * n, n, m) = ConstMatrixMap(x.data().data() + t * m * n, m, n).transpose();
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [m, n, batches](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (Index t = 0; t < batches; ++t) {
            MatrixMap(g.data() + t * m * n, m, n) += ConstMatrixMap(self.grad.data() + t * m * n, n, m).transpose();
        }
    });
}

Tensor expand(const Tensor& x, Index axis, Index count) {
    const Index ax = normalize_axis(axis, x.rank());
    if (x.shape()[ax] != 1 || count < 1) {
        throw ShapeError("expand needs a size-1 axis, got " + shape_string(x.shape()) + " at axis " +
                         std::to_string(ax));
    }
    const AxisSplit s = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape[ax] = count;
    Buffer out(s.outer * count * s.inner);
    const auto xd = x.data();
    for (Index o = 0; o < s.outer; ++o) {
        for (Index k = 0; k < count; ++k) {
            std::copy_n(xd.begin() + o * s.inner, s.inner, out.begin() + (o * count + k) * s.inner);
        }
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [s, count](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (Index o = 0; o < s.outer; ++o) {
            for (Index k = 0; k < count; ++k) {
                const double* src = self.grad.data() + (o * count + k) * s.inner;
                for (Index i = 0; i < s.inner; ++i) g[o * s.inner + i] += src[i];
            }
        }
    });
}

Tensor max_pool(const Tensor& x, Index axis) {
    const Index ax = normalize_axis(axis, x.rank());
    const AxisSplit s = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + ax);
    Buffer out(s.outer * s.inner);
    std::vector<Index> arg(s.outer * s.inner);
    const auto xd = x.data();
    for (Index o = 0; o < s.outer; ++o) {
        for (Index i = 0; i < s.inner; ++i) {
            const Index base = o * s.length * s.inner + i;
            Index best = 0;
            for (Index k = 1; k < s.length; ++k) {
                if (xd[base + k * s.inner] > xd[base + best * s.inner]) best = k;
            }
            out[o * s.inner + i] = xd[base + best * s.inner];
            arg[o * s.inner + i] = base + best * s.inner;
        }
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [arg = std::move(arg)](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (std::size_t j = 0; j < arg.size(); ++j) g[arg[j]] += self.grad[j];
    });
}

Tensor gather_rows(const Tensor& x, std::span<const Index> indices, const Shape& index_shape) {
    if (x.rank() < 1) throw ShapeError("gather_rows needs rank >= 1");
    if (shape_numel(index_shape) != static_cast<Index>(indices.size())) {
        throw ShapeError("gather_rows: index count does not match index shape " + shape_string(index_shape));
    }
    const Index rows = x.dim(0);
    const Index width = x.numel() / rows;
    Shape out_shape = index_shape;
    out_shape.insert(out_shape.end(), x.shape().begin() + 1, x.shape().end());
    Buffer out(indices.size() * width);
    const auto xd = x.data();
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const Index r = indices[j];
        if (r < 0 || r >= rows) {
            throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range for " +
                             std::to_string(rows) + " rows");
        }
        std::copy_n(xd.begin() + r * width, width, out.begin() + j * width);
    }
    std::vector<Index> idx(indices.begin(), indices.end());
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [idx = std::move(idx), width](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (std::size_t j = 0; j < idx.size(); ++j) {
            for (Index c = 0; c < width; ++c) g[idx[j] * width + c] += self.grad[j * width + c];
        }
    });
}

Tensor sum(const Tensor& x) {
    const auto xd = x.data();
    const double total = std::accumulate(xd.begin(), xd.end(), 0.0);
    return Tensor::make_result({}, {total}, {x}, [](Tensor::Node& self) {
        auto& g = self.parents[0].node().grad_buffer();
        for (double& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

} // namespace spot
