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

// Dense row-major f64 tensors with tape-free reverse-mode differentiation.
//
// Every operation returns a new Tensor that keeps shared ownership of its
// inputs when any of them requires a gradient. Calling backward() on a
// scalar walks that graph in reverse creation order. Leaf tensors (model
// parameters) accumulate gradients across calls; interior gradients are
// recomputed on every call.

#pragma once

#include "spot/errors.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace spot {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Aligned so Eigen's vectorized kernels take the same path on every run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::string shape_string(const Shape& shape);
Index shape_numel(const Shape& shape);

class Tensor {
public:
    struct Node;
    using BackwardFn = std::function<void(Node&)>;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from_matrix(const RowMatrix& m, bool requires_grad = false);

    /// Builds an operation result. `backward` receives the result node whose
    /// `grad` is populated and must accumulate into parents that require
    /// gradients. Parents and closure are dropped when nothing upstream is
    /// differentiable.
    static Tensor make_result(Shape shape, Buffer data, std::vector<Tensor> parents,
                              BackwardFn backward);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const;
    Index rank() const { return static_cast<Index>(shape().size()); }
    Index numel() const;
    /// Extent along `axis`; negative axes count from the back.
    Index dim(Index axis) const;

    std::span<const double> data() const;
    /// Writable storage. Only valid on leaves; used by optimizers and loaders.
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<Index> index) const;
    ConstMatrixMap matrix() const;

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Detached copy of the values (no graph, no gradient).
    Tensor detach() const;

    void backward() const;

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    static Tensor from_buffer(Shape shape, Buffer data, bool requires_grad);
    std::shared_ptr<Node> node_;
};

struct Tensor::Node {
    Shape shape;
    Buffer data;
    Buffer grad;
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<Tensor> parents;
    BackwardFn backward;

    bool is_leaf() const { return !backward; }
    /// Allocates zeroed gradient storage on first use.
    Buffer& grad_buffer();
};

Index normalize_axis(Index axis, Index rank);

// Arithmetic. `add`, `sub`, and `mul` accept equal shapes, or a right operand
// whose shape is a trailing suffix of the left operand's (broadcast over the
// leading extents).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Batched product of a[..., M, K] and b[..., K, N]. Leading batch extents
/// broadcast where one side has extent 1 (or is missing).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Maps each vector v along the last axis to v * tanh(|v|) / |v|. The result
/// has norm tanh(|v|) < 1, and the map is smooth at the origin.
Tensor radial_tanh(const Tensor& x);

/// Max-subtracted softmax along `axis`. Throws NumericError on non-finite input.
Tensor softmax(const Tensor& x, Index axis);

Tensor concat(const std::vector<Tensor>& parts, Index axis);
Tensor slice(const Tensor& x, Index axis, Index start, Index length);
Tensor reshape(const Tensor& x, Shape shape);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
/// Repeats a size-1 axis `count` times.
Tensor expand(const Tensor& x, Index axis, Index count);
/// Max over `axis` (removed from the shape). Gradient goes to the first maximum.
Tensor max_pool(const Tensor& x, Index axis);

/// Gathers rows of x (along axis 0). The result shape is index_shape followed
/// by x.shape[1:]. Gradients scatter-add back into x.
Tensor gather_rows(const Tensor& x, std::span<const Index> indices, const Shape& index_shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

} // namespace spot
