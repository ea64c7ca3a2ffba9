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

#include "spot/nn.hpp"

#include <algorithm>
#include <cmath>

namespace spot {

Tensor ParameterStore::add(const std::string& name, Tensor t) {
    for (const auto& p : params_) {
        if (p.name == name) throw ShapeError("duplicate parameter name " + name);
    }
    params_.push_back({name, t});
    return t;
}

Tensor ParameterStore::add_uniform(const std::string& name, Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = dist(rng_);
    return add(name, Tensor::from(std::move(shape), std::move(data), true));
}

Tensor ParameterStore::add_zeros(const std::string& name, Shape shape) {
    return add(name, Tensor::zeros(std::move(shape), true));
}

Index ParameterStore::scalar_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

Tensor& ParameterStore::find(const std::string& name) {
    for (auto& p : params_) {
        if (p.name == name) return p.value;
    }
    throw DataError("unknown parameter " + name);
}

LinearLayer make_linear(ParameterStore& store, const std::string& name, Index in, Index out, bool bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearLayer layer;
    layer.weight = store.add_uniform(name + ".weight", {in, out}, bound);
    if (bias) layer.bias = store.add_uniform(name + ".bias", {out}, bound);
    return layer;
}

Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
    const Index in = layer.in_features();
    const Index out = layer.out_features();
    if (x.rank() < 1 || x.dim(-1) != in) {
        throw ShapeError("linear: input " + shape_string(x.shape()) + " does not end in " + std::to_string(in));
    }
    const Index rows = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out;
    Buffer y(rows * out);
    MatrixMap ym(y.data(), rows, out);
    ym.noalias() = ConstMatrixMap(x.data().data(), rows, in) * ConstMatrixMap(layer.weight.data().data(), in, out);
    const bool has_bias = layer.bias.defined();
    if (has_bias) ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(layer.bias.data().data(), out);

    std::vector<Tensor> parents{x, layer.weight};
    if (has_bias) parents.push_back(layer.bias);
    return Tensor::make_result(std::move(out_shape), std::move(y), std::move(parents),
                               [rows, in, out, has_bias](Tensor::Node& self) {
                                   Tensor& px = self.parents[0];
                                   Tensor& pw = self.parents[1];
                                   ConstMatrixMap gy(self.grad.data(), rows, out);
                                   if (px.requires_grad()) {
                                       MatrixMap(px.node().grad_buffer().data(), rows, in).noalias() +=
                                           gy * ConstMatrixMap(pw.data().data(), in, out).transpose();
                                   }
                                   if (pw.requires_grad()) {
                                       MatrixMap(pw.node().grad_buffer().data(), in, out).noalias() +=
                                           ConstMatrixMap(px.data().data(), rows, in).transpose() * gy;
                                   }
                                   if (has_bias && self.parents[2].requires_grad()) {
                                       Eigen::Map<Eigen::RowVectorXd>(self.parents[2].node().grad_buffer().data(), out) +=
                                           gy.colwise().sum();
                                   }
                               });
}

void adam_step(std::vector<NamedParameter>& params, AdamState& state, double lr, const AdamOptions& opts) {
    if (state.first.empty()) {
        for (const auto& p : params) {
            state.first.emplace_back(p.value.numel(), 0.0);
            state.second.emplace_back(p.value.numel(), 0.0);
        }
    }
    if (state.first.size() != params.size()) throw ShapeError("adam: state does not match parameter list");
    for (const auto& p : params) {
        if (!p.value.has_grad()) continue;
        for (double g : p.value.grad()) {
            if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter " + p.name);
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(opts.beta1, t);
    const double c2 = 1.0 - std::pow(opts.beta2, t);
    for (std::size_t j = 0; j < params.size(); ++j) {
        Tensor& w = params[j].value;
        if (!w.has_grad()) continue;
        const auto g = w.grad();
        auto data = w.mutable_data();
        auto& m = state.first[j];
        auto& v = state.second[j];
        for (std::size_t i = 0; i < data.size(); ++i) {
            m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
            v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
            data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts.eps);
        }
    }
}

} // namespace spot
