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

#pragma once

#include "spot/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace spot {

struct NamedParameter {
    std::string name;
    Tensor value;
};

/// Owns every trainable tensor of a model, in registration order.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

    /// Uniform in [-bound, bound].
    Tensor add_uniform(const std::string& name, Shape shape, double bound);
    Tensor add_zeros(const std::string& name, Shape shape);

    const std::vector<NamedParameter>& parameters() const { return params_; }
    std::vector<NamedParameter>& parameters() { return params_; }
    Index scalar_count() const;
    void zero_grad();
    /// Throws DataError when the name is unknown.
    Tensor& find(const std::string& name);

private:
    Tensor add(const std::string& name, Tensor t);
    std::mt19937_64 rng_;
    std::vector<NamedParameter> params_;
};

struct LinearLayer {
    Tensor weight; // [in, out]
    Tensor bias;   // [out], undefined for bias-free projections

    Index in_features() const { return weight.dim(0); }
    Index out_features() const { return weight.dim(1); }
};

/// Fan-in uniform initialization: weight and bias in [-1/sqrt(in), 1/sqrt(in)].
LinearLayer make_linear(ParameterStore& store, const std::string& name, Index in, Index out, bool bias = true);

/// x[..., in] -> x W + b, as one fused node.
Tensor linear_forward(const LinearLayer& layer, const Tensor& x);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
    std::int64_t step = 0;
};

/// One Adam step over `params` using their accumulated gradients. Parameters
/// without a gradient are treated as having a zero gradient. Throws
/// NumericError naming the first parameter whose gradient is not finite;
/// nothing is updated in that case.
void adam_step(std::vector<NamedParameter>& params, AdamState& state, double lr, const AdamOptions& opts = {});

} // namespace spot
