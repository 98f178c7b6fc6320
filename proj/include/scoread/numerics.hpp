// Copyright 2026 The ScoreAD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace scoread {

using Index = Eigen::Index;

/// Row-major dense matrix of doubles.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Activations laid out channels x positions.
///
/// A batch of B spectra of length L is stored side by side as channels x (B*L);
/// `segment` is L, and convolutions never mix values across segment borders.
struct FeatureMap {
    DenseMatrix values;
    Index segment = 0;

    FeatureMap() = default;
    FeatureMap(DenseMatrix v, Index seg = 0) : values(std::move(v)), segment(seg == 0 ? values.cols() : seg) {}

    Index channels() const { return values.rows(); }
    Index length() const { return values.cols(); }
    Index batch() const { return segment == 0 ? 0 : values.cols() / segment; }
};

/// Shape of a 1-D convolution kernel stored [out][in][width] row-major.
struct KernelShape {
    Index out_channels = 0;
    Index in_channels = 0;
    Index width = 0;

    Index size() const { return out_channels * in_channels * width; }
};

struct ConvGradients {
    DenseMatrix input;
    std::vector<double> weights;
    std::vector<double> bias;
};

/// Zero-padded "same" convolution: output length equals input length.
/// Throws InvalidArgument on an even width or a channel/size mismatch.
FeatureMap conv1d_same(const FeatureMap& input, std::span<const double> weights, std::span<const double> bias,
                       const KernelShape& shape);

/// Adjoint of conv1d_same for the upstream gradient of its output.
ConvGradients conv1d_backward(const FeatureMap& input, std::span<const double> weights, const KernelShape& shape,
                              const FeatureMap& upstream);

/// Accumulating form used by the network: adds into grad_weights/grad_bias and,
/// when grad_input is non-null, overwrites it with the input gradient.
void conv1d_backward_accumulate(const FeatureMap& input, std::span<const double> weights, const KernelShape& shape,
                                const FeatureMap& upstream, std::span<double> grad_weights,
                                std::span<double> grad_bias, DenseMatrix* grad_input);

/// output[c, i] = gamma[c] * features[c, i] + beta[c]
FeatureMap film_modulate(const FeatureMap& features, std::span<const double> gamma, std::span<const double> beta);

/// [sin(2 pi f_j u), cos(2 pi f_j u)] interleaved per frequency; length 2F.
Vector gaussian_fourier_embed(double u, std::span<const double> frequencies);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_derivative(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    AdamHyper hyper;

    AdamState() = default;
    AdamState(std::size_t parameter_count, AdamHyper h);
};

/// One bias-corrected Adam step in place. A non-finite gradient leaves params and
/// state untouched and throws TrainingDiverged.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state);

using ScalarLoss = std::function<double(std::span<const double>)>;

/// Central differences (loss(p + h e_i) - loss(p - h e_i)) / 2h per coordinate.
std::vector<double> finite_difference_gradient(const ScalarLoss& loss, std::span<const double> params, double h);

/// ||a - b|| / max(||b||, tiny); the comparison used by every gradient check.
double relative_error(std::span<const double> a, std::span<const double> b);

/// Worker count: explicit request, else SCOREAD_THREADS, else 1.
unsigned resolve_threads(unsigned requested);

/// Runs fn(begin, end) over a static partition of [0, n). Each index is
/// visited exactly once; the partition never influences results.
void parallel_for(Index n, unsigned threads, const std::function<void(Index, Index)>& fn);

}  // namespace scoread
