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

#include "scoread/numerics.hpp"

#include "scoread/error.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

namespace scoread {

namespace {

using ConstRowMap = Eigen::Map<const DenseMatrix>;
using RowMap = Eigen::Map<DenseMatrix>;

void check_kernel(const FeatureMap& input, std::span<const double> weights, const KernelShape& shape) {
    if (shape.width <= 0 || shape.width % 2 == 0) {
        throw InvalidArgument("conv1d: kernel width must be odd, got " + std::to_string(shape.width));
    }
    if (input.channels() != shape.in_channels) {
        throw InvalidArgument("conv1d: input has " + std::to_string(input.channels()) + " channels, kernel expects " +
                              std::to_string(shape.in_channels));
    }
    if (static_cast<Index>(weights.size()) != shape.size()) {
        throw InvalidArgument("conv1d: weight count does not match kernel shape");
    }
    if (input.segment <= 0 || input.length() % input.segment != 0) {
        throw InvalidArgument("conv1d: length is not a whole number of segments");
    }
}

// Rows (ic * width + j) hold input channel ic shifted by j - pad inside each segment.
DenseMatrix im2col(const FeatureMap& input, Index width) {
    const Index pad = width / 2;
    const Index in_ch = input.channels();
    const Index n = input.length();
    const Index seg = input.segment;
    DenseMatrix col = DenseMatrix::Zero(in_ch * width, n);
    for (Index ic = 0; ic < in_ch; ++ic) {
        const double* src = input.values.row(ic).data();
        for (Index j = 0; j < width; ++j) {
            const Index shift = j - pad;
            double* dst = col.row(ic * width + j).data();
            for (Index s0 = 0; s0 < n; s0 += seg) {
                const Index lo = std::max<Index>(0, -shift);
                const Index hi = std::min<Index>(seg, seg - shift);
                for (Index i = lo; i < hi; ++i) {
                    dst[s0 + i] = src[s0 + i + shift];
                }
            }
        }
    }
    return col;
}

void col2im_add(const DenseMatrix& col, Index width, Index seg, DenseMatrix& out) {
    const Index pad = width / 2;
    const Index n = out.cols();
    for (Index ic = 0; ic < out.rows(); ++ic) {
        double* dst = out.row(ic).data();
        for (Index j = 0; j < width; ++j) {
            const Index shift = j - pad;
            const double* src = col.row(ic * width + j).data();
            for (Index s0 = 0; s0 < n; s0 += seg) {
                const Index lo = std::max<Index>(0, -shift);
                const Index hi = std::min<Index>(seg, seg - shift);
                for (Index i = lo; i < hi; ++i) {
                    dst[s0 + i + shift] += src[s0 + i];
                }
            }
        }
    }
}

}  // namespace

FeatureMap conv1d_same(const FeatureMap& input, std::span<const double> weights, std::span<const double> bias,
                       const KernelShape& shape) {
    check_kernel(input, weights, shape);
    if (static_cast<Index>(bias.size()) != shape.out_channels) {
        throw InvalidArgument("conv1d: bias length does not match output channels");
    }
    ConstRowMap w(weights.data(), shape.out_channels, shape.in_channels * shape.width);
    Eigen::Map<const Vector> b(bias.data(), shape.out_channels);
    DenseMatrix out;
    if (shape.width == 1) {
        out.noalias() = w * input.values;
    } else {
        out.noalias() = w * im2col(input, shape.width);
    }
    out.colwise() += b;
    return FeatureMap(std::move(out), input.segment);
}

void conv1d_backward_accumulate(const FeatureMap& input, std::span<const double> weights, const KernelShape& shape,
                                const FeatureMap& upstream, std::span<double> grad_weights,
                                std::span<double> grad_bias, DenseMatrix* grad_input) {
    check_kernel(input, weights, shape);
    if (upstream.channels() != shape.out_channels || upstream.length() != input.length()) {
        throw InvalidArgument("conv1d_backward: upstream gradient shape mismatch");
    }
    if (static_cast<Index>(grad_weights.size()) != shape.size() ||
        static_cast<Index>(grad_bias.size()) != shape.out_channels) {
        throw InvalidArgument("conv1d_backward: gradient buffer shape mismatch");
    }
    ConstRowMap w(weights.data(), shape.out_channels, shape.in_channels * shape.width);
    // fixed-order sums: the gradient buffers may have any alignment
    for (Index o = 0; o < shape.out_channels; ++o) {
        const double* u = upstream.values.row(o).data();
        double acc = 0.0;
        for (Index i = 0; i < upstream.length(); ++i) {
            acc += u[i];
        }
        grad_bias[static_cast<std::size_t>(o)] += acc;
    }
    auto add_weights = [&](const DenseMatrix& dw) {
        for (std::size_t i = 0; i < grad_weights.size(); ++i) {
            grad_weights[i] += dw.data()[i];
        }
    };
    if (shape.width == 1) {
        add_weights(upstream.values * input.values.transpose());
        if (grad_input != nullptr) {
            grad_input->noalias() = w.transpose() * upstream.values;
        }
        return;
    }
    const DenseMatrix col = im2col(input, shape.width);
    add_weights(upstream.values * col.transpose());
    if (grad_input != nullptr) {
        DenseMatrix gcol;
        gcol.noalias() = w.transpose() * upstream.values;
        grad_input->setZero(input.channels(), input.length());
        col2im_add(gcol, shape.width, input.segment, *grad_input);
    }
}

ConvGradients conv1d_backward(const FeatureMap& input, std::span<const double> weights, const KernelShape& shape,
                              const FeatureMap& upstream) {
    ConvGradients g;
    g.weights.assign(static_cast<std::size_t>(shape.size()), 0.0);
    g.bias.assign(static_cast<std::size_t>(shape.out_channels), 0.0);
    conv1d_backward_accumulate(input, weights, shape, upstream, g.weights, g.bias, &g.input);
    return g;
}

FeatureMap film_modulate(const FeatureMap& features, std::span<const double> gamma, std::span<const double> beta) {
    const Index ch = features.channels();
    if (static_cast<Index>(gamma.size()) != ch || static_cast<Index>(beta.size()) != ch) {
        throw InvalidArgument("film_modulate: gamma/beta length must equal the channel count");
    }
    FeatureMap out = features;
    for (Index c = 0; c < ch; ++c) {
        out.values.row(c).array() = gamma[c] * features.values.row(c).array() + beta[c];
    }
    return out;
}

Vector gaussian_fourier_embed(double u, std::span<const double> frequencies) {
    Vector out(2 * static_cast<Index>(frequencies.size()));
    for (std::size_t j = 0; j < frequencies.size(); ++j) {
        const double angle = 2.0 * std::numbers::pi * frequencies[j] * u;
        out[2 * j] = std::sin(angle);
        out[2 * j + 1] = std::cos(angle);
    }
    return out;
}

AdamState::AdamState(std::size_t parameter_count, AdamHyper h)
    : first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0), hyper(h) {
    if (!(h.beta1 >= 0.0 && h.beta1 < 1.0 && h.beta2 >= 0.0 && h.beta2 < 1.0) || !(h.epsilon > 0.0)) {
        throw InvalidArgument("AdamState: require 0 <= beta1, beta2 < 1 and epsilon > 0");
    }
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
        throw InvalidArgument("adam_update: parameter, gradient and moment sizes differ");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) {
            throw TrainingDiverged("adam_update: non-finite gradient");
        }
    }
    const AdamHyper& h = state.hyper;
    const double step = static_cast<double>(state.step + 1);
    const double c1 = 1.0 - std::pow(h.beta1, step);
    const double c2 = 1.0 - std::pow(h.beta2, step);
    for (std::size_t i = 0; i < n; ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = h.beta1 * m + (1.0 - h.beta1) * grads[i];
        v = h.beta2 * v + (1.0 - h.beta2) * grads[i] * grads[i];
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        params[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
    state.step += 1;
}

std::vector<double> finite_difference_gradient(const ScalarLoss& loss, std::span<const double> params, double h) {
    if (!(h > 0.0)) {
        throw InvalidArgument("finite_difference_gradient: step must be positive");
    }
    std::vector<double> p(params.begin(), params.end());
    std::vector<double> grad(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + h;
        const double up = loss(p);
        p[i] = orig - h;
        const double down = loss(p);
        p[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw InvalidArgument("finite_difference_gradient: non-finite loss at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("relative_error: size mismatch");
    }
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        ref += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

unsigned resolve_threads(unsigned requested) {
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv("SCOREAD_THREADS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) {
            return static_cast<unsigned>(v);
        }
    }
    return 1;
}

void parallel_for(Index n, unsigned threads, const std::function<void(Index, Index)>& fn) {
    if (n <= 0) {
        return;
    }
    const Index workers = std::min<Index>(std::max(1u, threads), n);
    if (workers == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    pool.reserve(static_cast<std::size_t>(workers));
    for (Index w = 0; w < workers; ++w) {
        const Index begin = n * w / workers;
        const Index end = n * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace scoread
