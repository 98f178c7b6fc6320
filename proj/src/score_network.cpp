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

#include "scoread/error.hpp"
#include "scoread/sgm.hpp"

#include <cmath>
#include <string>

namespace scoread {

namespace {

using ConstRowMap = Eigen::Map<const DenseMatrix>;
using RowMap = Eigen::Map<DenseMatrix>;

std::uint64_t name_key(const std::string& name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return h;
}

bool is_zero_init(const std::string& name) { return name.rfind("film.out.", 0) == 0; }

bool is_bias(const std::string& name) { return name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0; }

// fan-in of a [out, in, (k)] tensor
Index fan_in(const TensorInfo& t) {
    Index f = 1;
    for (std::size_t i = 1; i < t.shape.size(); ++i) {
        f *= t.shape[i];
    }
    return f;
}

void apply_silu(const DenseMatrix& pre, DenseMatrix& out) {
    out = pre.unaryExpr([](double v) { return silu(v); });
}

// Gradient buffers are plain vectors with arbitrary alignment; these keep the
// summation order fixed so results replay bit for bit.
void add_column_sums(const DenseMatrix& m, std::span<double> dst) {
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            dst[static_cast<std::size_t>(c)] += m(r, c);
        }
    }
}

void add_into(std::span<double> dst, const DenseMatrix& src) {
    const double* v = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += v[i];
    }
}

DenseMatrix silu_backward(const DenseMatrix& grad, const DenseMatrix& pre) {
    return grad.cwiseProduct(pre.unaryExpr([](double v) { return silu_derivative(v); }));
}

}  // namespace

void Architecture::validate() const {
    if (bands < 1 || channels < 1 || blocks < 1 || fourier_features < 1 || film_hidden < 1) {
        throw InvalidArgument("Architecture: bands, channels, blocks, fourier_features and film_hidden must be >= 1");
    }
    if (kernel_width < 1 || kernel_width % 2 == 0) {
        throw InvalidArgument("Architecture: kernel width must be odd");
    }
    if (!(fourier_scale > 0.0)) {
        throw InvalidArgument("Architecture: fourier_scale must be positive");
    }
    if (window) {
        window->validate();
        if (context_hidden < 1) {
            throw InvalidArgument("Architecture: context_hidden must be >= 1");
        }
    }
}

void ScoreNetwork::layout() {
    arch_.validate();
    schedule_.validate();
    const Index W = arch_.channels;
    const Index k = arch_.kernel_width;
    const Index H = arch_.film_hidden;
    const Index E = arch_.context_hidden;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::vector<Index> shape) {
        std::size_t size = 1;
        for (Index d : shape) {
            size *= static_cast<std::size_t>(d);
        }
        tensors_.push_back({std::move(name), std::move(shape), offset, size});
        offset += size;
    };
    add("lift.weight", {W, 1, k});
    add("lift.bias", {W});
    for (Index b = 0; b < arch_.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        add(p + "conv1.weight", {W, W, k});
        add(p + "conv1.bias", {W});
        add(p + "conv2.weight", {W, W, k});
        add(p + "conv2.bias", {W});
    }
    add("head.weight", {1, W, 1});
    add("head.bias", {1});
    add("film.time.weight", {H, arch_.embedding_dim()});
    add("film.hidden.bias", {H});
    add("film.out.weight", {2 * W * arch_.blocks, H});
    add("film.out.bias", {2 * W * arch_.blocks});
    if (arch_.has_context()) {
        add("film.context.weight", {H, E});
        add("context.enc1.weight", {E, arch_.bands});
        add("context.enc1.bias", {E});
        add("context.enc2.weight", {E, E});
        add("context.enc2.bias", {E});
    }
    params_.assign(offset, 0.0);
}

ScoreNetwork::ScoreNetwork(Architecture arch, SigmaSchedule schedule, std::uint64_t init_seed)
    : arch_(std::move(arch)), schedule_(schedule) {
    layout();
    SeededRng freq_rng(init_seed, 1);
    frequencies_.resize(static_cast<std::size_t>(arch_.fourier_features));
    for (double& f : frequencies_) {
        f = static_cast<float>(std::abs(freq_rng.normal()) * arch_.fourier_scale);
    }
    // one stream per tensor name, so shared tensors match across context modes
    for (const TensorInfo& t : tensors_) {
        if (is_bias(t.name) || is_zero_init(t.name)) {
            continue;
        }
        SeededRng rng(init_seed, name_key(t.name));
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(t)));
        for (double& v : mutable_view(t)) {
            v = rng.uniform(-bound, bound);
        }
    }
    round_to_float();
}

ScoreNetwork::ScoreNetwork(Architecture arch, SigmaSchedule schedule, std::vector<double> frequencies,
                           std::vector<double> parameters)
    : arch_(std::move(arch)), schedule_(schedule), frequencies_(std::move(frequencies)) {
    layout();
    if (static_cast<Index>(frequencies_.size()) != arch_.fourier_features) {
        throw InvalidArgument("ScoreNetwork: frequency count does not match the architecture");
    }
    if (parameters.size() != params_.size()) {
        throw InvalidArgument("ScoreNetwork: expected " + std::to_string(params_.size()) + " parameters, got " +
                              std::to_string(parameters.size()));
    }
    params_ = std::move(parameters);
}

const TensorInfo& ScoreNetwork::tensor(const std::string& name) const {
    for (const TensorInfo& t : tensors_) {
        if (t.name == name) {
            return t;
        }
    }
    throw InvalidArgument("ScoreNetwork: no tensor named " + name);
}

void ScoreNetwork::round_to_float() {
    for (double& v : params_) {
        v = static_cast<float>(v);
    }
}

void ScoreNetwork::check_inputs(const DenseMatrix& x_t, std::span<const double> t, const DenseMatrix* contexts) const {
    if (x_t.cols() != arch_.bands) {
        throw InvalidArgument("score network: input has " + std::to_string(x_t.cols()) + " bands, model expects " +
                              std::to_string(arch_.bands));
    }
    if (static_cast<Index>(t.size()) != x_t.rows()) {
        throw InvalidArgument("score network: one t per batch row required");
    }
    for (double ti : t) {
        if (!(ti >= schedule_.t_min && ti <= schedule_.t_max)) {
            throw InvalidArgument("score network: t = " + std::to_string(ti) + " outside [t_min, t_max]");
        }
    }
    if (arch_.has_context()) {
        if (contexts == nullptr || contexts->rows() != x_t.rows() * arch_.context_count() ||
            contexts->cols() != arch_.bands) {
            throw InvalidArgument("score network: context arity does not match the model's window");
        }
    } else if (contexts != nullptr) {
        throw InvalidArgument("score network: context supplied to a model without context mode");
    }
}

DenseMatrix ScoreNetwork::raw_forward(const DenseMatrix& x_t, std::span<const double> t, const DenseMatrix* contexts,
                                      ForwardTape* tape) const {
    check_inputs(x_t, t, contexts);
    ForwardTape local;
    ForwardTape& tp = tape != nullptr ? *tape : local;
    const Index B = x_t.rows();
    const Index C = arch_.bands;
    const Index W = arch_.channels;
    const Index k = arch_.kernel_width;
    const Index H = arch_.film_hidden;
    tp.batch = B;
    tp.contexts = contexts;

    tp.sigma.resize(static_cast<std::size_t>(B));
    tp.embedding.resize(B, arch_.embedding_dim());
    for (Index b = 0; b < B; ++b) {
        const double s = schedule_.sigma_at(t[static_cast<std::size_t>(b)]);
        tp.sigma[static_cast<std::size_t>(b)] = s;
        tp.embedding.row(b) = gaussian_fourier_embed(std::log(s), frequencies_).transpose();
    }

    const TensorInfo& ft = tensor("film.time.weight");
    tp.film_pre.noalias() = tp.embedding * ConstRowMap(view(ft).data(), H, arch_.embedding_dim()).transpose();
    if (arch_.has_context()) {
        const Index E = arch_.context_hidden;
        const Index M = arch_.context_count();
        const auto& e1w = tensor("context.enc1.weight");
        const auto& e1b = tensor("context.enc1.bias");
        const auto& e2w = tensor("context.enc2.weight");
        const auto& e2b = tensor("context.enc2.bias");
        tp.context_pre.noalias() = *contexts * ConstRowMap(view(e1w).data(), E, C).transpose();
        tp.context_pre.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(view(e1b).data(), E);
        apply_silu(tp.context_pre, tp.context_hidden);
        DenseMatrix enc;
        enc.noalias() = tp.context_hidden * ConstRowMap(view(e2w).data(), E, E).transpose();
        enc.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(view(e2b).data(), E);
        tp.context_pooled.setZero(B, E);
        for (Index b = 0; b < B; ++b) {
            for (Index m = 0; m < M; ++m) {
                tp.context_pooled.row(b) += enc.row(b * M + m);
            }
        }
        tp.context_pooled /= static_cast<double>(M);
        const auto& fc = tensor("film.context.weight");
        tp.film_pre.noalias() += tp.context_pooled * ConstRowMap(view(fc).data(), H, E).transpose();
    }
    tp.film_pre.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(view(tensor("film.hidden.bias")).data(), H);
    apply_silu(tp.film_pre, tp.film_hidden);
    const Index film_out = 2 * W * arch_.blocks;
    tp.film.noalias() = tp.film_hidden * ConstRowMap(view(tensor("film.out.weight")).data(), film_out, H).transpose();
    tp.film.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(view(tensor("film.out.bias")).data(), film_out);

    tp.input = FeatureMap(ConstRowMap(x_t.data(), 1, B * C), C);
    const KernelShape lift{W, 1, k};
    const KernelShape inner{W, W, k};
    tp.trunk.clear();
    tp.conv1.clear();
    tp.modulated.clear();
    tp.activated.clear();
    tp.trunk.push_back(conv1d_same(tp.input, view(tensor("lift.weight")), view(tensor("lift.bias")), lift));
    for (Index l = 0; l < arch_.blocks; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        FeatureMap a = conv1d_same(tp.trunk.back(), view(tensor(p + "conv1.weight")), view(tensor(p + "conv1.bias")),
                                   inner);
        FeatureMap m = a;
        for (Index b = 0; b < B; ++b) {
            for (Index c = 0; c < W; ++c) {
                const double gamma = 1.0 + tp.film(b, 2 * W * l + c);
                const double beta = tp.film(b, 2 * W * l + W + c);
                m.values.row(c).segment(b * C, C).array() = gamma * a.values.row(c).segment(b * C, C).array() + beta;
            }
        }
        FeatureMap s(m.values.unaryExpr([](double v) { return silu(v); }), C);
        FeatureMap c2 = conv1d_same(s, view(tensor(p + "conv2.weight")), view(tensor(p + "conv2.bias")), inner);
        c2.values += tp.trunk.back().values;
        tp.conv1.push_back(std::move(a));
        tp.modulated.push_back(std::move(m));
        tp.activated.push_back(std::move(s));
        tp.trunk.push_back(std::move(c2));
    }
    const FeatureMap out =
        conv1d_same(tp.trunk.back(), view(tensor("head.weight")), view(tensor("head.bias")), KernelShape{1, W, 1});
    tp.raw = ConstRowMap(out.values.data(), B, C);
    return tp.raw;
}

DenseMatrix ScoreNetwork::score(const DenseMatrix& x_t, std::span<const double> t, const DenseMatrix* contexts) const {
    ForwardTape tape;
    DenseMatrix out = raw_forward(x_t, t, contexts, &tape);
    for (Index b = 0; b < out.rows(); ++b) {
        out.row(b) /= tape.sigma[static_cast<std::size_t>(b)];
    }
    return out;
}

Vector ScoreNetwork::score_forward(const Vector& x_t, double t, const ContextSet* context) const {
    const DenseMatrix x = x_t.transpose();
    const double tt[1] = {t};
    return score(x, tt, context).row(0).transpose();
}

void ScoreNetwork::backward(const ForwardTape& tp, const DenseMatrix& grad_raw, std::span<double> grad) const {
    if (grad.size() != params_.size()) {
        throw InvalidArgument("backward: gradient buffer size mismatch");
    }
    const Index B = tp.batch;
    const Index C = arch_.bands;
    const Index W = arch_.channels;
    const Index k = arch_.kernel_width;
    const Index H = arch_.film_hidden;
    if (grad_raw.rows() != B || grad_raw.cols() != C) {
        throw InvalidArgument("backward: grad_raw must be B x C");
    }
    auto g = [&](const std::string& name) {
        const TensorInfo& t = tensor(name);
        return std::span<double>(grad.data() + t.offset, t.size);
    };
    const KernelShape lift{W, 1, k};
    const KernelShape inner{W, W, k};

    const FeatureMap g_out(ConstRowMap(grad_raw.data(), 1, B * C), C);
    DenseMatrix dh;
    conv1d_backward_accumulate(tp.trunk.back(), view(tensor("head.weight")), KernelShape{1, W, 1}, g_out,
                               g("head.weight"), g("head.bias"), &dh);

    const Index film_out = 2 * W * arch_.blocks;
    DenseMatrix d_film = DenseMatrix::Zero(B, film_out);
    for (Index l = arch_.blocks - 1; l >= 0; --l) {
        const std::string p = "block" + std::to_string(l) + ".";
        const FeatureMap up(dh, C);
        DenseMatrix ds;
        conv1d_backward_accumulate(tp.activated[static_cast<std::size_t>(l)], view(tensor(p + "conv2.weight")), inner,
                                   up, g(p + "conv2.weight"), g(p + "conv2.bias"), &ds);
        const DenseMatrix& m = tp.modulated[static_cast<std::size_t>(l)].values;
        const DenseMatrix& a = tp.conv1[static_cast<std::size_t>(l)].values;
        DenseMatrix dm = silu_backward(ds, m);
        DenseMatrix da(W, B * C);
        for (Index b = 0; b < B; ++b) {
            for (Index c = 0; c < W; ++c) {
                const auto dm_seg = dm.row(c).segment(b * C, C);
                d_film(b, 2 * W * l + c) += dm_seg.dot(a.row(c).segment(b * C, C));
                d_film(b, 2 * W * l + W + c) += dm_seg.sum();
                const double gamma = 1.0 + tp.film(b, 2 * W * l + c);
                da.row(c).segment(b * C, C) = gamma * dm_seg;
            }
        }
        DenseMatrix dh_conv;
        conv1d_backward_accumulate(tp.trunk[static_cast<std::size_t>(l)], view(tensor(p + "conv1.weight")), inner,
                                   FeatureMap(std::move(da), C), g(p + "conv1.weight"), g(p + "conv1.bias"), &dh_conv);
        dh += dh_conv;
    }
    conv1d_backward_accumulate(tp.input, view(tensor("lift.weight")), lift, FeatureMap(std::move(dh), C),
                               g("lift.weight"), g("lift.bias"), nullptr);

    // FiLM head
    add_into(g("film.out.weight"), d_film.transpose() * tp.film_hidden);
    add_column_sums(d_film, g("film.out.bias"));
    DenseMatrix d_hidden;
    d_hidden.noalias() = d_film * ConstRowMap(view(tensor("film.out.weight")).data(), film_out, H);
    const DenseMatrix d_pre = silu_backward(d_hidden, tp.film_pre);
    add_column_sums(d_pre, g("film.hidden.bias"));
    add_into(g("film.time.weight"), d_pre.transpose() * tp.embedding);

    if (arch_.has_context()) {
        const Index E = arch_.context_hidden;
        const Index M = arch_.context_count();
        add_into(g("film.context.weight"), d_pre.transpose() * tp.context_pooled);
        DenseMatrix d_pooled;
        d_pooled.noalias() = d_pre * ConstRowMap(view(tensor("film.context.weight")).data(), H, E);
        DenseMatrix d_enc(B * M, E);
        for (Index b = 0; b < B; ++b) {
            for (Index mm = 0; mm < M; ++mm) {
                d_enc.row(b * M + mm) = d_pooled.row(b) / static_cast<double>(M);
            }
        }
        add_into(g("context.enc2.weight"), d_enc.transpose() * tp.context_hidden);
        add_column_sums(d_enc, g("context.enc2.bias"));
        DenseMatrix d_h1;
        d_h1.noalias() = d_enc * ConstRowMap(view(tensor("context.enc2.weight")).data(), E, E);
        const DenseMatrix d_p1 = silu_backward(d_h1, tp.context_pre);
        add_into(g("context.enc1.weight"), d_p1.transpose() * *tp.contexts);
        add_column_sums(d_p1, g("context.enc1.bias"));
    }
}

}  // namespace scoread
