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

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace scoread {

void TrainConfig::validate(const SigmaSchedule& schedule) const {
    if (steps < 1 || batch_size < 1 || chunk < 1) {
        throw InvalidArgument("TrainConfig: steps, batch_size and chunk must be positive");
    }
    if (!(learning_rate > 0.0)) {
        throw InvalidArgument("TrainConfig: learning_rate must be positive");
    }
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) {
        throw InvalidArgument("TrainConfig: ema_decay must lie in [0, 1)");
    }
    if (!(t_lo >= schedule.t_min && t_lo < t_hi && t_hi <= schedule.t_max)) {
        throw InvalidArgument("TrainConfig: t range must satisfy t_min <= t_lo < t_hi <= t_max");
    }
}

DsmDraws draw_dsm(Index batch, Index bands, double t_lo, double t_hi, SeededRng& rng) {
    DsmDraws d;
    d.t.resize(static_cast<std::size_t>(batch));
    d.noise.resize(batch, bands);
    for (Index b = 0; b < batch; ++b) {
        d.t[static_cast<std::size_t>(b)] = rng.uniform(t_lo, t_hi);
        for (Index c = 0; c < bands; ++c) {
            d.noise(b, c) = rng.normal();
        }
    }
    return d;
}

namespace {

struct ChunkResult {
    double weighted_sum = 0.0;
    std::vector<double> gradient;
};

// Sum over rows [begin, end) of w_i ||raw_i + z_i||^2, and optionally the
// gradient of (that sum) / batch.
ChunkResult evaluate_chunk(const ScoreNetwork& net, const DenseMatrix& x0, const DenseMatrix* contexts,
                           const DsmDraws& draws, Weighting weighting, Index begin, Index end, Index batch,
                           bool with_gradient) {
    const Index n = end - begin;
    const Index M = net.architecture().context_count();
    const SigmaSchedule& schedule = net.schedule();
    DenseMatrix x_t = x0.middleRows(begin, n);
    std::vector<double> t(draws.t.begin() + begin, draws.t.begin() + end);
    std::vector<double> weight(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const double s = schedule.sigma_at(t[static_cast<std::size_t>(i)]);
        x_t.row(i) += s * draws.noise.row(begin + i);
        weight[static_cast<std::size_t>(i)] = weighting == Weighting::SigmaSquared ? 1.0 : 1.0 / (s * s);
    }
    DenseMatrix ctx;
    const DenseMatrix* ctx_ptr = nullptr;
    if (contexts != nullptr) {
        ctx = contexts->middleRows(begin * M, n * M);
        ctx_ptr = &ctx;
    }
    ForwardTape tape;
    const DenseMatrix raw = net.raw_forward(x_t, t, ctx_ptr, &tape);
    // lambda(t) ||-z/sigma - raw/sigma||^2 == (lambda / sigma^2) ||raw + z||^2
    DenseMatrix residual = raw + draws.noise.middleRows(begin, n);
    ChunkResult out;
    for (Index i = 0; i < n; ++i) {
        out.weighted_sum += weight[static_cast<std::size_t>(i)] * residual.row(i).squaredNorm();
    }
    if (with_gradient) {
        for (Index i = 0; i < n; ++i) {
            residual.row(i) *= 2.0 * weight[static_cast<std::size_t>(i)] / static_cast<double>(batch);
        }
        out.gradient.assign(net.parameters().size(), 0.0);
        net.backward(tape, residual, out.gradient);
    }
    return out;
}

void check_batch(const ScoreNetwork& net, const DenseMatrix& x0, const DenseMatrix* contexts, const DsmDraws& draws) {
    if (x0.rows() < 1) {
        throw InvalidArgument("dsm loss: empty batch");
    }
    if (static_cast<Index>(draws.t.size()) != x0.rows() || draws.noise.rows() != x0.rows() ||
        draws.noise.cols() != x0.cols()) {
        throw InvalidArgument("dsm loss: draws do not match the batch shape");
    }
    if (net.architecture().has_context() != (contexts != nullptr)) {
        throw InvalidArgument("dsm loss: context presence does not match the model");
    }
}

}  // namespace

LossAndGradient dsm_loss_and_grad(const ScoreNetwork& net, const DenseMatrix& x0, const DenseMatrix* contexts,
                                  const DsmDraws& draws, Weighting weighting, Index chunk, unsigned threads) {
    check_batch(net, x0, contexts, draws);
    if (chunk < 1) {
        throw InvalidArgument("dsm loss: chunk must be positive");
    }
    const Index B = x0.rows();
    const Index chunks = (B + chunk - 1) / chunk;
    std::vector<ChunkResult> parts(static_cast<std::size_t>(chunks));
    parallel_for(chunks, threads, [&](Index lo, Index hi) {
        for (Index c = lo; c < hi; ++c) {
            parts[static_cast<std::size_t>(c)] =
                evaluate_chunk(net, x0, contexts, draws, weighting, c * chunk, std::min(B, (c + 1) * chunk), B, true);
        }
    });
    // reduce in chunk order regardless of which worker produced each part
    LossAndGradient out;
    out.gradient.assign(net.parameters().size(), 0.0);
    double total = 0.0;
    for (const ChunkResult& p : parts) {
        total += p.weighted_sum;
        for (std::size_t i = 0; i < out.gradient.size(); ++i) {
            out.gradient[i] += p.gradient[i];
        }
    }
    out.loss = total / static_cast<double>(B);
    if (!std::isfinite(out.loss)) {
        throw TrainingDiverged("dsm loss is not finite");
    }
    return out;
}

double dsm_loss(const ScoreNetwork& net, const DenseMatrix& x0, const DenseMatrix* contexts, const DsmDraws& draws,
                Weighting weighting) {
    check_batch(net, x0, contexts, draws);
    const ChunkResult r = evaluate_chunk(net, x0, contexts, draws, weighting, 0, x0.rows(), x0.rows(), false);
    return r.weighted_sum / static_cast<double>(x0.rows());
}

LossAndGradient dsm_loss_and_grad(const ScoreNetwork& net, const DenseMatrix& x0, const DenseMatrix* contexts,
                                  const TrainConfig& config, SeededRng& rng) {
    const DsmDraws draws = draw_dsm(x0.rows(), x0.cols(), config.t_lo, config.t_hi, rng);
    return dsm_loss_and_grad(net, x0, contexts, draws, config.weighting, config.chunk, config.threads);
}

TrainResult train(const SpectraMatrix& spectra, const TrainingContexts* contexts, const SigmaSchedule& schedule,
                  Architecture arch, const TrainConfig& config) {
    schedule.validate();
    config.validate(schedule);
    arch.bands = spectra.cols();
    const bool with_context = contexts != nullptr && contexts->spectra != nullptr && contexts->index != nullptr;
    if (arch.has_context() != with_context) {
        throw InvalidArgument("train: context mode of the architecture does not match the supplied contexts");
    }
    const Index N = spectra.rows();
    const Index B = config.batch_size;
    if (N < B) {
        throw InvalidArgument("train: need at least batch_size spectra (" + std::to_string(N) + " < " +
                              std::to_string(B) + ")");
    }
    const Index M = arch.context_count();
    if (with_context && contexts->index->count != M) {
        throw InvalidArgument("train: context index arity does not match the window");
    }

    const auto start = std::chrono::steady_clock::now();
    ScoreNetwork net(arch, schedule, config.seed);
    std::vector<double> ema(net.parameters().begin(), net.parameters().end());
    AdamState adam(ema.size(), AdamHyper{config.learning_rate, config.adam.beta1, config.adam.beta2,
                                         config.adam.epsilon});
    SeededRng shuffle_rng(config.seed, 11);
    SeededRng draw_rng(config.seed, 12);

    std::vector<Index> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), Index{0});
    const Index per_epoch = N / B;

    TrainReport report;
    report.seed = config.seed;
    DenseMatrix x0(B, spectra.cols());
    DenseMatrix ctx(with_context ? B * M : 0, spectra.cols());
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    while (report.steps_completed < config.steps) {
        shuffle_rng.shuffle(std::span<Index>(order));
        double epoch_sum = 0.0;
        Index epoch_steps = 0;
        for (Index s = 0; s < per_epoch && report.steps_completed < config.steps; ++s) {
            for (Index b = 0; b < B; ++b) {
                const Index row = order[static_cast<std::size_t>(s * B + b)];
                x0.row(b) = spectra.row(row);
                if (with_context) {
                    const auto nb = contexts->index->of(row);
                    for (Index m = 0; m < M; ++m) {
                        ctx.row(b * M + m) = contexts->spectra->row(nb[static_cast<std::size_t>(m)]);
                    }
                }
            }
            LossAndGradient lg;
            try {
                lg = dsm_loss_and_grad(net, x0, with_context ? &ctx : nullptr, config, draw_rng);
                adam_update(net.mutable_parameters(), lg.gradient, adam);
            } catch (const TrainingDiverged& e) {
                if (epoch_steps > 0) {
                    report.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
                }
                report.diverged = true;
                report.wall_seconds = elapsed();
                throw TrainingAborted(std::string("training diverged at step ") +
                                          std::to_string(report.steps_completed) + ": " + e.what(),
                                      report);
            }
            const auto p = net.parameters();
            for (std::size_t i = 0; i < ema.size(); ++i) {
                ema[i] = config.ema_decay * ema[i] + (1.0 - config.ema_decay) * p[i];
            }
            epoch_sum += lg.loss;
            ++epoch_steps;
            ++report.steps_completed;
        }
        report.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
    }
    report.final_loss = report.epoch_loss.back();
    report.wall_seconds = elapsed();

    std::vector<double> freqs(net.frequencies().begin(), net.frequencies().end());
    ScoreNetwork model(net.architecture(), schedule, std::move(freqs), std::move(ema));
    model.round_to_float();
    return {std::move(model), std::move(report)};
}

}  // namespace scoread
