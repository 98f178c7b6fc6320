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

#include "scoread/detector.hpp"

#include "scoread/error.hpp"

#include <cmath>
#include <string>

namespace scoread {

void DetectorParams::validate(const SigmaSchedule& schedule) const {
    if (!(t >= schedule.t_min && t <= schedule.t_max)) {
        throw InvalidArgument("DetectorParams: t must lie in [t_min, t_max]");
    }
    if (k < 1) {
        throw InvalidArgument("DetectorParams: K must be >= 1");
    }
    if (window) {
        window->validate();
    }
}

BatchScoreFn batch_from_pointwise(std::function<Vector(const Vector&, double, const ContextSet*)> fn) {
    return [fn = std::move(fn)](const DenseMatrix& x_t, double t, const ContextSet* ctx) {
        DenseMatrix out(x_t.rows(), x_t.cols());
        for (Index i = 0; i < x_t.rows(); ++i) {
            out.row(i) = fn(x_t.row(i).transpose(), t, ctx).transpose();
        }
        return out;
    };
}

AnomalyVector anomaly_vector(const BatchScoreFn& score_fn, const Vector& x, const ContextSet* context,
                             const DetectorParams& params, const SigmaSchedule& schedule, SeededRng& rng) {
    if (params.k < 1) {
        throw InvalidArgument("anomaly_vector: K must be >= 1");
    }
    const double sigma_t = schedule.sigma_at(params.t);
    DenseMatrix x_t(params.k, x.size());
    for (Index i = 0; i < params.k; ++i) {
        for (Index c = 0; c < x.size(); ++c) {
            x_t(i, c) = x[c] + sigma_t * rng.normal();
        }
    }
    const DenseMatrix scores = score_fn(x_t, params.t, context);
    if (scores.rows() != params.k || scores.cols() != x.size()) {
        throw InvalidArgument("anomaly_vector: score function returned the wrong shape");
    }
    AnomalyVector out{Vector::Zero(x.size()), 0};
    for (Index i = 0; i < params.k; ++i) {
        const double n = scores.row(i).norm();
        if (!(n >= kDegenerateScoreNorm) || !std::isfinite(n)) {
            continue;
        }
        out.sum += scores.row(i).transpose() / n;
        ++out.contributing;
    }
    if (out.contributing == 0) {
        throw DegenerateInput("anomaly_vector: all " + std::to_string(params.k) + " scores are degenerate");
    }
    return out;
}

AnomalyMap detect_map(const HsiCube& cube, const ScoreNetwork& net, const DetectorParams& params) {
    cube.validate();
    params.validate(net.schedule());
    const Architecture& arch = net.architecture();
    if (cube.bands != arch.bands) {
        throw DataMismatch("detect_map: cube has " + std::to_string(cube.bands) + " bands, model expects " +
                           std::to_string(arch.bands));
    }
    if (arch.has_context() != params.window.has_value() || (params.window && *params.window != *arch.window)) {
        throw DataMismatch("detect_map: detector window does not match the model's context mode");
    }
    const SpectraMatrix spectra = flatten(cube);
    ContextIndex index;
    if (params.window) {
        index = build_context_index(cube.height, cube.width, *params.window);
    }
    const BatchScoreFn score_fn = [&net, &params](const DenseMatrix& x_t, double t, const ContextSet* ctx) {
        const std::vector<double> ts(static_cast<std::size_t>(x_t.rows()), t);
        if (ctx == nullptr) {
            return net.score(x_t, ts, nullptr);
        }
        // every perturbed copy of a pixel sees the same context
        const Index M = ctx->rows();
        DenseMatrix tiled(x_t.rows() * M, ctx->cols());
        for (Index i = 0; i < x_t.rows(); ++i) {
            tiled.middleRows(i * M, M) = *ctx;
        }
        return net.score(x_t, ts, &tiled);
    };

    AnomalyMap map{cube.height, cube.width, std::vector<double>(static_cast<std::size_t>(cube.pixels()))};
    parallel_for(cube.pixels(), resolve_threads(params.threads), [&](Index lo, Index hi) {
        for (Index n = lo; n < hi; ++n) {
            SeededRng rng(params.seed, static_cast<std::uint64_t>(n));
            const Vector x = spectra.row(n).transpose();
            ContextSet ctx;
            if (params.window) {
                ctx = gather_context(spectra, index, n);
            }
            const AnomalyVector v =
                anomaly_vector(score_fn, x, params.window ? &ctx : nullptr, params, net.schedule(), rng);
            map.strengths[static_cast<std::size_t>(n)] = v.strength();
        }
    });
    return map;
}

bool same_anomaly_vector(const BatchScoreFn& a, const BatchScoreFn& b, const Vector& x, const ContextSet* context,
                         const DetectorParams& params, const SigmaSchedule& schedule, std::uint64_t stream) {
    SeededRng rng_a(params.seed, stream);
    SeededRng rng_b(params.seed, stream);
    AnomalyVector va;
    AnomalyVector vb;
    try {
        va = anomaly_vector(a, x, context, params, schedule, rng_a);
    } catch (const DegenerateInput&) {
        va.contributing = 0;
    }
    try {
        vb = anomaly_vector(b, x, context, params, schedule, rng_b);
    } catch (const DegenerateInput&) {
        vb.contributing = 0;
    }
    if (va.contributing != vb.contributing) {
        return false;
    }
    if (va.contributing == 0) {
        return true;
    }
    // unit summands: a handful of ulps per term is the only admissible difference
    const double tol = 1e-12 * static_cast<double>(params.k);
    return (va.sum - vb.sum).cwiseAbs().maxCoeff() <= tol;
}

bool scale_invariance_check(const BatchScoreFn& score_fn, const Vector& x, const ContextSet* context,
                            const DetectorParams& params, const SigmaSchedule& schedule, double c) {
    if (!(c > 0.0)) {
        throw InvalidArgument("scale_invariance_check: c must be positive");
    }
    const BatchScoreFn scaled = [&score_fn, c](const DenseMatrix& x_t, double t, const ContextSet* ctx) {
        return DenseMatrix(c * score_fn(x_t, t, ctx));
    };
    return same_anomaly_vector(score_fn, scaled, x, context, params, schedule);
}

}  // namespace scoread
