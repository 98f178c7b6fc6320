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

#include "scoread/data_io.hpp"
#include "scoread/numerics.hpp"
#include "scoread/rng.hpp"
#include "scoread/sgm.hpp"

#include <cstdint>
#include <functional>
#include <optional>

namespace scoread {

struct DetectorParams {
    double t = 0.05;
    Index k = 100;
    std::optional<DualWindow> window;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    void validate(const SigmaSchedule& schedule) const;
};

/// Sum of unit-normalized scores of K perturbed copies.
struct AnomalyVector {
    Vector sum;
    Index contributing = 0;

    double strength() const { return sum.norm(); }
};

struct AnomalyMap {
    Index height = 0;
    Index width = 0;
    std::vector<double> strengths;  // row-major
};

/// Scores for a K x C block of perturbed points sharing (t, context).
using BatchScoreFn = std::function<DenseMatrix(const DenseMatrix& x_t, double t, const ContextSet* context)>;
/// Wraps a single-point score function.
BatchScoreFn batch_from_pointwise(std::function<Vector(const Vector&, double, const ContextSet*)> fn);

/// Scores below this norm are skipped rather than normalized.
inline constexpr double kDegenerateScoreNorm = 1e-12;

/// S = sum_i s_i / ||s_i||, s_i = score(x + sigma_t z_i). The K x C noise block
/// is drawn row by row from rng. Throws DegenerateInput if every summand is
/// degenerate.
AnomalyVector anomaly_vector(const BatchScoreFn& score_fn, const Vector& x, const ContextSet* context,
                             const DetectorParams& params, const SigmaSchedule& schedule, SeededRng& rng);

/// Per-pixel stream keyed by (seed, pixel index), so any schedule gives the same map.
AnomalyMap detect_map(const HsiCube& cube, const ScoreNetwork& net, const DetectorParams& params);

/// True iff both score functions yield the same S (to rounding) on identical
/// streams keyed by (params.seed, stream).
bool same_anomaly_vector(const BatchScoreFn& a, const BatchScoreFn& b, const Vector& x, const ContextSet* context,
                         const DetectorParams& params, const SigmaSchedule& schedule, std::uint64_t stream = 0);

/// same_anomaly_vector(score_fn, c * score_fn).
bool scale_invariance_check(const BatchScoreFn& score_fn, const Vector& x, const ContextSet* context,
                            const DetectorParams& params, const SigmaSchedule& schedule, double c);

}  // namespace scoread
