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

void SigmaSchedule::validate() const {
    if (!(sigma_base > 1.0)) {
        throw InvalidArgument("SigmaSchedule: sigma must exceed 1");
    }
    if (!(t_min > 0.0 && t_min < t_max)) {
        throw InvalidArgument("SigmaSchedule: need 0 < t_min < t_max");
    }
}

double SigmaSchedule::sigma_at(double t) const {
    if (!(t >= 0.0 && t <= t_max)) {
        throw InvalidArgument("sigma_at: t = " + std::to_string(t) + " outside [0, " + std::to_string(t_max) + "]");
    }
    const double log_sigma = std::log(sigma_base);
    // expm1 keeps full relative precision as t -> 0
    return std::sqrt(std::expm1(2.0 * t * log_sigma) / (2.0 * log_sigma));
}

double SigmaSchedule::diffusion(double t) const {
    return std::pow(sigma_base, t);
}

Perturbation perturb(const Vector& x, double t, const SigmaSchedule& schedule, SeededRng& rng) {
    const double s = schedule.sigma_at(t);
    Perturbation p{x, Vector(x.size())};
    rng.fill_normal({p.noise.data(), static_cast<std::size_t>(p.noise.size())});
    if (s > 0.0) {
        p.x_t += s * p.noise;
    }
    return p;
}

}  // namespace scoread
