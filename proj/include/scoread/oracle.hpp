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
#include <string>
#include <vector>

namespace scoread {

/// x ~ mu + U N(0, diag(lambda)) on a d-dimensional affine subspace of R^D.
///
/// Perturbed by isotropic noise of variance s^2 the law stays Gaussian with
/// covariance U diag(lambda) U^T + s^2 I, so its score is available in closed form.
class GaussianSubspaceModel {
  public:
    GaussianSubspaceModel(Eigen::MatrixXd basis, Vector lambdas, Vector mean);

    /// Random orthonormal basis (QR of a Gaussian matrix), eigenvalues uniform
    /// in [lambda_lo, lambda_hi], zero mean.
    static GaussianSubspaceModel random(Index ambient, Index intrinsic, double lambda_lo, double lambda_hi,
                                        SeededRng& rng);

    Index ambient_dim() const { return basis_.rows(); }
    Index intrinsic_dim() const { return basis_.cols(); }
    const Eigen::MatrixXd& basis() const { return basis_; }
    const Vector& lambdas() const { return lambdas_; }
    const Vector& mean() const { return mean_; }

    Vector sample(SeededRng& rng) const;
    /// Uniform unit vector in the orthogonal complement of span(U).
    Vector random_normal_direction(SeededRng& rng) const;
    /// Component of v orthogonal to span(U).
    Vector normal_component(const Vector& v) const;

  private:
    Eigen::MatrixXd basis_;
    Vector lambdas_;
    Vector mean_;
};

/// Score of p_t = N(mu, U diag(lambda) U^T + sigma_t^2 I) via Woodbury.
/// Throws InvalidArgument at sigma_t == 0.
Vector analytic_score(const GaussianSubspaceModel& model, const Vector& x, double t, const SigmaSchedule& schedule);
/// log p_t(x), closed form through the same decomposition.
double analytic_log_density(const GaussianSubspaceModel& model, const Vector& x, double t,
                            const SigmaSchedule& schedule);

struct ProjectionResult {
    Vector projection;
    Vector direction;  // (projection - x) / distance; zero when distance == 0
    double distance = 0.0;
    bool direction_defined = false;
};

ProjectionResult project(const GaussianSubspaceModel& model, const Vector& x);

/// Cosine between the unit direction to the projection and the analytic score.
/// Throws InvalidArgument for on-manifold x.
double theorem2_cosine(const GaussianSubspaceModel& model, const Vector& x, double t, const SigmaSchedule& schedule);

double cosine_similarity(const Vector& a, const Vector& b);

/// ||tangential component|| / ||v|| with respect to span(U).
double tangential_fraction(const GaussianSubspaceModel& model, const Vector& v);

/// Singular values above tol * largest of the stacked (K x D) scores.
Index normal_space_rank(const DenseMatrix& scores, double tol);

inline constexpr double kDefaultRankTolerance = 0.1;

struct PlantedAnomaly {
    Index pixel = 0;
    Vector direction;
    double distance = 0.0;
};

struct SyntheticScene {
    HsiCube cube;
    GroundTruthMask mask;
    std::vector<PlantedAnomaly> plants;
    double offset = 0.0;  // squeezed = (raw - offset) * scale
    double scale = 1.0;
    std::uint64_t seed = 0;
    std::string metadata_json() const;
};

/// Background from the model law; n_anomalies distinct pixels pushed
/// anomaly_distance along random normal directions; finally one affine map
/// squeezes all values into [0, 1].
SyntheticScene generate_scene(const GaussianSubspaceModel& model, Index height, Index width, Index n_anomalies,
                              double anomaly_distance, std::uint64_t seed, Index bands = -1);

/// Geometry of the end-to-end fixture of record (32 x 32 x 30, d = 4, five plants at 0.5).
struct SceneRecipe {
    Index height = 32;
    Index width = 32;
    Index bands = 30;
    Index intrinsic = 4;
    Index anomalies = 5;
    double distance = 0.5;
    std::uint64_t seed = 20240601;
    std::vector<double> lambdas{0.02, 0.01, 0.005, 0.0025};
    double mean_level = 0.5;
    double mean_slope = 0.2;  // mu_j rises linearly by this much across the bands

    GaussianSubspaceModel model() const;
    SyntheticScene generate() const;
};

}  // namespace scoread
