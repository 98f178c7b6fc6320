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

#include "scoread/oracle.hpp"

#include "scoread/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace scoread {

using nlohmann::json;

GaussianSubspaceModel::GaussianSubspaceModel(Eigen::MatrixXd basis, Vector lambdas, Vector mean)
    : basis_(std::move(basis)), lambdas_(std::move(lambdas)), mean_(std::move(mean)) {
    const Index D = basis_.rows();
    const Index d = basis_.cols();
    if (D < 1 || d >= D) {
        throw InvalidArgument("GaussianSubspaceModel: need 0 <= d < D");
    }
    if (lambdas_.size() != d || mean_.size() != D) {
        throw InvalidArgument("GaussianSubspaceModel: lambda/mean sizes do not match the basis");
    }
    if (d > 0 && (lambdas_.array() <= 0.0).any()) {
        throw InvalidArgument("GaussianSubspaceModel: eigenvalues must be positive");
    }
    if (d > 0) {
        const double err = (basis_.transpose() * basis_ - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
        if (err > 1e-10) {
            throw InvalidArgument("GaussianSubspaceModel: basis is not orthonormal");
        }
    }
}

GaussianSubspaceModel GaussianSubspaceModel::random(Index ambient, Index intrinsic, double lambda_lo,
                                                    double lambda_hi, SeededRng& rng) {
    Eigen::MatrixXd g(ambient, intrinsic);
    for (Index i = 0; i < ambient; ++i) {
        for (Index j = 0; j < intrinsic; ++j) {
            g(i, j) = rng.normal();
        }
    }
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(ambient, intrinsic);
    if (intrinsic > 0) {
        q = g.householderQr().householderQ() * Eigen::MatrixXd::Identity(ambient, intrinsic);
    }
    Vector lambdas(intrinsic);
    for (Index j = 0; j < intrinsic; ++j) {
        lambdas[j] = rng.uniform(lambda_lo, lambda_hi);
    }
    return {q, lambdas, Vector::Zero(ambient)};
}

Vector GaussianSubspaceModel::sample(SeededRng& rng) const {
    Vector coeff(intrinsic_dim());
    for (Index j = 0; j < coeff.size(); ++j) {
        coeff[j] = std::sqrt(lambdas_[j]) * rng.normal();
    }
    return mean_ + basis_ * coeff;
}

Vector GaussianSubspaceModel::normal_component(const Vector& v) const {
    return v - basis_ * (basis_.transpose() * v);
}

Vector GaussianSubspaceModel::random_normal_direction(SeededRng& rng) const {
    for (;;) {
        Vector g(ambient_dim());
        rng.fill_normal({g.data(), static_cast<std::size_t>(g.size())});
        const Vector n = normal_component(g);
        const double len = n.norm();
        if (len > 1e-8) {
            return n / len;
        }
    }
}

namespace {

double perturbed_variance(const SigmaSchedule& schedule, double t) {
    const double s = schedule.sigma_at(t);
    if (!(s > 0.0)) {
        throw InvalidArgument("analytic score: sigma_t must be positive (t = 0 is singular off the subspace)");
    }
    return s * s;
}

}  // namespace

Vector analytic_score(const GaussianSubspaceModel& model, const Vector& x, double t, const SigmaSchedule& schedule) {
    const double s2 = perturbed_variance(schedule, t);
    const Vector r = x - model.mean();
    const Vector coeff = model.basis().transpose() * r;
    // (U L U^T + s2 I)^-1 = (I - U diag(l / (l + s2)) U^T) / s2
    const Vector shrink = model.lambdas().array() / (model.lambdas().array() + s2);
    return -(r - model.basis() * coeff.cwiseProduct(shrink)) / s2;
}

double analytic_log_density(const GaussianSubspaceModel& model, const Vector& x, double t,
                            const SigmaSchedule& schedule) {
    const double s2 = perturbed_variance(schedule, t);
    const Index D = model.ambient_dim();
    const Index d = model.intrinsic_dim();
    const Vector r = x - model.mean();
    const Vector coeff = model.basis().transpose() * r;
    const Vector shrink = model.lambdas().array() / (model.lambdas().array() + s2);
    const double quad = (r.squaredNorm() - coeff.cwiseProduct(shrink).dot(coeff)) / s2;
    const double logdet = (model.lambdas().array() + s2).log().sum() + static_cast<double>(D - d) * std::log(s2);
    return -0.5 * (quad + logdet + static_cast<double>(D) * std::log(2.0 * std::numbers::pi));
}

ProjectionResult project(const GaussianSubspaceModel& model, const Vector& x) {
    const Vector r = x - model.mean();
    ProjectionResult out;
    out.projection = model.mean() + model.basis() * (model.basis().transpose() * r);
    const Vector to_proj = out.projection - x;
    out.distance = to_proj.norm();
    out.direction_defined = out.distance > 0.0;
    out.direction = out.direction_defined ? Vector(to_proj / out.distance) : Vector::Zero(x.size());
    return out;
}

double cosine_similarity(const Vector& a, const Vector& b) {
    const double denom = a.norm() * b.norm();
    if (!(denom > 0.0)) {
        throw InvalidArgument("cosine_similarity: zero vector");
    }
    return a.dot(b) / denom;
}

double theorem2_cosine(const GaussianSubspaceModel& model, const Vector& x, double t,
                       const SigmaSchedule& schedule) {
    const ProjectionResult p = project(model, x);
    if (!p.direction_defined) {
        throw InvalidArgument("theorem2_cosine: point lies on the subspace, direction undefined");
    }
    return cosine_similarity(p.direction, analytic_score(model, x, t, schedule));
}

double tangential_fraction(const GaussianSubspaceModel& model, const Vector& v) {
    const double n = v.norm();
    if (!(n > 0.0)) {
        throw InvalidArgument("tangential_fraction: zero vector");
    }
    return (model.basis().transpose() * v).norm() / n;
}

Index normal_space_rank(const DenseMatrix& scores, double tol) {
    if (scores.rows() < 1 || scores.cols() < 1) {
        throw InvalidArgument("normal_space_rank: empty score list");
    }
    const Eigen::MatrixXd m = scores;
    const Vector sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
    if (!(sv[0] > 0.0)) {
        throw DegenerateInput("normal_space_rank: all scores are zero");
    }
    return static_cast<Index>((sv.array() > tol * sv[0]).count());
}

SyntheticScene generate_scene(const GaussianSubspaceModel& model, Index height, Index width, Index n_anomalies,
                              double anomaly_distance, std::uint64_t seed, Index bands) {
    const Index D = model.ambient_dim();
    if (bands >= 0 && bands != D) {
        throw InvalidArgument("generate_scene: model dimension " + std::to_string(D) +
                              " does not equal the requested band count " + std::to_string(bands));
    }
    if (height < 1 || width < 1) {
        throw InvalidArgument("generate_scene: height and width must be >= 1");
    }
    const Index N = height * width;
    if (n_anomalies < 0 || n_anomalies >= N) {
        throw InvalidArgument("generate_scene: need 0 <= n_anomalies < H*W");
    }
    if (!(anomaly_distance > 0.0)) {
        throw InvalidArgument("generate_scene: anomaly_distance must be positive");
    }
    SeededRng background_rng(seed, 1);
    SeededRng plant_rng(seed, 2);

    SpectraMatrix spectra(N, D);
    for (Index n = 0; n < N; ++n) {
        spectra.row(n) = model.sample(background_rng).transpose();
    }
    std::vector<Index> pixels(static_cast<std::size_t>(N));
    std::iota(pixels.begin(), pixels.end(), Index{0});
    plant_rng.shuffle(std::span<Index>(pixels));
    std::vector<Index> chosen(pixels.begin(), pixels.begin() + n_anomalies);
    std::sort(chosen.begin(), chosen.end());

    SyntheticScene scene;
    scene.seed = seed;
    scene.mask = GroundTruthMask{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(N), 0)};
    for (Index p : chosen) {
        PlantedAnomaly a{p, model.random_normal_direction(plant_rng), anomaly_distance};
        spectra.row(p) += anomaly_distance * a.direction.transpose();
        scene.mask.labels[static_cast<std::size_t>(p)] = 1;
        scene.plants.push_back(std::move(a));
    }
    const double lo = spectra.minCoeff();
    const double hi = spectra.maxCoeff();
    scene.offset = lo;
    scene.scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
    spectra = ((spectra.array() - lo) / (hi > lo ? hi - lo : 1.0)).matrix();
    scene.cube = unflatten(spectra, height, width);
    return scene;
}

std::string SyntheticScene::metadata_json() const {
    json plants_json = json::array();
    for (const PlantedAnomaly& p : plants) {
        plants_json.push_back({{"pixel", p.pixel},
                               {"row", p.pixel / cube.width},
                               {"col", p.pixel % cube.width},
                               {"distance", p.distance},
                               {"direction", std::vector<double>(p.direction.data(), p.direction.data() + p.direction.size())}});
    }
    return json{{"seed", seed}, {"affine", {{"offset", offset}, {"scale", scale}}}, {"plants", plants_json}}.dump();
}

GaussianSubspaceModel SceneRecipe::model() const {
    if (static_cast<Index>(lambdas.size()) != intrinsic) {
        throw InvalidArgument("SceneRecipe: need one eigenvalue per intrinsic dimension");
    }
    SeededRng rng(seed, 0);
    GaussianSubspaceModel base = GaussianSubspaceModel::random(bands, intrinsic, 1.0, 1.0, rng);
    Vector mu(bands);
    for (Index j = 0; j < bands; ++j) {
        const double pos = bands > 1 ? static_cast<double>(j) / static_cast<double>(bands - 1) - 0.5 : 0.0;
        mu[j] = mean_level + mean_slope * pos;
    }
    return {base.basis(), Eigen::Map<const Vector>(lambdas.data(), intrinsic), mu};
}

SyntheticScene SceneRecipe::generate() const {
    return generate_scene(model(), height, width, anomalies, distance, seed, bands);
}

}  // namespace scoread
