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
#include "scoread/error.hpp"
#include "scoread/numerics.hpp"
#include "scoread/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scoread {

/// Variance-exploding perturbation law sigma_t = sqrt((sigma^(2t) - 1) / (2 ln sigma)).
struct SigmaSchedule {
    double sigma_base = 25.0;
    double t_min = 0.01;
    double t_max = 1.0;

    void validate() const;
    /// Throws InvalidArgument for t outside [0, t_max].
    double sigma_at(double t) const;
    /// g(t) = sigma^t, so that g^2 = d(sigma_t^2)/dt with zero drift.
    double diffusion(double t) const;
};

inline double sigma_at(const SigmaSchedule& schedule, double t) { return schedule.sigma_at(t); }

struct Perturbation {
    Vector x_t;
    Vector noise;
};

/// x_t = x + sigma_t z, z ~ N(0, I); returns the draw alongside.
Perturbation perturb(const Vector& x, double t, const SigmaSchedule& schedule, SeededRng& rng);

/// Shape of the conditional score network.
struct Architecture {
    Index bands = 0;
    Index channels = 64;
    Index blocks = 4;
    Index kernel_width = 3;
    Index fourier_features = 64;  // time embedding has 2F entries
    double fourier_scale = 16.0;
    Index film_hidden = 128;
    std::optional<DualWindow> window;  // context mode is on iff set
    Index context_hidden = 64;

    bool has_context() const { return window.has_value(); }
    Index context_count() const { return window ? window->context_count() : 0; }
    Index embedding_dim() const { return 2 * fourier_features; }
    void validate() const;
};

struct TensorInfo {
    std::string name;
    std::vector<Index> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

class ScoreNetwork;

/// Intermediate values of one batched forward pass, kept for backprop.
struct ForwardTape {
    Index batch = 0;
    std::vector<double> sigma;
    DenseMatrix embedding;       // B x 2F
    DenseMatrix context_pre;     // (B*M) x E, first encoder layer before SiLU
    DenseMatrix context_hidden;  // (B*M) x E
    DenseMatrix context_pooled;  // B x E
    DenseMatrix film_pre;        // B x H
    DenseMatrix film_hidden;     // B x H
    DenseMatrix film;            // B x (2 * channels * blocks): [dgamma | beta] per block
    FeatureMap input;            // 1 x (B*C)
    std::vector<FeatureMap> trunk;  // h_0 .. h_L
    std::vector<FeatureMap> conv1;  // a_l
    std::vector<FeatureMap> modulated;  // m_l
    std::vector<FeatureMap> activated;  // silu(m_l)
    DenseMatrix raw;             // B x C
    const DenseMatrix* contexts = nullptr;  // not owned
};

/// Conditional score estimator s(x_t, t, c) = raw(x_t, t, c) / sigma_t.
///
/// Trunk: 1-channel spectrum -> conv lift -> residual blocks
/// [conv -> FiLM -> SiLU -> conv] + skip -> 1x1 head. FiLM parameters come from
/// a 2-layer head over the Fourier time embedding of log sigma_t, concatenated
/// with the mean-pooled output of a per-spectrum context encoder.
class ScoreNetwork {
  public:
    /// Fresh network; parameters and Fourier frequencies drawn from init_seed.
    ScoreNetwork(Architecture arch, SigmaSchedule schedule, std::uint64_t init_seed);
    /// Rebuild from stored frequencies and a flat parameter vector.
    ScoreNetwork(Architecture arch, SigmaSchedule schedule, std::vector<double> frequencies,
                 std::vector<double> parameters);

    const Architecture& architecture() const { return arch_; }
    const SigmaSchedule& schedule() const { return schedule_; }
    const std::vector<TensorInfo>& tensors() const { return tensors_; }
    const TensorInfo& tensor(const std::string& name) const;
    std::span<const double> frequencies() const { return frequencies_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> mutable_parameters() { return params_; }
    std::span<const double> view(const TensorInfo& t) const { return {params_.data() + t.offset, t.size}; }
    std::span<double> mutable_view(const TensorInfo& t) { return {params_.data() + t.offset, t.size}; }

    /// Round every parameter to the nearest float32 (the stored precision).
    void round_to_float();

    /// Batched raw output (before the 1/sigma_t scaling). x_t is B x C, t has B
    /// entries, contexts is (B*M) x C or null when context mode is off.
    DenseMatrix raw_forward(const DenseMatrix& x_t, std::span<const double> t, const DenseMatrix* contexts,
                            ForwardTape* tape = nullptr) const;
    /// Batched score, B x C.
    DenseMatrix score(const DenseMatrix& x_t, std::span<const double> t, const DenseMatrix* contexts) const;
    /// Single-point score; context must be M x C when context mode is on.
    Vector score_forward(const Vector& x_t, double t, const ContextSet* context) const;

    /// Accumulates d(loss)/d(params) into grad given d(loss)/d(raw) (B x C).
    void backward(const ForwardTape& tape, const DenseMatrix& grad_raw, std::span<double> grad) const;

  private:
    void layout();
    void check_inputs(const DenseMatrix& x_t, std::span<const double> t, const DenseMatrix* contexts) const;

    Architecture arch_;
    SigmaSchedule schedule_;
    std::vector<double> frequencies_;
    std::vector<double> params_;
    std::vector<TensorInfo> tensors_;
};

enum class Weighting { SigmaSquared, Unit };

struct TrainConfig {
    Index steps = 20000;
    Index batch_size = 256;
    double learning_rate = 1e-3;
    double ema_decay = 0.999;
    Weighting weighting = Weighting::SigmaSquared;
    double t_lo = 0.01;
    double t_hi = 1.0;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    // loss/gradient are summed in fixed chunks of this many samples, in order
    Index chunk = 32;
    AdamHyper adam;

    void validate(const SigmaSchedule& schedule) const;
};

/// Frozen (t, z) draws for one batch.
struct DsmDraws {
    std::vector<double> t;
    DenseMatrix noise;  // B x C
};

DsmDraws draw_dsm(Index batch, Index bands, double t_lo, double t_hi, SeededRng& rng);

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Mean over the batch of lambda(t) ||-z / sigma_t - s(x_t, t, c)||^2 with
/// x_t = x_0 + sigma_t z, plus its exact gradient. contexts is (B*M) x C or null.
LossAndGradient dsm_loss_and_grad(const ScoreNetwork& net, const DenseMatrix& x0, const DenseMatrix* contexts,
                                  const DsmDraws& draws, Weighting weighting, Index chunk = 32,
                                  unsigned threads = 1);
/// Loss only (same arithmetic as the gradient path).
double dsm_loss(const ScoreNetwork& net, const DenseMatrix& x0, const DenseMatrix* contexts, const DsmDraws& draws,
                Weighting weighting);
/// Draws (t, z) for the batch from rng, then evaluates.
LossAndGradient dsm_loss_and_grad(const ScoreNetwork& net, const DenseMatrix& x0, const DenseMatrix* contexts,
                                  const TrainConfig& config, SeededRng& rng);

struct TrainReport {
    std::vector<double> epoch_loss;
    double final_loss = 0.0;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    Index steps_completed = 0;
    bool diverged = false;
};

struct TrainResult {
    ScoreNetwork model;  // EMA parameters rounded to float32
    TrainReport report;
};

/// Thrown by train() on a non-finite loss; carries the partial report.
class TrainingAborted : public TrainingDiverged {
  public:
    TrainingAborted(const std::string& what, TrainReport partial)
        : TrainingDiverged(what), report_(std::move(partial)) {}
    const TrainReport& report() const { return report_; }

  private:
    TrainReport report_;
};

/// Per-row contexts for training: flattened spectra plus neighbor indices.
struct TrainingContexts {
    const SpectraMatrix* spectra = nullptr;
    const ContextIndex* index = nullptr;
};

/// Adam on shuffled minibatches with an EMA copy of the parameters.
TrainResult train(const SpectraMatrix& spectra, const TrainingContexts* contexts, const SigmaSchedule& schedule,
                  Architecture arch, const TrainConfig& config);

/// "SCAD" | u32 version | u64 descriptor length | JSON descriptor | f32le tensors.
void save_model(const ScoreNetwork& net, const std::filesystem::path& path);
ScoreNetwork load_model(const std::filesystem::path& path);
std::vector<char> serialize_model(const ScoreNetwork& net);
ScoreNetwork deserialize_model(const std::vector<char>& bytes, const std::string& origin = "<memory>");

inline constexpr std::uint32_t kModelFormatVersion = 1;

}  // namespace scoread
