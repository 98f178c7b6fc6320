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
#include "scoread/detector.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scoread {

struct NormalizedScores {
    std::vector<double> values;
    double min = 0.0;  // of the raw input
    double max = 1.0;
};

/// Affine min-max map to [0, 1]. Throws DegenerateInput on constant input.
NormalizedScores normalize_scores(std::span<const double> raw);
inline NormalizedScores normalize_scores(const AnomalyMap& map) { return normalize_scores(map.strengths); }

/// P_d and P_f on the uniform grid tau_i = i / (n_tau - 1), pixel fires when score >= tau.
struct ThresholdCurves {
    std::vector<double> tau;
    std::vector<double> pd;
    std::vector<double> pf;
};

ThresholdCurves threshold_curves(const NormalizedScores& scores, const GroundTruthMask& gt, Index n_tau);

struct AucTriplet {
    double d_f = 0.0;    // AUC(P_d, P_f)
    double d_tau = 0.0;  // AUC(P_d, tau)
    double f_tau = 0.0;  // AUC(P_f, tau)
};

AucTriplet auc_triplet(const ThresholdCurves& curves);

struct DerivedMetrics {
    double td = 0.0;
    double bs = 0.0;
    std::optional<double> snpr;  // empty when AUC(P_f, tau) < 1e-12
    double td_bs = 0.0;
    double odp = 0.0;
};

DerivedMetrics derived_metrics(const AucTriplet& triplet);

double auc_pr(const NormalizedScores& scores, const GroundTruthMask& gt);

/// Mann-Whitney AUC with ties counted half; exposed as a cross-check of AUC(P_d, P_f).
double rank_auc(std::span<const double> scores, const GroundTruthMask& gt);
/// Same, from two explicit groups.
double rank_auc(std::span<const double> positives, std::span<const double> negatives);

struct FiveNumbers {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

/// Quantile with linear interpolation between order statistics (position q * (n - 1)).
double quantile(std::vector<double> values, double q);

struct BoxStats {
    FiveNumbers background;
    FiveNumbers anomaly;
};

BoxStats box_stats(const NormalizedScores& scores, const GroundTruthMask& gt);

struct MetricsReport {
    AucTriplet triplet;
    DerivedMetrics derived;
    double auc_pr = 0.0;
    double rank_auc = 0.0;
    Index anomaly_pixels = 0;
    Index background_pixels = 0;
    Index n_tau = 0;
};

struct Evaluation {
    MetricsReport report;
    ThresholdCurves curves;
    BoxStats box;
    NormalizedScores scores;
};

inline constexpr Index kDefaultThresholds = 5001;

/// Full pipeline over a raw map. Throws DataMismatch on size mismatch and
/// SingleClassMask when either class is empty.
Evaluation evaluate(const AnomalyMap& map, const GroundTruthMask& gt, Index n_tau = kDefaultThresholds);

std::string report_json(const MetricsReport& report, const std::string& extra_json = "{}");
void write_curves_csv(const ThresholdCurves& curves, const std::filesystem::path& path);
void write_box_csv(const BoxStats& box, const std::filesystem::path& path);

}  // namespace scoread
