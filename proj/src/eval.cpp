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

#include "scoread/eval.hpp"

#include "scoread/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace scoread {

using nlohmann::json;

namespace {

void check_pair(std::size_t n_scores, const GroundTruthMask& gt) {
    if (static_cast<Index>(n_scores) != gt.height * gt.width || gt.labels.size() != n_scores) {
        throw DataMismatch("evaluation: score count does not match the mask dimensions");
    }
    const Index anomalies = gt.anomalies();
    if (anomalies == 0 || anomalies == static_cast<Index>(gt.labels.size())) {
        throw SingleClassMask("evaluation: ground truth must contain both anomaly and background pixels");
    }
}

void split(std::span<const double> scores, const GroundTruthMask& gt, std::vector<double>& anomaly,
           std::vector<double>& background) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
        (gt.labels[i] != 0 ? anomaly : background).push_back(scores[i]);
    }
}

// fraction of the sorted values that are >= tau
double fraction_at_least(const std::vector<double>& sorted, double tau) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), tau);
    return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double area = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        area += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) * 0.5;
    }
    return area;
}

FiveNumbers five_numbers(const std::vector<double>& v) {
    return {quantile(v, 0.0), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), quantile(v, 1.0)};
}

}  // namespace

NormalizedScores normalize_scores(std::span<const double> raw) {
    if (raw.empty()) {
        throw DegenerateInput("normalize_scores: empty map");
    }
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        throw DegenerateInput("normalize_scores: constant map");
    }
    NormalizedScores out{std::vector<double>(raw.size()), lo, hi};
    const double range = hi - lo;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out.values[i] = (raw[i] - lo) / range;
    }
    return out;
}

ThresholdCurves threshold_curves(const NormalizedScores& scores, const GroundTruthMask& gt, Index n_tau) {
    check_pair(scores.values.size(), gt);
    if (n_tau < 2) {
        throw InvalidArgument("threshold_curves: n_tau must be >= 2");
    }
    std::vector<double> anomaly;
    std::vector<double> background;
    split(scores.values, gt, anomaly, background);
    std::sort(anomaly.begin(), anomaly.end());
    std::sort(background.begin(), background.end());
    ThresholdCurves c;
    c.tau.resize(static_cast<std::size_t>(n_tau));
    c.pd.resize(c.tau.size());
    c.pf.resize(c.tau.size());
    for (Index i = 0; i < n_tau; ++i) {
        const double tau = static_cast<double>(i) / static_cast<double>(n_tau - 1);
        c.tau[static_cast<std::size_t>(i)] = tau;
        c.pd[static_cast<std::size_t>(i)] = fraction_at_least(anomaly, tau);
        c.pf[static_cast<std::size_t>(i)] = fraction_at_least(background, tau);
    }
    return c;
}

AucTriplet auc_triplet(const ThresholdCurves& curves) {
    AucTriplet out;
    out.d_tau = trapezoid(curves.tau, curves.pd);
    out.f_tau = trapezoid(curves.tau, curves.pf);
    // ROC points run from high tau (small P_f) to low tau, between (0,0) and (1,1)
    std::vector<double> x{0.0};
    std::vector<double> y{0.0};
    for (std::size_t i = curves.tau.size(); i-- > 0;) {
        x.push_back(curves.pf[i]);
        y.push_back(curves.pd[i]);
    }
    x.push_back(1.0);
    y.push_back(1.0);
    out.d_f = trapezoid(x, y);
    return out;
}

DerivedMetrics derived_metrics(const AucTriplet& t) {
    DerivedMetrics d;
    d.td = t.d_f + t.d_tau;
    d.bs = t.d_f - t.f_tau;
    d.td_bs = t.d_tau - t.f_tau;
    d.odp = t.d_f + t.d_tau - t.f_tau;
    if (t.f_tau >= 1e-12) {
        d.snpr = t.d_tau / t.f_tau;
    }
    return d;
}

double auc_pr(const NormalizedScores& scores, const GroundTruthMask& gt) {
    check_pair(scores.values.size(), gt);
    std::vector<std::pair<double, std::uint8_t>> ranked;
    ranked.reserve(scores.values.size());
    for (std::size_t i = 0; i < scores.values.size(); ++i) {
        ranked.emplace_back(scores.values[i], gt.labels[i]);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const double positives = static_cast<double>(gt.anomalies());
    std::vector<double> recall;
    std::vector<double> precision;
    double tp = 0.0;
    double fp = 0.0;
    for (std::size_t i = 0; i < ranked.size();) {
        // all pixels tied at this score fire together under the >= rule
        std::size_t j = i;
        while (j < ranked.size() && ranked[j].first == ranked[i].first) {
            (ranked[j].second != 0 ? tp : fp) += 1.0;
            ++j;
        }
        recall.push_back(tp / positives);
        precision.push_back(tp / (tp + fp));
        i = j;
    }
    recall.insert(recall.begin(), 0.0);
    precision.insert(precision.begin(), precision.front());
    return trapezoid(recall, precision);
}

double rank_auc(std::span<const double> positives, std::span<const double> negatives) {
    if (positives.empty() || negatives.empty()) {
        throw SingleClassMask("rank_auc: both groups must be nonempty");
    }
    std::vector<double> neg(negatives.begin(), negatives.end());
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double p : positives) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
        const auto hi = std::upper_bound(lo, neg.end(), p);
        wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(positives.size()) * static_cast<double>(neg.size()));
}

double rank_auc(std::span<const double> scores, const GroundTruthMask& gt) {
    check_pair(scores.size(), gt);
    std::vector<double> anomaly;
    std::vector<double> background;
    split(scores, gt, anomaly, background);
    return rank_auc(anomaly, background);
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw InvalidArgument("quantile: empty input");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

BoxStats box_stats(const NormalizedScores& scores, const GroundTruthMask& gt) {
    check_pair(scores.values.size(), gt);
    std::vector<double> anomaly;
    std::vector<double> background;
    split(scores.values, gt, anomaly, background);
    return {five_numbers(background), five_numbers(anomaly)};
}

Evaluation evaluate(const AnomalyMap& map, const GroundTruthMask& gt, Index n_tau) {
    if (map.height != gt.height || map.width != gt.width) {
        throw DataMismatch("evaluate: map is " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                           ", mask is " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
    }
    check_pair(map.strengths.size(), gt);
    Evaluation e;
    e.scores = normalize_scores(map);
    e.curves = threshold_curves(e.scores, gt, n_tau);
    e.report.triplet = auc_triplet(e.curves);
    e.report.derived = derived_metrics(e.report.triplet);
    e.report.auc_pr = auc_pr(e.scores, gt);
    e.report.rank_auc = rank_auc(e.scores.values, gt);
    e.report.anomaly_pixels = gt.anomalies();
    e.report.background_pixels = gt.background();
    e.report.n_tau = n_tau;
    e.box = box_stats(e.scores, gt);
    return e;
}

std::string report_json(const MetricsReport& r, const std::string& extra_json) {
    json j = json::parse(extra_json);
    j["AUC_DF"] = r.triplet.d_f;
    j["AUC_Dtau"] = r.triplet.d_tau;
    j["AUC_Ftau"] = r.triplet.f_tau;
    j["AUC_TD"] = r.derived.td;
    j["AUC_BS"] = r.derived.bs;
    j["AUC_SNPR"] = r.derived.snpr ? json(*r.derived.snpr) : json(nullptr);
    j["AUC_SNPR_undefined"] = !r.derived.snpr.has_value();
    j["AUC_TD_BS"] = r.derived.td_bs;
    j["AUC_ODP"] = r.derived.odp;
    j["AUC_PR"] = r.auc_pr;
    j["rank_AUC_DF"] = r.rank_auc;
    j["anomaly_pixels"] = r.anomaly_pixels;
    j["background_pixels"] = r.background_pixels;
    j["n_tau"] = r.n_tau;
    return j.dump(2) + "\n";
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << std::setprecision(17);
    return out;
}

}  // namespace

void write_curves_csv(const ThresholdCurves& c, const std::filesystem::path& path) {
    std::ofstream out = open_csv(path);
    out << "tau,pd,pf\n";
    for (std::size_t i = 0; i < c.tau.size(); ++i) {
        out << c.tau[i] << ',' << c.pd[i] << ',' << c.pf[i] << '\n';
    }
}

void write_box_csv(const BoxStats& b, const std::filesystem::path& path) {
    std::ofstream out = open_csv(path);
    out << "class,min,q1,median,q3,max\n";
    for (const auto& [name, f] : {std::pair{"background", b.background}, std::pair{"anomaly", b.anomaly}}) {
        out << name << ',' << f.min << ',' << f.q1 << ',' << f.median << ',' << f.q3 << ',' << f.max << '\n';
    }
}

}  // namespace scoread
