#ifndef BAE_CALIBRATION_HPP
#define BAE_CALIBRATION_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bae/matrix.hpp"

namespace bae::calib {

enum class DistKind { Gaussian, Exponential, Uniform, Ecdf };

inline const char* dist_name(DistKind k) {
    switch (k) {
        case DistKind::Gaussian: return "gaussian";
        case DistKind::Exponential: return "exponential";
        case DistKind::Uniform: return "uniform";
        case DistKind::Ecdf: return "ecdf";
    }
    return "?";
}

/// Fitted model Q of one posterior sample's training scores. Degenerate
/// spreads are floored at 1e-9 and flagged rather than rejected.
struct ScoreDistribution {
    DistKind kind = DistKind::Gaussian;
    double mean = 0.0, sigma = 1.0;   // Gaussian
    double exp_mean = 1.0, shift = 0.0;  // Exponential: rate = 1/exp_mean, scores shifted by `shift`
    double lo = 0.0, hi = 1.0;        // Uniform
    std::vector<double> sorted_scores;  // Ecdf
    bool degenerate = false;
};

/// Maximum-likelihood fit of kind to the training scores. Gaussian uses
/// the population (1/N) standard deviation. Exponential fits to scores
/// shifted by the training minimum when any score is negative; the same
/// shift applies at evaluation.
inline ScoreDistribution fit_q(const std::vector<double>& train_scores, DistKind kind) {
    if (train_scores.size() < 2)
        throw std::invalid_argument("fit_q: need at least 2 training scores");
    ScoreDistribution d;
    d.kind = kind;
    const double n = static_cast<double>(train_scores.size());
    switch (kind) {
        case DistKind::Gaussian: {
            d.mean = std::accumulate(train_scores.begin(), train_scores.end(), 0.0) / n;
            double ss = 0.0;
            for (double s : train_scores) ss += (s - d.mean) * (s - d.mean);
            d.sigma = std::sqrt(ss / n);
            if (d.sigma < 1e-9) {
                d.sigma = 1e-9;
                d.degenerate = true;
            }
            break;
        }
        case DistKind::Exponential: {
            const double mn = *std::min_element(train_scores.begin(), train_scores.end());
            d.shift = mn < 0.0 ? mn : 0.0;
            double sum = 0.0;
            for (double s : train_scores) sum += s - d.shift;
            d.exp_mean = sum / n;
            if (d.exp_mean < 1e-9) {
                d.exp_mean = 1e-9;
                d.degenerate = true;
            }
            break;
        }
        case DistKind::Uniform: {
            auto [mn, mx] = std::minmax_element(train_scores.begin(), train_scores.end());
            d.lo = *mn;
            d.hi = *mx;
            if (d.hi - d.lo < 1e-9) {
                d.hi = d.lo + 1e-9;
                d.degenerate = true;
            }
            break;
        }
        case DistKind::Ecdf: {
            d.sorted_scores = train_scores;
            std::sort(d.sorted_scores.begin(), d.sorted_scores.end());
            break;
        }
    }
    return d;
}

/// Fraction of training scores <= score.
inline double ecdf_eval(const ScoreDistribution& d, double score) {
    if (d.sorted_scores.empty()) throw std::invalid_argument("ecdf_eval: empty training scores");
    const auto it = std::upper_bound(d.sorted_scores.begin(), d.sorted_scores.end(), score);
    return static_cast<double>(it - d.sorted_scores.begin()) /
           static_cast<double>(d.sorted_scores.size());
}

inline double cdf_eval(const ScoreDistribution& d, double score) {
    switch (d.kind) {
        case DistKind::Gaussian:
            return 0.5 * std::erfc(-(score - d.mean) / (d.sigma * std::sqrt(2.0)));
        case DistKind::Exponential: {
            const double s = score - d.shift;
            return s < 0.0 ? 0.0 : 1.0 - std::exp(-s / d.exp_mean);
        }
        case DistKind::Uniform: {
            if (score <= d.lo) return 0.0;
            if (score >= d.hi) return 1.0;
            return (score - d.lo) / (d.hi - d.lo);
        }
        case DistKind::Ecdf:
            return ecdf_eval(d, score);
    }
    return 0.0;
}

/// Kriegel-style rescaling: zero probability at or below the training
/// reference, linear stretch above it.
inline double customised_scale(double p, double p_ref) {
    if (p < 0.0 || p > 1.0 || p_ref < 0.0 || p_ref > 1.0)
        throw std::invalid_argument("customised_scale: probabilities must lie in [0,1]");
    if (1.0 - p_ref < 1e-12) return 0.0;
    const double scaled = (p - p_ref) / (1.0 - p_ref);
    return scaled > 0.0 ? scaled : 0.0;
}

struct CalibrationConfig {
    DistKind kind = DistKind::Ecdf;
    bool scaled = false;          // customised scaling on/off
    std::vector<double> p_ref;    // per posterior sample: CDF(mean train score)
};

/// Fit one distribution per posterior row of the training score matrix
/// and precompute the per-sample scaling reference CDF(E[train score]).
inline std::pair<std::vector<ScoreDistribution>, CalibrationConfig> calibrate(
    const Matrix& train_scores, DistKind kind, bool scaled) {
    std::vector<ScoreDistribution> dists;
    CalibrationConfig cfg;
    cfg.kind = kind;
    cfg.scaled = scaled;
    for (std::size_t m = 0; m < train_scores.rows(); ++m) {
        const std::vector<double> row = train_scores.row(m);
        dists.push_back(fit_q(row, kind));
        const double mean_score =
            std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
        cfg.p_ref.push_back(cdf_eval(dists.back(), mean_score));
    }
    return {std::move(dists), std::move(cfg)};
}

/// Entry (m, i) = optionally scaled CDF_m(score_{m,i}).
inline Matrix anomaly_probability_matrix(const Matrix& scores,
                                         const std::vector<ScoreDistribution>& dists,
                                         const CalibrationConfig& cfg) {
    if (scores.rows() != dists.size())
        throw std::invalid_argument("anomaly_probability_matrix: rows != fitted distributions");
    if (cfg.scaled && cfg.p_ref.size() != dists.size())
        throw std::invalid_argument("anomaly_probability_matrix: p_ref size mismatch");
    Matrix p(scores.rows(), scores.cols());
    for (std::size_t m = 0; m < scores.rows(); ++m)
        for (std::size_t i = 0; i < scores.cols(); ++i) {
            double v = cdf_eval(dists[m], scores(m, i));
            if (cfg.scaled) v = customised_scale(v, cfg.p_ref[m]);
            p(m, i) = v;
        }
    return p;
}

/// Column means: (1/M) sum_m p_m per test point.
inline std::vector<double> mean_anomaly_probability(const Matrix& p) {
    std::vector<double> out(p.cols(), 0.0);
    for (std::size_t m = 0; m < p.rows(); ++m)
        for (std::size_t i = 0; i < p.cols(); ++i) out[i] += p(m, i);
    for (double& v : out) v /= static_cast<double>(p.rows());
    return out;
}

/// 1 = anomaly iff p_bar >= threshold (inclusive).
inline std::vector<int> hard_predict(const std::vector<double>& p_bar, double threshold = 0.5) {
    std::vector<int> labels(p_bar.size());
    for (std::size_t i = 0; i < p_bar.size(); ++i) labels[i] = p_bar[i] >= threshold ? 1 : 0;
    return labels;
}

}  // namespace bae::calib

#endif  // BAE_CALIBRATION_HPP
