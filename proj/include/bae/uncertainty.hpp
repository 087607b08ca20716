#ifndef BAE_UNCERTAINTY_HPP
#define BAE_UNCERTAINTY_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bae/matrix.hpp"

namespace bae::unc {

/// Population (1/M) variance of the M anomaly probabilities: the model's
/// disagreement about the anomaly outcome.
inline double epistemic(const std::vector<double>& p_column) {
    if (p_column.empty()) throw std::invalid_argument("epistemic: empty column");
    const double m = static_cast<double>(p_column.size());
    double mean = 0.0;
    for (double p : p_column) mean += p;
    mean /= m;
    double var = 0.0;
    for (double p : p_column) var += (p - mean) * (p - mean);
    return var / m;
}

/// Mean Bernoulli variance p(1-p) across the M samples.
inline double aleatoric(const std::vector<double>& p_column) {
    if (p_column.empty()) throw std::invalid_argument("aleatoric: empty column");
    double s = 0.0;
    for (double p : p_column) s += p * (1.0 - p);
    return s / static_cast<double>(p_column.size());
}

/// Law-of-total-variance sum; scaled = 4 * raw maps [0, 0.25] onto [0, 1].
inline std::pair<double, double> total(const std::vector<double>& p_column) {
    const double raw = epistemic(p_column) + aleatoric(p_column);
    return {raw, 4.0 * raw};
}

/// p_bar^N below the training maximum, 1 - p_bar^N above it. Underflow
/// of the power returns exactly 0.
inline double exceed(double p_bar, std::size_t n_train, double mean_nll, double max_train_nll) {
    if (n_train < 1) throw std::invalid_argument("exceed: need n_train >= 1");
    double powed = std::pow(p_bar, static_cast<double>(n_train));
    if (powed < 5e-324) powed = 0.0;
    return mean_nll < max_train_nll ? powed : 1.0 - powed;
}

/// Population variance of the M raw scores; 0 by definition when M = 1.
inline double var_nll(const std::vector<double>& score_column) {
    if (score_column.empty()) throw std::invalid_argument("var_nll: empty column");
    if (score_column.size() == 1) return 0.0;
    const double m = static_cast<double>(score_column.size());
    double mean = 0.0;
    for (double s : score_column) mean += s;
    mean /= m;
    double var = 0.0;
    for (double s : score_column) var += (s - mean) * (s - mean);
    return var / m;
}

/// Per-test-point uncertainties. total_raw = epistemic + aleatoric holds
/// to 1e-12; total_scaled = 4 * total_raw.
struct UncertaintyReport {
    std::vector<double> epistemic;
    std::vector<double> aleatoric;
    std::vector<double> total_raw;
    std::vector<double> total_scaled;
    std::vector<double> exceed;
    std::vector<double> var_nll;
};

/// Assemble every estimator for all test points. `probabilities` and
/// `scores` are M x N; train_scores supplies the exceed branch condition.
inline UncertaintyReport report(const Matrix& probabilities, const Matrix& scores,
                                const Matrix& train_scores) {
    if (probabilities.cols() != scores.cols())
        throw std::invalid_argument("uncertainty report: test point count mismatch");
    const std::size_t n = probabilities.cols();
    const std::size_t n_train = train_scores.cols();

    // posterior-mean train score per point, then its max (exceed branch)
    double max_train = -1e308;
    for (std::size_t i = 0; i < n_train; ++i) {
        double s = 0.0;
        for (std::size_t m = 0; m < train_scores.rows(); ++m) s += train_scores(m, i);
        s /= static_cast<double>(train_scores.rows());
        if (s > max_train) max_train = s;
    }

    UncertaintyReport rep;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> p_col(probabilities.rows()), s_col(scores.rows());
        for (std::size_t m = 0; m < probabilities.rows(); ++m) p_col[m] = probabilities(m, i);
        for (std::size_t m = 0; m < scores.rows(); ++m) s_col[m] = scores(m, i);
        rep.epistemic.push_back(epistemic(p_col));
        rep.aleatoric.push_back(aleatoric(p_col));
        const auto [raw, scaled] = total(p_col);
        rep.total_raw.push_back(raw);
        rep.total_scaled.push_back(scaled);
        double p_bar = 0.0, mean_s = 0.0;
        for (double p : p_col) p_bar += p;
        p_bar /= static_cast<double>(p_col.size());
        for (double s : s_col) mean_s += s;
        mean_s /= static_cast<double>(s_col.size());
        rep.exceed.push_back(exceed(p_bar, n_train, mean_s, max_train));
        rep.var_nll.push_back(var_nll(s_col));
    }
    return rep;
}

}  // namespace bae::unc

#endif  // BAE_UNCERTAINTY_HPP
