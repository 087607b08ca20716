#ifndef BAE_EVALUATION_HPP
#define BAE_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace bae::eval {

/// 1 = anomaly = positive class.
struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

inline ConfusionCounts confusion(const std::vector<int>& labels, const std::vector<int>& predictions) {
    if (labels.size() != predictions.size())
        throw std::invalid_argument("confusion: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw std::invalid_argument("confusion: labels must be 0/1");
        if (predictions[i] != 0 && predictions[i] != 1)
            throw std::invalid_argument("confusion: predictions must be 0/1");
        if (labels[i] == 1)
            predictions[i] == 1 ? ++c.tp : ++c.fn;
        else
            predictions[i] == 1 ? ++c.fp : ++c.tn;
    }
    return c;
}

/// Geometric mean of sensitivity and specificity; nullopt when either
/// class is absent from the retained set.
inline std::optional<double> gss(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0 || c.tn + c.fp == 0) return std::nullopt;
    const double sens = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    const double spec = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    return std::sqrt(sens * spec);
}

/// Mann-Whitney rank statistic with midrank tie handling; nullopt when a
/// class is absent.
inline std::optional<double> auroc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) throw std::invalid_argument("auroc: length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct ArcPoint {
    double rejection_rate = 0.0;  // percentage
    std::size_t retained = 0;
    std::optional<double> gss;
    std::optional<double> auroc;
};

struct ArcReport {
    std::vector<ArcPoint> points;
    std::optional<double> w_gss, base_gss, gain_gss;
    std::optional<double> w_auroc, base_auroc, gain_auroc;
};

inline std::vector<double> default_rejection_grid() {
    std::vector<double> g;
    for (int r = 0; r < 100; r += 5) g.push_back(static_cast<double>(r));
    return g;
}

/// W = sum (100-r_i) a_i / sum (100-r_i) over points whose metric is
/// defined; Base is the r=0 value, Gain = W - Base.
template <typename Get>
inline void weighted_summary(const std::vector<ArcPoint>& points, Get get,
                             std::optional<double>& w, std::optional<double>& base,
                             std::optional<double>& gain) {
    double num = 0.0, den = 0.0;
    for (const auto& pt : points) {
        const std::optional<double> a = get(pt);
        if (!a) continue;
        num += (100.0 - pt.rejection_rate) * *a;
        den += 100.0 - pt.rejection_rate;
        if (pt.rejection_rate == 0.0) base = a;
    }
    if (den > 0.0) w = num / den;
    if (w && base) gain = *w - *base;
}

inline void w_gss(ArcReport& report) {
    weighted_summary(report.points, [](const ArcPoint& p) { return p.gss; }, report.w_gss,
                     report.base_gss, report.gain_gss);
    weighted_summary(report.points, [](const ArcPoint& p) { return p.auroc; }, report.w_auroc,
                     report.base_auroc, report.gain_auroc);
}

/// For each grid rate r, reject the ceil(rN/100) most-uncertain points
/// (ties broken by original index, stably) and score the retained set.
inline ArcReport arc(const std::vector<double>& uncertainty, const std::vector<int>& labels,
                     const std::vector<int>& predictions, const std::vector<double>& scores,
                     const std::vector<double>& grid = default_rejection_grid()) {
    const std::size_t n = labels.size();
    if (uncertainty.size() != n || predictions.size() != n || scores.size() != n)
        throw std::invalid_argument("arc: input length mismatch");

    // most-uncertain first; stable sort keeps original-index order on ties
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return uncertainty[a] > uncertainty[b]; });

    ArcReport report;
    for (double r : grid) {
        const std::size_t rejected =
            static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) / 100.0));
        if (rejected >= n) continue;  // empty retained set: point skipped
        std::vector<bool> keep(n, true);
        for (std::size_t k = 0; k < rejected; ++k) keep[order[k]] = false;
        std::vector<int> l, p;
        std::vector<double> s;
        for (std::size_t i = 0; i < n; ++i)
            if (keep[i]) {
                l.push_back(labels[i]);
                p.push_back(predictions[i]);
                s.push_back(scores[i]);
            }
        ArcPoint pt;
        pt.rejection_rate = r;
        pt.retained = l.size();
        pt.gss = gss(confusion(l, p));
        pt.auroc = auroc(l, s);
        report.points.push_back(pt);
    }
    w_gss(report);
    return report;
}

/// CSV serialisation: one row per point, blank cell for undefined metrics.
inline void write_arc_csv(std::ostream& os, const ArcReport& report) {
    os << "r,retained,gss,auroc\n";
    auto cell = [&](const std::optional<double>& v) {
        if (v) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.12g", *v);
            os << buf;
        }
    };
    for (const auto& pt : report.points) {
        os << pt.rejection_rate << "," << pt.retained << ",";
        cell(pt.gss);
        os << ",";
        cell(pt.auroc);
        os << "\n";
    }
}

}  // namespace bae::eval

#endif  // BAE_EVALUATION_HPP
