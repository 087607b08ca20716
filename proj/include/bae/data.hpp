#ifndef BAE_DATA_HPP
#define BAE_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bae/matrix.hpp"
#include "bae/rng.hpp"

namespace bae::data {

/// Feature matrix plus 0/1 labels (1 = anomaly).
struct LabeledTable {
    Matrix features;
    std::vector<int> labels;
    std::vector<std::string> column_names;  // feature columns only

    std::size_t size() const { return labels.size(); }
};

/// CSV with a header row; the label column holds only 0/1. Non-numeric
/// or non-finite cells fail with the offending row/column named.
inline LabeledTable load_csv(const std::string& path, const std::string& label_column = "label") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    std::ptrdiff_t label_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) label_idx = static_cast<std::ptrdiff_t>(i);
    if (label_idx < 0)
        throw std::runtime_error("load_csv: missing label column '" + label_column + "'");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        std::size_t col = 0;
        int label = -1;
        while (std::getline(ss, cell, ',')) {
            double v;
            try {
                std::size_t pos = 0;
                v = std::stod(cell, &pos);
                if (pos != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw std::runtime_error("load_csv: non-numeric cell at row " +
                                         std::to_string(line_no) + ", column " + header.at(col));
            }
            if (!std::isfinite(v))
                throw std::runtime_error("load_csv: non-finite value at row " +
                                         std::to_string(line_no) + ", column " + header.at(col));
            if (static_cast<std::ptrdiff_t>(col) == label_idx) {
                if (v != 0.0 && v != 1.0)
                    throw std::runtime_error("load_csv: label must be 0/1 at row " +
                                             std::to_string(line_no));
                label = static_cast<int>(v);
            } else {
                row.push_back(v);
            }
            ++col;
        }
        if (col != header.size())
            throw std::runtime_error("load_csv: ragged row " + std::to_string(line_no));
        rows.push_back(std::move(row));
        labels.push_back(label);
    }

    LabeledTable t;
    t.labels = std::move(labels);
    t.features = Matrix(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.features(r, c) = rows[r][c];
    for (std::size_t i = 0; i < header.size(); ++i)
        if (static_cast<std::ptrdiff_t>(i) != label_idx) t.column_names.push_back(header[i]);
    return t;
}

inline void save_csv(const std::string& path, const LabeledTable& t,
                     const std::string& label_column = "label") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot open " + path);
    for (std::size_t c = 0; c < t.features.cols(); ++c) {
        const std::string name =
            c < t.column_names.size() ? t.column_names[c] : "f" + std::to_string(c);
        out << name << ",";
    }
    out << label_column << "\n";
    char buf[40];
    for (std::size_t r = 0; r < t.features.rows(); ++r) {
        for (std::size_t c = 0; c < t.features.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", t.features(r, c));
            out << buf << ",";
        }
        out << t.labels[r] << "\n";
    }
}

struct SplitConfig {
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
};

struct Split {
    LabeledTable train;  // inliers only
    LabeledTable test;   // held-out inliers plus every anomaly
};

namespace detail {
inline LabeledTable take_rows(const LabeledTable& t, const std::vector<std::size_t>& idx) {
    LabeledTable out;
    out.column_names = t.column_names;
    out.features = Matrix(idx.size(), t.features.cols());
    out.labels.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < t.features.cols(); ++c)
            out.features(r, c) = t.features(idx[r], c);
        out.labels.push_back(t.labels[idx[r]]);
    }
    return out;
}
}  // namespace detail

/// Shuffle the inliers by seed, put train_fraction of them in the train
/// set, and everything else (held-out inliers and all anomalies) in test.
inline Split split(const LabeledTable& table, const SplitConfig& cfg) {
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
        throw std::invalid_argument("split: train_fraction must lie in (0,1)");
    std::vector<std::size_t> inliers, anomalies;
    for (std::size_t i = 0; i < table.size(); ++i)
        (table.labels[i] == 0 ? inliers : anomalies).push_back(i);
    if (inliers.empty()) throw std::invalid_argument("split: no inliers in table");

    RngStream rng(cfg.seed);
    for (std::size_t i = inliers.size() - 1; i > 0; --i)
        std::swap(inliers[i], inliers[rng.index(i + 1)]);

    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(cfg.train_fraction * static_cast<double>(inliers.size())));
    std::vector<std::size_t> train_idx(inliers.begin(),
                                       inliers.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(inliers.begin() + static_cast<std::ptrdiff_t>(n_train),
                                      inliers.end());
    test_idx.insert(test_idx.end(), anomalies.begin(), anomalies.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    return {detail::take_rows(table, train_idx), detail::take_rows(table, test_idx)};
}

/// Per-feature min/max, fit on the training split only.
struct ScalerParams {
    std::vector<double> min, max;
    bool global = false;  // single min/max over all features (sensor-style)
};

inline ScalerParams fit_minmax(const Matrix& train, bool global = false) {
    if (train.rows() == 0 || train.cols() == 0)
        throw std::invalid_argument("fit_minmax: empty training matrix");
    ScalerParams p;
    p.global = global;
    p.min.assign(train.cols(), 1e308);
    p.max.assign(train.cols(), -1e308);
    for (std::size_t r = 0; r < train.rows(); ++r)
        for (std::size_t c = 0; c < train.cols(); ++c) {
            p.min[c] = std::min(p.min[c], train(r, c));
            p.max[c] = std::max(p.max[c], train(r, c));
        }
    if (global) {
        const double mn = *std::min_element(p.min.begin(), p.min.end());
        const double mx = *std::max_element(p.max.begin(), p.max.end());
        p.min.assign(train.cols(), mn);
        p.max.assign(train.cols(), mx);
    }
    return p;
}

/// (x - min)/(max - min) per feature. Constant features map to 0; test
/// values are not clipped, so out-of-range inputs land outside [0,1].
inline Matrix transform(const ScalerParams& p, const Matrix& x) {
    if (x.cols() != p.min.size())
        throw std::invalid_argument("transform: feature count != scaler");
    Matrix out(x.rows(), x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const double range = p.max[c] - p.min[c];
        for (std::size_t r = 0; r < x.rows(); ++r)
            out(r, c) = range > 0.0 ? (x(r, c) - p.min[c]) / range : 0.0;
    }
    return out;
}

/// Decimation: keep every k-th sample starting at index 0.
template <typename T>
inline std::vector<T> downsample(const std::vector<T>& sequence, std::size_t k) {
    if (k < 1) throw std::invalid_argument("downsample: factor must be >= 1");
    std::vector<T> out;
    for (std::size_t i = 0; i < sequence.size(); i += k) out.push_back(sequence[i]);
    return out;
}

namespace detail {
/// Linear-interpolation quantile of a sorted vector, q in [0,1].
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}
}  // namespace detail

/// Tukey's fences on d_i = |value_i - nominal|: anomaly iff d_i lies
/// outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR] of the deviation distribution.
inline std::vector<int> tukey_flags(const std::vector<double>& values, double nominal) {
    if (values.size() < 4)
        throw std::invalid_argument("tukey_flags: need at least 4 values for stable quartiles");
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dev[i] = std::fabs(values[i] - nominal);
    std::vector<double> sorted = dev;
    std::sort(sorted.begin(), sorted.end());
    const double q1 = detail::quantile_sorted(sorted, 0.25);
    const double q3 = detail::quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - 1.5 * iqr, hi = q3 + 1.5 * iqr;
    std::vector<int> flags(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        flags[i] = (dev[i] > hi || dev[i] < lo) ? 1 : 0;
    return flags;
}

/// Two isotropic Gaussian inlier blobs at (-1,0) and (1,0) with sigma
/// 0.3; anomalies uniform over the inlier bounding box expanded 1.5x.
/// The box uses one shared range over both features (sensor-style
/// global scaling), so it is square.
inline LabeledTable make_synthetic_2d(std::uint64_t seed, std::size_t n_inliers,
                                      std::size_t n_anomalies) {
    RngStream rng(seed);
    LabeledTable t;
    t.column_names = {"x0", "x1"};
    t.features = Matrix(n_inliers + n_anomalies, 2);
    t.labels.assign(n_inliers + n_anomalies, 0);

    double mn = 1e308, mx = -1e308;
    for (std::size_t i = 0; i < n_inliers; ++i) {
        const double cx = (i % 2 == 0) ? -1.0 : 1.0;
        const double x = cx + 0.3 * rng.normal();
        const double y = 0.3 * rng.normal();
        t.features(i, 0) = x;
        t.features(i, 1) = y;
        mn = std::min({mn, x, y});
        mx = std::max({mx, x, y});
    }
    const double centre = 0.5 * (mn + mx);
    const double half = 0.75 * (mx - mn);  // half-width * 1.5
    for (std::size_t i = 0; i < n_anomalies; ++i) {
        t.features(n_inliers + i, 0) = rng.uniform(centre - half, centre + half);
        t.features(n_inliers + i, 1) = rng.uniform(centre - half, centre + half);
        t.labels[n_inliers + i] = 1;
    }
    return t;
}

}  // namespace bae::data

#endif  // BAE_DATA_HPP
