#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bae/calibration.hpp"
#include "bae/rng.hpp"

using bae::Matrix;
using bae::RngStream;
using namespace bae::calib;

TEST_CASE("fit_q: hand-computed MLE parameters") {
    const ScoreDistribution g = fit_q({0.0, 2.0}, DistKind::Gaussian);
    CHECK(g.mean == doctest::Approx(1.0));
    CHECK(g.sigma == doctest::Approx(1.0));  // population std

    const ScoreDistribution e = fit_q({1.0, 2.0, 3.0}, DistKind::Exponential);
    CHECK(1.0 / e.exp_mean == doctest::Approx(0.5));  // rate = 1/mean

    const ScoreDistribution u = fit_q({3.0, 7.0, 5.0}, DistKind::Uniform);
    CHECK(u.lo == 3.0);
    CHECK(u.hi == 7.0);

    CHECK_THROWS_AS(fit_q({1.0}, DistKind::Gaussian), std::invalid_argument);
}

TEST_CASE("fit_q: degenerate spreads are floored and flagged") {
    const ScoreDistribution g = fit_q({2.0, 2.0, 2.0}, DistKind::Gaussian);
    CHECK(g.degenerate);
    CHECK(g.sigma >= 1e-9);
    const ScoreDistribution u = fit_q({5.0, 5.0}, DistKind::Uniform);
    CHECK(u.degenerate);
    CHECK(u.hi - u.lo >= 1e-9);
}

TEST_CASE("fit_q: exponential shift rule for negative scores") {
    const ScoreDistribution e = fit_q({-1.0, 0.0, 1.0}, DistKind::Exponential);
    CHECK(e.shift == doctest::Approx(-1.0));
    CHECK(e.exp_mean == doctest::Approx(1.0));  // mean of shifted {0,1,2}
    CHECK(cdf_eval(e, -1.0) == doctest::Approx(0.0));
    CHECK(cdf_eval(e, -2.0) == 0.0);  // below shifted support
}

TEST_CASE("cdf_eval: hand values") {
    ScoreDistribution g;
    g.kind = DistKind::Gaussian;
    g.mean = 3.0;
    g.sigma = 2.0;
    CHECK(cdf_eval(g, 3.0) == doctest::Approx(0.5));

    ScoreDistribution e;
    e.kind = DistKind::Exponential;
    e.exp_mean = 2.0;
    CHECK(cdf_eval(e, 2.0) == doctest::Approx(1.0 - std::exp(-1.0)));
    CHECK(cdf_eval(e, -0.5) == 0.0);

    ScoreDistribution u;
    u.kind = DistKind::Uniform;
    u.lo = 0.0;
    u.hi = 10.0;
    CHECK(cdf_eval(u, 2.5) == doctest::Approx(0.25));
    CHECK(cdf_eval(u, -1.0) == 0.0);
    CHECK(cdf_eval(u, 11.0) == 1.0);
}

TEST_CASE("ecdf_eval: fraction of training scores at or below") {
    const ScoreDistribution d = fit_q({1.0, 2.0, 3.0, 4.0}, DistKind::Ecdf);
    CHECK(ecdf_eval(d, 2.5) == doctest::Approx(0.5));
    CHECK(ecdf_eval(d, 0.5) == 0.0);
    CHECK(ecdf_eval(d, 4.0) == 1.0);  // <= includes ties
}

TEST_CASE("cdf_eval is monotone non-decreasing for every kind") {
    RngStream rng(4);
    std::vector<double> train;
    for (int i = 0; i < 50; ++i) train.push_back(rng.uniform(0.0, 5.0));
    for (DistKind k :
         {DistKind::Gaussian, DistKind::Exponential, DistKind::Uniform, DistKind::Ecdf}) {
        const ScoreDistribution d = fit_q(train, k);
        double prev = -1.0;
        for (double s = -2.0; s < 8.0; s += 0.05) {
            const double p = cdf_eval(d, s);
            CHECK(p >= prev);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            prev = p;
        }
    }
}

TEST_CASE("ecdf sup-distance to the true uniform CDF shrinks with N") {
    double prev_dist = 2.0;
    for (std::size_t n : {100u, 1000u, 10000u}) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            RngStream rng(seed * 7 + 1);
            std::vector<double> samples(n);
            for (auto& s : samples) s = rng.uniform();
            const ScoreDistribution d = fit_q(samples, DistKind::Ecdf);
            double sup = 0.0;
            for (double x = 0.0; x <= 1.0; x += 0.001)
                sup = std::max(sup, std::fabs(ecdf_eval(d, x) - x));
            total += sup;
        }
        const double mean_sup = total / 20.0;
        CHECK(mean_sup < prev_dist);
        prev_dist = mean_sup;
    }
}

TEST_CASE("uniform CDF equals min-max scaling for in-range scores") {
    RngStream rng(9);
    std::vector<double> train;
    for (int i = 0; i < 40; ++i) train.push_back(rng.uniform(1.0, 4.0));
    const ScoreDistribution d = fit_q(train, DistKind::Uniform);
    for (int i = 0; i < 100; ++i) {
        const double s = rng.uniform(d.lo, d.hi);
        const double minmax = (s - d.lo) / (d.hi - d.lo);
        CHECK(std::fabs(cdf_eval(d, s) - minmax) < 1e-12);
    }
}

TEST_CASE("customised_scale: clamp, stretch, and monotonicity") {
    CHECK(customised_scale(0.3, 0.5) == 0.0);
    CHECK(customised_scale(0.9, 0.5) == doctest::Approx(0.8));
    CHECK(customised_scale(0.5, 0.5) == 0.0);
    CHECK(customised_scale(0.7, 1.0) == 0.0);  // p_ref ~ 1 guard

    // zero at or below p_ref, strictly increasing above
    double prev = 0.0;
    for (double p = 0.0; p <= 1.0; p += 0.01) {
        const double v = customised_scale(p, 0.4);
        if (p <= 0.4)
            CHECK(v == 0.0);
        else
            CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("anomaly_probability_matrix: shape checks and scaling dominance") {
    RngStream rng(12);
    Matrix train_scores(2, 30), test_scores(2, 10);
    for (std::size_t i = 0; i < train_scores.size(); ++i) train_scores[i] = rng.uniform(0.0, 2.0);
    for (std::size_t i = 0; i < test_scores.size(); ++i) test_scores[i] = rng.uniform(0.0, 3.0);

    auto [dists, plain_cfg] = calibrate(train_scores, DistKind::Gaussian, false);
    auto [dists2, scaled_cfg] = calibrate(train_scores, DistKind::Gaussian, true);
    const Matrix p_plain = anomaly_probability_matrix(test_scores, dists, plain_cfg);
    const Matrix p_scaled = anomaly_probability_matrix(test_scores, dists2, scaled_cfg);
    for (std::size_t i = 0; i < p_plain.size(); ++i) {
        CHECK(p_plain[i] >= 0.0);
        CHECK(p_plain[i] <= 1.0);
        CHECK(p_scaled[i] <= p_plain[i]);  // scaling never raises a probability
    }

    // row/distribution count mismatch
    Matrix wrong(3, 10, 0.5);
    CHECK_THROWS_AS(anomaly_probability_matrix(wrong, dists, plain_cfg), std::invalid_argument);
}

TEST_CASE("anomaly_probability_matrix: uniform fit reproduces min-max scaling") {
    Matrix train_scores(1, 5);
    for (std::size_t i = 0; i < 5; ++i) train_scores(0, i) = 1.0 + static_cast<double>(i);
    Matrix test_scores(1, 3);
    test_scores(0, 0) = 2.0;
    test_scores(0, 1) = 3.5;
    test_scores(0, 2) = 5.0;
    auto [dists, cfg] = calibrate(train_scores, DistKind::Uniform, false);
    const Matrix p = anomaly_probability_matrix(test_scores, dists, cfg);
    CHECK(p(0, 0) == doctest::Approx(0.25));
    CHECK(p(0, 1) == doctest::Approx(0.625));
    CHECK(p(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("anomaly_probability_matrix: ECDF floor below every training score") {
    Matrix train_scores(1, 4);
    for (std::size_t i = 0; i < 4; ++i) train_scores(0, i) = 5.0 + static_cast<double>(i);
    Matrix test_scores(1, 3, 1.0);
    auto [dists, cfg] = calibrate(train_scores, DistKind::Ecdf, false);
    const Matrix p = anomaly_probability_matrix(test_scores, dists, cfg);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == 0.0);
}

TEST_CASE("mean_anomaly_probability and hard_predict") {
    Matrix p(2, 2);
    p(0, 0) = 0.4;
    p(1, 0) = 0.6;
    p(0, 1) = 0.2;
    p(1, 1) = 0.2;
    const std::vector<double> mean = mean_anomaly_probability(p);
    CHECK(mean[0] == doctest::Approx(0.5));
    CHECK(mean[1] == doctest::Approx(0.2));

    const std::vector<int> labels = hard_predict({0.5, 0.49, 1.0, 0.0});
    CHECK(labels[0] == 1);  // >= threshold is inclusive
    CHECK(labels[1] == 0);
    CHECK(labels[2] == 1);
    CHECK(labels[3] == 0);

    Matrix single(1, 2);
    single(0, 0) = 0.3;
    single(0, 1) = 0.8;
    const std::vector<double> m1 = mean_anomaly_probability(single);
    CHECK(m1[0] == 0.3);
    CHECK(m1[1] == 0.8);
}
