#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bae/autoencoder.hpp"
#include "bae/data.hpp"

using bae::Matrix;
using namespace bae::data;

namespace {
std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("split: 70:30 arithmetic with floor") {
    LabeledTable t;
    t.features = Matrix(120, 1);
    t.labels.assign(120, 0);
    for (std::size_t i = 0; i < 120; ++i) t.features(i, 0) = static_cast<double>(i);
    for (std::size_t i = 100; i < 120; ++i) t.labels[i] = 1;  // 100 inliers + 20 anomalies

    const Split sp = split(t, {0.7, 3});
    CHECK(sp.train.size() == 70);
    CHECK(sp.test.size() == 50);  // 30 held-out inliers + 20 anomalies
    for (int label : sp.train.labels) CHECK(label == 0);
    int anomalies = 0;
    for (int label : sp.test.labels) anomalies += label;
    CHECK(anomalies == 20);
}

TEST_CASE("split: floor applies to odd inlier counts") {
    LabeledTable t;
    t.features = Matrix(11, 1);
    t.labels.assign(11, 0);
    t.labels[10] = 1;
    const Split sp = split(t, {0.7, 0});
    CHECK(sp.train.size() == 7);  // floor(0.7 * 10)
    CHECK(sp.test.size() == 4);
}

TEST_CASE("split: deterministic per seed, different across seeds") {
    LabeledTable t;
    t.features = Matrix(40, 2);
    t.labels.assign(40, 0);
    bae::RngStream rng(5);
    for (std::size_t i = 0; i < t.features.size(); ++i) t.features[i] = rng.uniform();

    const Split a = split(t, {0.5, 7});
    const Split b = split(t, {0.5, 7});
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.features.size(); ++i)
        CHECK(a.train.features[i] == b.train.features[i]);

    const Split c = split(t, {0.5, 8});
    bool differs = false;
    for (std::size_t i = 0; i < a.train.features.size() && !differs; ++i)
        differs = a.train.features[i] != c.train.features[i];
    CHECK(differs);
}

TEST_CASE("split: rejects tables without inliers and bad fractions") {
    LabeledTable t;
    t.features = Matrix(3, 1);
    t.labels.assign(3, 1);
    CHECK_THROWS_AS(split(t, {0.7, 0}), std::invalid_argument);
    t.labels.assign(3, 0);
    CHECK_THROWS_AS(split(t, {0.0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(split(t, {1.0, 0}), std::invalid_argument);
}

TEST_CASE("minmax scaling: hand values, constant feature, no clipping") {
    Matrix train = Matrix::from_rows({{0.0, 5.0}, {10.0, 5.0}, {5.0, 5.0}});
    const ScalerParams p = fit_minmax(train);
    CHECK(p.min[0] == 0.0);
    CHECK(p.max[0] == 10.0);

    Matrix test = Matrix::from_rows({{2.5, 5.0}, {15.0, 7.0}});
    const Matrix out = transform(p, test);
    CHECK(out(0, 0) == doctest::Approx(0.25));
    CHECK(out(0, 1) == 0.0);  // constant feature maps to 0
    CHECK(out(1, 0) == doctest::Approx(1.5));  // extrapolates, unclipped
    CHECK(out(1, 1) == 0.0);

    CHECK_THROWS_AS(transform(p, Matrix(1, 3)), std::invalid_argument);
    CHECK_THROWS_AS(fit_minmax(Matrix(0, 0)), std::invalid_argument);
}

TEST_CASE("minmax scaling: global mode uses one range for all features") {
    Matrix train = Matrix::from_rows({{0.0, 4.0}, {2.0, 8.0}});
    const ScalerParams p = fit_minmax(train, true);
    CHECK(p.min[0] == 0.0);
    CHECK(p.min[1] == 0.0);
    CHECK(p.max[0] == 8.0);
    CHECK(p.max[1] == 8.0);
    const Matrix out = transform(p, Matrix::from_rows({{4.0, 2.0}}));
    CHECK(out(0, 0) == doctest::Approx(0.5));
    CHECK(out(0, 1) == doctest::Approx(0.25));
}

TEST_CASE("csv round-trip is bit-exact") {
    LabeledTable t;
    t.column_names = {"a", "b"};
    t.features = Matrix::from_rows({{0.5, -1.25}, {3.0, 0.1}, {1e-3, 123456.789}});
    t.labels = {0, 1, 0};
    const std::string path = temp_path("bae_roundtrip.csv");
    save_csv(path, t);
    const LabeledTable back = load_csv(path);
    REQUIRE(back.size() == 3);
    CHECK(back.column_names == t.column_names);
    for (std::size_t i = 0; i < t.features.size(); ++i) CHECK(back.features[i] == t.features[i]);
    CHECK(back.labels == t.labels);
    std::remove(path.c_str());
}

TEST_CASE("load_csv: malformed inputs name the offending cell") {
    const std::string path = temp_path("bae_bad.csv");
    {
        std::ofstream out(path);
        out << "a,b,label\n1.0,2.0,0\n1.0,oops,1\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("row 3"), std::runtime_error);
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("column b"), std::runtime_error);
    {
        std::ofstream out(path);
        out << "a,b,label\n1.0,nan,0\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("non-finite"), std::runtime_error);
    {
        std::ofstream out(path);
        out << "a,b\n1.0,2.0\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("label"), std::runtime_error);
    {
        std::ofstream out(path);
        out << "a,label\n1.0,2\n";
    }
    CHECK_THROWS_AS(load_csv(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("downsample: decimation keeps every k-th sample") {
    const std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK(downsample(v, 1) == v);
    CHECK(downsample(v, 3) == std::vector<int>{0, 3, 6, 9});
    CHECK(downsample(v, 100) == std::vector<int>{0});
    CHECK_THROWS_AS(downsample(v, 0), std::invalid_argument);
}

TEST_CASE("tukey_flags: obvious outlier flagged, tight cluster clean") {
    std::vector<double> vals{10.0, 10.1, 9.9, 10.05, 9.95, 10.02, 25.0};
    const std::vector<int> flags = tukey_flags(vals, 10.0);
    CHECK(flags.back() == 1);
    int flagged = 0;
    for (std::size_t i = 0; i + 1 < flags.size(); ++i) flagged += flags[i];
    CHECK(flagged == 0);

    const std::vector<int> clean = tukey_flags({1.0, 1.1, 0.9, 1.05}, 1.0);
    for (int f : clean) CHECK(f == 0);

    CHECK_THROWS_AS(tukey_flags({1.0, 2.0}, 1.0), std::invalid_argument);
}

TEST_CASE("make_synthetic_2d: shape, labels, determinism") {
    const LabeledTable a = make_synthetic_2d(11, 100, 25);
    REQUIRE(a.size() == 125);
    CHECK(a.features.cols() == 2);
    int anomalies = 0;
    for (int label : a.labels) anomalies += label;
    CHECK(anomalies == 25);

    const LabeledTable b = make_synthetic_2d(11, 100, 25);
    for (std::size_t i = 0; i < a.features.size(); ++i) CHECK(a.features[i] == b.features[i]);

    // inliers concentrate near the two blob centres
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(std::fabs(std::fabs(a.features(i, 0)) - 1.0) < 1.5);
        CHECK(std::fabs(a.features(i, 1)) < 1.5);
    }
}

TEST_CASE("synthetic data: trained autoencoder scores anomalies higher on average") {
    using namespace bae::model;
    const LabeledTable table = make_synthetic_2d(3, 200, 40);
    const Split sp = split(table, {0.7, 3});
    const ScalerParams scaler = fit_minmax(sp.train.features);
    const Matrix train_x = transform(scaler, sp.train.features);
    const Matrix test_x = transform(scaler, sp.test.features);

    Architecture arch;
    arch.input_dim = 2;
    arch.hidden = {8};
    arch.latent_dim = 2;
    TrainingConfig tc;
    tc.epochs = 150;
    tc.learning_rate = 0.01;
    tc.batch_size = 32;
    tc.seed = 5;
    const PosteriorEnsemble ens = train_deterministic(train_x, arch, tc);
    const Matrix scores = posterior_predict(ens, test_x);

    double mean_in = 0.0, mean_out = 0.0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < sp.test.size(); ++i) {
        if (sp.test.labels[i] == 1) {
            mean_out += scores(0, i);
            ++n_out;
        } else {
            mean_in += scores(0, i);
            ++n_in;
        }
    }
    mean_in /= static_cast<double>(n_in);
    mean_out /= static_cast<double>(n_out);
    CHECK(mean_out > mean_in);
}
