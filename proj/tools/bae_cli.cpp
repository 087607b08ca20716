// Command-line front end: train models, evaluate saved models, run full
// sweeps, and generate synthetic datasets.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "bae/bae.hpp"

namespace fs = std::filesystem;

namespace {

bae::exp::ExperimentConfig load_cfg(const std::string& path) {
    return bae::exp::load_config(path);
}

int cmd_synth(const std::string& out, std::uint64_t seed, std::size_t n_inliers,
              std::size_t n_anomalies) {
    const bae::data::LabeledTable t = bae::data::make_synthetic_2d(seed, n_inliers, n_anomalies);
    bae::data::save_csv(out, t);
    std::cout << "wrote " << t.size() << " rows (" << n_anomalies << " anomalies) to " << out
              << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
    bae::exp::ExperimentConfig cfg = load_cfg(config_path);
    const std::uint64_t seed = seed_override.value_or(cfg.seeds.front());
    const bae::data::LabeledTable table = bae::exp::load_dataset(cfg);
    fs::create_directories(out_dir);

    bae::data::Split sp = bae::data::split(table, {cfg.train_fraction, seed});
    const bae::data::ScalerParams scaler = bae::data::fit_minmax(sp.train.features);
    const bae::Matrix train_x = bae::data::transform(scaler, sp.train.features);

    int failures = 0;
    for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
        const bae::model::Method method = cfg.models[mi];
        bae::model::Architecture arch = cfg.arch;
        arch.input_dim = train_x.cols();
        bae::model::TrainingConfig tc = cfg.training;
        tc.seed = bae::exp::run_seed(seed, mi);
        try {
            bae::model::PosteriorEnsemble e;
            switch (method) {
                case bae::model::Method::Deterministic:
                    e = bae::model::train_deterministic(train_x, arch, tc);
                    break;
                case bae::model::Method::AnchoredEnsemble:
                    e = bae::model::train_anchored_ensemble(
                        train_x, arch, tc,
                        bae::model::draw_anchors(arch, tc.ensemble_size, tc.seed));
                    break;
                case bae::model::Method::MCD:
                    e = bae::model::train_mcd(train_x, arch, tc, cfg.mcd);
                    break;
                case bae::model::Method::BBB:
                    e = bae::model::train_bbb(train_x, arch, tc, cfg.bbb);
                    break;
                case bae::model::Method::VAE:
                    e = bae::model::train_vae(train_x, arch, tc);
                    break;
            }
            const std::string path =
                (fs::path(out_dir) / (std::string(bae::model::method_name(method)) + "_seed" +
                                      std::to_string(seed) + ".json"))
                    .string();
            bae::model::save_model(path, e);
            std::cout << "trained " << bae::model::method_name(method) << " -> " << path << "\n";
        } catch (const std::exception& ex) {
            std::cerr << "train failed for " << bae::model::method_name(method) << ": "
                      << ex.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_evaluate(const std::string& model_path, const std::string& config_path,
                 const std::string& out_dir, std::optional<std::uint64_t> seed_override) {
    bae::exp::ExperimentConfig cfg = load_cfg(config_path);
    const std::uint64_t seed = seed_override.value_or(cfg.seeds.front());
    const bae::model::PosteriorEnsemble ensemble = bae::model::load_model(model_path);
    const bae::data::LabeledTable table = bae::exp::load_dataset(cfg);
    fs::create_directories(out_dir);

    bae::data::Split sp = bae::data::split(table, {cfg.train_fraction, seed});
    const bae::data::ScalerParams scaler = bae::data::fit_minmax(sp.train.features);

    bae::exp::ModelRun run;
    run.seed = seed;
    run.method = ensemble.method;
    run.train_scores =
        bae::model::posterior_predict(ensemble, bae::data::transform(scaler, sp.train.features));
    run.test_scores =
        bae::model::posterior_predict(ensemble, bae::data::transform(scaler, sp.test.features));
    run.test_labels = sp.test.labels;

    const auto records = bae::exp::evaluate_model_run(cfg, run);
    int failures = 0;
    for (const auto& r : records) {
        const std::string name =
            std::string(bae::calib::dist_name(r.key.q)) + "_" +
            (r.key.scaled ? "scaled" : "plain") + "_" + bae::exp::unc_name(r.key.unc) + ".csv";
        std::ofstream out(fs::path(out_dir) / name);
        if (!r.error.empty()) {
            out << "error\n" << r.error << "\n";
            ++failures;
            continue;
        }
        bae::eval::write_arc_csv(out, r.arc);
        std::cout << name << ": w_gss=" << r.arc.w_gss.value_or(0.0)
                  << " gain_gss=" << r.arc.gain_gss.value_or(0.0) << "\n";
    }
    return failures == 0 ? 0 : 1;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              std::optional<std::size_t> workers) {
    bae::exp::ExperimentConfig cfg = load_cfg(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (workers) cfg.workers = *workers;
    const bae::exp::ExperimentResult result = bae::exp::run_experiment(cfg);
    for (const auto& row : result.summary) {
        std::cout << bae::model::method_name(row.method) << " / " << bae::exp::unc_name(row.unc)
                  << ": W=" << row.mean_w << " +/- " << row.stderr_w << ", Gain=" << row.mean_gain
                  << " (positive " << 100.0 * row.positive_fraction << "%)\n";
    }
    std::cout << "outputs in " << cfg.output_dir << "\n";
    return result.any_failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian autoencoder anomaly detection with uncertainty"};
    app.require_subcommand(1);

    std::string config_path, out = "out", model_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;

    auto* synth = app.add_subcommand("synth", "generate a synthetic 2-feature CSV dataset");
    std::uint64_t synth_seed = 42;
    std::size_t n_inliers = 500, n_anomalies = 100;
    synth->add_option("--out", out, "output CSV path")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--n-inliers", n_inliers, "number of inlier points");
    synth->add_option("--n-anomalies", n_anomalies, "number of anomaly points");

    auto* train = app.add_subcommand("train", "train the configured models, save snapshots");
    train->add_option("--config", config_path, "experiment config (JSON)")->required();
    train->add_option("--out", out, "output directory");
    train->add_option("--seed", seed, "experiment seed (default: first in config)");

    auto* evaluate = app.add_subcommand("evaluate", "evaluate a saved model snapshot");
    evaluate->add_option("--model", model_path, "model snapshot path")->required();
    evaluate->add_option("--config", config_path, "experiment config (JSON)")->required();
    evaluate->add_option("--out", out, "output directory");
    evaluate->add_option("--seed", seed, "experiment seed (default: first in config)");

    auto* sweep = app.add_subcommand("sweep", "run the full models x Q x scaling x seeds sweep");
    sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
    sweep->add_option("--out", out, "output directory (overrides config)");
    sweep->add_option("--workers", workers, "parallel model runs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(out, synth_seed, n_inliers, n_anomalies);
        if (train->parsed()) return cmd_train(config_path, out, seed);
        if (evaluate->parsed()) return cmd_evaluate(model_path, config_path, out, seed);
        if (sweep->parsed()) return cmd_sweep(config_path, out, workers);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
