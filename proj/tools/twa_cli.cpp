// twa_cli: command-line driver for checkpoint sampling, weight averaging and
// subspace training experiments. Every subcommand prints one JSON document.

#include "twa/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<std::string> data_kind;
    std::optional<std::string> csv_path;
    std::optional<std::size_t> m;
    std::optional<double> noise;
    std::vector<std::size_t> layers;
    std::optional<std::string> activation;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> twa_steps;
    std::optional<double> twa_eta;
    std::optional<double> twa_lambda;
    std::optional<std::string> schedule;
    std::optional<double> scale_factor;
};

twa::ExperimentConfig build_config(const Overrides& o) {
    twa::ExperimentConfig c = twa::ExperimentConfig::desk_benchmark(0);
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) throw twa::StorageError("cannot open config " + o.config_path);
        twa::merge_json(json::parse(in), c);
    }
    json patch = json::object();
    if (o.seed) patch["seed"] = *o.seed;
    if (o.output_dir) patch["output_dir"] = *o.output_dir;
    if (o.data_kind) patch["data"]["kind"] = *o.data_kind;
    if (o.csv_path) {
        patch["data"]["csv_path"] = *o.csv_path;
        if (!o.data_kind) patch["data"]["kind"] = "csv";
    }
    if (o.m) patch["data"]["m"] = *o.m;
    if (o.noise) patch["data"]["noise"] = *o.noise;
    if (!o.layers.empty()) patch["model"]["layer_sizes"] = o.layers;
    if (o.activation) patch["model"]["activation"] = *o.activation;
    if (o.epochs) patch["sgd"]["epochs"] = *o.epochs;
    if (o.lr) patch["sgd"]["lr"] = *o.lr;
    if (o.batch_size) patch["sgd"]["batch_size"] = *o.batch_size;
    if (o.twa_steps) patch["twa"]["steps"] = *o.twa_steps;
    if (o.twa_eta) patch["twa"]["eta0"] = *o.twa_eta;
    if (o.twa_lambda) patch["twa"]["lambda"] = *o.twa_lambda;
    if (o.schedule) patch["twa"]["schedule"] = *o.schedule;
    if (o.scale_factor) patch["twa"]["scale_factor"] = *o.scale_factor;
    twa::merge_json(patch, c);
    c.validate();
    return c;
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Checkpoint averaging and subspace training experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config_path, "JSON experiment config; flags override its keys");
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--output-dir", o.output_dir, "Directory for checkpoints and reports");
    app.add_option("--data", o.data_kind, "two_gaussians | two_moons | csv");
    app.add_option("--csv", o.csv_path, "CSV dataset (f1,...,fd,label)");
    app.add_option("--m", o.m, "Synthetic dataset size");
    app.add_option("--noise", o.noise, "Synthetic noise level");
    app.add_option("--layers", o.layers, "MLP layer sizes, e.g. --layers 2 32 2");
    app.add_option("--activation", o.activation, "relu | tanh");
    app.add_option("--epochs", o.epochs, "SGD epochs");
    app.add_option("--lr", o.lr, "SGD learning rate");
    app.add_option("--batch-size", o.batch_size, "SGD batch size");
    app.add_option("--twa-steps", o.twa_steps, "TWA steps");
    app.add_option("--twa-eta", o.twa_eta, "TWA base learning rate");
    app.add_option("--twa-lambda", o.twa_lambda, "TWA coefficient regularization");
    app.add_option("--schedule", o.schedule, "constant | scaled_linear | cosine");
    app.add_option("--scale-factor", o.scale_factor, "TWA learning-rate scale factor (>= 1)");

    auto* train = app.add_subcommand("train", "Run SGD and write sampled checkpoints plus manifest");

    auto* average = app.add_subcommand("average", "Baseline averaging over sampled checkpoints");
    std::string avg_mode = "swa";
    std::optional<std::size_t> lawa_t;
    average->add_option("--mode", avg_mode, "swa | lawa | soup")->check(CLI::IsMember({"swa", "lawa", "soup"}));
    average->add_option("--lawa-t", lawa_t, "LAWA horizon");

    auto* twa_cmd = app.add_subcommand("twa", "Trainable weight averaging");
    bool by_layer = false, val_data = false, concurrent = false;
    std::optional<std::size_t> groups, dist_k;
    twa_cmd->add_flag("--by-layer", by_layer, "Layer-wise subspaces");
    twa_cmd->add_option("--groups", groups, "Number of contiguous layer groups");
    twa_cmd->add_option("--dist-k", dist_k, "Simulated node count for distributed projection");
    twa_cmd->add_flag("--concurrent", concurrent, "Run simulated nodes on worker threads");
    twa_cmd->add_flag("--val-data", val_data, "Train coefficients on the validation split");

    auto* study = app.add_subcommand("gaussian-study", "Gaussian estimator study (TWA vs SWA)");
    twa::GaussianStudyConfig sc;
    study->add_option("--dim", sc.dim);
    study->add_option("--n", sc.n);
    study->add_option("--trials", sc.trials);
    study->add_option("--scale", sc.covariance_scale, "Covariance scale");
    study->add_option("--steps", sc.steps);

    auto* bench = app.add_subcommand("bench-extract", "Time extraction vs Gram-Schmidt");
    std::size_t bench_n = 100, bench_dim = 1'000'000, repeats = 3;
    bench->add_option("--n", bench_n);
    bench->add_option("--dim", bench_dim);
    bench->add_option("--repeats", repeats);

    auto* eval = app.add_subcommand("eval", "Evaluate a TWA1 weight file on the configured splits");
    std::string weights_path;
    eval->add_option("--weights", weights_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (study->parsed()) {
            if (o.seed) sc.seed = *o.seed;
            print(twa::gaussian_study(sc).to_json());
            return 0;
        }
        if (bench->parsed()) {
            print(twa::bench_extraction(bench_n, bench_dim, repeats, o.seed.value_or(0)).to_json());
            return 0;
        }

        twa::ExperimentConfig config = build_config(o);
        if (train->parsed()) {
            const auto splits = twa::make_splits(config);
            const auto result = twa::train_sgd(config, splits);
            auto report = twa::evaluate_report("sgd", twa::seeded_model(config), result.final_weights, splits);
            report.n_checkpoints = result.checkpoints.size();
            report.seed = config.seed;
            json j = report.to_json();
            j["manifest"] = result.checkpoints.manifest_path().string();
            print(j);
        } else if (average->parsed()) {
            if (lawa_t) config.lawa_t = *lawa_t;
            print(twa::run_pipeline(config, twa::mode_from_string(avg_mode)).to_json());
        } else if (twa_cmd->parsed()) {
            if (groups) config.groups = *groups;
            if (dist_k) {
                twa::DistributedConfig d;
                d.k = *dist_k;
                d.execution = concurrent ? twa::Execution::concurrent : twa::Execution::sequential;
                config.distributed = d;
            }
            if (val_data) config.twa.data_source = twa::DataSource::validation;
            const auto report = twa::run_pipeline(config, by_layer ? twa::Mode::twa_by_layer : twa::Mode::twa);
            json j = report.to_json();
            if (report.span_residual) j["span_residual"] = *report.span_residual;
            print(j);
        } else if (eval->parsed()) {
            const auto splits = twa::make_splits(config);
            auto report = twa::evaluate_report("eval", config.model, twa::read_twa1(weights_path), splits);
            report.seed = config.seed;
            print(report.to_json());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
