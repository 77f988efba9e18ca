#pragma once

// Experiment driver: SGD pre-training with checkpoint sampling, the averaging
// and TWA phases, the Gaussian estimator study and the extraction benchmark.

#include "twa/averaging.hpp"
#include "twa/checkpoints.hpp"
#include "twa/distributed_sim.hpp"
#include "twa/model_zoo.hpp"
#include "twa/twa_optimizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace twa {

/// Independent stream `stream` of a master seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

enum class DataKind { two_gaussians, two_moons, csv };

struct DataSpec {
    DataKind kind = DataKind::two_gaussians;
    std::size_t m = 2000;
    double noise = 0.3;
    std::string csv_path;
    double train_fraction = 0.70;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
};

struct SgdConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    std::vector<std::size_t> lr_decay_epochs{100, 150};
    double lr_decay_factor = 0.1;
};

/// All randomness (data, init, batching, TWA batches) derives from `seed`;
/// `model.seed` and `twa.seed` are overwritten with derived streams.
struct ExperimentConfig {
    MlpSpec model{{2, 32, 2}, Activation::relu, 0};
    DataSpec data;
    SgdConfig sgd;
    SamplingPolicy sampling{SamplingMode::every_n_epochs, 1, SamplingPhase::head, std::nullopt, 100};
    TwaConfig twa;
    std::size_t groups = 6; // layer groups for twa_by_layer
    std::size_t lawa_t = 10;
    std::optional<DistributedConfig> distributed;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;

    void validate() const;

    /// two_gaussians (m=2000, noise 0.3), MLP [2,32,2], 200 SGD epochs with x0.1
    /// decay at 100 and 150, per-epoch sampling over the first 100 epochs, and a
    /// TWA budget of 10 epochs of batches.
    static ExperimentConfig desk_benchmark(std::uint64_t seed);
};

/// config.model with its seed set to the derived initialization stream.
MlpSpec seeded_model(const ExperimentConfig& config);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys keep the values already in `c`.
void merge_json(const nlohmann::json& j, ExperimentConfig& c);

struct DataSplits {
    Dataset train;
    Dataset val;
    Dataset test;
};

DataSplits make_splits(const ExperimentConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct TrainResult {
    CheckpointSet checkpoints;
    ParamVector final_weights;
    std::vector<EpochRecord> history;
};

/// Mini-batch SGD with momentum, weight decay and step-wise decay. Sampled
/// checkpoints are stored at float32 precision; when output_dir is set they are
/// also written to output_dir/checkpoints/manifest.json.
TrainResult train_sgd(const ExperimentConfig& config, const DataSplits& splits);
TrainResult train_sgd(const ExperimentConfig& config);

enum class Mode { twa, twa_by_layer, swa, lawa, greedy_soup };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct MetricsReport {
    std::string mode;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
    double gap = 0.0;
    std::size_t n_checkpoints = 0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    double timing_s = 0.0;

    ParamVector solution;
    std::optional<double> span_residual; // twa modes: distance of the solution from its affine span
    std::vector<HistoryEntry> history;

    nlohmann::json to_json() const;
};

MetricsReport evaluate_report(const std::string& mode, const MlpSpec& spec, const ParamVector& w,
                              const DataSplits& splits);

MetricsReport run_pipeline(const ExperimentConfig& config, Mode mode, const DataSplits& splits,
                           const CheckpointSet& checkpoints);

/// Uses output_dir/checkpoints/manifest.json when present, otherwise trains first.
/// Writes report_<mode>.json (and the solution weights) into output_dir when set.
MetricsReport run_pipeline(const ExperimentConfig& config, Mode mode);

struct GaussianStudyConfig {
    std::size_t dim = 20;
    std::size_t n = 16;
    std::size_t trials = 50;
    double covariance_scale = 1.0;
    std::uint64_t seed = 0;
    std::size_t steps = 1000;
    double lambda = 1e-5;

    void validate() const;
};

struct GaussianTrial {
    double twa_error = 0.0; // ||w_twa - mu||^2
    double swa_error = 0.0; // ||w_swa - mu||^2
};

struct GaussianStudyReport {
    std::vector<GaussianTrial> trials;
    double fraction_twa_better = 0.0; // fraction with twa_error <= swa_error

    nlohmann::json to_json() const;
};

/// Samples n weights from N(mu, Sigma) (diagonal Sigma with entries
/// covariance_scale * U[0.5, 2]) per trial, then compares the checkpoint mean
/// against TWA on L(w) = 1/2 (w - mu)^T Sigma^-1 (w - mu).
GaussianStudyReport gaussian_study(const GaussianStudyConfig& config);

struct ExtractionBenchmark {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> extract_s;
    std::vector<double> gram_schmidt_s;
    double extract_median_s = 0.0;
    double gram_schmidt_median_s = 0.0;
    double ratio = 0.0; // gram_schmidt median / extract median

    nlohmann::json to_json() const;
};

/// Wall-clock times of extract and gram_schmidt on random checkpoints (D x n).
ExtractionBenchmark bench_extraction(std::size_t n, std::size_t dim, std::size_t repeats,
                                     std::uint64_t seed = 0);

double median(std::vector<double> values);

} // namespace twa
