#pragma once

// Trainable weight averaging: projected gradient descent on the subspace
// coordinates X, starting from X = 0 (the checkpoint average).
//
//   X <- X - eta * (P^T g + lambda * X)     per layer group
//
// The iterate is always center + P X, so it never leaves the affine span of
// the sampled checkpoints.

#include "twa/distributed_sim.hpp"
#include "twa/model_zoo.hpp"
#include "twa/subspace.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace twa {

enum class Schedule { constant, scaled_linear, cosine };
enum class DataSource { train, validation };

struct TwaConfig {
    double eta0 = 0.1;
    double lambda = 1e-5;
    std::size_t steps = 100;
    Schedule schedule = Schedule::scaled_linear;
    double scale_factor = 1.0;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    DataSource data_source = DataSource::train;

    void validate() const;
};

struct HistoryEntry {
    std::size_t step = 0;
    double loss = 0.0; // loss at the iterate the step started from
    double eta = 0.0;
};

struct TwaState {
    std::shared_ptr<const SubspaceBasis> basis;
    Coefficients x;
    std::size_t step = 0;
    std::vector<HistoryEntry> history;

    static TwaState start(std::shared_ptr<const SubspaceBasis> basis);
    ParamVector weights() const { return reconstruct(*basis, x); }
};

/// Learning rate for 0 <= step < steps.
double lr_at(const TwaConfig& config, std::size_t step);

/// One update of X from a full-space gradient g. Throws NumericError on a
/// non-finite gradient, leaving `state` untouched.
TwaState twa_step(const TwaState& state, const ParamVector& g, double eta, double lambda);

/// Same update from precomputed per-group P^T g.
void apply_coefficient_update(Coefficients& x, const std::vector<ParamVector>& coeff_grads, double eta,
                              double lambda);

/// Loss and gradient at w for optimizer step `step`.
using GradientOracle = std::function<BatchLoss(const ParamVector& w, std::size_t step)>;

struct TwaResult {
    ParamVector w_final;
    TwaState state;
};

/// Runs config.steps updates against an arbitrary loss. When `dist` is set,
/// projection and reconstruction go through the k-node simulation (every node
/// receives the same gradient).
TwaResult run_twa(std::shared_ptr<const SubspaceBasis> basis, const GradientOracle& oracle,
                  const TwaConfig& config, const std::optional<DistributedConfig>& dist = std::nullopt);

/// Mini-batch TWA on a classifier. Batches come from `train` or `validation`
/// (per config.data_source) in a seeded shuffle, reshuffled every pass.
TwaResult run_twa(std::shared_ptr<const SubspaceBasis> basis, const MlpSpec& spec, const Dataset& train,
                  const Dataset* validation, const TwaConfig& config,
                  const std::optional<DistributedConfig>& dist = std::nullopt);

/// One JSON object per line: {"step", "loss", "eta"}.
void write_history_jsonl(const std::filesystem::path& path, const std::vector<HistoryEntry>& history);

/// Seeded batch order over m samples, reshuffled at every pass.
class BatchSampler {
public:
    BatchSampler(std::size_t m, std::size_t batch_size, std::uint64_t seed);
    std::vector<std::size_t> next();
    std::size_t batches_per_pass() const { return (m_ + batch_ - 1) / batch_; }

private:
    void reshuffle();

    std::size_t m_;
    std::size_t batch_;
    std::uint64_t seed_;
    std::uint64_t pass_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> order_;
};

} // namespace twa
