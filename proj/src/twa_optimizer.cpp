#include "twa/twa_optimizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace twa {

void TwaConfig::validate() const {
    if (!(eta0 > 0.0)) throw InputError("eta0 must be positive");
    if (!(lambda >= 0.0)) throw InputError("lambda must be nonnegative");
    if (steps < 1) throw InputError("TWA needs at least one step");
    if (!(scale_factor >= 1.0)) throw InputError("scale_factor must be >= 1");
    if (batch_size < 1) throw InputError("batch_size must be >= 1");
}

TwaState TwaState::start(std::shared_ptr<const SubspaceBasis> basis) {
    if (!basis) throw InputError("TWA state needs a basis");
    TwaState s;
    s.x = Coefficients::zeros_like(*basis);
    s.basis = std::move(basis);
    return s;
}

double lr_at(const TwaConfig& config, std::size_t step) {
    if (step >= config.steps)
        throw IndexError("step " + std::to_string(step) + " outside schedule of " + std::to_string(config.steps));
    const double peak = config.eta0 * config.scale_factor;
    const double progress = static_cast<double>(step) / static_cast<double>(config.steps);
    switch (config.schedule) {
    case Schedule::constant: return peak;
    case Schedule::scaled_linear: return peak * (1.0 - progress);
    case Schedule::cosine: return peak * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
    }
    return peak;
}

void apply_coefficient_update(Coefficients& x, const std::vector<ParamVector>& coeff_grads, double eta,
                              double lambda) {
    if (coeff_grads.size() != x.blocks.size()) throw DimensionError("coefficient gradient block count mismatch");
    for (std::size_t r = 0; r < x.blocks.size(); ++r) {
        detail::require_same_length(coeff_grads[r].size(), x.blocks[r].size(), "coefficient gradient");
        x.blocks[r] -= eta * (coeff_grads[r] + lambda * x.blocks[r]);
    }
}

TwaState twa_step(const TwaState& state, const ParamVector& g, double eta, double lambda) {
    if (!(eta > 0.0)) throw InputError("learning rate must be positive");
    if (!g.allFinite()) throw NumericError("non-finite gradient");
    const auto grads = coefficient_gradients(*state.basis, g);
    TwaState next = state;
    apply_coefficient_update(next.x, grads, eta, lambda);
    if (!next.x.all_finite()) throw NumericError("coefficients diverged");
    ++next.step;
    return next;
}

TwaResult run_twa(std::shared_ptr<const SubspaceBasis> basis, const GradientOracle& oracle,
                  const TwaConfig& config, const std::optional<DistributedConfig>& dist) {
    config.validate();
    TwaState state = TwaState::start(std::move(basis));
    const SubspaceBasis& b = *state.basis;

    std::vector<NodeState> nodes;
    Execution execution = Execution::sequential;
    if (dist) {
        dist->validate();
        nodes = partition_columns(b, dist->k);
        execution = dist->execution;
    }
    auto current_weights = [&] {
        return dist ? distributed_reconstruct(b, nodes, state.x, execution) : reconstruct(b, state.x);
    };

    ParamVector w = current_weights();
    state.history.reserve(config.steps);
    for (std::size_t t = 0; t < config.steps; ++t) {
        const double eta = lr_at(config, t);
        const BatchLoss loss = oracle(w, t);
        if (!std::isfinite(loss.value) || !loss.gradient.allFinite())
            throw NumericError("non-finite loss or gradient at TWA step " + std::to_string(t));
        std::vector<ParamVector> grads;
        if (dist) {
            const std::vector<ParamVector> local(nodes.size(), loss.gradient);
            grads = distributed_coefficient_gradients(b, nodes, local, execution);
        } else {
            grads = coefficient_gradients(b, loss.gradient);
        }
        apply_coefficient_update(state.x, grads, eta, config.lambda);
        if (!state.x.all_finite()) throw NumericError("coefficients diverged at TWA step " + std::to_string(t));
        state.history.push_back({t, loss.value, eta});
        ++state.step;
        w = current_weights();
    }
    return {std::move(w), std::move(state)};
}

TwaResult run_twa(std::shared_ptr<const SubspaceBasis> basis, const MlpSpec& spec, const Dataset& train,
                  const Dataset* validation, const TwaConfig& config,
                  const std::optional<DistributedConfig>& dist) {
    config.validate();
    const Dataset* source = &train;
    if (config.data_source == DataSource::validation) {
        if (!validation || validation->size() == 0) throw InputError("fine-tuning mode needs validation data");
        source = validation;
    }
    if (source->size() == 0) throw EmptyInputError("TWA data source is empty");
    BatchSampler sampler(source->size(), config.batch_size, config.seed);
    GradientOracle oracle = [&](const ParamVector& w, std::size_t) {
        const auto rows = sampler.next();
        return loss_and_grad(spec, w, *source, rows);
    };
    return run_twa(std::move(basis), oracle, config, dist);
}

void write_history_jsonl(const std::filesystem::path& path, const std::vector<HistoryEntry>& history) {
    std::ofstream out(path);
    if (!out) throw StorageError("cannot write " + path.string());
    for (const auto& h : history)
        out << nlohmann::json{{"step", h.step}, {"loss", h.loss}, {"eta", h.eta}}.dump() << "\n";
}

BatchSampler::BatchSampler(std::size_t m, std::size_t batch_size, std::uint64_t seed)
    : m_(m), batch_(batch_size), seed_(seed), order_(m) {
    if (m == 0) throw EmptyInputError("cannot sample batches from an empty dataset");
    if (batch_size == 0) throw InputError("batch size must be >= 1");
    reshuffle();
}

void BatchSampler::reshuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(pass_)};
    std::mt19937_64 rng(seq);
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
    ++pass_;
}

std::vector<std::size_t> BatchSampler::next() {
    if (cursor_ >= m_) reshuffle();
    const std::size_t end = std::min(m_, cursor_ + batch_);
    std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return batch;
}

} // namespace twa
