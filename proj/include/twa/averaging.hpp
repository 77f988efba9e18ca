#pragma once

// Static weight-averaging baselines. Each returns the averaged weights together
// with the combination coefficients alpha over the raw checkpoints, so every
// result is an explicit point sum_i alpha_i w_i.

#include "twa/checkpoints.hpp"

#include <functional>
#include <span>
#include <vector>

namespace twa {

struct AveragingResult {
    ParamVector w;
    std::vector<double> alpha;
    std::vector<std::size_t> kept; // checkpoint indices with nonzero alpha, in the order they were added
    double metric = 0.0;           // greedy soup only: validation metric of the final soup
};

/// Higher is better.
using Evaluator = std::function<double(const ParamVector&)>;

/// sum_i alpha_i w_i.
ParamVector combine(const CheckpointSet& set, std::span<const double> alpha);

AveragingResult swa(const CheckpointSet& set);

/// Uniform average of the last t checkpoints in step order.
AveragingResult lawa(const CheckpointSet& set, std::size_t t);

/// Checkpoints sorted by validation metric (descending, ties to the earlier
/// step); each candidate joins the soup iff the soup's metric does not drop.
/// Missing per-checkpoint metrics are computed with `evaluator`.
AveragingResult greedy_soup(const CheckpointSet& set, const Evaluator& evaluator);

} // namespace twa
