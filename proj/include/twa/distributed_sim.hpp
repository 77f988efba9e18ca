#pragma once

// In-process simulation of k-node gradient projection with a column-partitioned
// basis. Each node owns a contiguous slice of every group's columns (its P_i);
// projection runs as two all-reduce rounds:
//   1. mean of the nodes' local gradients  -> g
//   2. sum over nodes of P_i P_i^T g        -> P P^T g
// Reductions always run in ascending node-id order, so results do not depend on
// whether nodes execute sequentially or on concurrent workers.

#include "twa/subspace.hpp"

#include <span>
#include <vector>

namespace twa {

enum class PartitionStrategy { contiguous_columns };
enum class Execution { sequential, concurrent };

struct DistributedConfig {
    std::size_t k = 1;
    PartitionStrategy partition_strategy = PartitionStrategy::contiguous_columns;
    bool deterministic_reduce = true;
    Execution execution = Execution::sequential;

    void validate() const;
};

struct ColumnRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const ColumnRange&) const = default;
};

struct NodeState {
    std::size_t node_id = 0;
    std::vector<ColumnRange> columns; // one range per layer group
};

/// n columns over k nodes: sizes ceil(n/k) for the first n mod k nodes, floor(n/k) after.
std::vector<ColumnRange> split_columns(std::size_t n, std::size_t k);

std::vector<NodeState> partition_columns(const SubspaceBasis& basis, std::size_t k);

ParamVector all_reduce_mean(std::span<const ParamVector> values);
ParamVector all_reduce_sum(std::span<const ParamVector> values);

/// P P^T applied to the mean of `local_grads` (one per node).
ParamVector distributed_project(const SubspaceBasis& basis, std::span<const NodeState> nodes,
                                std::span<const ParamVector> local_grads,
                                Execution execution = Execution::sequential);

/// Round 1 followed by each node's P_i^T g; the slices are gathered into the
/// per-group coefficient gradient blocks.
std::vector<ParamVector> distributed_coefficient_gradients(const SubspaceBasis& basis,
                                                           std::span<const NodeState> nodes,
                                                           std::span<const ParamVector> local_grads,
                                                           Execution execution = Execution::sequential);

/// center + sum over nodes of P_i X_i (the coefficient slices each node owns).
ParamVector distributed_reconstruct(const SubspaceBasis& basis, std::span<const NodeState> nodes,
                                    const Coefficients& x, Execution execution = Execution::sequential);

} // namespace twa
