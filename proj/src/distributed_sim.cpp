#include "twa/distributed_sim.hpp"

#include <functional>
#include <thread>

namespace twa {

namespace {

void check_nodes(const SubspaceBasis& basis, std::span<const NodeState> nodes) {
    if (nodes.empty()) throw InputError("no nodes");
    for (std::size_t r = 0; r < basis.groups(); ++r) {
        std::size_t at = 0;
        for (const auto& node : nodes) {
            if (node.columns.size() != basis.groups())
                throw DimensionError("node " + std::to_string(node.node_id) + " has the wrong group count");
            if (node.columns[r].begin != at || node.columns[r].end < at)
                throw InputError("node column ranges do not tile group " + std::to_string(r));
            at = node.columns[r].end;
        }
        if (at != basis.columns(r)) throw InputError("node column ranges do not cover group " + std::to_string(r));
    }
}

auto slice(const Matrix<double>& block, const ColumnRange& range) {
    return block.middleCols(static_cast<Eigen::Index>(range.begin), static_cast<Eigen::Index>(range.size()));
}

// Runs work(i) for every node, sequentially or one worker per node. The call
// returns once every node has finished (the barrier before the next reduce).
void for_each_node(std::size_t count, Execution execution, const std::function<void(std::size_t)>& work) {
    if (execution == Execution::sequential || count == 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> workers;
    workers.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        workers.emplace_back([&, i] {
            try {
                work(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

ParamVector round_one(const SubspaceBasis& basis, std::span<const NodeState> nodes,
                      std::span<const ParamVector> local_grads) {
    check_nodes(basis, nodes);
    if (local_grads.size() != nodes.size())
        throw DimensionError(std::to_string(local_grads.size()) + " local gradients for " +
                             std::to_string(nodes.size()) + " nodes");
    ParamVector mean = all_reduce_mean(local_grads);
    detail::require_same_length(mean.size(), static_cast<Eigen::Index>(basis.dim()), "local gradient");
    return mean;
}

} // namespace

void DistributedConfig::validate() const {
    if (k < 1) throw InputError("distributed simulation needs k >= 1");
    if (!deterministic_reduce) throw InputError("only deterministic reduction order is supported");
}

std::vector<ColumnRange> split_columns(std::size_t n, std::size_t k) {
    if (k < 1) throw InputError("k must be >= 1");
    std::vector<ColumnRange> out;
    const std::size_t base = n / k, extra = n % k;
    std::size_t at = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t len = base + (i < extra ? 1 : 0);
        out.push_back({at, at + len});
        at += len;
    }
    return out;
}

std::vector<NodeState> partition_columns(const SubspaceBasis& basis, std::size_t k) {
    if (k < 1) throw InputError("k must be >= 1");
    std::vector<NodeState> nodes(k);
    for (std::size_t i = 0; i < k; ++i) nodes[i].node_id = i;
    for (std::size_t r = 0; r < basis.groups(); ++r) {
        const auto ranges = split_columns(basis.columns(r), k);
        for (std::size_t i = 0; i < k; ++i) nodes[i].columns.push_back(ranges[i]);
    }
    return nodes;
}

ParamVector all_reduce_sum(std::span<const ParamVector> values) {
    if (values.empty()) throw InputError("all-reduce over zero nodes");
    ParamVector acc = values.front();
    for (std::size_t i = 1; i < values.size(); ++i) {
        detail::require_same_length(values[i].size(), acc.size(), "all-reduce");
        acc += values[i];
    }
    return acc;
}

ParamVector all_reduce_mean(std::span<const ParamVector> values) {
    ParamVector sum = all_reduce_sum(values);
    if (values.size() == 1) return sum;
    return sum / static_cast<double>(values.size());
}

ParamVector distributed_project(const SubspaceBasis& basis, std::span<const NodeState> nodes,
                                std::span<const ParamVector> local_grads, Execution execution) {
    const ParamVector g = round_one(basis, nodes, local_grads);
    std::vector<ParamVector> partial(nodes.size());
    for_each_node(nodes.size(), execution, [&](std::size_t i) {
        ParamVector local = ParamVector::Zero(g.size());
        for (std::size_t r = 0; r < basis.groups(); ++r) {
            const auto p = slice(basis.blocks[r], nodes[i].columns[r]);
            const Eigen::VectorXd c = p.transpose() * group_view(g, basis.partition, r);
            group_view(local, basis.partition, r).noalias() = p * c;
        }
        partial[i] = std::move(local);
    });
    return all_reduce_sum(partial);
}

std::vector<ParamVector> distributed_coefficient_gradients(const SubspaceBasis& basis,
                                                           std::span<const NodeState> nodes,
                                                           std::span<const ParamVector> local_grads,
                                                           Execution execution) {
    const ParamVector g = round_one(basis, nodes, local_grads);
    std::vector<ParamVector> blocks;
    for (std::size_t r = 0; r < basis.groups(); ++r) blocks.push_back(ParamVector::Zero(basis.blocks[r].cols()));
    // Nodes own disjoint slices, so concurrent writes never overlap.
    for_each_node(nodes.size(), execution, [&](std::size_t i) {
        for (std::size_t r = 0; r < basis.groups(); ++r) {
            const auto& range = nodes[i].columns[r];
            blocks[r].segment(static_cast<Eigen::Index>(range.begin), static_cast<Eigen::Index>(range.size())) =
                slice(basis.blocks[r], range).transpose() * group_view(g, basis.partition, r);
        }
    });
    return blocks;
}

ParamVector distributed_reconstruct(const SubspaceBasis& basis, std::span<const NodeState> nodes,
                                    const Coefficients& x, Execution execution) {
    check_nodes(basis, nodes);
    detail::require_shape(basis, x);
    std::vector<ParamVector> partial(nodes.size());
    for_each_node(nodes.size(), execution, [&](std::size_t i) {
        ParamVector local = ParamVector::Zero(static_cast<Eigen::Index>(basis.dim()));
        for (std::size_t r = 0; r < basis.groups(); ++r) {
            const auto& range = nodes[i].columns[r];
            group_view(local, basis.partition, r).noalias() =
                slice(basis.blocks[r], range) *
                x.blocks[r].segment(static_cast<Eigen::Index>(range.begin), static_cast<Eigen::Index>(range.size()));
        }
        partial[i] = std::move(local);
    });
    ParamVector w = all_reduce_sum(partial);
    for (std::size_t r = 0; r < basis.groups(); ++r) group_view(w, basis.partition, r) += basis.centers[r];
    return w;
}

} // namespace twa
