#include "twa/averaging.hpp"

#include <algorithm>
#include <numeric>

namespace twa {

namespace {

AveragingResult uniform_over(const CheckpointSet& set, std::vector<std::size_t> members) {
    AveragingResult out;
    out.alpha.assign(set.size(), 0.0);
    const double share = 1.0 / static_cast<double>(members.size());
    for (auto i : members) out.alpha[i] = share;
    out.w = combine(set, out.alpha);
    out.kept = std::move(members);
    return out;
}

} // namespace

ParamVector combine(const CheckpointSet& set, std::span<const double> alpha) {
    if (alpha.size() != set.size())
        throw DimensionError("alpha has " + std::to_string(alpha.size()) + " entries for " +
                             std::to_string(set.size()) + " checkpoints");
    const Eigen::Map<const Eigen::VectorXd> a(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    return set.weights() * a;
}

AveragingResult swa(const CheckpointSet& set) {
    if (set.size() == 0) throw EmptyInputError("SWA over an empty checkpoint set");
    std::vector<std::size_t> all(set.size());
    std::iota(all.begin(), all.end(), 0);
    return uniform_over(set, std::move(all));
}

AveragingResult lawa(const CheckpointSet& set, std::size_t t) {
    if (t < 1 || t > set.size())
        throw InputError("LAWA horizon t=" + std::to_string(t) + " outside [1, " + std::to_string(set.size()) + "]");
    std::vector<std::size_t> last(t);
    std::iota(last.begin(), last.end(), set.size() - t);
    return uniform_over(set, std::move(last));
}

AveragingResult greedy_soup(const CheckpointSet& set, const Evaluator& evaluator) {
    if (set.size() == 0) throw EmptyInputError("greedy soup over an empty checkpoint set");
    std::vector<double> metrics(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (const auto& m = set.entries()[i].val_metric) {
            metrics[i] = *m;
        } else if (evaluator) {
            metrics[i] = evaluator(set.checkpoint(i));
        } else {
            throw InputError("greedy soup needs validation metrics or an evaluator");
        }
    }
    if (!evaluator && set.size() > 1) throw InputError("greedy soup needs an evaluator to score candidate soups");

    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (metrics[a] != metrics[b]) return metrics[a] > metrics[b];
        return set.entries()[a].step < set.entries()[b].step;
    });

    std::vector<std::size_t> soup{order.front()};
    double current = metrics[order.front()];
    for (std::size_t k = 1; k < order.size(); ++k) {
        auto candidate = soup;
        candidate.push_back(order[k]);
        const double score = evaluator(uniform_over(set, candidate).w);
        if (score >= current) {
            soup = std::move(candidate);
            current = score;
        }
    }
    AveragingResult out = uniform_over(set, std::move(soup));
    out.metric = current;
    return out;
}

} // namespace twa
