#include "test_support.hpp"
#include "twa/averaging.hpp"
#include "twa/subspace.hpp"

#include <doctest.h>

#include <numeric>

using namespace twa;
using namespace twa::testing;

namespace {

ParamVector vec(std::initializer_list<double> v) {
    ParamVector out(static_cast<Eigen::Index>(v.size()));
    std::copy(v.begin(), v.end(), out.data());
    return out;
}

void check_combination(const CheckpointSet& set, const AveragingResult& r) {
    REQUIRE(r.alpha.size() == set.size());
    ParamVector sum = ParamVector::Zero(static_cast<Eigen::Index>(set.dim()));
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(r.alpha[i] >= 0.0);
        sum += r.alpha[i] * set.checkpoint(i);
    }
    CHECK(std::accumulate(r.alpha.begin(), r.alpha.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(max_abs_diff(sum, r.w) < 1e-12);
}

ParamVector mean_of(const CheckpointSet& set, const std::vector<std::size_t>& idx) {
    ParamVector s = ParamVector::Zero(static_cast<Eigen::Index>(set.dim()));
    for (auto i : idx) s += set.checkpoint(i);
    return s / static_cast<double>(idx.size());
}

} // namespace

TEST_CASE("swa") {
    const auto two = CheckpointSet::from_vectors({vec({1, 0}), vec({0, 1})});
    const auto r = swa(two);
    CHECK(r.w == vec({0.5, 0.5}));
    CHECK(r.alpha == std::vector<double>{0.5, 0.5});
    check_combination(two, r);

    const auto one = CheckpointSet::from_vectors({vec({3, -2})});
    CHECK(swa(one).w == vec({3, -2}));

    const ParamVector w = vec({0.1, 0.7, -0.3});
    const auto same = CheckpointSet::from_vectors({w, w, w});
    CHECK(max_abs_diff(swa(same).w, w) < 1e-16);
}

TEST_CASE("lawa") {
    const auto set = CheckpointSet::from_vectors({vec({0, 0}), vec({2, 0}), vec({4, 0})});
    const auto r = lawa(set, 2);
    CHECK(r.w == vec({3, 0}));
    CHECK(r.alpha == std::vector<double>{0.0, 0.5, 0.5});
    check_combination(set, r);
    CHECK(lawa(set, 1).w == vec({4, 0}));
    CHECK(max_abs_diff(lawa(set, 3).w, swa(set).w) < 1e-12);
    CHECK_THROWS_AS(lawa(set, 0), InputError);
    CHECK_THROWS_AS(lawa(set, 4), InputError);
}

TEST_CASE("lawa with t = n equals swa on random sets") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ParamVector> ws;
        const int n = 1 + trial % 9;
        for (int i = 0; i < n; ++i) ws.push_back(random_vector(rng, 13));
        const auto set = CheckpointSet::from_vectors(ws);
        const auto l = lawa(set, set.size());
        CHECK(max_abs_diff(l.w, swa(set).w) < 1e-12);
        check_combination(set, l);
        check_combination(set, lawa(set, 1 + set.size() / 2));
    }
}

TEST_CASE("swa equals reconstruct at zero coefficients") {
    std::mt19937_64 rng(22);
    std::vector<ParamVector> ws;
    for (int i = 0; i < 5; ++i) ws.push_back(random_vector(rng, 20));
    const auto set = CheckpointSet::from_vectors(ws);
    for (std::size_t groups : {1, 3}) {
        const auto basis = extract(set, LayerPartition::uniform(20, groups));
        CHECK(max_abs_diff(swa(set).w, reconstruct(basis, Coefficients::zeros_like(basis))) < 1e-12);
    }
}

TEST_CASE("greedy soup with a scripted evaluator") {
    const ParamVector w1 = vec({1, 0, 0}), w2 = vec({0, 1, 0}), w3 = vec({0, 0, 1});
    const auto set = CheckpointSet::from_vectors({w3, w2, w1}, {{1, 0, 0.5, ""}, {2, 0, 0.8, ""}, {3, 0, 0.9, ""}});
    const Evaluator eval = [&](const ParamVector& w) {
        if (max_abs_diff(w, (w1 + w2) / 2) < 1e-12) return 0.92;
        if (max_abs_diff(w, (w1 + w2 + w3) / 3) < 1e-12) return 0.85;
        FAIL("unexpected soup queried");
        return 0.0;
    };
    const auto r = greedy_soup(set, eval);
    CHECK(r.kept == std::vector<std::size_t>{2, 1});
    CHECK(max_abs_diff(r.w, (w1 + w2) / 2) < 1e-15);
    CHECK(r.metric == 0.92);
    check_combination(set, r);
}

TEST_CASE("greedy soup keeps the best model when every addition hurts") {
    const auto set = CheckpointSet::from_vectors({vec({1}), vec({2}), vec({3})},
                                                 {{1, 0, 0.3, ""}, {2, 0, 0.7, ""}, {3, 0, 0.6, ""}});
    const auto r = greedy_soup(set, [](const ParamVector&) { return 0.1; });
    CHECK(r.kept == std::vector<std::size_t>{1});
    CHECK(r.w == vec({2}));
    CHECK(r.metric == 0.7);
}

TEST_CASE("greedy soup ordering, ties and errors") {
    // equal metrics: the earlier step goes first; ties in the soup score are kept
    const auto set = CheckpointSet::from_vectors({vec({1}), vec({5})}, {{1, 0, 0.5, ""}, {2, 0, 0.5, ""}});
    const auto r = greedy_soup(set, [](const ParamVector&) { return 0.5; });
    CHECK(r.kept == std::vector<std::size_t>{0, 1});

    // metrics from the evaluator when missing
    const auto unlabeled = CheckpointSet::from_vectors({vec({1}), vec({4})});
    const auto s = greedy_soup(unlabeled, [](const ParamVector& w) { return w[0] == 4.0 ? 1.0 : -std::abs(w[0] - 4.0); });
    CHECK(s.kept.front() == 1);
    CHECK(s.w == vec({4}));

    CHECK_THROWS_AS(greedy_soup(unlabeled, nullptr), InputError);
    const auto single = CheckpointSet::from_vectors({vec({1})}, {{1, 0, 0.4, ""}});
    CHECK(greedy_soup(single, nullptr).w == vec({1}));
}

TEST_CASE("greedy soup on a tiny task against the best sorted prefix") {
    const Dataset all = make_synthetic(SyntheticKind::two_moons, 400, 0.15, 3);
    std::vector<std::size_t> train_rows(300), val_rows(100);
    std::iota(train_rows.begin(), train_rows.end(), 0);
    std::iota(val_rows.begin(), val_rows.end(), 300);
    const Dataset train = all.subset(train_rows), val = all.subset(val_rows);
    const MlpSpec spec{{2, 16, 2}, Activation::tanh, 5};

    // plain full-batch gradient descent; keep four snapshots
    ParamVector w = init_params(spec);
    std::vector<ParamVector> snaps;
    std::vector<CheckpointEntry> entries;
    const Evaluator acc = [&](const ParamVector& v) { return evaluate(spec, v, val); };
    for (std::size_t step = 1; step <= 400; ++step) {
        w -= 0.5 * loss_and_grad(spec, w, train).gradient;
        if (step % 100 == 0) {
            snaps.push_back(w);
            entries.push_back({step, step / 100, acc(w), ""});
        }
    }
    const auto set = CheckpointSet::from_vectors(snaps, entries);
    const auto r = greedy_soup(set, acc);
    check_combination(set, r);
    CHECK(r.metric == acc(r.w));

    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return *entries[a].val_metric > *entries[b].val_metric; });
    double best_individual = 0.0, best_prefix = 0.0;
    for (std::size_t k = 1; k <= order.size(); ++k) {
        const std::vector<std::size_t> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        best_prefix = std::max(best_prefix, acc(mean_of(set, prefix)));
        best_individual = std::max(best_individual, *entries[order[k - 1]].val_metric);
    }
    CHECK(r.metric >= best_individual);
    CHECK(r.metric >= best_prefix);
}

TEST_CASE("greedy soup never falls below the best individual model") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<ParamVector> ws;
        const int n = 1 + trial % 6;
        for (int i = 0; i < n; ++i) ws.push_back(random_vector(rng, 4));
        const ParamVector target = random_vector(rng, 4);
        const Evaluator eval = [&](const ParamVector& w) { return -(w - target).squaredNorm(); };
        const auto set = CheckpointSet::from_vectors(ws);
        const auto r = greedy_soup(set, eval);
        double best = -1e300;
        for (const auto& w : ws) best = std::max(best, eval(w));
        CHECK(r.metric >= best);
        CHECK(r.metric == eval(r.w));
        check_combination(set, r);
    }
}

TEST_CASE("combine") {
    const auto set = CheckpointSet::from_vectors({vec({1, 2}), vec({3, 4})});
    const std::vector<double> alpha{2.0, -1.0};
    CHECK(combine(set, alpha) == vec({-1, 0}));
    const std::vector<double> bad{1.0};
    CHECK_THROWS_AS(combine(set, bad), DimensionError);
}
