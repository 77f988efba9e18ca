#include "test_support.hpp"
#include "twa/model_zoo.hpp"

#include <doctest.h>

#include <fstream>
#include <numeric>

using namespace twa;
using namespace twa::testing;

namespace {

std::vector<std::size_t> all_rows(const Dataset& d) {
    std::vector<std::size_t> r(d.size());
    std::iota(r.begin(), r.end(), 0);
    return r;
}

Dataset tiny_dataset(std::initializer_list<std::pair<std::vector<double>, int>> rows) {
    Dataset d;
    d.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->first.size()));
    Eigen::Index i = 0;
    for (const auto& [x, y] : rows) {
        for (std::size_t k = 0; k < x.size(); ++k) d.features(i, static_cast<Eigen::Index>(k)) = x[k];
        d.labels.push_back(y);
        ++i;
    }
    return d;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p) << s;
}

} // namespace

TEST_CASE("init_params") {
    const MlpSpec small{{2, 1}, Activation::relu, 0};
    const ParamVector w = init_params(small);
    REQUIRE(w.size() == 3);
    CHECK(w[2] == 0.0);

    const MlpSpec spec{{2, 3, 2}, Activation::tanh, 42};
    CHECK(spec.param_count() == 17);
    const ParamVector a = init_params(spec), b = init_params(spec);
    REQUIRE(a.size() == 17);
    CHECK(std::memcmp(a.data(), b.data(), 17 * sizeof(double)) == 0);
    // biases zero, weights within the fan-in bound
    for (Eigen::Index i : {6, 7, 8, 15, 16}) CHECK(a[i] == 0.0);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(std::abs(a[i]) <= 1.0 / std::sqrt(2.0));

    CHECK_THROWS_AS(init_params(MlpSpec{{3}, Activation::relu, 0}), InputError);
    CHECK_THROWS_AS(init_params(MlpSpec{{3, 0, 2}, Activation::relu, 0}), InputError);
}

TEST_CASE("natural partition follows the parameter layout") {
    const MlpSpec spec{{2, 3, 2}, Activation::relu, 0};
    CHECK(spec.natural_partition().boundaries() == std::vector<std::size_t>{0, 6, 9, 15, 17});
}

TEST_CASE("equal logits give ln 2 for any label") {
    const MlpSpec spec{{1, 2}, Activation::relu, 0};
    ParamVector w(4);
    w << 0.3, 0.3, -0.1, -0.1; // both rows identical -> equal logits
    const Dataset d = tiny_dataset({{{1.5}, 0}, {{-2.0}, 1}});
    CHECK(loss_and_grad(spec, w, d).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("gradient matches central finite differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Activation act = trial % 2 ? Activation::tanh : Activation::relu;
        const MlpSpec spec{{3, 5, 4, 3}, act, static_cast<std::uint64_t>(trial)};
        ParamVector w = init_params(spec) + random_vector(rng, static_cast<Eigen::Index>(spec.param_count()), 0.1);
        Dataset d;
        d.features = random_matrix(rng, 7, 3);
        for (int i = 0; i < 7; ++i) d.labels.push_back(static_cast<int>(rng() % 3));
        const auto rows = all_rows(d);
        const ParamVector fd = finite_difference_gradient(spec, w, d, rows);
        const BatchLoss bl = loss_and_grad(spec, w, d, rows);
        CHECK(bl.value == doctest::Approx(reference_loss(spec, w, d, rows)).epsilon(1e-12));
        CHECK(max_relative_error(bl.gradient, fd, 1e-4) < 1e-5);
    }
}

TEST_CASE("duplicating a batch leaves loss and gradient unchanged") {
    std::mt19937_64 rng(5);
    const MlpSpec spec{{2, 4, 2}, Activation::tanh, 9};
    const ParamVector w = init_params(spec);
    Dataset d;
    d.features = random_matrix(rng, 5, 2);
    d.labels = {0, 1, 1, 0, 1};
    std::vector<std::size_t> once{0, 1, 2, 3, 4}, twice{0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
    const auto a = loss_and_grad(spec, w, d, once), b = loss_and_grad(spec, w, d, twice);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-14));
    CHECK(max_abs_diff(a.gradient, b.gradient) < 1e-14);

    const auto c = loss_and_grad(spec, w, d, once);
    CHECK(c.value == a.value);
    CHECK(c.gradient == a.gradient);
}

TEST_CASE("loss_and_grad errors") {
    const MlpSpec spec{{2, 2}, Activation::relu, 0};
    const Dataset d = tiny_dataset({{{1.0, 2.0}, 0}});
    CHECK_THROWS_AS(loss_and_grad(spec, ParamVector::Zero(5), d), DimensionError);
    CHECK_THROWS_AS(loss_and_grad(spec, ParamVector::Zero(6), d, std::vector<std::size_t>{}), InputError);
    ParamVector huge = ParamVector::Constant(6, 1e308);
    const Dataset big = tiny_dataset({{{1e308, 1e308}, 0}});
    CHECK_THROWS_AS(loss_and_grad(spec, huge, big), NumericError);
}

TEST_CASE("evaluate") {
    // Logit difference z1 - z0 = 2x: predicts class 1 iff x > 0.
    const MlpSpec spec{{1, 2}, Activation::relu, 0};
    ParamVector w(4);
    w << -1.0, 1.0, 0.0, 0.0;
    const Dataset right = tiny_dataset({{{-1.0}, 0}, {{2.0}, 1}, {{-3.0}, 0}, {{0.5}, 1}});
    CHECK(evaluate(spec, w, right) == 1.0);
    const Dataset wrong = tiny_dataset({{{-1.0}, 1}, {{2.0}, 0}, {{-3.0}, 1}, {{0.5}, 0}});
    CHECK(evaluate(spec, w, wrong) == 0.0);

    // Constant logits: every prediction ties and goes to class 0.
    const ParamVector zero = ParamVector::Zero(4);
    const Dataset balanced = tiny_dataset({{{-1.0}, 0}, {{2.0}, 1}, {{-3.0}, 0}, {{0.5}, 1}});
    CHECK(evaluate(spec, zero, balanced) == 0.5);

    const Dataset doubled = right.concat(wrong).concat(right).concat(wrong);
    CHECK(evaluate(spec, w, doubled) == evaluate(spec, w, right.concat(wrong)));
    CHECK_THROWS_AS(evaluate(MlpSpec{{2, 2}, Activation::relu, 0}, ParamVector::Zero(6), right), DimensionError);
}

TEST_CASE("make_synthetic") {
    const Dataset exact = make_synthetic(SyntheticKind::two_gaussians, 100, 0.0, 4);
    int zeros = 0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
        const double mean = exact.labels[i] == 0 ? -0.5 : 0.5;
        CHECK(exact.features(static_cast<Eigen::Index>(i), 0) == mean);
        CHECK(exact.features(static_cast<Eigen::Index>(i), 1) == mean);
        zeros += exact.labels[i] == 0;
    }
    CHECK(zeros == 50);

    for (auto kind : {SyntheticKind::two_gaussians, SyntheticKind::two_moons}) {
        const Dataset a = make_synthetic(kind, 101, 0.2, 9), b = make_synthetic(kind, 101, 0.2, 9);
        CHECK(a.features == b.features);
        CHECK(a.labels == b.labels);
        const auto ones = std::count(a.labels.begin(), a.labels.end(), 1);
        CHECK(std::abs(static_cast<long>(ones) - static_cast<long>(a.size() - ones)) <= 1);
    }
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::two_moons, 1, 0.1, 0), InputError);
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::two_moons, 10, -0.1, 0), InputError);
}

TEST_CASE("two_gaussians is linearly separable enough for a least-squares probe") {
    const Dataset d = make_synthetic(SyntheticKind::two_gaussians, 1000, 0.3, 1);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(d.size()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(d.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = d.features(i, 0);
        x(i, 1) = d.features(i, 1);
        x(i, 2) = 1.0;
        y[i] = d.labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    }
    const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd score = x * beta;
    int correct = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) correct += (score[i] > 0) == (y[i] > 0);
    CHECK(correct / 1000.0 > 0.9);
}

TEST_CASE("load_csv") {
    TempDir dir("csv");
    const auto plain = dir.path() / "plain.csv";
    write_text(plain, "1.0,2.0,0\n3.0,4.0,1");
    const Dataset a = load_csv(plain);
    CHECK(a.size() == 2);
    CHECK(a.dim() == 2);
    CHECK(a.features(1, 1) == 4.0);
    CHECK(a.labels == std::vector<int>{0, 1});

    const auto header = dir.path() / "header.csv";
    write_text(header, "x1,x2,y\n0.5,-0.5,1\n");
    const Dataset b = load_csv(header);
    CHECK(b.size() == 1);
    CHECK(b.labels == std::vector<int>{1});

    const auto bad = dir.path() / "bad.csv";
    write_text(bad, "1.0,abc,0\n");
    try {
        load_csv(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 1);
    }

    const auto ragged = dir.path() / "ragged.csv";
    write_text(ragged, "1,2,0\n1,2,3,0\n");
    try {
        load_csv(ragged);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    const auto empty = dir.path() / "empty.csv";
    write_text(empty, "");
    CHECK_THROWS_AS(load_csv(empty), EmptyInputError);
    CHECK_THROWS_AS(load_csv(dir.path() / "missing.csv"), StorageError);
}
