#include "test_support.hpp"
#include "twa/param_space.hpp"

#include <doctest.h>

using namespace twa;
using twa::testing::random_matrix;
using twa::testing::random_vector;

namespace {
ParamVector vec(std::initializer_list<double> xs) {
    ParamVector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}
} // namespace

TEST_CASE("axpy") {
    CHECK(axpy(2.0, vec({1, 2}), vec({3, 4})) == vec({5, 8}));
    CHECK(axpy(0.0, vec({7, 7}), vec({1, 1})) == vec({1, 1}));
    CHECK(axpy(-1.0, vec({1, 2}), vec({1, 2})) == vec({0, 0}));
    CHECK_THROWS_AS(axpy(1.0, vec({1}), vec({1, 2})), DimensionError);
}

TEST_CASE("axpy leaves its inputs alone") {
    const ParamVector x = vec({1, 2, 3}), y = vec({4, 5, 6});
    const ParamVector x0 = x, y0 = y;
    (void)axpy(3.0, x, y);
    CHECK(x == x0);
    CHECK(y == y0);
}

TEST_CASE("slice_group") {
    const LayerPartition part({0, 2, 4});
    CHECK(slice_group(vec({1, 2, 3, 4}), part, 0) == vec({1, 2}));
    CHECK(slice_group(vec({1, 2, 3, 4}), part, 1) == vec({3, 4}));
    CHECK(slice_group(vec({5}), LayerPartition({0, 1}), 0) == vec({5}));
    CHECK_THROWS_AS(slice_group(vec({1, 2, 3, 4}), part, 2), IndexError);
    CHECK_THROWS_AS(slice_group(vec({1, 2, 3}), part, 0), DimensionError);
}

TEST_CASE("layer partition validation") {
    CHECK_THROWS_AS(LayerPartition({0}), InputError);
    CHECK_THROWS_AS(LayerPartition({1, 3}), InputError);
    CHECK_THROWS_AS(LayerPartition({0, 2, 2, 4}), InputError);
    CHECK_THROWS_AS(LayerPartition::uniform(3, 4), InputError);

    const auto u = LayerPartition::uniform(162, 6);
    CHECK(u.groups() == 6);
    CHECK(u.dim() == 162);
    for (std::size_t r = 0; r < 6; ++r) CHECK(u.size(r) == 27);

    const auto v = LayerPartition::uniform(10, 3);
    CHECK(v.boundaries() == std::vector<std::size_t>{0, 4, 7, 10});
}

TEST_CASE("slicing every group and concatenating is the identity, bit for bit") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto dim = static_cast<std::size_t>(1 + rng() % 200);
        const auto groups = static_cast<std::size_t>(1 + rng() % dim);
        const auto part = LayerPartition::uniform(dim, std::min<std::size_t>(groups, 12));
        const ParamVector w = random_vector(rng, static_cast<Eigen::Index>(dim));
        std::vector<ParamVector> pieces;
        for (std::size_t r = 0; r < part.groups(); ++r) pieces.push_back(slice_group(w, part, r));
        const ParamVector back = concat_groups<double>(pieces);
        REQUIRE(back.size() == w.size());
        CHECK(std::memcmp(back.data(), w.data(), sizeof(double) * dim) == 0);
    }
}

TEST_CASE("matvec_t") {
    const DenseMatrix id = DenseMatrix::Identity(2, 2);
    CHECK(matvec_t(id, vec({3, 4})) == vec({3, 4}));

    DenseMatrix single(2, 1);
    single << 0.70710678, -0.70710678;
    CHECK(matvec_t(single, vec({1, 1}))[0] == doctest::Approx(0.0));

    DenseMatrix skew(2, 2);
    skew << 1.0, 0.70710678, 0.0, 0.70710678;
    const ParamVector c = matvec_t(skew, vec({0, 1}));
    CHECK(c[0] == doctest::Approx(0.0));
    CHECK(c[1] == doctest::Approx(0.70710678));

    CHECK_THROWS_AS(matvec_t(id, vec({1, 2, 3})), DimensionError);
}

TEST_CASE("matvec") {
    CHECK(matvec(DenseMatrix::Identity(2, 2), vec({3, 4})) == vec({3, 4}));

    DenseMatrix e1(2, 1);
    e1 << 1.0, 0.0;
    CHECK(matvec(e1, vec({5})) == vec({5, 0}));

    DenseMatrix skew(2, 2);
    skew << 1.0, 0.70710678, 0.0, 0.70710678;
    const ParamVector w = matvec(skew, vec({0, 0.70710678}));
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-7));

    CHECK_THROWS_AS(matvec(skew, vec({1})), DimensionError);
}

TEST_CASE("P (P^T g) stays in the column space of P") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const auto rows = static_cast<Eigen::Index>(2 + rng() % 60);
        const auto cols = static_cast<Eigen::Index>(1 + rng() % 8);
        const DenseMatrix p = random_matrix(rng, rows, cols);
        const ParamVector g = random_vector(rng, rows);
        const ParamVector pg = matvec(p, matvec_t(p, g));
        CHECK(span_residual(p, pg) < 1e-10);
        CHECK(twa::testing::normal_equation_residual(p, pg) < 1e-9);
    }
}

TEST_CASE("span_residual tolerates rank deficiency") {
    DenseMatrix p(3, 2);
    p << 1, -1, 0, 0, 0, 0; // collinear columns
    CHECK(span_residual(p, vec({2, 0, 0})) < 1e-14);
    CHECK(span_residual(p, vec({0, 3, 4})) == doctest::Approx(5.0));
    CHECK(span_residual(DenseMatrix::Zero(3, 2), vec({0, 3, 4})) == doctest::Approx(5.0));
}

TEST_CASE("span_residual on an ill-conditioned trajectory basis") {
    // Nearly collinear columns (a slowly turning trajectory) have singular
    // values spanning many decades; members of the span must still score ~0.
    std::mt19937_64 rng(77);
    const Eigen::Index d = 60, n = 40;
    DenseMatrix p(d, n);
    ParamVector w = random_vector(rng, d);
    for (Eigen::Index j = 0; j < n; ++j) {
        w += 1e-3 * random_vector(rng, d);
        p.col(j) = w;
    }
    const ParamVector inside = p * random_vector(rng, n);
    CHECK(span_residual(p, inside) < 1e-12 * inside.norm());
    CHECK(testing::qr_span_residual(p, inside) < 1e-12 * inside.norm());
    ParamVector outside = random_vector(rng, d);
    CHECK(span_residual(p, outside) == doctest::Approx(testing::qr_span_residual(p, outside)).epsilon(1e-6));
}
