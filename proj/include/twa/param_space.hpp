#pragma once

// Flat parameter vectors, contiguous layer partitions and the handful of dense
// kernels the rest of the toolkit is written against.
//
// Everything is templated on the scalar type; the toolkit itself instantiates
// with double. Matrices are row-major with bases stored as columns (D x n), so
// P^T g is a single sweep over rows.

#include "twa/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace twa {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ParamVector = Vector<double>;
using DenseMatrix = Matrix<double>;

/// Tiling of [0, D) into l nonempty contiguous groups.
class LayerPartition {
public:
    LayerPartition() = default;

    /// boundaries = {0, b_1, ..., D}, strictly increasing.
    explicit LayerPartition(std::vector<std::size_t> boundaries)
        : boundaries_(std::move(boundaries)) {
        if (boundaries_.size() < 2)
            throw InputError("layer partition needs at least one group");
        if (boundaries_.front() != 0)
            throw InputError("layer partition must start at 0");
        for (std::size_t i = 1; i < boundaries_.size(); ++i) {
            if (boundaries_[i] <= boundaries_[i - 1])
                throw InputError("layer partition boundaries must be strictly increasing");
        }
    }

    static LayerPartition whole(std::size_t dim) { return LayerPartition({0, dim}); }

    /// `groups` contiguous groups whose sizes differ by at most one; the larger
    /// groups come first.
    static LayerPartition uniform(std::size_t dim, std::size_t groups) {
        if (groups == 0 || groups > dim)
            throw InputError("cannot split " + std::to_string(dim) + " parameters into " +
                             std::to_string(groups) + " nonempty groups");
        std::vector<std::size_t> b{0};
        const std::size_t base = dim / groups, extra = dim % groups;
        for (std::size_t r = 0; r < groups; ++r)
            b.push_back(b.back() + base + (r < extra ? 1 : 0));
        return LayerPartition(std::move(b));
    }

    std::size_t dim() const noexcept { return boundaries_.empty() ? 0 : boundaries_.back(); }
    std::size_t groups() const noexcept { return boundaries_.empty() ? 0 : boundaries_.size() - 1; }
    std::size_t begin(std::size_t r) const { check(r); return boundaries_[r]; }
    std::size_t size(std::size_t r) const { check(r); return boundaries_[r + 1] - boundaries_[r]; }
    const std::vector<std::size_t>& boundaries() const noexcept { return boundaries_; }

    bool operator==(const LayerPartition&) const = default;

private:
    void check(std::size_t r) const {
        if (r >= groups())
            throw IndexError("group index " + std::to_string(r) + " out of range (l=" +
                             std::to_string(groups()) + ")");
    }

    std::vector<std::size_t> boundaries_;
};

namespace detail {

inline void require_same_length(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b)
        throw DimensionError(std::string(what) + ": length " + std::to_string(a) + " vs " +
                             std::to_string(b));
}

} // namespace detail

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& v) {
    return v.allFinite();
}

/// a*x + y.
template <typename DX, typename DY>
Vector<typename DX::Scalar> axpy(typename DX::Scalar a, const Eigen::MatrixBase<DX>& x,
                                 const Eigen::MatrixBase<DY>& y) {
    detail::require_same_length(x.size(), y.size(), "axpy");
    return a * x + y;
}

/// Read-only view of group r of w (no copy).
template <typename Derived>
auto group_view(const Eigen::MatrixBase<Derived>& w, const LayerPartition& part, std::size_t r) {
    detail::require_same_length(w.size(), static_cast<Eigen::Index>(part.dim()), "group_view");
    return w.segment(static_cast<Eigen::Index>(part.begin(r)),
                     static_cast<Eigen::Index>(part.size(r)));
}

template <typename Derived>
auto group_view(Eigen::MatrixBase<Derived>& w, const LayerPartition& part, std::size_t r) {
    detail::require_same_length(w.size(), static_cast<Eigen::Index>(part.dim()), "group_view");
    return w.segment(static_cast<Eigen::Index>(part.begin(r)),
                     static_cast<Eigen::Index>(part.size(r)));
}

template <typename Derived>
Vector<typename Derived::Scalar> slice_group(const Eigen::MatrixBase<Derived>& w,
                                             const LayerPartition& part, std::size_t r) {
    return group_view(w, part, r);
}

template <typename Scalar>
Vector<Scalar> concat_groups(std::span<const Vector<Scalar>> groups) {
    Eigen::Index total = 0;
    for (const auto& g : groups) total += g.size();
    Vector<Scalar> out(total);
    Eigen::Index at = 0;
    for (const auto& g : groups) {
        out.segment(at, g.size()) = g;
        at += g.size();
    }
    return out;
}

/// P^T g.
template <typename DP, typename DG>
Vector<typename DP::Scalar> matvec_t(const Eigen::MatrixBase<DP>& P,
                                     const Eigen::MatrixBase<DG>& g) {
    detail::require_same_length(P.rows(), g.size(), "matvec_t");
    return P.transpose() * g;
}

/// P x.
template <typename DP, typename DX>
Vector<typename DP::Scalar> matvec(const Eigen::MatrixBase<DP>& P,
                                   const Eigen::MatrixBase<DX>& x) {
    detail::require_same_length(P.cols(), x.size(), "matvec");
    return P * x;
}

/// 2-norm of the least-squares residual of v against the columns of P.
/// Rank-deficient P (collinear or zero columns) is allowed; singular values
/// below eps * max(rows, cols) * sigma_max count as zero.
template <typename DP, typename DV>
typename DP::Scalar span_residual(const Eigen::MatrixBase<DP>& P,
                                  const Eigen::MatrixBase<DV>& v) {
    using Scalar = typename DP::Scalar;
    detail::require_same_length(P.rows(), v.size(), "span_residual");
    if (P.cols() == 0 || P.isZero(Scalar(0))) return v.norm();
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Dense dense = P;
    Eigen::BDCSVD<Dense> svd(dense, Eigen::ComputeThinU);
    const auto& sigma = svd.singularValues();
    const Scalar cut = std::numeric_limits<Scalar>::epsilon() *
                       static_cast<Scalar>(std::max(dense.rows(), dense.cols())) * sigma[0];
    Eigen::Index rank = 0;
    while (rank < sigma.size() && sigma[rank] > cut) ++rank;
    const auto u = svd.matrixU().leftCols(rank);
    const Vector<Scalar> vv = v;
    return (vv - u * (u.transpose() * vv)).norm();
}

} // namespace twa
