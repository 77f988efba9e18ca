#pragma once

// Subspace extraction from sampled checkpoints and the projection kernels used
// by subspace training.
//
// For every layer group r the basis holds the group's checkpoint mean
// (center^(r)) and a block P^(r) whose column i is the decentered, normalized
// checkpoint i. Columns are not orthogonalized unless gram_schmidt() is applied.
// The subspace is affine: a point is center + P X.

#include "twa/checkpoints.hpp"
#include "twa/param_space.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

namespace twa {

template <typename Scalar>
struct SubspaceBasisT {
    LayerPartition partition;
    std::vector<Vector<Scalar>> centers;  // one per group
    std::vector<Matrix<Scalar>> blocks;   // |group r| x n_r
    std::vector<std::vector<bool>> degenerate; // per group, per column: zeroed direction
    std::size_t n = 0;                    // number of checkpoints the basis came from
    bool orthogonalized = false;

    std::size_t groups() const { return blocks.size(); }
    std::size_t dim() const { return partition.dim(); }
    std::size_t columns(std::size_t r) const { return static_cast<std::size_t>(blocks.at(r).cols()); }
    std::size_t total_columns() const {
        std::size_t c = 0;
        for (const auto& b : blocks) c += static_cast<std::size_t>(b.cols());
        return c;
    }

    /// Concatenated group centers (the uniform checkpoint average).
    Vector<Scalar> center() const {
        return concat_groups<Scalar>(std::span<const Vector<Scalar>>(centers));
    }
};

using SubspaceBasis = SubspaceBasisT<double>;

/// Trainable subspace coordinates, one block per layer group.
template <typename Scalar>
struct CoefficientsT {
    std::vector<Vector<Scalar>> blocks;

    static CoefficientsT zeros_like(const SubspaceBasisT<Scalar>& basis) {
        CoefficientsT x;
        for (const auto& b : basis.blocks) x.blocks.push_back(Vector<Scalar>::Zero(b.cols()));
        return x;
    }

    Scalar squared_norm() const {
        Scalar s = 0;
        for (const auto& b : blocks) s += b.squaredNorm();
        return s;
    }
    Scalar norm() const { return std::sqrt(squared_norm()); }
    bool all_finite() const {
        for (const auto& b : blocks)
            if (!b.allFinite()) return false;
        return true;
    }
};

using Coefficients = CoefficientsT<double>;

template <typename Scalar>
struct ProjectionT {
    std::vector<Vector<Scalar>> coeff_grads; // P^(r)T g^(r)
    Vector<Scalar> projected;                // [P^(r) P^(r)T g^(r)]_r
};

using Projection = ProjectionT<double>;

namespace detail {

template <typename Scalar>
void require_shape(const SubspaceBasisT<Scalar>& basis, const CoefficientsT<Scalar>& x) {
    if (x.blocks.size() != basis.groups())
        throw DimensionError("coefficients have " + std::to_string(x.blocks.size()) +
                             " blocks, basis has " + std::to_string(basis.groups()) + " groups");
    for (std::size_t r = 0; r < basis.groups(); ++r)
        require_same_length(x.blocks[r].size(), basis.blocks[r].cols(), "coefficient block");
}

} // namespace detail

/// Decentralize and normalize each group of the checkpoints (one per column of
/// `weights`, D x n). A column equal to its group center (within 1e-12
/// relative) becomes a zero direction and is flagged degenerate.
template <typename Scalar>
SubspaceBasisT<Scalar> extract(const Matrix<Scalar>& weights, const LayerPartition& partition) {
    const Eigen::Index n = weights.cols();
    if (n < 2) throw InputError("subspace extraction needs at least 2 checkpoints, got " + std::to_string(n));
    detail::require_same_length(weights.rows(), static_cast<Eigen::Index>(partition.dim()), "extract");

    SubspaceBasisT<Scalar> basis;
    basis.partition = partition;
    basis.n = static_cast<std::size_t>(n);
    bool any_spread = false;

    for (std::size_t r = 0; r < partition.groups(); ++r) {
        const auto begin = static_cast<Eigen::Index>(partition.begin(r));
        const auto rows = static_cast<Eigen::Index>(partition.size(r));
        Vector<Scalar> center(rows);
        Matrix<Scalar> block(rows, n);
        Eigen::Array<Scalar, 1, Eigen::Dynamic> spread_sq = Eigen::Array<Scalar, 1, Eigen::Dynamic>::Zero(n);
        Eigen::Array<Scalar, 1, Eigen::Dynamic> weight_sq = Eigen::Array<Scalar, 1, Eigen::Dynamic>::Zero(n);

        // One sweep over rows: center, decentered directions, squared norms.
        for (Eigen::Index i = 0; i < rows; ++i) {
            const auto w = weights.row(begin + i).array();
            const Scalar c = w.sum() / static_cast<Scalar>(n);
            center[i] = c;
            block.row(i).array() = w - c;
            spread_sq += block.row(i).array().square();
            weight_sq += w.square();
        }

        const Scalar center_norm = center.norm();
        std::vector<bool> flags(static_cast<std::size_t>(n), false);
        Eigen::Array<Scalar, 1, Eigen::Dynamic> scale(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const Scalar spread = std::sqrt(spread_sq[j]);
            const Scalar ref = std::max(std::sqrt(weight_sq[j]), center_norm);
            if (spread == Scalar(0) || spread <= Scalar(1e-12) * ref) {
                flags[static_cast<std::size_t>(j)] = true;
                scale[j] = Scalar(0);
            } else {
                scale[j] = Scalar(1) / spread;
                any_spread = true;
            }
        }
        for (Eigen::Index i = 0; i < rows; ++i) block.row(i).array() *= scale;

        basis.centers.push_back(std::move(center));
        basis.blocks.push_back(std::move(block));
        basis.degenerate.push_back(std::move(flags));
    }
    if (!any_spread) throw InputError("zero spread: every checkpoint equals the center");
    return basis;
}

inline SubspaceBasis extract(const CheckpointSet& set, const LayerPartition& partition) {
    return extract<double>(set.weights(), partition);
}

/// Classical Gram-Schmidt over each group's columns, applied twice per column
/// so orthogonality holds for nearly collinear checkpoints. Columns whose
/// residual falls below 1e-10 of their original norm are dropped.
template <typename Scalar>
SubspaceBasisT<Scalar> gram_schmidt(const SubspaceBasisT<Scalar>& basis) {
    SubspaceBasisT<Scalar> out;
    out.partition = basis.partition;
    out.centers = basis.centers;
    out.n = basis.n;
    out.orthogonalized = true;

    for (const auto& block : basis.blocks) {
        const Eigen::Index rows = block.rows();
        Matrix<Scalar> q(rows, block.cols());
        Eigen::Index kept = 0;
        for (Eigen::Index j = 0; j < block.cols(); ++j) {
            Vector<Scalar> v = block.col(j);
            const Scalar original = v.norm();
            if (original == Scalar(0)) continue;
            for (int pass = 0; pass < 2; ++pass) {
                if (kept == 0) break;
                const Vector<Scalar> c = q.leftCols(kept).transpose() * v;
                v.noalias() -= q.leftCols(kept) * c;
            }
            const Scalar residual = v.norm();
            if (residual < Scalar(1e-10) * original) continue;
            q.col(kept++) = v / residual;
        }
        out.blocks.push_back(q.leftCols(kept));
        out.degenerate.emplace_back(static_cast<std::size_t>(kept), false);
    }
    return out;
}

/// Per-group P^(r)T g^(r).
template <typename Scalar, typename Derived>
std::vector<Vector<Scalar>> coefficient_gradients(const SubspaceBasisT<Scalar>& basis,
                                                  const Eigen::MatrixBase<Derived>& g) {
    detail::require_same_length(g.size(), static_cast<Eigen::Index>(basis.dim()), "projection gradient");
    std::vector<Vector<Scalar>> out;
    out.reserve(basis.groups());
    for (std::size_t r = 0; r < basis.groups(); ++r)
        out.push_back(basis.blocks[r].transpose() * group_view(g, basis.partition, r));
    return out;
}

template <typename Scalar, typename Derived>
ProjectionT<Scalar> project(const SubspaceBasisT<Scalar>& basis, const Eigen::MatrixBase<Derived>& g) {
    ProjectionT<Scalar> out;
    out.coeff_grads = coefficient_gradients(basis, g);
    out.projected.resize(static_cast<Eigen::Index>(basis.dim()));
    for (std::size_t r = 0; r < basis.groups(); ++r)
        group_view(out.projected, basis.partition, r).noalias() = basis.blocks[r] * out.coeff_grads[r];
    return out;
}

/// center^(r) + P^(r) X^(r) per group.
template <typename Scalar>
Vector<Scalar> reconstruct(const SubspaceBasisT<Scalar>& basis, const CoefficientsT<Scalar>& x) {
    detail::require_shape(basis, x);
    Vector<Scalar> w(static_cast<Eigen::Index>(basis.dim()));
    for (std::size_t r = 0; r < basis.groups(); ++r) {
        auto seg = group_view(w, basis.partition, r);
        seg = basis.centers[r];
        seg.noalias() += basis.blocks[r] * x.blocks[r];
    }
    return w;
}

/// Least-squares distance of w from the affine subspace (2-norm over all groups).
template <typename Scalar, typename Derived>
Scalar affine_span_residual(const SubspaceBasisT<Scalar>& basis, const Eigen::MatrixBase<Derived>& w) {
    detail::require_same_length(w.size(), static_cast<Eigen::Index>(basis.dim()), "affine_span_residual");
    Scalar sq = 0;
    for (std::size_t r = 0; r < basis.groups(); ++r) {
        const Vector<Scalar> offset = group_view(w, basis.partition, r) - basis.centers[r];
        const Scalar res = span_residual(basis.blocks[r], offset);
        sq += res * res;
    }
    return std::sqrt(sq);
}

/// Writes one TWA1 file per column and per center plus a `basis.json` sidecar
/// ({"partition", "n", "orthogonalized", "columns", "degenerate"}). Values are
/// stored as float32.
void write_basis(const std::filesystem::path& dir, const SubspaceBasis& basis);
SubspaceBasis read_basis(const std::filesystem::path& dir);

} // namespace twa
