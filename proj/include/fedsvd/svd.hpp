#pragma once

#include <algorithm>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "fedsvd/activation.hpp"
#include "fedsvd/error.hpp"

namespace fedsvd {

// Left singular vectors and singular values of a matrix; the right factor is
// never kept. Columns of `u` are orthonormal and `s` is non-increasing.
struct SvdFactors {
    Matrix u;  // rows x rank
    Vector s;  // rank

    Eigen::Index rank() const noexcept { return s.size(); }
    Eigen::Index rows() const noexcept { return u.rows(); }

    // U * diag(S), the form clients transmit.
    Matrix scaled() const { return u * s.asDiagonal(); }

    static SvdFactors empty(Eigen::Index rows) { return {Matrix(rows, 0), Vector(0)}; }
};

// Numerical-rank cutoff: max(rows, cols) * eps * sigma_max.
inline double rank_threshold(Eigen::Index rows, Eigen::Index cols, double sigma_max) {
    return static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * sigma_max;
}

// Economy-size SVD keeping only singular values above the rank threshold.
//
// Wide inputs (the usual client case: few features, many samples) go through
// a column-pivoted QR of the transpose first, so the Jacobi sweeps only ever
// see a square matrix of side min(rows, cols).
inline SvdFactors economy_svd(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0)
        throw ArgumentError("economy_svd: empty matrix (" + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + ")");
    if (!a.allFinite()) throw DomainError("economy_svd: matrix has non-finite entries");

    Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> svd(a, Eigen::ComputeThinU);
    const Vector& sv = svd.singularValues();
    const double sigma_max = sv.size() > 0 ? sv(0) : 0.0;
    const double tau = rank_threshold(a.rows(), a.cols(), sigma_max);

    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > tau) ++rank;

    return {svd.matrixU().leftCols(rank), sv.head(rank)};
}

// SVD of [left.u*diag(left.s) | right.u*diag(right.s)], i.e. the factors of
// the column-concatenation of the two matrices the inputs were taken from.
inline SvdFactors merge_svd(const SvdFactors& left, const SvdFactors& right) {
    if (left.rows() != right.rows())
        throw ShapeError("merge_svd: row count mismatch (" + std::to_string(left.rows()) + " vs " +
                         std::to_string(right.rows()) + ")");
    if (right.rank() == 0) return left;
    if (left.rank() == 0) return right;

    Matrix stacked(left.rows(), left.rank() + right.rank());
    stacked.leftCols(left.rank()) = left.scaled();
    stacked.rightCols(right.rank()) = right.scaled();
    return economy_svd(stacked);
}

// Same as merge_svd, taking the U*S products directly.
inline SvdFactors merge_scaled(const Matrix& left_us, const Matrix& right_us) {
    if (left_us.rows() != right_us.rows())
        throw ShapeError("merge_svd: row count mismatch (" + std::to_string(left_us.rows()) + " vs " +
                         std::to_string(right_us.rows()) + ")");
    if (left_us.cols() + right_us.cols() == 0) return SvdFactors::empty(left_us.rows());
    Matrix stacked(left_us.rows(), left_us.cols() + right_us.cols());
    stacked << left_us, right_us;
    return economy_svd(stacked);
}

}  // namespace fedsvd
