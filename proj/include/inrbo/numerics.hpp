#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>

namespace inrbo {

// All numerics are 64-bit. Row-major storage matches the serialized layout of
// Gram matrices and Cholesky factors.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct CholeskyFactor {
  DenseMatrix lower;
  double jitter = 0.0;  // diagonal shift that made the factorization succeed
};

/// Lower Cholesky factor of a symmetric matrix. Tries the jitter ladder
/// 0, 1e-10, 1e-8, 1e-6, ... (factor 100 per rung, capped at jitter_max) and
/// returns the first shift for which a + jitter*I is numerically positive
/// definite. Throws NotPositiveDefinite when every rung fails.
CholeskyFactor cholesky(const DenseMatrix& a, double jitter_max = 1e-4);

/// Solves (L Lᵀ) x = b by forward then back substitution.
Vector solve_cholesky(const DenseMatrix& lower, const Vector& b);

/// Column-wise solve for a right-hand-side matrix.
DenseMatrix solve_cholesky(const DenseMatrix& lower, const DenseMatrix& b);

/// Solves L x = b only (forward substitution).
Vector solve_lower(const DenseMatrix& lower, const Vector& b);

/// 2 Σ log L_ii. Throws NonPositiveDiagonal on a zero or negative pivot.
double log_det_from_cholesky(const DenseMatrix& lower);

/// Smallest eigenvalue of a symmetric matrix (n <= 512).
double min_eigenvalue(const DenseMatrix& a);

/// Pairwise (cascade) summation. The result depends only on the values and
/// their order, never on how work was split across threads.
double pairwise_sum(std::span<const double> values);

}  // namespace inrbo
