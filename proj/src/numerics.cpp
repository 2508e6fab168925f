#include "inrbo/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

#include "inrbo/errors.hpp"

namespace inrbo {
namespace {

bool try_factor(const DenseMatrix& a, double jitter, DenseMatrix& l) {
  const Eigen::Index n = a.rows();
  l.setZero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = a(j, j) + jitter;
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return true;
}

void require_square(const DenseMatrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": matrix is " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + ", expected square");
  }
}

}  // namespace

CholeskyFactor cholesky(const DenseMatrix& a, double jitter_max) {
  require_square(a, "cholesky");
  const double scale = a.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale) {
        throw Error(ErrorCode::kInvalidArgument, "cholesky: matrix is not symmetric at (" +
                                                     std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }

  std::vector<double> ladder{0.0};
  for (double d = 1e-10; d <= jitter_max * (1.0 + 1e-12); d *= 100.0) ladder.push_back(d);
  if (jitter_max > 0.0 && ladder.back() < jitter_max) ladder.push_back(jitter_max);

  CholeskyFactor out;
  for (double jitter : ladder) {
    if (try_factor(a, jitter, out.lower)) {
      out.jitter = jitter;
      return out;
    }
  }
  throw Error(ErrorCode::kNotPositiveDefinite,
              "cholesky: no diagonal jitter <= " + std::to_string(jitter_max) + " gives a positive definite matrix");
}

Vector solve_lower(const DenseMatrix& lower, const Vector& b) {
  if (lower.rows() != b.size() || lower.cols() != lower.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "solve: factor is " + std::to_string(lower.rows()) +
                                                   " rows, right-hand side has " + std::to_string(b.size()));
  }
  return lower.triangularView<Eigen::Lower>().solve(b);
}

Vector solve_cholesky(const DenseMatrix& lower, const Vector& b) {
  Vector y = solve_lower(lower, b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

DenseMatrix solve_cholesky(const DenseMatrix& lower, const DenseMatrix& b) {
  if (lower.rows() != b.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "solve: factor is " + std::to_string(lower.rows()) +
                                                   " rows, right-hand side has " + std::to_string(b.rows()));
  }
  DenseMatrix y = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

double log_det_from_cholesky(const DenseMatrix& lower) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    const double d = lower(i, i);
    if (!(d > 0.0)) {
      throw Error(ErrorCode::kNonPositiveDiagonal, "log_det: diagonal entry " + std::to_string(i) + " is " +
                                                       std::to_string(d));
    }
    acc += std::log(d);
  }
  return 2.0 * acc;
}

double min_eigenvalue(const DenseMatrix& a) {
  require_square(a, "min_eigenvalue");
  if (a.rows() == 0) throw Error(ErrorCode::kDimensionMismatch, "min_eigenvalue: empty matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(a), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 32;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace inrbo
