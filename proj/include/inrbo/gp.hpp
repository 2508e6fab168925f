#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "inrbo/config_space.hpp"
#include "inrbo/numerics.hpp"
#include "inrbo/rng.hpp"

namespace inrbo {

/// Hyperparameters of the product kernel
///   k(a, b) = signal_var * Matern_nu(|a_c - b_c| / ell_cont)
///             * exp(-sum_j (a_j - b_j)^2 / (2 ell_cat[j]^2))
/// where a_c are the continuous (scalar and binary) coordinates and j runs
/// over the one-hot coordinates.
struct KernelSpec {
  double nu = 2.5;
  double ell_cont = 1.0;
  std::vector<double> ell_cat;  // one per one-hot coordinate
  double signal_var = 1.0;
  double noise_var = 1e-2;

  /// Throws UnsupportedNu, DimensionMismatch or InvalidArgument.
  void validate(const EncodingLayout& layout) const;

  /// Default spec for a layout (all one-hot length-scales 1).
  static KernelSpec defaults(const EncodingLayout& layout, double nu = 2.5);
};

/// Unit-variance Matérn correlation at scaled distance r = |d| / ell.
double matern(double nu, double r);

double kernel_eval(const KernelSpec& spec, const EncodingLayout& layout, const Vector& a, const Vector& b);

/// Gram matrix over the rows of xs.
DenseMatrix gram(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& xs);
DenseMatrix gram(const KernelSpec& spec, const EncodingLayout& layout, std::span<const EncodedPoint> xs);

/// Cross-covariance k(q_i, x_j) between rows of q and rows of xs.
DenseMatrix cross_kernel(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& q,
                         const DenseMatrix& xs);

struct PosteriorMoments {
  double mean = 0.0;  // standardized units
  double var = 0.0;
};

struct FitOptions {
  int restarts = 8;
  int evals_per_restart = 200;
  double ell_min = 1e-2;
  double ell_max = 10.0;
  double noise_min = 1e-6;
  double noise_max = 1.0;
  double signal_min = 1e-2;
  double signal_max = 1e2;
  bool per_dimension_ard = false;
  std::optional<KernelSpec> warm_start;
  int workers = 1;
};

/// Fitted Gaussian-process surrogate with zero prior mean on standardized
/// targets. Immutable; copies share state.
class GPModel {
 public:
  /// Maximum-likelihood fit (multi-start Nelder-Mead in log space). With a
  /// single observation the prior defaults (or the warm start) are used.
  static GPModel fit(const SearchSpace& space, std::span<const EncodedPoint> xs, std::span<const double> ys,
                     SeededRng& rng, FitOptions options = {});
  static GPModel fit(const EncodingLayout& layout, double nu, std::span<const EncodedPoint> xs,
                     std::span<const double> ys, SeededRng& rng, const FitOptions& options = {});

  /// Conditions on data with fixed hyperparameters.
  static GPModel condition(const EncodingLayout& layout, std::span<const EncodedPoint> xs,
                           std::span<const double> ys, const KernelSpec& spec);

  PosteriorMoments posterior(const EncodedPoint& q) const;
  /// Posterior moments for every row of q.
  void posterior(const DenseMatrix& q, Vector& mean, Vector& var) const;
  /// Closed-form posterior covariance between two points (standardized units).
  double posterior_covariance(const EncodedPoint& a, const EncodedPoint& b) const;

  double log_marginal_likelihood() const;

  double to_raw(double standardized) const { return y_mean() + y_std() * standardized; }
  /// Largest standardized observation.
  double f_best() const;

  const KernelSpec& kernel() const;
  const EncodingLayout& layout() const;
  const DenseMatrix& x() const;  // n x D, one encoded point per row
  const Vector& y() const;       // standardized targets
  const std::vector<double>& y_raw() const;
  double y_mean() const;
  double y_std() const;
  const DenseMatrix& chol() const;  // lower factor of K + noise_var I (+ jitter)
  double jitter() const;
  const Vector& alpha() const;  // (K + noise_var I)^-1 y
  std::size_t size() const;

  struct State;

 private:
  explicit GPModel(std::shared_ptr<const State> state) : state_(std::move(state)) {}
  std::shared_ptr<const State> state_;
};

/// -1/2 yᵀA⁻¹y - 1/2 log|A| - n/2 log 2π for A = K + noise_var I, or -inf when
/// A cannot be factored.
double log_marginal_likelihood(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& xs,
                               const Vector& y);

}  // namespace inrbo
