#pragma once

// Independent reference computations used by the unit tests, the acceptance
// suite and the self-test command. Nothing here calls the code it checks:
// kernels are re-derived from their formulas and linear systems are solved by
// dense LU instead of Cholesky.

#include <functional>
#include <vector>

#include "inrbo/config_space.hpp"
#include "inrbo/gp.hpp"
#include "inrbo/inr.hpp"

namespace inrbo::oracle {

/// Product Matérn x squared-exponential kernel written out term by term.
double kernel(const KernelSpec& spec, const EncodingLayout& layout, const Vector& a, const Vector& b);

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

/// Posterior moments from an explicit inverse of K + noise I.
Moments posterior(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& xs, const Vector& y,
                  const Vector& q);

/// Posterior covariance from an explicit inverse.
double posterior_covariance(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& xs,
                            const Vector& a, const Vector& b);

/// Log marginal likelihood from an explicit inverse and LU determinant.
double log_marginal_likelihood(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& xs,
                               const Vector& y);

/// E[max(0, T - f_best)] for T ~ N(mean, sd^2) by composite Gauss-Legendre
/// quadrature of the defining integral.
double expected_improvement_integral(double mean, double sd, double f_best);

/// Central finite difference of f at x along every coordinate.
std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h);

/// Scalar activation value straight from its defining formula.
double activation(const LayerSpec& layer, double z);

/// Mean squared error of the coordinate MLP, evaluated with plain loops and
/// libm (positional encoding included).
double mlp_loss(const NetworkSpec& spec, const NetworkState& state, const DenseMatrix& coords,
                const DenseMatrix& targets);

}  // namespace inrbo::oracle
