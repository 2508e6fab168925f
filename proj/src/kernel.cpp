#include <cmath>
#include <string>

#include "inrbo/errors.hpp"
#include "inrbo/gp.hpp"

namespace inrbo {
namespace {

void require_dim(const EncodingLayout& layout, Eigen::Index size, const char* what) {
  if (static_cast<std::size_t>(size) != layout.dim) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": point has " + std::to_string(size) +
                                                   " coordinates, layout has " + std::to_string(layout.dim));
  }
}

// Inverse squared length-scales laid out per one-hot coordinate.
struct KernelCoefficients {
  double inv_ell_cont;
  std::vector<double> half_inv_ell2;  // 1 / (2 ell_j^2), aligned with the one-hot coordinates
  std::vector<std::size_t> cat_index;
};

KernelCoefficients coefficients(const KernelSpec& spec, const EncodingLayout& layout) {
  KernelCoefficients c;
  c.inv_ell_cont = 1.0 / spec.ell_cont;
  std::size_t j = 0;
  for (const auto& block : layout.one_hot) {
    for (std::size_t k = 0; k < block.width; ++k, ++j) {
      c.cat_index.push_back(block.offset + k);
      c.half_inv_ell2.push_back(0.5 / (spec.ell_cat[j] * spec.ell_cat[j]));
    }
  }
  return c;
}

template <typename RowA, typename RowB>
double eval_rows(const KernelSpec& spec, const EncodingLayout& layout, const KernelCoefficients& c, const RowA& a,
                 const RowB& b) {
  double r2 = 0.0;
  for (std::size_t i : layout.continuous) {
    const double d = a[static_cast<Eigen::Index>(i)] - b[static_cast<Eigen::Index>(i)];
    r2 += d * d;
  }
  double cat = 0.0;
  for (std::size_t j = 0; j < c.cat_index.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(c.cat_index[j]);
    const double d = a[i] - b[i];
    cat += d * d * c.half_inv_ell2[j];
  }
  return spec.signal_var * matern(spec.nu, std::sqrt(r2) * c.inv_ell_cont) * std::exp(-cat);
}

}  // namespace

void KernelSpec::validate(const EncodingLayout& layout) const {
  if (nu != 0.5 && nu != 1.5 && nu != 2.5) {
    throw Error(ErrorCode::kUnsupportedNu, "Matérn smoothness must be 0.5, 1.5 or 2.5, got " + std::to_string(nu));
  }
  if (ell_cat.size() != layout.one_hot_width()) {
    throw Error(ErrorCode::kDimensionMismatch, "kernel has " + std::to_string(ell_cat.size()) +
                                                   " categorical length-scales, layout has " +
                                                   std::to_string(layout.one_hot_width()) + " one-hot coordinates");
  }
  bool ok = ell_cont > 0.0 && signal_var > 0.0 && noise_var > 0.0;
  for (double l : ell_cat) ok = ok && l > 0.0;
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "kernel hyperparameters must be strictly positive");
}

KernelSpec KernelSpec::defaults(const EncodingLayout& layout, double nu) {
  KernelSpec spec;
  spec.nu = nu;
  spec.ell_cat.assign(layout.one_hot_width(), 1.0);
  return spec;
}

double matern(double nu, double r) {
  if (nu == 0.5) return std::exp(-r);
  if (nu == 1.5) {
    const double s = std::sqrt(3.0) * r;
    return (1.0 + s) * std::exp(-s);
  }
  if (nu == 2.5) {
    const double s = std::sqrt(5.0) * r;
    return (1.0 + s + s * s / 3.0) * std::exp(-s);
  }
  throw Error(ErrorCode::kUnsupportedNu, "Matérn smoothness must be 0.5, 1.5 or 2.5, got " + std::to_string(nu));
}

double kernel_eval(const KernelSpec& spec, const EncodingLayout& layout, const Vector& a, const Vector& b) {
  spec.validate(layout);
  require_dim(layout, a.size(), "kernel_eval");
  require_dim(layout, b.size(), "kernel_eval");
  return eval_rows(spec, layout, coefficients(spec, layout), a, b);
}

DenseMatrix gram(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& xs) {
  spec.validate(layout);
  require_dim(layout, xs.cols(), "gram");
  if (xs.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "gram: empty point set");
  const KernelCoefficients c = coefficients(spec, layout);
  const Eigen::Index n = xs.rows();
  DenseMatrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = spec.signal_var;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = eval_rows(spec, layout, c, xs.row(i), xs.row(j));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

DenseMatrix gram(const KernelSpec& spec, const EncodingLayout& layout, std::span<const EncodedPoint> xs) {
  DenseMatrix m(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(layout.dim));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require_dim(layout, xs[i].size(), "gram");
    m.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  }
  return gram(spec, layout, m);
}

DenseMatrix cross_kernel(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& q,
                         const DenseMatrix& xs) {
  spec.validate(layout);
  require_dim(layout, q.cols(), "cross_kernel");
  require_dim(layout, xs.cols(), "cross_kernel");
  const KernelCoefficients c = coefficients(spec, layout);
  DenseMatrix k(q.rows(), xs.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < xs.rows(); ++j) k(i, j) = eval_rows(spec, layout, c, q.row(i), xs.row(j));
  }
  return k;
}

}  // namespace inrbo
