#include "inrbo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "inrbo/errors.hpp"
#include "inrbo/parallel.hpp"

namespace inrbo {

struct GPModel::State {
  EncodingLayout layout;
  KernelSpec kernel;
  DenseMatrix x;
  Vector y;
  std::vector<double> y_raw;
  double y_mean = 0.0;
  double y_std = 1.0;
  DenseMatrix chol;
  double jitter = 0.0;
  Vector alpha;
  double lml = 0.0;
};

namespace {

constexpr double kCholeskyJitterMax = 1e-4;

DenseMatrix stack_points(const EncodingLayout& layout, std::span<const EncodedPoint> xs) {
  DenseMatrix m(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(layout.dim));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (static_cast<std::size_t>(xs[i].size()) != layout.dim) {
      throw Error(ErrorCode::kDimensionMismatch, "training point " + std::to_string(i) + " has " +
                                                     std::to_string(xs[i].size()) + " coordinates, expected " +
                                                     std::to_string(layout.dim));
    }
    m.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  }
  return m;
}

void standardize(std::span<const double> ys, Vector& y, double& mean, double& stddev) {
  const auto n = static_cast<double>(ys.size());
  mean = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : ys) ss += (v - mean) * (v - mean);
  stddev = std::sqrt(ss / n);
  if (!(stddev > 1e-12 * std::max(1.0, std::abs(mean)))) stddev = 1.0;
  y.resize(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) y[static_cast<Eigen::Index>(i)] = (ys[i] - mean) / stddev;
}

double lml_from_factor(const DenseMatrix& chol, const Vector& y, Vector* alpha_out) {
  Vector alpha = solve_cholesky(chol, y);
  const double n = static_cast<double>(y.size());
  const double value =
      -0.5 * y.dot(alpha) - 0.5 * log_det_from_cholesky(chol) - 0.5 * n * std::log(2.0 * std::numbers::pi);
  if (alpha_out) *alpha_out = std::move(alpha);
  return value;
}

// Length-scale groups over the one-hot coordinates: one per block (tied) or
// one per coordinate.
std::vector<std::vector<std::size_t>> ard_groups(const EncodingLayout& layout, bool per_dimension) {
  std::vector<std::vector<std::size_t>> groups;
  std::size_t j = 0;
  for (const auto& block : layout.one_hot) {
    if (per_dimension) {
      for (std::size_t k = 0; k < block.width; ++k) groups.push_back({j + k});
    } else {
      std::vector<std::size_t> g(block.width);
      std::iota(g.begin(), g.end(), j);
      groups.push_back(std::move(g));
    }
    j += block.width;
  }
  return groups;
}

// Marginal-likelihood objective over log hyperparameters
// theta = [log ell_cont, log ell_group..., log signal_var, log noise_var].
class LikelihoodObjective {
 public:
  LikelihoodObjective(const EncodingLayout& layout, double nu, const DenseMatrix& x, const Vector& y,
                      std::vector<std::vector<std::size_t>> groups)
      : layout_(layout), nu_(nu), y_(y), groups_(std::move(groups)) {
    const Eigen::Index n = x.rows();
    dist_.setZero(n, n);
    group_d2_.assign(groups_.size(), DenseMatrix::Zero(n, n));
    std::vector<std::size_t> cat_coord;
    for (const auto& block : layout.one_hot) {
      for (std::size_t k = 0; k < block.width; ++k) cat_coord.push_back(block.offset + k);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        double r2 = 0.0;
        for (std::size_t c : layout.continuous) {
          const double d = x(i, static_cast<Eigen::Index>(c)) - x(j, static_cast<Eigen::Index>(c));
          r2 += d * d;
        }
        dist_(i, j) = std::sqrt(r2);
        for (std::size_t g = 0; g < groups_.size(); ++g) {
          double s = 0.0;
          for (std::size_t idx : groups_[g]) {
            const auto c = static_cast<Eigen::Index>(cat_coord[idx]);
            const double d = x(i, c) - x(j, c);
            s += d * d;
          }
          group_d2_[g](i, j) = s;
        }
      }
    }
  }

  std::size_t arity() const { return groups_.size() + 3; }

  KernelSpec unpack(const std::vector<double>& theta) const {
    KernelSpec spec;
    spec.nu = nu_;
    spec.ell_cont = std::exp(theta[0]);
    spec.ell_cat.assign(layout_.one_hot_width(), 1.0);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      for (std::size_t idx : groups_[g]) spec.ell_cat[idx] = std::exp(theta[1 + g]);
    }
    spec.signal_var = std::exp(theta[groups_.size() + 1]);
    spec.noise_var = std::exp(theta[groups_.size() + 2]);
    return spec;
  }

  std::vector<double> pack(const KernelSpec& spec) const {
    std::vector<double> theta(arity());
    theta[0] = std::log(spec.ell_cont);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      double acc = 0.0;
      for (std::size_t idx : groups_[g]) acc += std::log(spec.ell_cat[idx]);
      theta[1 + g] = acc / static_cast<double>(groups_[g].size());
    }
    theta[groups_.size() + 1] = std::log(spec.signal_var);
    theta[groups_.size() + 2] = std::log(spec.noise_var);
    return theta;
  }

  // Negative log marginal likelihood; +inf when the Gram matrix cannot be factored.
  double operator()(const std::vector<double>& theta) const {
    const double inv_ell = std::exp(-theta[0]);
    const double signal = std::exp(theta[groups_.size() + 1]);
    const double noise = std::exp(theta[groups_.size() + 2]);
    std::vector<double> half_inv(groups_.size());
    for (std::size_t g = 0; g < groups_.size(); ++g) half_inv[g] = 0.5 * std::exp(-2.0 * theta[1 + g]);
    const Eigen::Index n = dist_.rows();
    DenseMatrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a(i, i) = signal + noise;
      for (Eigen::Index j = 0; j < i; ++j) {
        double cat = 0.0;
        for (std::size_t g = 0; g < groups_.size(); ++g) cat += group_d2_[g](i, j) * half_inv[g];
        const double v = signal * matern(nu_, dist_(i, j) * inv_ell) * std::exp(-cat);
        a(i, j) = v;
        a(j, i) = v;
      }
    }
    try {
      const CholeskyFactor f = cholesky(a, kCholeskyJitterMax);
      const double value = lml_from_factor(f.lower, y_, nullptr);
      return std::isfinite(value) ? -value : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  }

 private:
  const EncodingLayout& layout_;
  double nu_;
  const Vector& y_;
  std::vector<std::vector<std::size_t>> groups_;
  DenseMatrix dist_;
  std::vector<DenseMatrix> group_d2_;
};

struct Box {
  std::vector<double> lo, hi;
  void clamp(std::vector<double>& x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  }
};

// Bounded Nelder-Mead. Uses the whole evaluation budget: when the simplex
// collapses it is rebuilt around the incumbent.
template <typename F>
std::pair<std::vector<double>, double> nelder_mead(const F& f, std::vector<double> x0, const Box& box, int budget) {
  const std::size_t k = x0.size();
  box.clamp(x0);
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    return f(x);
  };
  std::vector<double> best_x = x0;
  double best_f = eval(x0);

  while (evals < budget) {
    std::vector<std::vector<double>> pts{best_x};
    std::vector<double> vals{best_f};
    for (std::size_t i = 0; i < k && evals < budget; ++i) {
      std::vector<double> p = best_x;
      const double step = 0.15 * (box.hi[i] - box.lo[i]);
      p[i] = p[i] + step <= box.hi[i] ? p[i] + step : p[i] - step;
      pts.push_back(p);
      vals.push_back(eval(p));
    }
    if (pts.size() < k + 1) break;

    while (evals < budget) {
      std::vector<std::size_t> order(k + 1);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
      const std::size_t ib = order.front(), iw = order.back(), isw = order[k - 1];

      double spread = 0.0, diameter = 0.0;
      for (std::size_t i = 0; i <= k; ++i) {
        spread = std::max(spread, std::abs(vals[i] - vals[ib]));
        for (std::size_t d = 0; d < k; ++d) diameter = std::max(diameter, std::abs(pts[i][d] - pts[ib][d]));
      }
      if ((spread < 1e-10 || !std::isfinite(vals[ib])) && diameter < 1e-7) break;

      std::vector<double> c(k, 0.0);
      for (std::size_t i : order) {
        if (i == iw) continue;
        for (std::size_t d = 0; d < k; ++d) c[d] += pts[i][d] / static_cast<double>(k);
      }
      auto along = [&](double t) {
        std::vector<double> p(k);
        for (std::size_t d = 0; d < k; ++d) p[d] = c[d] + t * (pts[iw][d] - c[d]);
        box.clamp(p);
        return p;
      };
      std::vector<double> xr = along(-1.0);
      const double fr = eval(xr);
      if (fr < vals[ib]) {
        std::vector<double> xe = along(-2.0);
        const double fe = evals < budget ? eval(xe) : std::numeric_limits<double>::infinity();
        if (fe < fr) {
          pts[iw] = xe;
          vals[iw] = fe;
        } else {
          pts[iw] = xr;
          vals[iw] = fr;
        }
      } else if (fr < vals[isw]) {
        pts[iw] = xr;
        vals[iw] = fr;
      } else {
        const bool outside = fr < vals[iw];
        std::vector<double> xc = along(outside ? -0.5 : 0.5);
        const double fc = evals < budget ? eval(xc) : std::numeric_limits<double>::infinity();
        if (fc < std::min(fr, vals[iw])) {
          pts[iw] = xc;
          vals[iw] = fc;
        } else {
          for (std::size_t i = 0; i <= k && evals < budget; ++i) {
            if (i == ib) continue;
            for (std::size_t d = 0; d < k; ++d) pts[i][d] = pts[ib][d] + 0.5 * (pts[i][d] - pts[ib][d]);
            vals[i] = eval(pts[i]);
          }
        }
      }
    }
    for (std::size_t i = 0; i <= k; ++i) {
      if (vals[i] < best_f) {
        best_f = vals[i];
        best_x = pts[i];
      }
    }
  }
  return {best_x, best_f};
}

std::shared_ptr<GPModel::State> make_state(const EncodingLayout& layout, std::span<const EncodedPoint> xs,
                                           std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(xs.size()) + " inputs but " + std::to_string(ys.size()) + " targets");
  }
  if (xs.empty()) throw Error(ErrorCode::kInvalidArgument, "GP needs at least one observation");
  for (double v : ys) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "GP targets must be finite");
  }
  auto state = std::make_shared<GPModel::State>();
  state->layout = layout;
  state->x = stack_points(layout, xs);
  state->y_raw.assign(ys.begin(), ys.end());
  standardize(ys, state->y, state->y_mean, state->y_std);
  return state;
}

void factorize(GPModel::State& s) {
  DenseMatrix a = gram(s.kernel, s.layout, s.x);
  a.diagonal().array() += s.kernel.noise_var;
  CholeskyFactor f;
  try {
    f = cholesky(a, kCholeskyJitterMax);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
    throw Error(ErrorCode::kSingularGram, "K + noise I is singular even after the jitter ladder");
  }
  s.chol = std::move(f.lower);
  s.jitter = f.jitter;
  s.lml = lml_from_factor(s.chol, s.y, &s.alpha);
}

}  // namespace

GPModel GPModel::condition(const EncodingLayout& layout, std::span<const EncodedPoint> xs,
                           std::span<const double> ys, const KernelSpec& spec) {
  spec.validate(layout);
  auto state = make_state(layout, xs, ys);
  state->kernel = spec;
  factorize(*state);
  return GPModel(std::move(state));
}

GPModel GPModel::fit(const SearchSpace& space, std::span<const EncodedPoint> xs, std::span<const double> ys,
                     SeededRng& rng, FitOptions options) {
  options.per_dimension_ard = options.per_dimension_ard || space.surrogate.per_dimension_ard;
  return fit(inrbo::layout(space), space.surrogate.nu, xs, ys, rng, options);
}

GPModel GPModel::fit(const EncodingLayout& layout, double nu, std::span<const EncodedPoint> xs,
                     std::span<const double> ys, SeededRng& rng, const FitOptions& options) {
  auto state = make_state(layout, xs, ys);
  KernelSpec start = options.warm_start.value_or(KernelSpec::defaults(layout, nu));
  start.nu = nu;
  start.validate(layout);

  if (xs.size() >= 2) {
    LikelihoodObjective objective(state->layout, nu, state->x, state->y,
                                  ard_groups(state->layout, options.per_dimension_ard));
    const std::size_t k = objective.arity();
    Box box;
    box.lo.assign(k, std::log(options.ell_min));
    box.hi.assign(k, std::log(options.ell_max));
    box.lo[k - 2] = std::log(options.signal_min);
    box.hi[k - 2] = std::log(options.signal_max);
    box.lo[k - 1] = std::log(options.noise_min);
    box.hi[k - 1] = std::log(options.noise_max);

    const int starts = std::max(options.restarts, 1);
    std::vector<std::vector<double>> x0(static_cast<std::size_t>(starts));
    x0[0] = objective.pack(start);
    for (int s = 1; s < starts; ++s) {
      auto& p = x0[static_cast<std::size_t>(s)];
      p.resize(k);
      for (std::size_t d = 0; d < k; ++d) p[d] = rng.uniform(box.lo[d], box.hi[d]);
    }
    std::vector<std::pair<std::vector<double>, double>> results(static_cast<std::size_t>(starts));
    parallel_for(static_cast<std::size_t>(starts), options.workers, [&](std::size_t begin, std::size_t end) {
      for (std::size_t s = begin; s < end; ++s) {
        results[s] = nelder_mead(objective, x0[s], box, options.evals_per_restart);
      }
    });
    std::size_t best = 0;
    for (std::size_t s = 1; s < results.size(); ++s) {
      if (results[s].second < results[best].second) best = s;
    }
    if (!std::isfinite(results[best].second)) {
      throw Error(ErrorCode::kSingularGram, "no hyperparameter setting gives a factorable Gram matrix");
    }
    start = objective.unpack(results[best].first);
  }
  state->kernel = start;
  factorize(*state);
  return GPModel(std::move(state));
}

PosteriorMoments GPModel::posterior(const EncodedPoint& q) const {
  const auto& s = *state_;
  if (static_cast<std::size_t>(q.size()) != s.layout.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "posterior: query has " + std::to_string(q.size()) +
                                                   " coordinates, model has " + std::to_string(s.layout.dim));
  }
  const DenseMatrix kq = cross_kernel(s.kernel, s.layout, q.transpose(), s.x);
  const Vector k_star = kq.row(0).transpose();
  const Vector v = solve_lower(s.chol, k_star);
  return {k_star.dot(s.alpha), std::max(0.0, s.kernel.signal_var - v.squaredNorm())};
}

void GPModel::posterior(const DenseMatrix& q, Vector& mean, Vector& var) const {
  const auto& s = *state_;
  const DenseMatrix kq = cross_kernel(s.kernel, s.layout, q, s.x);  // N x n
  mean = kq * s.alpha;
  const DenseMatrix v = s.chol.triangularView<Eigen::Lower>().solve(kq.transpose());  // n x N
  var.resize(q.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i) var[i] = std::max(0.0, s.kernel.signal_var - v.col(i).squaredNorm());
}

double GPModel::posterior_covariance(const EncodedPoint& a, const EncodedPoint& b) const {
  const auto& s = *state_;
  DenseMatrix q(2, static_cast<Eigen::Index>(s.layout.dim));
  q.row(0) = a.transpose();
  q.row(1) = b.transpose();
  const DenseMatrix kq = cross_kernel(s.kernel, s.layout, q, s.x);
  const Vector va = solve_lower(s.chol, kq.row(0).transpose());
  const Vector vb = solve_lower(s.chol, kq.row(1).transpose());
  return kernel_eval(s.kernel, s.layout, a, b) - va.dot(vb);
}

double GPModel::log_marginal_likelihood() const { return state_->lml; }

double GPModel::f_best() const { return state_->y.maxCoeff(); }

const KernelSpec& GPModel::kernel() const { return state_->kernel; }
const EncodingLayout& GPModel::layout() const { return state_->layout; }
const DenseMatrix& GPModel::x() const { return state_->x; }
const Vector& GPModel::y() const { return state_->y; }
const std::vector<double>& GPModel::y_raw() const { return state_->y_raw; }
double GPModel::y_mean() const { return state_->y_mean; }
double GPModel::y_std() const { return state_->y_std; }
const DenseMatrix& GPModel::chol() const { return state_->chol; }
double GPModel::jitter() const { return state_->jitter; }
const Vector& GPModel::alpha() const { return state_->alpha; }
std::size_t GPModel::size() const { return static_cast<std::size_t>(state_->x.rows()); }

double log_marginal_likelihood(const KernelSpec& spec, const EncodingLayout& layout, const DenseMatrix& xs,
                               const Vector& y) {
  DenseMatrix a = gram(spec, layout, xs);
  a.diagonal().array() += spec.noise_var;
  try {
    return lml_from_factor(cholesky(a, kCholeskyJitterMax).lower, y, nullptr);
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace inrbo
