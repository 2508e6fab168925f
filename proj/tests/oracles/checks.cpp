#include "oracles/checks.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <sstream>
#include <vector>

#include "inrbo/bo_driver.hpp"
#include "inrbo/gp.hpp"
#include "inrbo/inr.hpp"
#include "inrbo/sampler.hpp"
#include "oracles/oracles.hpp"

namespace inrbo::checks {
namespace {

const std::vector<ActivationFamily> kAll{ActivationFamily::kSiren, ActivationFamily::kGauss, ActivationFamily::kWire,
                                         ActivationFamily::kFiner};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Verdict finish(std::string name, bool passed, const std::ostringstream& detail, const Timer& timer) {
  return {std::move(name), passed, detail.str(), timer.seconds()};
}

KernelSpec random_spec(const EncodingLayout& lay, SeededRng& rng) {
  KernelSpec s = KernelSpec::defaults(lay, std::array{0.5, 1.5, 2.5}[rng.below(3)]);
  s.ell_cont = std::exp(rng.uniform(std::log(0.05), std::log(3.0)));
  for (double& l : s.ell_cat) l = std::exp(rng.uniform(std::log(0.1), std::log(3.0)));
  s.signal_var = std::exp(rng.uniform(std::log(0.2), std::log(5.0)));
  s.noise_var = std::exp(rng.uniform(std::log(1e-4), std::log(0.5)));
  return s;
}

std::vector<EncodedPoint> random_points(const SearchSpace& space, std::size_t n, SeededRng& rng) {
  std::vector<EncodedPoint> xs;
  for (const auto& c : sample_lhs(space, n, rng)) xs.push_back(encode(space, c));
  return xs;
}

DenseMatrix stack(const std::vector<EncodedPoint>& xs) {
  DenseMatrix m(static_cast<Eigen::Index>(xs.size()), xs[0].size());
  for (std::size_t i = 0; i < xs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  return m;
}

// Fixed-hyperparameter model on a smooth 2-D function.
GPModel smooth_model(std::size_t n, double noise, std::uint64_t seed, double ell = 0.4) {
  const EncodingLayout lay = EncodingLayout::continuous_only(2);
  SeededRng rng(seed);
  std::vector<EncodedPoint> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(2);
    x << rng.uniform(), rng.uniform();
    xs.push_back(x);
    ys.push_back(std::sin(4.0 * x[0]) + x.sum());
  }
  KernelSpec spec = KernelSpec::defaults(lay);
  spec.ell_cont = ell;
  spec.signal_var = 1.3;
  spec.noise_var = noise;
  return GPModel::condition(lay, xs, ys, spec);
}

DenseMatrix random_probes(int count, SeededRng& rng) {
  DenseMatrix q(count, 2);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.uniform();
  return q;
}

std::vector<double> flatten(const std::vector<DenseMatrix>& w, const std::vector<Vector>& b) {
  std::vector<double> x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    x.insert(x.end(), w[l].data(), w[l].data() + w[l].size());
    x.insert(x.end(), b[l].data(), b[l].data() + b[l].size());
  }
  return x;
}

void unflatten(const std::vector<double>& x, NetworkState& st) {
  std::size_t k = 0;
  for (std::size_t l = 0; l < st.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < st.weights[l].size(); ++i) st.weights[l].data()[i] = x[k++];
    for (Eigen::Index i = 0; i < st.biases[l].size(); ++i) st.biases[l][i] = x[k++];
  }
}

}  // namespace

Verdict gp_posterior(int instances, std::uint64_t seed) {
  const Timer timer;
  const SearchSpace space = SearchSpace::with_defaults(2, kAll);
  const EncodingLayout lay = layout(space);
  SeededRng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const std::size_t n = 1 + rng.below(8);
    const KernelSpec spec = random_spec(lay, rng);
    const auto xs = random_points(space, n, rng);
    std::vector<double> ys(n);
    for (double& v : ys) v = rng.normal() * 3.0 + 1.0;
    const GPModel model = GPModel::condition(lay, xs, ys, spec);
    const DenseMatrix xm = stack(xs);
    worst = std::max(worst, std::abs(model.log_marginal_likelihood() -
                                     oracle::log_marginal_likelihood(spec, lay, xm, model.y())));
    for (const auto& q : random_points(space, 3, rng)) {
      const PosteriorMoments m = model.posterior(q);
      const oracle::Moments o = oracle::posterior(spec, lay, xm, model.y(), q);
      worst = std::max({worst, std::abs(m.mean - o.mean), std::abs(m.var - std::max(0.0, o.var))});
    }
  }
  std::ostringstream d;
  d << instances << " instances, max abs deviation " << worst;
  return finish("gp_posterior", worst < 1e-8, d, timer);
}

Verdict kernel_psd(int matrices, int max_n, std::uint64_t seed) {
  const Timer timer;
  SeededRng rng(seed);
  double worst_ratio = -1e300;
  bool ok = true;
  for (int t = 0; t < matrices; ++t) {
    const SearchSpace space = SearchSpace::with_defaults(1 + rng.below(3), kAll);
    const EncodingLayout lay = layout(space);
    const std::size_t n = 2 + rng.below(static_cast<std::uint64_t>(max_n - 1));
    const KernelSpec spec = random_spec(lay, rng);
    const DenseMatrix g = gram(spec, lay, random_points(space, n, rng));
    const Eigen::MatrixXd sym = g;
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues()[0];
    const double bound = -1e-8 * static_cast<double>(n) * spec.signal_var;
    ok = ok && lo >= bound;
    worst_ratio = std::max(worst_ratio, -lo / (static_cast<double>(n) * spec.signal_var));
  }
  std::ostringstream d;
  d << matrices << " Gram matrices, worst -lambda_min/(n signal_var) " << worst_ratio;
  return finish("kernel_psd", ok, d, timer);
}

Verdict matheron_moments(int paths, int probes, std::uint64_t seed) {
  const Timer timer;
  const GPModel model = smooth_model(20, 1e-2, seed);
  const PathSet set(model, static_cast<std::size_t>(paths), 1024, SeededRng(seed + 1));
  SeededRng rng(seed + 2);
  const DenseMatrix q = random_probes(probes, rng);
  const DenseMatrix f = set.evaluate(q);  // probes x paths
  const double n = static_cast<double>(paths);
  const auto& lay = model.layout();

  double worst = 0.0;  // largest deviation in standard errors
  std::vector<Vector> centred;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Vector row = f.row(i).transpose();
    const double mean = row.mean();
    const Vector c = row.array() - mean;
    const double m2 = c.squaredNorm() / n;
    const double m4 = c.array().pow(4).sum() / n;
    const double var = m2 * n / (n - 1);
    const oracle::Moments o = oracle::posterior(model.kernel(), lay, model.x(), model.y(), q.row(i).transpose());
    const double mean_se = std::sqrt(m2 / n), var_se = std::sqrt(std::max(m4 - m2 * m2, 1e-300) / n);
    worst = std::max({worst, std::abs(mean - o.mean) / mean_se, std::abs(var - o.var) / var_se});
    centred.push_back(c);
  }
  for (Eigen::Index i = 0; i + 1 < q.rows(); ++i) {
    const Vector prod = centred[i].cwiseProduct(centred[i + 1]);
    const double cov = prod.sum() / (n - 1);
    const double se = std::sqrt((prod.array() - prod.mean()).square().sum() / (n - 1) / n);
    const double exact = oracle::posterior_covariance(model.kernel(), lay, model.x(), q.row(i).transpose(),
                                                      q.row(i + 1).transpose());
    worst = std::max(worst, std::abs(cov - exact) / se);
  }
  std::ostringstream d;
  d << paths << " paths, " << probes << " probes, worst deviation " << worst << " SE";
  return finish("matheron_moments", worst < 4.0, d, timer);
}

namespace {

struct EiProbes {
  DenseMatrix points;
  std::vector<double> exact;
};

// Up to 10 of 64 random probes where the analytic EI exceeds 0.01.
EiProbes ei_probes(const GPModel& model, std::uint64_t seed) {
  SeededRng rng(seed);
  const DenseMatrix candidates = random_probes(64, rng);
  std::vector<Eigen::Index> keep;
  EiProbes out;
  for (Eigen::Index i = 0; i < candidates.rows() && keep.size() < 10; ++i) {
    const auto m = model.posterior(candidates.row(i).transpose());
    const double ei = analytic_ei(m.mean, m.var, model.f_best());
    if (ei > 0.01) {
      keep.push_back(i);
      out.exact.push_back(ei);
    }
  }
  out.points.resize(static_cast<Eigen::Index>(keep.size()), 2);
  for (std::size_t k = 0; k < keep.size(); ++k) out.points.row(static_cast<Eigen::Index>(k)) = candidates.row(keep[k]);
  return out;
}

}  // namespace

Verdict eei_consistency(int samples, int repeats, std::uint64_t seed) {
  const Timer timer;
  std::ostringstream d;
  const GPModel model = smooth_model(20, 1e-3, seed);
  const EiProbes probes = ei_probes(model, seed + 1);
  if (probes.exact.empty()) {
    d << "no probe with EI > 0.01";
    return finish("eei_consistency", false, d, timer);
  }
  const PathSet big(model, static_cast<std::size_t>(samples), 1024, SeededRng(seed + 2));
  const Vector est = empirical_ei(model, probes.points, big);
  double worst_rel = 0.0;
  for (std::size_t k = 0; k < probes.exact.size(); ++k) {
    const double e = probes.exact[k];
    worst_rel = std::max(worst_rel, std::abs(est[static_cast<Eigen::Index>(k)] - e) / e);
  }
  bool ok = worst_rel < 0.05;
  d << probes.exact.size() << " probes, max relative error " << worst_rel << " at S=" << samples;

  if (repeats > 0) {
    // Short length-scale keeps the posterior variance a sizeable fraction of
    // the prior, so 64-feature paths carry no visible approximation bias and
    // a million paths stay within budget.
    const GPModel rough = smooth_model(20, 1e-3, seed, 0.1);
    const EiProbes p = ei_probes(rough, seed + 1);
    if (p.exact.empty()) {
      d << "; no trend probe with EI > 0.01";
      return finish("eei_consistency", false, d, timer);
    }
    double mse_small = 0.0, mse_large = 0.0;
    for (int r = 0; r < repeats; ++r) {
      const PathSet small(rough, 4096, 64, SeededRng(seed + 100, 2 * static_cast<std::uint64_t>(r)));
      const PathSet large(rough, 16384, 64, SeededRng(seed + 100, 2 * static_cast<std::uint64_t>(r) + 1));
      const Vector es = empirical_ei(rough, p.points, small), el = empirical_ei(rough, p.points, large);
      for (std::size_t k = 0; k < p.exact.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        mse_small += (es[i] - p.exact[k]) * (es[i] - p.exact[k]);
        mse_large += (el[i] - p.exact[k]) * (el[i] - p.exact[k]);
      }
    }
    const double ratio = std::sqrt(mse_large / mse_small);
    ok = ok && ratio < 0.5;
    d << "; RMSE(16384)/RMSE(4096) = " << ratio << " over " << repeats << " repeats (target < 0.5, expected 0.5)";
  }
  return finish("eei_consistency", ok, d, timer);
}

Verdict analytic_ei_integral() {
  const Timer timer;
  double worst = 0.0;
  const double f_best = 0.3;
  for (double z : {-3.0, -1.5, 0.0, 1.0, 2.5}) {
    for (double sd : {0.01, 0.1, 0.5, 1.0, 3.0}) {
      const double mean = f_best + z * sd;
      worst = std::max(worst,
                       std::abs(analytic_ei(mean, sd * sd, f_best) - oracle::expected_improvement_integral(mean, sd, f_best)));
    }
  }
  std::ostringstream d;
  d << "5x5 (Z, sigma) grid, max abs deviation " << worst;
  return finish("analytic_ei_integral", worst < 1e-6, d, timer);
}

Verdict payoff_counterexample() {
  const Timer timer;
  const PayoffReport r = inrbo::payoff_counterexample();
  const bool ok = r.greedy_choice == std::array<char, 2>{'B', 'A'} && r.greedy_value == 10.0 &&
                  r.global_choice == std::array<char, 2>{'A', 'A'} && r.global_value == 12.0 &&
                  r.greedy_value < r.global_value;
  std::ostringstream d;
  d << "greedy=" << r.greedy_value << " at (" << r.greedy_choice[0] << "," << r.greedy_choice[1]
    << "), global=" << r.global_value << " at (" << r.global_choice[0] << "," << r.global_choice[1] << ")";
  return finish("payoff_counterexample", ok, d, timer);
}

Verdict gradients(int instances_per_family, std::uint64_t seed) {
  const Timer timer;
  double worst = 0.0;
  std::string worst_family;
  for (ActivationFamily family : kAll) {
    for (int t = 0; t < instances_per_family; ++t) {
      SeededRng rng(seed, static_cast<std::uint64_t>(t) * 4 + static_cast<std::uint64_t>(family));
      NetworkSpec spec;
      spec.input_dim = 2;
      spec.output_dim = 1 + rng.below(2);
      spec.output_init_halfwidth = 0.1;
      if (t % 4 == 3) spec.pe = PositionalEncoding{2, rng.uniform(0.5, 2.0)};
      for (int l = 0; l < 2; ++l) {
        LayerSpec h;
        h.family = family;
        h.width = 8;
        h.omega0 = std::exp(rng.uniform(0.0, std::log(30.0)));
        h.s0 = std::exp(rng.uniform(std::log(0.5), std::log(5.0)));
        h.bias_scale = rng.uniform(0.0, 1.0);
        h.weight_range = rng.uniform(0.5, 2.0);
        h.siren_init = rng.below(2) == 1;
        spec.hidden.push_back(h);
      }
      NetworkState st = init_network(spec, rng);
      DenseMatrix x(6, 2), y(6, static_cast<Eigen::Index>(spec.output_dim));
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
      for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1.0, 1.0);
      const Gradients g = loss_and_gradients(spec, st, x, y).gradients;
      const std::vector<double> analytic = flatten(g.weights, g.biases);
      NetworkState probe = st;
      const std::vector<double> fd = oracle::central_difference(
          [&](const std::vector<double>& p) {
            unflatten(p, probe);
            return oracle::mlp_loss(spec, probe, x, y);
          },
          flatten(st.weights, st.biases), 1e-5);
      for (std::size_t i = 0; i < fd.size(); ++i) {
        const double err =
            std::abs(analytic[i] - fd[i]) / std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-6});
        if (err > worst) {
          worst = err;
          worst_family = std::string(to_string(family));
        }
      }
    }
  }
  std::ostringstream d;
  d << instances_per_family << " instances per family, worst relative error " << worst;
  if (!worst_family.empty()) d << " (" << worst_family << ")";
  return finish("gradients", worst < 1e-4, d, timer);
}

}  // namespace inrbo::checks
