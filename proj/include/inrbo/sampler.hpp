#pragma once

#include <cstdint>
#include <vector>

#include "inrbo/config_space.hpp"
#include "inrbo/gp.hpp"
#include "inrbo/rng.hpp"

namespace inrbo {

/// Random-Fourier-feature draw from the GP prior:
///   f(x) = amplitude * sum_i weights[i] * cos(frequencies.row(i) . x + phases[i])
/// plus one draw of observation noise per training point, used by the
/// posterior update.
struct PriorPath {
  DenseMatrix frequencies;  // m x D
  Vector phases;            // m
  Vector weights;           // m
  double amplitude = 0.0;   // sqrt(2 signal_var / m)
  Vector noise;             // n, observation-noise draw at the training inputs

  std::size_t feature_count() const { return static_cast<std::size_t>(phases.size()); }
  double operator()(const EncodedPoint& q) const;
  /// Values at every row of q.
  Vector operator()(const DenseMatrix& q) const;
};

/// Posterior function sample f(x) = prior(x) + k(x, X) w with
/// w = (K + noise I)^-1 (y - prior(X) - noise draw).
struct PosteriorPath {
  PriorPath prior;
  KernelSpec kernel;
  EncodingLayout layout;
  DenseMatrix train_x;
  Vector correction_weights;
};

/// Draws a prior path for the model's kernel. m >= 64.
PriorPath sample_prior_path(const GPModel& model, std::size_t m, SeededRng& rng);

/// Conditions a prior path on the model's standardized targets.
PosteriorPath draw_posterior_path(const GPModel& model, PriorPath prior);
/// Conditions a prior path on explicit standardized targets (one per training point).
PosteriorPath draw_posterior_path(const GPModel& model, PriorPath prior, const Vector& targets);

double eval_path(const PosteriorPath& path, const EncodedPoint& q);

/// S posterior paths evaluated together: one stacked feature GEMM per block of
/// query rows and a single cross-kernel product for all corrections.
class PathSet {
 public:
  /// Paths are drawn from rng.substream(s) for s = 0..count-1.
  PathSet(const GPModel& model, std::size_t count, std::size_t features, const SeededRng& rng, int workers = 1);

  std::size_t size() const { return paths_.size(); }
  const PosteriorPath& path(std::size_t s) const { return paths_[s]; }
  const std::vector<PosteriorPath>& paths() const { return paths_; }

  /// N x S matrix of path values at the rows of q. Identical for every worker count.
  DenseMatrix evaluate(const DenseMatrix& q) const;

 private:
  GPModel model_;
  std::vector<PosteriorPath> paths_;
  DenseMatrix stacked_freq_;  // (S m) x D
  Vector stacked_phase_;
  DenseMatrix weights_;  // n x S correction weights
  int workers_;
};

/// Closed-form expected improvement sd * (z Phi(z) + phi(z)), z = (mean - f_best) / sd.
double analytic_ei(double mean, double var, double f_best);

struct AcquisitionConfig {
  std::size_t sample_count = 64;     // S
  std::size_t candidate_count = 2048;
  int refine_steps = 2;
  double refine_step_size = 0.1;
  std::size_t feature_count = 1024;  // random features per path
  int workers = 1;
};

/// Monte-Carlo expected improvement: mean over paths of max(0, f_s(q) - f_best),
/// with f_best the largest standardized observation.
double empirical_ei(const GPModel& model, const EncodedPoint& q, const std::vector<PosteriorPath>& paths);
/// Same estimator for every row of q, sharing the paths across rows.
Vector empirical_ei(const GPModel& model, const DenseMatrix& q, const PathSet& paths);

/// Candidate pool: Latin-hypercube draws followed by perturbations of the
/// incumbent. Every candidate is a canonical encoding (encode of its decode).
std::vector<EncodedPoint> generate_candidates(const GPModel& model, const SearchSpace& space,
                                              const AcquisitionConfig& cfg, SeededRng& rng);

struct AcquisitionResult {
  Configuration configuration;
  EncodedPoint point;
  double eei = 0.0;
};

/// Maximizes the empirical EI over the mixed space: candidate scoring then
/// coordinate refinement of the best candidate's continuous hyperparameters.
AcquisitionResult maximize_acquisition(const GPModel& model, const SearchSpace& space,
                                       const AcquisitionConfig& cfg, SeededRng& rng);

namespace testing {
/// Replaces analytic_ei with a wrong bracket; used by the self-test mutation check.
void set_broken_ei(bool broken);
}  // namespace testing

}  // namespace inrbo
