#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "inrbo/errors.hpp"
#include "inrbo/sampler.hpp"

namespace inrbo {
namespace {

std::atomic<bool> g_broken_ei{false};

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

EncodedPoint canonical(const SearchSpace& space, const EncodedPoint& x) { return encode(space, decode(space, x)); }

DenseMatrix stack(const std::vector<EncodedPoint>& xs, std::size_t dim) {
  DenseMatrix m(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < xs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  return m;
}

double clamped_mean(const double* values, std::size_t count, double f_best) {
  std::vector<double> gain(count);
  for (std::size_t s = 0; s < count; ++s) gain[s] = std::max(0.0, values[s] - f_best);
  return pairwise_sum(gain) / static_cast<double>(count);
}

std::size_t argmax_first(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

}  // namespace

namespace testing {
void set_broken_ei(bool broken) { g_broken_ei = broken; }
}  // namespace testing

double analytic_ei(double mean, double var, double f_best) {
  if (!(var > 0.0)) return std::max(0.0, mean - f_best);
  const double sd = std::sqrt(var);
  const double z = (mean - f_best) / sd;
  if (g_broken_ei) return sd * (normal_pdf(z) * normal_cdf(z) + z);
  return std::max(0.0, sd * (z * normal_cdf(z) + normal_pdf(z)));
}

double empirical_ei(const GPModel& model, const EncodedPoint& q, const std::vector<PosteriorPath>& paths) {
  if (paths.empty()) throw Error(ErrorCode::kInvalidArgument, "empirical EI needs at least one path");
  std::vector<double> values(paths.size());
  for (std::size_t s = 0; s < paths.size(); ++s) values[s] = eval_path(paths[s], q);
  return clamped_mean(values.data(), values.size(), model.f_best());
}

Vector empirical_ei(const GPModel& model, const DenseMatrix& q, const PathSet& paths) {
  const DenseMatrix f = paths.evaluate(q);
  Vector out(q.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    out[i] = clamped_mean(f.row(i).data(), static_cast<std::size_t>(f.cols()), model.f_best());
  }
  return out;
}

std::vector<EncodedPoint> generate_candidates(const GPModel& model, const SearchSpace& space,
                                              const AcquisitionConfig& cfg, SeededRng& rng) {
  if (cfg.candidate_count == 0) throw Error(ErrorCode::kInvalidArgument, "candidate_count must be at least 1");
  const EncodingLayout& lay = model.layout();
  const std::size_t n_lhs = (cfg.candidate_count + 1) / 2;
  std::vector<EncodedPoint> out;
  out.reserve(cfg.candidate_count);
  for (const auto& c : sample_lhs(space, n_lhs, rng)) out.push_back(encode(space, c));

  const EncodedPoint incumbent = model.x().row(static_cast<Eigen::Index>(argmax_first(model.y()))).transpose();
  constexpr double kResampleProb = 0.2;
  while (out.size() < cfg.candidate_count) {
    EncodedPoint x = incumbent;
    for (const auto& block : lay.one_hot) {
      if (rng.uniform() < kResampleProb) {
        x.segment(static_cast<Eigen::Index>(block.offset), static_cast<Eigen::Index>(block.width)).setZero();
        x[static_cast<Eigen::Index>(block.offset + rng.below(block.width))] = 1.0;
      }
    }
    for (std::size_t b : lay.binary) {
      if (rng.uniform() < kResampleProb) x[static_cast<Eigen::Index>(b)] = rng.below(2) ? 1.0 : 0.0;
    }
    for (std::size_t c : lay.scalar) {
      const auto i = static_cast<Eigen::Index>(c);
      x[i] = std::clamp(x[i] + cfg.refine_step_size * rng.normal(), 0.0, 1.0);
    }
    out.push_back(canonical(space, x));
  }
  return out;
}

AcquisitionResult maximize_acquisition(const GPModel& model, const SearchSpace& space, const AcquisitionConfig& cfg,
                                       SeededRng& rng) {
  if (cfg.sample_count == 0) throw Error(ErrorCode::kInvalidArgument, "sample_count must be at least 1");
  const EncodingLayout& lay = model.layout();
  const PathSet paths(model, cfg.sample_count, cfg.feature_count, rng.substream(0x9a7b5), cfg.workers);

  const std::vector<EncodedPoint> candidates = generate_candidates(model, space, cfg, rng);
  const Vector scores = empirical_ei(model, stack(candidates, lay.dim), paths);
  const std::size_t pick = argmax_first(scores);
  EncodedPoint best = candidates[pick];
  double best_score = scores[static_cast<Eigen::Index>(pick)];

  double step = cfg.refine_step_size;
  for (int pass = 0; pass < cfg.refine_steps; ++pass, step *= 0.5) {
    for (std::size_t c : lay.scalar) {
      const auto i = static_cast<Eigen::Index>(c);
      if (c == lay.pe_scale && best[static_cast<Eigen::Index>(lay.pe_flag)] < 0.5) continue;  // inactive
      std::vector<EncodedPoint> moves;
      for (double dir : {-1.0, 1.0}) {
        EncodedPoint x = best;
        x[i] = std::clamp(x[i] + dir * step, 0.0, 1.0);
        if (x[i] != best[i]) moves.push_back(canonical(space, x));
      }
      if (moves.empty()) continue;
      const Vector s = empirical_ei(model, stack(moves, lay.dim), paths);
      const std::size_t m = argmax_first(s);
      if (s[static_cast<Eigen::Index>(m)] > best_score) {
        best_score = s[static_cast<Eigen::Index>(m)];
        best = moves[m];
      }
    }
  }
  return {decode(space, best), best, best_score};
}

}  // namespace inrbo
