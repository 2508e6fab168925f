#include "inrbo/sampler.hpp"

#include <cmath>
#include <numbers>

#include "inrbo/errors.hpp"
#include "inrbo/parallel.hpp"
#include "inrbo/vmath.hpp"

namespace inrbo {
namespace {

constexpr Eigen::Index kRowChunk = 64;
constexpr std::size_t kPathsPerBlock = 4;

void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": point has " + std::to_string(got) +
                                                   " coordinates, model has " + std::to_string(want));
  }
}

// In-place cos over a contiguous block.
void cos_in_place(double* data, std::size_t count) {
  std::span<double> z(data, count);
  vmath::cos(z, z);
}

}  // namespace

double PriorPath::operator()(const EncodedPoint& q) const {
  require_dim(q.size(), frequencies.cols(), "prior path");
  Vector z = frequencies * q + phases;
  cos_in_place(z.data(), static_cast<std::size_t>(z.size()));
  return amplitude * weights.dot(z);
}

Vector PriorPath::operator()(const DenseMatrix& q) const {
  require_dim(q.cols(), frequencies.cols(), "prior path");
  DenseMatrix z = q * frequencies.transpose();
  z.rowwise() += phases.transpose();
  cos_in_place(z.data(), static_cast<std::size_t>(z.size()));
  return amplitude * (z * weights);
}

PriorPath sample_prior_path(const GPModel& model, std::size_t m, SeededRng& rng) {
  if (m < 64) throw Error(ErrorCode::kInvalidArgument, "prior paths need at least 64 random features");
  const KernelSpec& k = model.kernel();
  const EncodingLayout& lay = model.layout();
  const int dof = static_cast<int>(std::lround(2.0 * k.nu));  // Matérn spectral law is Student-t with 2 nu dof
  PriorPath p;
  const auto mi = static_cast<Eigen::Index>(m);
  p.frequencies = DenseMatrix::Zero(mi, static_cast<Eigen::Index>(lay.dim));
  for (Eigen::Index i = 0; i < mi; ++i) {
    double chi2 = 0.0;
    for (int d = 0; d < dof; ++d) {
      const double g = rng.normal();
      chi2 += g * g;
    }
    const double t_scale = std::sqrt(2.0 * k.nu / chi2) / k.ell_cont;
    for (std::size_t c : lay.continuous) p.frequencies(i, static_cast<Eigen::Index>(c)) = rng.normal() * t_scale;
    std::size_t j = 0;
    for (const auto& block : lay.one_hot) {
      for (std::size_t w = 0; w < block.width; ++w, ++j) {
        p.frequencies(i, static_cast<Eigen::Index>(block.offset + w)) = rng.normal() / k.ell_cat[j];
      }
    }
  }
  p.phases.resize(mi);
  for (auto& v : p.phases) v = rng.uniform(0.0, 2.0 * std::numbers::pi);
  p.weights.resize(mi);
  for (auto& v : p.weights) v = rng.normal();
  p.amplitude = std::sqrt(2.0 * k.signal_var / static_cast<double>(m));
  p.noise.resize(static_cast<Eigen::Index>(model.size()));
  const double noise_sd = std::sqrt(k.noise_var + model.jitter());
  for (auto& v : p.noise) v = rng.normal() * noise_sd;
  return p;
}

PosteriorPath draw_posterior_path(const GPModel& model, PriorPath prior) {
  return draw_posterior_path(model, std::move(prior), model.y());
}

PosteriorPath draw_posterior_path(const GPModel& model, PriorPath prior, const Vector& targets) {
  require_dim(targets.size(), static_cast<Eigen::Index>(model.size()), "posterior path targets");
  require_dim(prior.noise.size(), static_cast<Eigen::Index>(model.size()), "posterior path noise");
  PosteriorPath path;
  const Vector residual = targets - (prior(model.x()) + prior.noise);
  path.correction_weights = solve_cholesky(model.chol(), residual);
  path.prior = std::move(prior);
  path.kernel = model.kernel();
  path.layout = model.layout();
  path.train_x = model.x();
  return path;
}

double eval_path(const PosteriorPath& path, const EncodedPoint& q) {
  require_dim(q.size(), static_cast<Eigen::Index>(path.layout.dim), "eval_path");
  const DenseMatrix k = cross_kernel(path.kernel, path.layout, q.transpose(), path.train_x);
  return path.prior(q) + k.row(0).dot(path.correction_weights);
}

PathSet::PathSet(const GPModel& model, std::size_t count, std::size_t features, const SeededRng& rng, int workers)
    : model_(model), paths_(count), workers_(workers) {
  if (count == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one posterior path");
  parallel_for(count, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      SeededRng r = rng.substream(s);
      paths_[s] = draw_posterior_path(model, sample_prior_path(model, features, r));
    }
  });
  const auto m = static_cast<Eigen::Index>(features);
  stacked_freq_.resize(m * static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(model.layout().dim));
  stacked_phase_.resize(m * static_cast<Eigen::Index>(count));
  weights_.resize(static_cast<Eigen::Index>(model.size()), static_cast<Eigen::Index>(count));
  for (std::size_t s = 0; s < count; ++s) {
    const auto off = static_cast<Eigen::Index>(s) * m;
    stacked_freq_.middleRows(off, m) = paths_[s].prior.frequencies;
    stacked_phase_.segment(off, m) = paths_[s].prior.phases;
    weights_.col(static_cast<Eigen::Index>(s)) = paths_[s].correction_weights;
  }
}

DenseMatrix PathSet::evaluate(const DenseMatrix& q) const {
  require_dim(q.cols(), stacked_freq_.cols(), "path set");
  const Eigen::Index n = q.rows();
  const auto count = static_cast<Eigen::Index>(paths_.size());
  const Eigen::Index m = stacked_phase_.size() / count;
  DenseMatrix out(n, count);
  const auto chunks = static_cast<std::size_t>((n + kRowChunk - 1) / kRowChunk);
  parallel_for(chunks, workers_, [&](std::size_t begin, std::size_t end) {
    DenseMatrix z;
    for (std::size_t c = begin; c < end; ++c) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(c) * kRowChunk;
      const Eigen::Index rows = std::min(kRowChunk, n - r0);
      const auto qc = q.middleRows(r0, rows);
      out.middleRows(r0, rows) = cross_kernel(model_.kernel(), model_.layout(), qc, model_.x()) * weights_;
      for (Eigen::Index s0 = 0; s0 < count; s0 += static_cast<Eigen::Index>(kPathsPerBlock)) {
        const Eigen::Index ps = std::min<Eigen::Index>(static_cast<Eigen::Index>(kPathsPerBlock), count - s0);
        z.noalias() = qc * stacked_freq_.middleRows(s0 * m, ps * m).transpose();
        z.rowwise() += stacked_phase_.segment(s0 * m, ps * m).transpose();
        cos_in_place(z.data(), static_cast<std::size_t>(z.size()));
        for (Eigen::Index p = 0; p < ps; ++p) {
          const auto& prior = paths_[static_cast<std::size_t>(s0 + p)].prior;
          out.col(s0 + p).segment(r0, rows) += prior.amplitude * (z.middleCols(p * m, m) * prior.weights);
        }
      }
    }
  });
  return out;
}

}  // namespace inrbo
