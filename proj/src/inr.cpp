#include "inrbo/inr.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "inrbo/errors.hpp"
#include "inrbo/parallel.hpp"
#include "inrbo/vmath.hpp"

namespace inrbo {
namespace {

// Rows per chunk: small enough that a chunk's activations stay in L2, and
// fixed so partial sums never depend on the worker count.
constexpr Eigen::Index kChunkRows = 256;

std::span<double> flat(DenseMatrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> flat(const DenseMatrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

double hidden_rate(const NetworkSpec& spec, std::size_t layer) {
  return spec.hidden[std::min(layer, spec.hidden.size() - 1)].lr;
}

DenseMatrix features(const NetworkSpec& spec, const DenseMatrix& coords) {
  if (static_cast<std::size_t>(coords.cols()) != spec.input_dim) {
    throw Error(ErrorCode::kDimensionMismatch, "coordinates have " + std::to_string(coords.cols()) +
                                                   " columns, network expects " + std::to_string(spec.input_dim));
  }
  if (!spec.pe) return coords;
  return positional_encode(coords, spec.pe->bands, spec.pe->scale);
}

// Activations and slopes for one chunk of rows; a[0] is the network input.
struct Trace {
  std::vector<DenseMatrix> a;
  std::vector<DenseMatrix> slope;
  DenseMatrix out;
};

void run_forward(const NetworkSpec& spec, const NetworkState& st, const DenseMatrix& input, Trace& t,
                 bool keep_slopes) {
  const std::size_t hidden = spec.hidden.size();
  t.a.resize(hidden + 1);
  t.slope.resize(hidden);
  t.a[0] = input;
  thread_local DenseMatrix z, scratch;
  for (std::size_t l = 0; l < hidden; ++l) {
    z.noalias() = t.a[l] * st.weights[l].transpose();
    z.rowwise() += st.biases[l].transpose();
    t.a[l + 1].resize(z.rows(), z.cols());
    DenseMatrix& s = keep_slopes ? t.slope[l] : scratch;
    s.resize(z.rows(), z.cols());
    activate(spec.hidden[l], flat(z), flat(t.a[l + 1]), flat(s));
    if (!t.a[l + 1].allFinite()) {
      throw Error(ErrorCode::kNonFiniteActivation, "non-finite activation in layer " + std::to_string(l + 1));
    }
  }
  t.out.noalias() = t.a[hidden] * st.weights[hidden].transpose();
  t.out.rowwise() += st.biases[hidden].transpose();
  if (!t.out.allFinite()) {
    throw Error(ErrorCode::kNonFiniteActivation, "non-finite activation in layer " + std::to_string(hidden + 1));
  }
}

Gradients zero_like(const NetworkState& st) {
  Gradients g;
  for (const auto& w : st.weights) g.weights.push_back(DenseMatrix::Zero(w.rows(), w.cols()));
  for (const auto& b : st.biases) g.biases.push_back(Vector::Zero(b.size()));
  return g;
}

void accumulate(Gradients& into, const Gradients& from) {
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += from.weights[l];
    into.biases[l] += from.biases[l];
  }
}

// Squared-error sum and gradient of sum / scale over one chunk.
double chunk_backward(const NetworkSpec& spec, const NetworkState& st, const DenseMatrix& input,
                      const DenseMatrix& targets, double scale, Gradients& g) {
  thread_local Trace t;  // reused across calls; shapes rarely change
  run_forward(spec, st, input, t, true);
  thread_local DenseMatrix delta, back;
  delta = t.out - targets;
  back = delta.array().square();
  const double sse = pairwise_sum(flat(back));
  delta *= 2.0 / scale;
  const std::size_t hidden = spec.hidden.size();
  for (std::size_t l = hidden + 1; l-- > 0;) {
    g.weights[l].noalias() = delta.transpose() * t.a[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    back.noalias() = delta * st.weights[l];
    delta = back.cwiseProduct(t.slope[l - 1]);
  }
  return sse;
}

void check_finite(const Gradients& g) {
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    if (!g.weights[l].allFinite() || !g.biases[l].allFinite()) {
      throw Error(ErrorCode::kNonFiniteGradient, "non-finite gradient in layer " + std::to_string(l + 1));
    }
  }
}

template <typename M>
void adam_update(M& p, M& m, M& v, const M& g, double lr, const AdamWOptions& o, double c1, double c2) {
  p *= 1.0 - lr * o.weight_decay;
  m = o.beta1 * m + (1.0 - o.beta1) * g;
  v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
}

DenseMatrix gather_rows(const DenseMatrix& m, const std::vector<Eigen::Index>& rows) {
  DenseMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

std::size_t NetworkSpec::feature_dim() const { return pe ? 2 * pe->bands * input_dim : input_dim; }

void NetworkSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw Error(ErrorCode::kInvalidArgument, "network dims must be positive");
  if (hidden.empty()) throw Error(ErrorCode::kInvalidArgument, "network needs at least one hidden layer");
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    if (hidden[l].width == 0) {
      throw Error(ErrorCode::kInvalidArgument, "hidden layer " + std::to_string(l + 1) + " has zero width");
    }
  }
  if (pe && pe->bands == 0) throw Error(ErrorCode::kInvalidArgument, "positional encoding needs at least one band");
  if (!(output_init_halfwidth >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "output init half-width must be >= 0");
}

NetworkSpec make_network_spec(const Configuration& config, const NetworkShape& shape) {
  NetworkSpec spec;
  spec.input_dim = shape.input_dim;
  spec.output_dim = shape.output_dim;
  for (const auto& c : config.layers) {
    spec.hidden.push_back({c.activation, c.omega0, c.s0, c.bias_scale, c.weight_range, c.siren_init, c.lr,
                           shape.width});
  }
  if (config.use_pe) spec.pe = PositionalEncoding{shape.pe_bands, config.pe_scale};
  if (shape.output_init_halfwidth) {
    spec.output_init_halfwidth = *shape.output_init_halfwidth;
  } else {
    const double omega = spec.hidden.empty() ? 1.0 : std::max(spec.hidden.back().omega0, 1.0);
    spec.output_init_halfwidth = std::sqrt(6.0 / static_cast<double>(shape.width)) / omega;
  }
  spec.validate();
  return spec;
}

DenseMatrix positional_encode(const DenseMatrix& coords, std::size_t bands, double scale) {
  if (bands == 0) throw Error(ErrorCode::kInvalidArgument, "positional encoding needs at least one band");
  const Eigen::Index d = coords.cols();
  const auto nb = static_cast<Eigen::Index>(bands);
  DenseMatrix out(coords.rows(), 2 * nb * d);
  for (Eigen::Index r = 0; r < coords.rows(); ++r) {
    for (Eigen::Index i = 0; i < d; ++i) {
      double freq = scale * std::numbers::pi;
      for (Eigen::Index j = 0; j < nb; ++j, freq *= 2.0) {
        const double u = freq * coords(r, i);
        out(r, 2 * (i * nb + j)) = std::sin(u);
        out(r, 2 * (i * nb + j) + 1) = std::cos(u);
      }
    }
  }
  return out;
}

void activate(const LayerSpec& layer, std::span<const double> z, std::span<double> value, std::span<double> slope) {
  const double w0 = layer.omega0;
  const double s2 = layer.s0 * layer.s0;
  // Fixed-size scratch blocks keep the work in L1 and avoid allocation.
  constexpr std::size_t kBlock = 256;
  std::array<double, kBlock> u, sn, cs, env;
  for (std::size_t b = 0; b < z.size(); b += kBlock) {
    const std::size_t n = std::min(kBlock, z.size() - b);
    const double* zb = z.data() + b;
    double* v = value.data() + b;
    double* d = slope.data() + b;
    const std::span<double> us(u.data(), n), ss(sn.data(), n), cps(cs.data(), n), es(env.data(), n);
    switch (layer.family) {
      case ActivationFamily::kSiren:
        for (std::size_t i = 0; i < n; ++i) u[i] = w0 * zb[i];
        vmath::sincos(us, ss, cps);
        for (std::size_t i = 0; i < n; ++i) {
          v[i] = sn[i];
          d[i] = w0 * cs[i];
        }
        break;
      case ActivationFamily::kGauss:
        for (std::size_t i = 0; i < n; ++i) u[i] = -s2 * zb[i] * zb[i];
        vmath::exp(us, es);
        for (std::size_t i = 0; i < n; ++i) {
          v[i] = env[i];
          d[i] = -2.0 * s2 * zb[i] * env[i];
        }
        break;
      case ActivationFamily::kWire:
        for (std::size_t i = 0; i < n; ++i) {
          u[i] = w0 * zb[i];
          env[i] = -s2 * zb[i] * zb[i];
        }
        vmath::exp(es, es);
        vmath::sincos(us, ss, cps);
        for (std::size_t i = 0; i < n; ++i) {
          v[i] = cs[i] * env[i];
          d[i] = -w0 * sn[i] * env[i] - 2.0 * s2 * zb[i] * v[i];
        }
        break;
      case ActivationFamily::kFiner:
        // d/dz of (|z| + 1) z is 2|z| + 1, which also gives omega0 at z = 0.
        for (std::size_t i = 0; i < n; ++i) u[i] = w0 * (std::abs(zb[i]) + 1.0) * zb[i];
        vmath::sincos(us, ss, cps);
        for (std::size_t i = 0; i < n; ++i) {
          v[i] = sn[i];
          d[i] = cs[i] * w0 * (2.0 * std::abs(zb[i]) + 1.0);
        }
        break;
    }
  }
}

NetworkState init_network(const NetworkSpec& spec, SeededRng& rng) {
  spec.validate();
  NetworkState st;
  std::size_t fan_in = spec.feature_dim();
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    const bool output = l == spec.hidden.size();
    const std::size_t fan_out = output ? spec.output_dim : spec.hidden[l].width;
    double r = spec.output_init_halfwidth;
    double bias_r = 0.0;
    if (!output) {
      const LayerSpec& h = spec.hidden[l];
      const double base = (l == 0 || !h.siren_init) ? 1.0 / static_cast<double>(fan_in)
                                                    : std::sqrt(6.0 / static_cast<double>(fan_in)) / h.omega0;
      r = h.weight_range * base;
      if (h.family == ActivationFamily::kFiner) bias_r = h.bias_scale;
    }
    DenseMatrix w(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-r, r);
    Vector b = Vector::Zero(static_cast<Eigen::Index>(fan_out));
    if (bias_r > 0.0) {
      for (auto& v : b) v = rng.uniform(-bias_r, bias_r);
    }
    st.m_weights.push_back(DenseMatrix::Zero(w.rows(), w.cols()));
    st.v_weights.push_back(DenseMatrix::Zero(w.rows(), w.cols()));
    st.m_biases.push_back(Vector::Zero(b.size()));
    st.v_biases.push_back(Vector::Zero(b.size()));
    st.weights.push_back(std::move(w));
    st.biases.push_back(std::move(b));
    fan_in = fan_out;
  }
  return st;
}

DenseMatrix forward(const NetworkSpec& spec, const NetworkState& state, const DenseMatrix& coords) {
  const DenseMatrix input = features(spec, coords);
  DenseMatrix out(input.rows(), static_cast<Eigen::Index>(spec.output_dim));
  thread_local Trace t;
  for (Eigen::Index r0 = 0; r0 < input.rows(); r0 += kChunkRows) {
    const Eigen::Index rows = std::min(kChunkRows, input.rows() - r0);
    run_forward(spec, state, input.middleRows(r0, rows), t, false);
    out.middleRows(r0, rows) = t.out;
  }
  return out;
}

LossAndGradients loss_and_gradients(const NetworkSpec& spec, const NetworkState& state, const DenseMatrix& coords,
                                    const DenseMatrix& targets, int workers) {
  if (targets.rows() != coords.rows() || static_cast<std::size_t>(targets.cols()) != spec.output_dim) {
    throw Error(ErrorCode::kDimensionMismatch, "targets must be N x output_dim");
  }
  const DenseMatrix input = features(spec, coords);
  const Eigen::Index n = input.rows();
  LossAndGradients res{0.0, zero_like(state)};
  if (n == 0) return res;
  const double scale = static_cast<double>(n) * static_cast<double>(targets.cols());
  const auto chunks = static_cast<std::size_t>((n + kChunkRows - 1) / kChunkRows);
  std::vector<Gradients> parts(chunks, res.gradients);
  std::vector<double> sse(chunks);
  parallel_for(chunks, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(c) * kChunkRows;
      const Eigen::Index rows = std::min(kChunkRows, n - r0);
      sse[c] = chunk_backward(spec, state, input.middleRows(r0, rows), targets.middleRows(r0, rows), scale, parts[c]);
    }
  });
  res.gradients = std::move(parts[0]);
  for (std::size_t c = 1; c < chunks; ++c) accumulate(res.gradients, parts[c]);
  res.loss = pairwise_sum(sse) / scale;
  check_finite(res.gradients);
  return res;
}

void adamw_step(const NetworkSpec& spec, NetworkState& state, const Gradients& grads, const AdamWOptions& opt) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t l = 0; l < state.weights.size(); ++l) {
    const double lr = hidden_rate(spec, l);
    adam_update(state.weights[l], state.m_weights[l], state.v_weights[l], grads.weights[l], lr, opt, c1, c2);
    adam_update(state.biases[l], state.m_biases[l], state.v_biases[l], grads.biases[l], lr, opt, c1, c2);
  }
}

TrainResult train(const NetworkSpec& spec, const DenseMatrix& coords, const DenseMatrix& targets,
                  const TrainOptions& options, SeededRng& rng) {
  if (options.epochs == 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be at least 1");
  const auto started = std::chrono::steady_clock::now();
  TrainResult res{init_network(spec, rng), {}};
  TrainReport& rep = res.report;
  const std::size_t every = options.history_every ? options.history_every : std::max<std::size_t>(1, options.epochs / 50);
  const auto n = static_cast<std::size_t>(coords.rows());
  const bool full = options.batch == 0 || options.batch >= n;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  auto diverged = [&](double loss) { return !std::isfinite(loss) || loss > options.divergence_limit; };
  for (std::size_t epoch = 1; epoch <= options.epochs && !rep.diverged; ++epoch) {
    double epoch_loss = 0.0;
    try {
      if (full) {
        LossAndGradients lg = loss_and_gradients(spec, res.state, coords, targets, options.workers);
        epoch_loss = lg.loss;
        if (!diverged(epoch_loss)) adamw_step(spec, res.state, lg.gradients, options.adamw);
      } else {
        seeded_shuffle(order.begin(), order.end(), rng);
        std::vector<double> batch_losses;
        for (std::size_t b = 0; b < n; b += options.batch) {
          const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(b),
                                               order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + options.batch)));
          LossAndGradients lg =
              loss_and_gradients(spec, res.state, gather_rows(coords, rows), gather_rows(targets, rows), options.workers);
          batch_losses.push_back(lg.loss * static_cast<double>(rows.size()));
          if (diverged(lg.loss)) break;
          adamw_step(spec, res.state, lg.gradients, options.adamw);
        }
        epoch_loss = pairwise_sum(batch_losses) / static_cast<double>(n);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFiniteActivation && e.code() != ErrorCode::kNonFiniteGradient) throw;
      epoch_loss = std::numeric_limits<double>::infinity();
    }
    rep.epochs_run = epoch;
    if (diverged(epoch_loss)) {
      rep.diverged = true;
      epoch_loss = std::numeric_limits<double>::infinity();
    }
    if (epoch % every == 0 || epoch == options.epochs || rep.diverged) rep.history.emplace_back(epoch, epoch_loss);
  }

  rep.final_loss = std::numeric_limits<double>::infinity();
  if (!rep.diverged) {
    try {
      const DenseMatrix out = forward(spec, res.state, coords);
      const DenseMatrix sq = (out - targets).array().square();
      rep.final_loss = pairwise_sum(flat(sq)) / static_cast<double>(std::max<Eigen::Index>(1, sq.size()));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFiniteActivation) throw;
    }
    if (diverged(rep.final_loss)) {
      rep.diverged = true;
      rep.final_loss = std::numeric_limits<double>::infinity();
    }
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

Configuration family_default(ActivationFamily family, std::size_t layer_count) {
  Configuration c;
  for (std::size_t l = 0; l < layer_count; ++l) {
    LayerChoice layer;
    layer.activation = family;
    layer.siren_init = family != ActivationFamily::kGauss;
    layer.lr = 1e-4;
    switch (family) {
      case ActivationFamily::kSiren: layer.omega0 = 30.0; break;
      case ActivationFamily::kGauss: layer.s0 = 10.0; break;
      case ActivationFamily::kWire:
        layer.omega0 = 20.0;
        layer.s0 = 10.0;
        break;
      case ActivationFamily::kFiner:
        layer.omega0 = 30.0;
        layer.bias_scale = l == 0 ? 10.0 : 0.0;
        break;
    }
    c.layers.push_back(layer);
  }
  return c;
}

}  // namespace inrbo
