#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "inrbo/config_space.hpp"
#include "inrbo/numerics.hpp"
#include "inrbo/rng.hpp"

namespace inrbo {

/// Activation and initialization settings of one hidden layer.
struct LayerSpec {
  ActivationFamily family = ActivationFamily::kSiren;
  double omega0 = 30.0;
  double s0 = 10.0;
  double bias_scale = 0.0;  // FINER bias init half-width
  double weight_range = 1.0;
  bool siren_init = false;
  double lr = 1e-4;
  std::size_t width = 64;
};

struct PositionalEncoding {
  std::size_t bands = 4;
  double scale = 1.0;
};

struct NetworkSpec {
  std::size_t input_dim = 2;
  std::size_t output_dim = 1;
  std::vector<LayerSpec> hidden;
  std::optional<PositionalEncoding> pe;
  double output_init_halfwidth = 1e-4;

  /// Width of the first layer's input (after positional encoding).
  std::size_t feature_dim() const;
  /// Throws InvalidArgument on empty or zero-width layers.
  void validate() const;
};

/// Task-side shape of a network; the Configuration supplies everything else.
struct NetworkShape {
  std::size_t input_dim = 2;
  std::size_t output_dim = 1;
  std::size_t width = 64;
  std::size_t pe_bands = 4;
  /// Defaults to sqrt(6 / width) / max(last omega0, 1) when unset.
  std::optional<double> output_init_halfwidth;
};

NetworkSpec make_network_spec(const Configuration& config, const NetworkShape& shape);

/// Layer l maps rows of the previous activation through W (out x in) and b.
/// The last entry is the linear output layer.
struct NetworkState {
  std::vector<DenseMatrix> weights;
  std::vector<Vector> biases;
  std::vector<DenseMatrix> m_weights, v_weights;  // AdamW moments
  std::vector<Vector> m_biases, v_biases;
  long step = 0;
};

struct Gradients {
  std::vector<DenseMatrix> weights;
  std::vector<Vector> biases;
};

/// [sin(2^j scale pi x_i), cos(2^j scale pi x_i)] for j < bands, grouped per
/// input dimension i.
DenseMatrix positional_encode(const DenseMatrix& coords, std::size_t bands, double scale);

/// Values and slopes of a layer's activation at preactivations z.
void activate(const LayerSpec& layer, std::span<const double> z, std::span<double> value, std::span<double> slope);

NetworkState init_network(const NetworkSpec& spec, SeededRng& rng);

/// Network output (N x output_dim). Throws NonFiniteActivation naming the layer.
DenseMatrix forward(const NetworkSpec& spec, const NetworkState& state, const DenseMatrix& coords);

struct LossAndGradients {
  double loss = 0.0;
  Gradients gradients;
};

/// Mean squared error over all N x output_dim entries and its exact gradient.
/// Rows are processed in fixed chunks whose partial sums are combined in a
/// fixed order, so the result does not depend on the worker count.
LossAndGradients loss_and_gradients(const NetworkSpec& spec, const NetworkState& state, const DenseMatrix& coords,
                                    const DenseMatrix& targets, int workers = 1);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled-weight-decay Adam with each layer's own rate; the output layer
/// uses the last hidden layer's rate.
void adamw_step(const NetworkSpec& spec, NetworkState& state, const Gradients& grads, const AdamWOptions& opt = {});

struct TrainOptions {
  std::size_t epochs = 500;
  std::size_t batch = 0;          // 0: full batch
  std::size_t history_every = 0;  // 0: about 50 entries
  double divergence_limit = 1e6;
  AdamWOptions adamw;
  int workers = 1;
};

struct TrainReport {
  double final_loss = 0.0;  // +inf after divergence
  std::vector<std::pair<std::size_t, double>> history;  // (epoch, loss)
  std::size_t epochs_run = 0;
  bool diverged = false;
  double wall_seconds = 0.0;
};

struct TrainResult {
  NetworkState state;
  TrainReport report;
};

/// Initializes from rng and trains. Non-finite or exploding losses stop the
/// run with diverged = true instead of throwing.
TrainResult train(const NetworkSpec& spec, const DenseMatrix& coords, const DenseMatrix& targets,
                  const TrainOptions& options, SeededRng& rng);

/// Reference configurations used as fixed-budget baselines: SIREN omega0 = 30,
/// GAUSS s0 = 10, WIRE omega0 = 20 / s0 = 10, FINER first-layer bias scale 10.
Configuration family_default(ActivationFamily family, std::size_t layer_count);

}  // namespace inrbo
