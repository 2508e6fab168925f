#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "inrbo/numerics.hpp"
#include "inrbo/rng.hpp"

namespace inrbo {

enum class ActivationFamily { kSiren, kGauss, kWire, kFiner };

std::string_view to_string(ActivationFamily family);
std::optional<ActivationFamily> parse_activation(std::string_view name);

enum class Scale { kLinear, kLog };

struct Bounds {
  double low = 0.0;
  double high = 1.0;
  Scale scale = Scale::kLinear;

  /// Maps a value in [low, high] to [0, 1] (in log space for kLog).
  double normalize(double value) const;
  /// Inverse of normalize; t is clamped to [0, 1] first.
  double denormalize(double t) const;
  double midpoint() const { return denormalize(0.5); }
  bool contains(double value) const;
};

/// Per-layer continuous hyperparameters in their fixed encoding order.
enum class LayerParam : std::size_t { kOmega0 = 0, kS0, kBiasScale, kWeightRange, kLr };
inline constexpr std::size_t kLayerParamCount = 5;
std::string_view to_string(LayerParam param);

struct LayerChoice {
  ActivationFamily activation = ActivationFamily::kSiren;
  bool siren_init = false;
  double omega0 = 30.0;
  double s0 = 10.0;
  double bias_scale = 0.0;
  double weight_range = 1.0;
  double lr = 1e-4;

  double param(LayerParam p) const;
  double& param(LayerParam p);

  bool operator==(const LayerChoice&) const = default;
};

struct Configuration {
  bool use_pe = false;
  double pe_scale = 1.0;  // meaningful only when use_pe
  std::vector<LayerChoice> layers;

  bool operator==(const Configuration&) const = default;
};

/// Kernel options carried by the search-space file.
struct SurrogateOptions {
  double nu = 2.5;
  bool per_dimension_ard = false;  // false: one length-scale per one-hot block
};

struct SearchSpace {
  std::vector<std::vector<ActivationFamily>> activations;  // allowed set, per layer
  std::array<Bounds, kLayerParamCount> layer_bounds{};
  Bounds pe_scale{1.0, 64.0, Scale::kLog};
  bool pe_allowed = true;
  SurrogateOptions surrogate;

  std::size_t layer_count() const { return activations.size(); }
  const Bounds& bounds(LayerParam p) const { return layer_bounds[static_cast<std::size_t>(p)]; }

  /// Throws InvalidSpace when the space is degenerate or bounds are invalid.
  void validate() const;

  /// Space with the default bounds: omega0 [1,100] log, s0 [0.5,50] log,
  /// bias_scale [0,20] linear, weight_range [0.25,4] linear, lr [1e-5,1e-2]
  /// log, pe_scale [1,64] log.
  static SearchSpace with_defaults(std::size_t layer_count, std::vector<ActivationFamily> allowed,
                                   bool pe_allowed = true);
};

/// Where each block of an encoded point lives.
///
/// Encoded order: [pe flag, pe_scale, then per layer: one-hot activation,
/// siren_init flag, omega0, s0, bias_scale, weight_range, lr].
struct EncodingLayout {
  struct Block {
    std::size_t offset = 0;
    std::size_t width = 0;
  };

  std::size_t dim = 0;
  std::vector<std::size_t> continuous;  // Matérn block: scalar and binary coordinates
  std::vector<std::size_t> scalar;      // continuous hyperparameters only
  std::vector<std::size_t> binary;      // {0,1} flags
  std::vector<Block> one_hot;           // one block per layer
  std::size_t pe_flag = 0;
  std::size_t pe_scale = 1;

  std::size_t one_hot_width() const;
  /// A layout with only continuous coordinates (no one-hot blocks).
  static EncodingLayout continuous_only(std::size_t dim);
};

using EncodedPoint = Vector;

std::size_t dimension(const SearchSpace& space);
EncodingLayout layout(const SearchSpace& space);

/// Throws OutOfBounds (naming the field) or InvalidArgument.
void validate(const SearchSpace& space, const Configuration& config);

/// Normalized encoding in [0,1]^D. pe_scale is encoded at 0.5 when PE is off.
EncodedPoint encode(const SearchSpace& space, const Configuration& config);

/// Clamps to [0,1], resolves one-hot blocks by argmax (ties to the lowest
/// index) and flags by >= 0.5, and un-normalizes continuous coordinates.
Configuration decode(const SearchSpace& space, const Vector& point);

/// Configuration at the centre of the space: midpoints, first category,
/// flags off.
Configuration default_configuration(const SearchSpace& space);

/// Latin hypercube design: every scalar and binary coordinate is stratified
/// into n equal bins; activations are drawn uniformly.
std::vector<Configuration> sample_lhs(const SearchSpace& space, std::size_t n, SeededRng& rng);

// JSON (search-space file and configuration documents).
SearchSpace space_from_json(const nlohmann::json& doc);
nlohmann::json space_to_json(const SearchSpace& space);
SearchSpace load_search_space(const std::string& path);

Configuration configuration_from_json(const nlohmann::json& doc);
nlohmann::json configuration_to_json(const Configuration& config);
Configuration load_configuration(const std::string& path);

/// Parses a JSON file, turning syntax errors into ConfigError messages with
/// line and column.
nlohmann::json read_json_file(const std::string& path);

}  // namespace inrbo
