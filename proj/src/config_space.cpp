#include "inrbo/config_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "inrbo/errors.hpp"

namespace inrbo {
namespace {

constexpr std::array<std::string_view, kLayerParamCount> kParamNames{"omega0", "s0", "bias_scale", "weight_range",
                                                                     "lr"};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

void check_bounds(const Bounds& b, const std::string& name) {
  if (!std::isfinite(b.low) || !std::isfinite(b.high) || !(b.low < b.high)) {
    throw Error(ErrorCode::kInvalidSpace, name + ": bounds must satisfy low < high (got [" + fmt_double(b.low) +
                                              ", " + fmt_double(b.high) + "])");
  }
  if (b.scale == Scale::kLog && !(b.low > 0.0)) {
    throw Error(ErrorCode::kInvalidSpace, name + ": log-scaled bounds must be strictly positive");
  }
}

void check_value(const Bounds& b, double v, const std::string& field) {
  if (!std::isfinite(v) || !b.contains(v)) {
    throw Error(ErrorCode::kOutOfBounds, field + " = " + fmt_double(v) + " outside [" + fmt_double(b.low) + ", " +
                                             fmt_double(b.high) + "]");
  }
}

std::size_t category_index(const std::vector<ActivationFamily>& allowed, ActivationFamily family) {
  const auto it = std::find(allowed.begin(), allowed.end(), family);
  return it == allowed.end() ? allowed.size() : static_cast<std::size_t>(it - allowed.begin());
}

}  // namespace

std::string_view to_string(ActivationFamily family) {
  switch (family) {
    case ActivationFamily::kSiren: return "siren";
    case ActivationFamily::kGauss: return "gauss";
    case ActivationFamily::kWire: return "wire";
    case ActivationFamily::kFiner: return "finer";
  }
  return "unknown";
}

std::optional<ActivationFamily> parse_activation(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "siren") return ActivationFamily::kSiren;
  if (lower == "gauss" || lower == "gaussian") return ActivationFamily::kGauss;
  if (lower == "wire" || lower == "gabor") return ActivationFamily::kWire;
  if (lower == "finer") return ActivationFamily::kFiner;
  return std::nullopt;
}

std::string_view to_string(LayerParam param) { return kParamNames[static_cast<std::size_t>(param)]; }

double Bounds::normalize(double value) const {
  if (scale == Scale::kLog) return (std::log(value) - std::log(low)) / (std::log(high) - std::log(low));
  return (value - low) / (high - low);
}

double Bounds::denormalize(double t) const {
  if (!(t > 0.0)) return low;
  if (t >= 1.0) return high;
  double v = scale == Scale::kLog ? std::exp(std::log(low) + t * (std::log(high) - std::log(low)))
                                  : low + t * (high - low);
  return std::clamp(v, low, high);
}

bool Bounds::contains(double value) const { return low <= value && value <= high; }

double LayerChoice::param(LayerParam p) const {
  switch (p) {
    case LayerParam::kOmega0: return omega0;
    case LayerParam::kS0: return s0;
    case LayerParam::kBiasScale: return bias_scale;
    case LayerParam::kWeightRange: return weight_range;
    case LayerParam::kLr: return lr;
  }
  return 0.0;
}

double& LayerChoice::param(LayerParam p) {
  switch (p) {
    case LayerParam::kOmega0: return omega0;
    case LayerParam::kS0: return s0;
    case LayerParam::kBiasScale: return bias_scale;
    case LayerParam::kWeightRange: return weight_range;
    case LayerParam::kLr: break;
  }
  return lr;
}

void SearchSpace::validate() const {
  if (activations.empty()) throw Error(ErrorCode::kInvalidSpace, "layer_count must be at least 1");
  for (std::size_t l = 0; l < activations.size(); ++l) {
    const auto& set = activations[l];
    if (set.empty()) {
      throw Error(ErrorCode::kInvalidSpace, "layer " + std::to_string(l) + ": activation set is empty");
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (std::find(set.begin(), set.begin() + static_cast<std::ptrdiff_t>(i), set[i]) !=
          set.begin() + static_cast<std::ptrdiff_t>(i)) {
        throw Error(ErrorCode::kInvalidSpace, "layer " + std::to_string(l) + ": duplicate activation '" +
                                                  std::string(to_string(set[i])) + "'");
      }
    }
  }
  for (std::size_t p = 0; p < kLayerParamCount; ++p) check_bounds(layer_bounds[p], std::string(kParamNames[p]));
  check_bounds(pe_scale, "pe_scale");
  if (surrogate.nu != 0.5 && surrogate.nu != 1.5 && surrogate.nu != 2.5) {
    throw Error(ErrorCode::kInvalidSpace, "surrogate.nu must be one of 0.5, 1.5, 2.5");
  }
}

SearchSpace SearchSpace::with_defaults(std::size_t layer_count, std::vector<ActivationFamily> allowed,
                                       bool pe_allowed) {
  SearchSpace space;
  space.activations.assign(layer_count, std::move(allowed));
  space.layer_bounds = {Bounds{1.0, 100.0, Scale::kLog}, Bounds{0.5, 50.0, Scale::kLog},
                        Bounds{0.0, 20.0, Scale::kLinear}, Bounds{0.25, 4.0, Scale::kLinear},
                        Bounds{1e-5, 1e-2, Scale::kLog}};
  space.pe_scale = Bounds{1.0, 64.0, Scale::kLog};
  space.pe_allowed = pe_allowed;
  return space;
}

std::size_t EncodingLayout::one_hot_width() const {
  std::size_t w = 0;
  for (const auto& b : one_hot) w += b.width;
  return w;
}

EncodingLayout EncodingLayout::continuous_only(std::size_t dim) {
  EncodingLayout out;
  out.dim = dim;
  out.continuous.resize(dim);
  std::iota(out.continuous.begin(), out.continuous.end(), std::size_t{0});
  out.scalar = out.continuous;
  return out;
}

std::size_t dimension(const SearchSpace& space) {
  if (space.layer_count() == 0) throw Error(ErrorCode::kInvalidSpace, "layer_count must be at least 1");
  std::size_t d = 2;
  for (const auto& set : space.activations) d += set.size() + 1 + kLayerParamCount;
  return d;
}

EncodingLayout layout(const SearchSpace& space) {
  EncodingLayout out;
  out.dim = dimension(space);
  out.pe_flag = 0;
  out.pe_scale = 1;
  out.binary.push_back(0);
  out.scalar.push_back(1);
  out.continuous = {0, 1};
  std::size_t offset = 2;
  for (const auto& set : space.activations) {
    out.one_hot.push_back({offset, set.size()});
    offset += set.size();
    out.binary.push_back(offset);
    out.continuous.push_back(offset);
    ++offset;
    for (std::size_t p = 0; p < kLayerParamCount; ++p) {
      out.scalar.push_back(offset);
      out.continuous.push_back(offset);
      ++offset;
    }
  }
  return out;
}

void validate(const SearchSpace& space, const Configuration& config) {
  if (config.layers.size() != space.layer_count()) {
    throw Error(ErrorCode::kInvalidArgument, "configuration has " + std::to_string(config.layers.size()) +
                                                 " layers, search space has " +
                                                 std::to_string(space.layer_count()));
  }
  if (config.use_pe) {
    if (!space.pe_allowed) throw Error(ErrorCode::kOutOfBounds, "use_pe = true but the space disallows PE");
    check_value(space.pe_scale, config.pe_scale, "pe_scale");
  }
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    const LayerChoice& layer = config.layers[l];
    const std::string prefix = "layers[" + std::to_string(l) + "].";
    if (category_index(space.activations[l], layer.activation) == space.activations[l].size()) {
      throw Error(ErrorCode::kOutOfBounds,
                  prefix + "activation = " + std::string(to_string(layer.activation)) + " not in the allowed set");
    }
    for (std::size_t p = 0; p < kLayerParamCount; ++p) {
      const auto param = static_cast<LayerParam>(p);
      check_value(space.layer_bounds[p], layer.param(param), prefix + std::string(kParamNames[p]));
    }
  }
}

EncodedPoint encode(const SearchSpace& space, const Configuration& config) {
  validate(space, config);
  const EncodingLayout lay = layout(space);
  EncodedPoint x = EncodedPoint::Zero(static_cast<Eigen::Index>(lay.dim));
  x[0] = config.use_pe ? 1.0 : 0.0;
  x[1] = config.use_pe ? space.pe_scale.normalize(config.pe_scale) : 0.5;
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    const LayerChoice& layer = config.layers[l];
    const auto& block = lay.one_hot[l];
    x[static_cast<Eigen::Index>(block.offset + category_index(space.activations[l], layer.activation))] = 1.0;
    std::size_t at = block.offset + block.width;
    x[static_cast<Eigen::Index>(at++)] = layer.siren_init ? 1.0 : 0.0;
    for (std::size_t p = 0; p < kLayerParamCount; ++p) {
      x[static_cast<Eigen::Index>(at++)] = space.layer_bounds[p].normalize(layer.param(static_cast<LayerParam>(p)));
    }
  }
  return x;
}

Configuration decode(const SearchSpace& space, const Vector& point) {
  const EncodingLayout lay = layout(space);
  if (static_cast<std::size_t>(point.size()) != lay.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "decode: point has " + std::to_string(point.size()) +
                                                   " coordinates, space has " + std::to_string(lay.dim));
  }
  const Vector p = point.cwiseMax(0.0).cwiseMin(1.0);
  Configuration config;
  config.use_pe = space.pe_allowed && p[0] >= 0.5;
  config.pe_scale = config.use_pe ? space.pe_scale.denormalize(p[1]) : space.pe_scale.midpoint();
  config.layers.resize(space.layer_count());
  for (std::size_t l = 0; l < space.layer_count(); ++l) {
    const auto& block = lay.one_hot[l];
    std::size_t best = 0;
    for (std::size_t j = 1; j < block.width; ++j) {
      if (p[static_cast<Eigen::Index>(block.offset + j)] > p[static_cast<Eigen::Index>(block.offset + best)]) best = j;
    }
    LayerChoice& layer = config.layers[l];
    layer.activation = space.activations[l][best];
    std::size_t at = block.offset + block.width;
    layer.siren_init = p[static_cast<Eigen::Index>(at++)] >= 0.5;
    for (std::size_t q = 0; q < kLayerParamCount; ++q) {
      layer.param(static_cast<LayerParam>(q)) = space.layer_bounds[q].denormalize(p[static_cast<Eigen::Index>(at++)]);
    }
  }
  return config;
}

Configuration default_configuration(const SearchSpace& space) {
  space.validate();
  Configuration config;
  config.use_pe = false;
  config.pe_scale = space.pe_scale.midpoint();
  for (std::size_t l = 0; l < space.layer_count(); ++l) {
    LayerChoice layer;
    layer.activation = space.activations[l].front();
    layer.siren_init = false;
    for (std::size_t p = 0; p < kLayerParamCount; ++p) {
      layer.param(static_cast<LayerParam>(p)) = space.layer_bounds[p].midpoint();
    }
    config.layers.push_back(layer);
  }
  return config;
}

std::vector<Configuration> sample_lhs(const SearchSpace& space, std::size_t n, SeededRng& rng) {
  space.validate();
  if (n == 0) return {};
  const EncodingLayout lay = layout(space);
  DenseMatrix design = DenseMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(lay.dim));

  std::vector<std::size_t> stratified = lay.continuous;
  std::sort(stratified.begin(), stratified.end());
  std::vector<std::size_t> bins(n);
  for (std::size_t col : stratified) {
    std::iota(bins.begin(), bins.end(), std::size_t{0});
    seeded_shuffle(bins.begin(), bins.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) =
          (static_cast<double>(bins[i]) + rng.uniform()) / static_cast<double>(n);
    }
  }
  for (const auto& block : lay.one_hot) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pick = rng.below(block.width);
      design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(block.offset + pick)) = 1.0;
    }
  }
  std::vector<Configuration> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(decode(space, design.row(static_cast<Eigen::Index>(i)).transpose()));
  return out;
}

}  // namespace inrbo
