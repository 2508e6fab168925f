// JSON documents for search spaces and configurations.
//
// Search-space file:
//   {
//     "layer_count": 4,
//     "activations": ["siren", "gauss", "wire", "finer"],
//     "layer_activations": [["siren", "finer"], ...],      (optional, per layer)
//     "pe_allowed": true,
//     "bounds": {"omega0": {"low": 1, "high": 100, "scale": "log"}, ...},
//     "surrogate": {"nu": 2.5, "ard": "per_block"}
//   }
#include <algorithm>
#include <fstream>
#include <sstream>

#include "inrbo/config_space.hpp"
#include "inrbo/errors.hpp"

namespace inrbo {
namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kConfigError, path + ": " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) field_error(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) field_error(path + "." + key, "missing required field");
  return *it;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) field_error(path, "expected a number, got " + std::string(v.type_name()));
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) field_error(path, "expected true or false, got " + std::string(v.type_name()));
  return v.get<bool>();
}

ActivationFamily as_activation(const json& v, const std::string& path) {
  if (!v.is_string()) field_error(path, "expected an activation name");
  const auto family = parse_activation(v.get<std::string>());
  if (!family) field_error(path, "unknown activation '" + v.get<std::string>() + "' (siren, gauss, wire, finer)");
  return *family;
}

std::vector<ActivationFamily> as_activation_set(const json& v, const std::string& path) {
  if (!v.is_array()) field_error(path, "expected an array of activation names");
  std::vector<ActivationFamily> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_activation(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Bounds as_bounds(const json& v, const std::string& path, Bounds fallback) {
  if (!v.is_object()) field_error(path, "expected {\"low\", \"high\", \"scale\"}");
  Bounds b = fallback;
  if (v.contains("low")) b.low = as_number(v["low"], path + ".low");
  if (v.contains("high")) b.high = as_number(v["high"], path + ".high");
  if (v.contains("scale")) {
    const auto& s = v["scale"];
    if (s == "log") {
      b.scale = Scale::kLog;
    } else if (s == "linear") {
      b.scale = Scale::kLinear;
    } else {
      field_error(path + ".scale", "expected \"log\" or \"linear\"");
    }
  }
  return b;
}

json bounds_json(const Bounds& b) {
  return {{"low", b.low}, {"high", b.high}, {"scale", b.scale == Scale::kLog ? "log" : "linear"}};
}

// 1-based line of the first occurrence of "key" in text, or 0.
std::size_t line_of_key(const std::string& text, const std::string& key) {
  const std::size_t at = text.find("\"" + key + "\"");
  if (at == std::string::npos) return 0;
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n'));
}

std::string last_key(const std::string& path) {
  std::string key = path.substr(path.find_last_of('.') + 1);
  return key.substr(0, key.find('['));
}

template <typename T, typename Fn>
T with_file_context(const std::string& file, const std::string& text, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kConfigError && e.code() != ErrorCode::kInvalidSpace) throw;
    std::string msg = e.what();
    msg = msg.substr(msg.find(": ") + 2);
    const std::size_t line = line_of_key(text, last_key(msg.substr(0, msg.find(':'))));
    throw Error(ErrorCode::kConfigError,
                file + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg);
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

json read_json_file(const std::string& path) {
  const std::string text = slurp(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte, text.size());
    const auto upto = text.begin() + static_cast<std::ptrdiff_t>(offset > 0 ? offset - 1 : 0);
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), upto, '\n'));
    const std::size_t line_start = text.rfind('\n', offset > 0 ? offset - 1 : 0);
    const std::size_t column = line_start == std::string::npos ? offset : offset - line_start - 1;
    throw Error(ErrorCode::kConfigError, path + ":" + std::to_string(line) + ":" + std::to_string(column) +
                                             ": malformed JSON (" + e.what() + ")");
  }
}

SearchSpace space_from_json(const json& doc) {
  const std::string root = "space";
  if (!doc.is_object()) field_error(root, "expected an object");
  const json& count_v = require(doc, "layer_count", root);
  if (!count_v.is_number_integer() || count_v.get<long long>() < 0) {
    field_error(root + ".layer_count", "expected a non-negative integer");
  }
  const auto layer_count = count_v.get<std::size_t>();

  SearchSpace space = SearchSpace::with_defaults(layer_count, {});
  if (doc.contains("layer_activations")) {
    const json& per_layer = doc["layer_activations"];
    if (!per_layer.is_array() || per_layer.size() != layer_count) {
      field_error(root + ".layer_activations", "expected an array with one activation list per layer");
    }
    for (std::size_t l = 0; l < layer_count; ++l) {
      space.activations[l] = as_activation_set(per_layer[l], root + ".layer_activations[" + std::to_string(l) + "]");
    }
  } else {
    const auto shared = as_activation_set(require(doc, "activations", root), root + ".activations");
    for (auto& set : space.activations) set = shared;
  }
  if (doc.contains("pe_allowed")) space.pe_allowed = as_bool(doc["pe_allowed"], root + ".pe_allowed");
  if (doc.contains("bounds")) {
    const json& b = doc["bounds"];
    if (!b.is_object()) field_error(root + ".bounds", "expected an object");
    for (const auto& [key, value] : b.items()) {
      const std::string path = root + ".bounds." + key;
      if (key == "pe_scale") {
        space.pe_scale = as_bounds(value, path, space.pe_scale);
        continue;
      }
      bool known = false;
      for (std::size_t p = 0; p < kLayerParamCount; ++p) {
        if (key == to_string(static_cast<LayerParam>(p))) {
          space.layer_bounds[p] = as_bounds(value, path, space.layer_bounds[p]);
          known = true;
        }
      }
      if (!known) field_error(path, "unknown parameter");
    }
  }
  if (doc.contains("surrogate")) {
    const json& s = doc["surrogate"];
    if (s.contains("nu")) space.surrogate.nu = as_number(s["nu"], root + ".surrogate.nu");
    if (s.contains("ard")) {
      if (s["ard"] == "per_block") {
        space.surrogate.per_dimension_ard = false;
      } else if (s["ard"] == "per_dimension") {
        space.surrogate.per_dimension_ard = true;
      } else {
        field_error(root + ".surrogate.ard", "expected \"per_block\" or \"per_dimension\"");
      }
    }
  }
  try {
    space.validate();
  } catch (const Error& e) {
    std::string msg = e.what();
    throw Error(ErrorCode::kConfigError, root + "." + msg.substr(msg.find(": ") + 2));
  }
  return space;
}

json space_to_json(const SearchSpace& space) {
  json doc;
  doc["layer_count"] = space.layer_count();
  json per_layer = json::array();
  for (const auto& set : space.activations) {
    json names = json::array();
    for (auto f : set) names.push_back(std::string(to_string(f)));
    per_layer.push_back(names);
  }
  doc["layer_activations"] = per_layer;
  doc["pe_allowed"] = space.pe_allowed;
  json bounds;
  for (std::size_t p = 0; p < kLayerParamCount; ++p) {
    bounds[std::string(to_string(static_cast<LayerParam>(p)))] = bounds_json(space.layer_bounds[p]);
  }
  bounds["pe_scale"] = bounds_json(space.pe_scale);
  doc["bounds"] = bounds;
  doc["surrogate"] = {{"nu", space.surrogate.nu},
                      {"ard", space.surrogate.per_dimension_ard ? "per_dimension" : "per_block"}};
  return doc;
}

SearchSpace load_search_space(const std::string& path) {
  const json doc = read_json_file(path);
  return with_file_context<SearchSpace>(path, slurp(path), [&] { return space_from_json(doc); });
}

Configuration configuration_from_json(const json& doc) {
  const std::string root = "config";
  if (!doc.is_object()) field_error(root, "expected an object");
  Configuration config;
  if (doc.contains("use_pe")) config.use_pe = as_bool(doc["use_pe"], root + ".use_pe");
  if (doc.contains("pe_scale")) config.pe_scale = as_number(doc["pe_scale"], root + ".pe_scale");
  const json& layers = require(doc, "layers", root);
  if (!layers.is_array()) field_error(root + ".layers", "expected an array");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string path = root + ".layers[" + std::to_string(l) + "]";
    const json& item = layers[l];
    LayerChoice layer;
    layer.activation = as_activation(require(item, "activation", path), path + ".activation");
    if (item.contains("siren_init")) layer.siren_init = as_bool(item["siren_init"], path + ".siren_init");
    for (std::size_t p = 0; p < kLayerParamCount; ++p) {
      const std::string key(to_string(static_cast<LayerParam>(p)));
      if (item.contains(key)) layer.param(static_cast<LayerParam>(p)) = as_number(item[key], path + "." + key);
    }
    config.layers.push_back(layer);
  }
  return config;
}

json configuration_to_json(const Configuration& config) {
  json layers = json::array();
  for (const auto& layer : config.layers) {
    json item;
    item["activation"] = std::string(to_string(layer.activation));
    item["siren_init"] = layer.siren_init;
    for (std::size_t p = 0; p < kLayerParamCount; ++p) {
      item[std::string(to_string(static_cast<LayerParam>(p)))] = layer.param(static_cast<LayerParam>(p));
    }
    layers.push_back(item);
  }
  return {{"use_pe", config.use_pe}, {"pe_scale", config.pe_scale}, {"layers", layers}};
}

Configuration load_configuration(const std::string& path) {
  const json doc = read_json_file(path);
  return with_file_context<Configuration>(path, slurp(path), [&] { return configuration_from_json(doc); });
}

}  // namespace inrbo
