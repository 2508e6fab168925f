#include "run_file.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>

#include "inrbo/errors.hpp"

namespace inrbo::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class Reader {
 public:
  explicit Reader(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& why) const {
    throw Error(ErrorCode::kConfigError, file_ + ": " + field + ": " + why);
  }

  void only(const json& obj, const std::string& where, std::set<std::string> allowed) const {
    if (!obj.is_object()) fail(where.empty() ? "(root)" : where, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      if (!allowed.count(key)) fail(join(where, key), "unknown field");
    }
  }

  std::size_t count(const json& obj, const std::string& where, const std::string& key, std::size_t fallback,
                    std::size_t lo, std::size_t hi) const {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
      fail(join(where, key), "expected a non-negative integer");
    }
    const auto n = v.get<std::size_t>();
    if (n < lo || n > hi) {
      fail(join(where, key), std::to_string(n) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return n;
  }

  double number(const json& obj, const std::string& where, const std::string& key, double fallback, double lo,
                double hi) const {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(join(where, key), "expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) {
      fail(join(where, key), std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  std::string text(const json& obj, const std::string& key) const {
    const json& v = obj.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  static std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
  }

 private:
  std::string file_;
};

std::string resolve(const std::string& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base_dir) / path).lexically_normal().string();
}

std::string dataset_reference(const RunFile& rf, const std::string& as_written) {
  switch (rf.modality) {
    case Modality::kImage: return as_written + " (max_side " + std::to_string(rf.max_side) + ")";
    case Modality::kAudio: return as_written + " (max_samples " + std::to_string(rf.max_samples) + ")";
    case Modality::kOccupancy:
      return occupancy_to_json(*rf.occupancy).dump() + " (resolution " + std::to_string(rf.resolution) + ")";
  }
  return as_written;
}

}  // namespace

RunFile load_run_file(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kConfigError, path + ": run file not found");
  const json doc = read_json_file(path);
  const Reader r(path);
  r.only(doc, "", {"modality", "dataset", "max_side", "max_samples", "resolution", "space", "output_dir", "seed",
                   "budget", "acquisition", "network"});
  const std::string dir = fs::path(path).parent_path().string();

  RunFile rf;
  rf.path = path;
  if (!doc.contains("modality")) r.fail("modality", "missing");
  const auto modality = parse_modality(r.text(doc, "modality"));
  if (!modality) r.fail("modality", "expected image, audio or occupancy");
  rf.modality = *modality;
  rf.settings.objective.modality = rf.modality;

  rf.max_side = r.count(doc, "", "max_side", rf.max_side, 1, 4096);
  rf.max_samples = r.count(doc, "", "max_samples", rf.max_samples, 1, 1u << 24);
  rf.resolution = r.count(doc, "", "resolution", rf.resolution, 1, 64);

  if (!doc.contains("dataset")) r.fail("dataset", "missing");
  std::string as_written;
  if (rf.modality == Modality::kOccupancy) {
    try {
      rf.occupancy = occupancy_from_json(doc.at("dataset"));
    } catch (const Error& e) {
      r.fail("dataset", e.what());
    }
  } else {
    as_written = r.text(doc, "dataset");
    rf.dataset_path = resolve(dir, as_written);
    if (!fs::exists(rf.dataset_path)) r.fail("dataset", "file not found: " + rf.dataset_path);
  }

  if (doc.contains("space")) {
    rf.space_path = resolve(dir, r.text(doc, "space"));
    if (!fs::exists(rf.space_path)) r.fail("space", "file not found: " + rf.space_path);
  }
  if (doc.contains("output_dir")) rf.output_dir = r.text(doc, "output_dir");
  rf.output_dir = resolve(dir, rf.output_dir);
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) r.fail("seed", "expected a non-negative integer");
    rf.settings.master_seed = doc.at("seed").get<std::uint64_t>();
  }

  RunSettings& s = rf.settings;
  const json empty = json::object();
  const json& budget = doc.contains("budget") ? doc.at("budget") : empty;
  r.only(budget, "budget", {"n_init", "n_iter", "epochs", "batch"});
  s.n_init = r.count(budget, "budget", "n_init", 30, 2, 100000);
  s.n_iter = r.count(budget, "budget", "n_iter", 100, 0, 100000);
  s.objective.epochs = r.count(budget, "budget", "epochs", 500, 1, 10000000);
  s.objective.batch = r.count(budget, "budget", "batch", 0, 0, 1u << 30);

  const json& acq = doc.contains("acquisition") ? doc.at("acquisition") : empty;
  r.only(acq, "acquisition", {"sample_count", "candidate_count", "feature_count", "refine_steps", "refine_step_size"});
  s.acquisition.sample_count = r.count(acq, "acquisition", "sample_count", s.acquisition.sample_count, 1, 100000);
  s.acquisition.candidate_count =
      r.count(acq, "acquisition", "candidate_count", s.acquisition.candidate_count, 1, 1000000);
  s.acquisition.feature_count = r.count(acq, "acquisition", "feature_count", s.acquisition.feature_count, 64, 65536);
  s.acquisition.refine_steps =
      static_cast<int>(r.count(acq, "acquisition", "refine_steps", static_cast<std::size_t>(s.acquisition.refine_steps), 0, 100));
  s.acquisition.refine_step_size =
      r.number(acq, "acquisition", "refine_step_size", s.acquisition.refine_step_size, 1e-6, 1.0);

  const json& net = doc.contains("network") ? doc.at("network") : empty;
  r.only(net, "network", {"depth", "width", "pe_bands", "output_init_halfwidth"});
  rf.depth = r.count(net, "network", "depth", rf.depth, 1, 16);
  s.objective.width = r.count(net, "network", "width", s.objective.width, 1, 4096);
  s.objective.pe_bands = r.count(net, "network", "pe_bands", s.objective.pe_bands, 1, 32);
  if (net.contains("output_init_halfwidth") && !net.at("output_init_halfwidth").is_null()) {
    s.objective.output_init_halfwidth = r.number(net, "network", "output_init_halfwidth", 0.0, 1e-12, 100.0);
  }
  s.dataset = dataset_reference(rf, as_written);

  if (!rf.space_path.empty() && net.contains("depth")) {
    const SearchSpace space = load_search_space(rf.space_path);
    if (space.layer_count() != rf.depth) {
      r.fail("network.depth", std::to_string(rf.depth) + " but the space file has " +
                                  std::to_string(space.layer_count()) + " layers");
    }
  }
  return rf;
}

void apply(const Overrides& o, RunFile& rf) {
  RunSettings& s = rf.settings;
  const auto fail = [](const std::string& flag, const std::string& why) {
    throw Error(ErrorCode::kConfigError, flag + ": " + why);
  };
  if (o.n_init) {
    if (*o.n_init < 2) fail("--n-init", "must be at least 2");
    s.n_init = *o.n_init;
  }
  if (o.n_iter) s.n_iter = *o.n_iter;
  if (o.epochs) {
    if (*o.epochs < 1) fail("--epochs", "must be at least 1");
    s.objective.epochs = *o.epochs;
  }
  if (o.batch) s.objective.batch = *o.batch;
  if (o.width) {
    if (*o.width < 1) fail("--width", "must be at least 1");
    s.objective.width = *o.width;
  }
  if (o.seed) s.master_seed = *o.seed;
}

SearchSpace load_space(const RunFile& rf) {
  if (!rf.space_path.empty()) return load_search_space(rf.space_path);
  return SearchSpace::with_defaults(
      rf.depth, {ActivationFamily::kSiren, ActivationFamily::kGauss, ActivationFamily::kWire, ActivationFamily::kFiner});
}

SignalDataset load_dataset(const RunFile& rf) {
  switch (rf.modality) {
    case Modality::kImage: return load_image(rf.dataset_path, rf.max_side);
    case Modality::kAudio: return load_audio_wav(rf.dataset_path, rf.max_samples);
    case Modality::kOccupancy: return make_occupancy(*rf.occupancy, rf.resolution);
  }
  throw Error(ErrorCode::kConfigError, "unknown modality");
}

std::string output_dir(const RunFile& rf) {
  if (const char* env = std::getenv("INRBO_OUTPUT_DIR"); env && *env) return env;
  return rf.output_dir;
}

}  // namespace inrbo::cli
