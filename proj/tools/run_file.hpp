#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "inrbo/bo_driver.hpp"

namespace inrbo::cli {

/// Parsed run file. Relative paths are resolved against the run file's directory.
///
///   {
///     "modality": "image" | "audio" | "occupancy",
///     "dataset": "<file>" | {occupancy shape},
///     "max_side": 64, "max_samples": 16384, "resolution": 32,
///     "space": "<space file>",            (optional: every family, `depth` layers)
///     "output_dir": "<dir>",
///     "seed": 0,
///     "budget": {"n_init", "n_iter", "epochs", "batch"},
///     "acquisition": {"sample_count", "candidate_count", "feature_count",
///                     "refine_steps", "refine_step_size"},
///     "network": {"depth", "width", "pe_bands", "output_init_halfwidth"}
///   }
struct RunFile {
  std::string path;
  Modality modality = Modality::kImage;
  std::string dataset_path;                 // image and audio
  std::optional<OccupancyShape> occupancy;  // occupancy
  std::size_t max_side = 64;
  std::size_t max_samples = 16384;
  std::size_t resolution = 32;
  std::string space_path;  // empty: default space
  std::size_t depth = 3;
  std::string output_dir = "inrbo-out";
  RunSettings settings;  // budgets, acquisition, network, seed, dataset reference
};

/// Throws ConfigError naming the file and field.
RunFile load_run_file(const std::string& path);

/// Command-line values that shadow run-file entries.
struct Overrides {
  std::optional<std::size_t> n_init, n_iter, epochs, batch, width;
  std::optional<std::uint64_t> seed;
};

void apply(const Overrides& o, RunFile& rf);

SearchSpace load_space(const RunFile& rf);
SignalDataset load_dataset(const RunFile& rf);

/// Output directory: INRBO_OUTPUT_DIR when set, else the run file's entry.
std::string output_dir(const RunFile& rf);

}  // namespace inrbo::cli
