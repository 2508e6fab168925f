#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inrbo/bo_driver.hpp"

namespace inrbo::cli {

/// Best score seen up to and including each trial.
std::vector<double> best_so_far(const RunState& run);

/// "trial,score,best_so_far" with one row per trial.
void write_convergence_csv(const RunState& run, const std::string& path);

/// Standalone SVG: scores as dots, incumbent as a step line, init phase shaded.
void write_convergence_svg(const RunState& run, const std::string& path);

/// Trial indices by descending score, ties to the earlier trial.
std::vector<std::size_t> top_trials(const RunState& run, std::size_t k);

/// Plain-text table of the k best trials.
std::string top_table(const RunState& run, std::size_t k);

/// One-line description of a configuration.
std::string describe(const Configuration& config);

/// Best configuration (in configuration-file syntax), its score and run timing.
nlohmann::json summary(const RunState& run, double elapsed_seconds);

}  // namespace inrbo::cli
