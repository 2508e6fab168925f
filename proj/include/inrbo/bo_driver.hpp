#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inrbo/config_space.hpp"
#include "inrbo/gp.hpp"
#include "inrbo/objectives.hpp"
#include "inrbo/sampler.hpp"

namespace inrbo {

/// Black-box objective: scores one configuration; `seed` keys its randomness.
using Objective = std::function<Score(const Configuration&, std::uint64_t seed)>;

/// Objective that trains and scores an INR on a fixed dataset.
Objective make_inr_objective(const SignalDataset& dataset, const ObjectiveSettings& settings);

enum class Phase { kInit, kBo };

struct TrialRecord {
  std::size_t index = 0;
  Configuration configuration;
  EncodedPoint point;
  double score = 0.0;
  Metric metric = Metric::kPsnr;
  bool diverged = false;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  Phase phase = Phase::kInit;
  std::optional<KernelSpec> kernel;  // surrogate hyperparameters that proposed a BO trial
  std::optional<double> eei;         // acquisition value of a BO trial
};

/// Everything that determines a run's trial sequence.
struct RunSettings {
  std::size_t n_init = 30;
  std::size_t n_iter = 100;
  std::uint64_t master_seed = 0;
  ObjectiveSettings objective;
  AcquisitionConfig acquisition;
  int fit_restarts = 8;
  int fit_evals = 200;
  std::string dataset;  // human-readable reference, e.g. a path or shape spec

  std::size_t total() const { return n_init + n_iter; }
  /// Worker counts are excluded: output does not depend on them.
  nlohmann::json to_json() const;
  static RunSettings from_json(const nlohmann::json& doc);
};

enum class RunStatus { kRunning, kComplete };

struct RunState {
  SearchSpace space;
  RunSettings settings;
  std::vector<TrialRecord> trials;
  RunStatus status = RunStatus::kRunning;
};

struct RunOptions {
  std::string log_path;  // empty: no persistence
  int workers = 1;       // surrogate fit and acquisition
  std::function<void(const TrialRecord&)> on_trial;
};

/// Latin-hypercube initialization followed by n_iter rounds of fit, acquire,
/// evaluate. Each trial is appended to the log before the next one starts.
RunState run_optimization(const SearchSpace& space, const Objective& objective, const RunSettings& settings,
                          const RunOptions& options = {});

/// Reads a run log. A final line without a newline is treated as an
/// interrupted write and ignored. Throws CorruptLog naming the line.
RunState read_run_log(const std::string& path);

/// Replays a log and continues to the configured budget, producing the same
/// trials as an uninterrupted run. When `expected` is given its settings must
/// match the log header (SettingsMismatch otherwise).
RunState resume(const std::string& log_path, const Objective& objective, const RunOptions& options = {},
                const RunSettings* expected = nullptr);

struct BestTrial {
  std::size_t index = 0;
  Configuration configuration;
  Score score;
};

/// Highest score; ties go to the earliest trial. Throws EmptyRun.
BestTrial best(const RunState& run);

// Log records, exposed for reporting tools.
nlohmann::json trial_to_json(const TrialRecord& t);
TrialRecord trial_from_json(const SearchSpace& space, const nlohmann::json& doc);

/// How the greedy baseline treats layers it has not decided yet.
enum class LaterLayerRule {
  kDefaults,  // space defaults: midpoints, first category, flags off
  kAverage,   // mean over every activation choice of the later layers
};

struct GreedyResult {
  Configuration configuration;
  Score score;
  std::size_t evaluations = 0;
};

/// Layer-by-layer search: for each layer in turn, per_layer_budget candidates
/// for that layer's block (Latin hypercube; when the budget allows, the
/// activations are cycled so every category is tried), earlier layers fixed at
/// their chosen values, and the best candidate kept.
GreedyResult greedy_layerwise_baseline(const SearchSpace& space, const Objective& objective,
                                       std::size_t per_layer_budget, std::uint64_t seed,
                                       LaterLayerRule rule = LaterLayerRule::kDefaults);

/// Two-layer, two-choice payoff f(A,A)=12, f(A,B)=5, f(B,A)=10, f(B,B)=8.
struct PayoffReport {
  std::array<char, 2> greedy_choice{};
  double greedy_value = 0.0;
  std::array<char, 2> global_choice{};
  double global_value = 0.0;
  std::array<double, 2> first_layer_means{};  // mean payoff of A and B over the second choice
};

PayoffReport payoff_counterexample();

/// The payoff game as a search space (choice A = SIREN, B = GAUSS per layer)
/// and objective, so the generic greedy baseline can run on it.
SearchSpace payoff_space();
Objective payoff_objective();

/// -sum over layers and continuous hyperparameters of (t - 0.7)^2, with t the
/// normalized [0,1] coordinate. Categorical choices and flags are ignored.
Objective synthetic_quadratic(const SearchSpace& space);

}  // namespace inrbo
