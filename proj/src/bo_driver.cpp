#include "inrbo/bo_driver.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "inrbo/errors.hpp"

namespace inrbo {
namespace {

using nlohmann::json;

constexpr int kLogVersion = 1;
constexpr const char* kLogFormat = "inrbo-run";

// Independent random streams derived from the master seed. Keyed by trial or
// iteration index so a resumed run draws exactly what an uninterrupted one would.
constexpr std::uint64_t kDesignStream = 1;
constexpr std::uint64_t kTrialStream = 2;
constexpr std::uint64_t kFitStream = 3;
constexpr std::uint64_t kAcquireStream = 4;

std::uint64_t trial_seed(std::uint64_t master, std::size_t index) {
  return SeededRng(master, kTrialStream).substream(index).seed();
}

std::vector<Configuration> initial_design(const SearchSpace& space, const RunSettings& s) {
  SeededRng rng(s.master_seed, kDesignStream);
  return sample_lhs(space, s.n_init, rng);
}

json kernel_to_json(const KernelSpec& k) {
  return {{"nu", k.nu},
          {"ell_cont", k.ell_cont},
          {"ell_cat", k.ell_cat},
          {"signal_var", k.signal_var},
          {"noise_var", k.noise_var}};
}

KernelSpec kernel_from_json(const json& doc) {
  KernelSpec k;
  k.nu = doc.at("nu").get<double>();
  k.ell_cont = doc.at("ell_cont").get<double>();
  k.ell_cat = doc.at("ell_cat").get<std::vector<double>>();
  k.signal_var = doc.at("signal_var").get<double>();
  k.noise_var = doc.at("noise_var").get<double>();
  return k;
}

json header_json(const SearchSpace& space, const RunSettings& s) {
  return {{"type", "header"},
          {"format", kLogFormat},
          {"version", kLogVersion},
          {"space", space_to_json(space)},
          {"settings", s.to_json()}};
}

class LogWriter {
 public:
  explicit LogWriter(const std::string& path, bool truncate) : path_(path) {
    out_.open(path, truncate ? std::ios::out | std::ios::trunc : std::ios::out | std::ios::app);
    if (!out_) throw Error(ErrorCode::kIoError, "cannot open run log " + path);
  }

  void write(const json& line) {
    out_ << line.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::kIoError, "write to run log " + path_ + " failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

void check_runnable(const RunSettings& s) {
  if (s.n_init < 2) throw Error(ErrorCode::kInvalidArgument, "n_init must be at least 2");
}

// Runs trials from run.trials.size() up to the budget.
void continue_run(RunState& run, const Objective& objective, const RunOptions& options, LogWriter* log) {
  const SearchSpace& space = run.space;
  const RunSettings& s = run.settings;
  check_runnable(s);
  const std::vector<Configuration> design = initial_design(space, s);

  for (std::size_t i = 0; i < run.trials.size() && i < s.n_init; ++i) {
    if (!(run.trials[i].configuration == design[i])) {
      throw Error(ErrorCode::kCorruptLog,
                  "trial " + std::to_string(i) + " does not match the initial design for seed " +
                      std::to_string(s.master_seed));
    }
  }

  AcquisitionConfig acq = s.acquisition;
  acq.workers = options.workers;
  FitOptions fit;
  fit.restarts = s.fit_restarts;
  fit.evals_per_restart = s.fit_evals;
  fit.workers = options.workers;

  while (run.trials.size() < s.total()) {
    const std::size_t index = run.trials.size();
    TrialRecord t;
    t.index = index;
    t.seed = trial_seed(s.master_seed, index);

    if (index < s.n_init) {
      t.phase = Phase::kInit;
      t.configuration = design[index];
    } else {
      t.phase = Phase::kBo;
      const std::size_t iter = index - s.n_init;
      std::vector<EncodedPoint> xs;
      std::vector<double> ys;
      xs.reserve(index);
      ys.reserve(index);
      for (const TrialRecord& prev : run.trials) {
        xs.push_back(prev.point);
        ys.push_back(prev.score);
      }
      fit.warm_start.reset();
      for (auto it = run.trials.rbegin(); it != run.trials.rend(); ++it) {
        if (it->kernel) {
          fit.warm_start = it->kernel;
          break;
        }
      }
      SeededRng fit_rng(s.master_seed, kFitStream);
      fit_rng = fit_rng.substream(iter);
      const GPModel model = GPModel::fit(space, xs, ys, fit_rng, fit);
      SeededRng acq_rng(s.master_seed, kAcquireStream);
      acq_rng = acq_rng.substream(iter);
      AcquisitionResult next = maximize_acquisition(model, space, acq, acq_rng);
      t.configuration = std::move(next.configuration);
      t.kernel = model.kernel();
      t.eei = next.eei;
    }
    t.point = encode(space, t.configuration);

    const auto start = std::chrono::steady_clock::now();
    const Score score = objective(t.configuration, t.seed);
    t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    t.score = score.value;
    t.metric = score.metric;
    t.diverged = score.diverged;

    if (log) log->write(trial_to_json(t));
    run.trials.push_back(std::move(t));
    if (options.on_trial) options.on_trial(run.trials.back());
  }
  run.status = RunStatus::kComplete;
}

std::vector<std::string> differing_keys(const json& a, const json& b, const std::string& prefix = "") {
  std::vector<std::string> out;
  if (a.is_object() && b.is_object()) {
    for (const auto& [key, value] : a.items()) {
      if (!b.contains(key)) {
        out.push_back(prefix + key);
      } else {
        auto sub = differing_keys(value, b.at(key), prefix + key + ".");
        out.insert(out.end(), sub.begin(), sub.end());
      }
    }
    for (const auto& [key, value] : b.items()) {
      if (!a.contains(key)) out.push_back(prefix + key);
    }
  } else if (a != b) {
    out.push_back(prefix.empty() ? "(root)" : prefix.substr(0, prefix.size() - 1));
  }
  return out;
}

std::string phase_name(Phase p) { return p == Phase::kInit ? "init" : "bo"; }

}  // namespace

Objective make_inr_objective(const SignalDataset& dataset, const ObjectiveSettings& settings) {
  return [&dataset, settings](const Configuration& config, std::uint64_t seed) {
    return evaluate_objective(config, dataset, settings, seed).score;
  };
}

json RunSettings::to_json() const {
  json objective_doc = {{"modality", std::string(inrbo::to_string(objective.modality))},
                        {"epochs", objective.epochs},
                        {"batch", objective.batch},
                        {"width", objective.width},
                        {"pe_bands", objective.pe_bands},
                        {"output_init_halfwidth", nullptr},
                        {"divergence_limit", objective.divergence_limit}};
  if (objective.output_init_halfwidth) objective_doc["output_init_halfwidth"] = *objective.output_init_halfwidth;
  return {{"n_init", n_init},
          {"n_iter", n_iter},
          {"seed", master_seed},
          {"dataset", dataset},
          {"objective", objective_doc},
          {"acquisition",
           {{"sample_count", acquisition.sample_count},
            {"candidate_count", acquisition.candidate_count},
            {"refine_steps", acquisition.refine_steps},
            {"refine_step_size", acquisition.refine_step_size},
            {"feature_count", acquisition.feature_count}}},
          {"fit", {{"restarts", fit_restarts}, {"evals_per_restart", fit_evals}}}};
}

RunSettings RunSettings::from_json(const json& doc) {
  RunSettings s;
  s.n_init = doc.at("n_init").get<std::size_t>();
  s.n_iter = doc.at("n_iter").get<std::size_t>();
  s.master_seed = doc.at("seed").get<std::uint64_t>();
  s.dataset = doc.value("dataset", std::string());
  const json& o = doc.at("objective");
  const auto modality = parse_modality(o.at("modality").get<std::string>());
  if (!modality) throw Error(ErrorCode::kConfigError, "unknown modality " + o.at("modality").dump());
  s.objective.modality = *modality;
  s.objective.epochs = o.at("epochs").get<std::size_t>();
  s.objective.batch = o.at("batch").get<std::size_t>();
  s.objective.width = o.at("width").get<std::size_t>();
  s.objective.pe_bands = o.at("pe_bands").get<std::size_t>();
  if (!o.at("output_init_halfwidth").is_null()) {
    s.objective.output_init_halfwidth = o.at("output_init_halfwidth").get<double>();
  }
  s.objective.divergence_limit = o.at("divergence_limit").get<double>();
  const json& a = doc.at("acquisition");
  s.acquisition.sample_count = a.at("sample_count").get<std::size_t>();
  s.acquisition.candidate_count = a.at("candidate_count").get<std::size_t>();
  s.acquisition.refine_steps = a.at("refine_steps").get<int>();
  s.acquisition.refine_step_size = a.at("refine_step_size").get<double>();
  s.acquisition.feature_count = a.at("feature_count").get<std::size_t>();
  const json& f = doc.at("fit");
  s.fit_restarts = f.at("restarts").get<int>();
  s.fit_evals = f.at("evals_per_restart").get<int>();
  return s;
}

json trial_to_json(const TrialRecord& t) {
  json doc = {{"type", "trial"},
              {"index", t.index},
              {"phase", phase_name(t.phase)},
              {"configuration", configuration_to_json(t.configuration)},
              {"score", t.score},
              {"metric", std::string(to_string(t.metric))},
              {"diverged", t.diverged},
              {"seed", t.seed},
              {"wall_seconds", t.wall_seconds},
              {"kernel", nullptr},
              {"eei", nullptr}};
  if (t.kernel) doc["kernel"] = kernel_to_json(*t.kernel);
  if (t.eei) doc["eei"] = *t.eei;
  return doc;
}

TrialRecord trial_from_json(const SearchSpace& space, const json& doc) {
  if (doc.value("type", std::string()) != "trial") throw Error(ErrorCode::kCorruptLog, "not a trial record");
  TrialRecord t;
  t.index = doc.at("index").get<std::size_t>();
  const std::string phase = doc.at("phase").get<std::string>();
  if (phase != "init" && phase != "bo") throw Error(ErrorCode::kCorruptLog, "unknown phase '" + phase + "'");
  t.phase = phase == "init" ? Phase::kInit : Phase::kBo;
  t.configuration = configuration_from_json(doc.at("configuration"));
  validate(space, t.configuration);
  t.point = encode(space, t.configuration);
  t.score = doc.at("score").get<double>();
  const auto metric = parse_metric(doc.at("metric").get<std::string>());
  if (!metric) throw Error(ErrorCode::kCorruptLog, "unknown metric " + doc.at("metric").dump());
  t.metric = *metric;
  t.diverged = doc.at("diverged").get<bool>();
  t.seed = doc.at("seed").get<std::uint64_t>();
  t.wall_seconds = doc.at("wall_seconds").get<double>();
  if (!doc.at("kernel").is_null()) t.kernel = kernel_from_json(doc.at("kernel"));
  if (!doc.at("eei").is_null()) t.eei = doc.at("eei").get<double>();
  return t;
}

RunState run_optimization(const SearchSpace& space, const Objective& objective, const RunSettings& settings,
                          const RunOptions& options) {
  space.validate();
  check_runnable(settings);
  RunState run{space, settings, {}, RunStatus::kRunning};
  std::optional<LogWriter> log;
  if (!options.log_path.empty()) {
    log.emplace(options.log_path, true);
    log->write(header_json(space, settings));
  }
  continue_run(run, objective, options, log ? &*log : nullptr);
  return run;
}

namespace {

struct ParsedLog {
  RunState run;
  std::size_t valid_bytes = 0;  // length of the complete-line prefix
};

ParsedLog parse_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open run log " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  ParsedLog parsed;
  RunState& run = parsed.run;
  bool have_header = false;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const std::size_t nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
    const auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kCorruptLog, path + ":" + std::to_string(line_no) + ": " + why);
    };

    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      if (!complete && have_header) break;  // interrupted final write
      throw fail(std::string("malformed JSON (") + e.what() + ")");
    }
    try {
      if (!have_header) {
        if (doc.value("type", std::string()) != "header" || doc.value("format", std::string()) != kLogFormat) {
          throw fail("first line is not a run-log header");
        }
        if (doc.at("version").get<int>() != kLogVersion) {
          throw fail("unsupported log version " + doc.at("version").dump());
        }
        run.space = space_from_json(doc.at("space"));
        run.settings = RunSettings::from_json(doc.at("settings"));
        have_header = true;
      } else {
        TrialRecord t = trial_from_json(run.space, doc);
        if (t.index != run.trials.size()) {
          throw fail("trial index " + std::to_string(t.index) + " where " + std::to_string(run.trials.size()) +
                     " was expected");
        }
        if (t.index >= run.settings.total()) throw fail("more trials than the configured budget");
        run.trials.push_back(std::move(t));
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kCorruptLog && std::string_view(e.what()).starts_with(path)) throw;
      throw fail(e.what());
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    if (!complete) {
      // A well-formed record without its newline: keep it, repair on append.
      parsed.valid_bytes = text.size();
      pos = text.size();
      break;
    }
    pos = nl + 1;
    parsed.valid_bytes = pos;
  }
  if (!have_header) throw Error(ErrorCode::kCorruptLog, path + ":1: empty run log");
  run.status = run.trials.size() == run.settings.total() ? RunStatus::kComplete : RunStatus::kRunning;
  return parsed;
}

}  // namespace

RunState read_run_log(const std::string& path) { return parse_log(path).run; }

RunState resume(const std::string& log_path, const Objective& objective, const RunOptions& options,
                const RunSettings* expected) {
  ParsedLog parsed = parse_log(log_path);
  RunState& run = parsed.run;
  if (expected) {
    const auto diff = differing_keys(run.settings.to_json(), expected->to_json());
    if (!diff.empty()) {
      std::string keys;
      for (const auto& k : diff) keys += (keys.empty() ? "" : ", ") + k;
      throw Error(ErrorCode::kSettingsMismatch, "run log " + log_path + " was written with different settings: " + keys);
    }
  }
  if (run.status == RunStatus::kComplete) return run;

  // Drop a torn final line, and terminate a final record that lost its newline.
  std::error_code ec;
  const auto size = std::filesystem::file_size(log_path, ec);
  if (!ec && size != parsed.valid_bytes) std::filesystem::resize_file(log_path, parsed.valid_bytes);
  {
    std::ifstream in(log_path, std::ios::binary);
    if (parsed.valid_bytes > 0) {
      in.seekg(static_cast<std::streamoff>(parsed.valid_bytes) - 1);
      if (in.get() != '\n') std::ofstream(log_path, std::ios::app) << '\n';
    }
  }

  RunOptions opts = options;
  opts.log_path = log_path;
  LogWriter log(log_path, false);
  continue_run(run, objective, opts, &log);
  return run;
}

BestTrial best(const RunState& run) {
  if (run.trials.empty()) throw Error(ErrorCode::kEmptyRun, "run has no completed trials");
  const TrialRecord* top = &run.trials.front();
  for (const TrialRecord& t : run.trials) {
    if (t.score > top->score) top = &t;
  }
  return {top->index, top->configuration, {top->score, top->metric, top->diverged}};
}

namespace {

// Every assignment of activations to layers [from, L), in lexicographic order.
std::vector<std::vector<ActivationFamily>> activation_combinations(const SearchSpace& space, std::size_t from) {
  std::vector<std::vector<ActivationFamily>> out{{}};
  for (std::size_t l = from; l < space.layer_count(); ++l) {
    std::vector<std::vector<ActivationFamily>> next;
    for (const auto& prefix : out) {
      for (ActivationFamily f : space.activations[l]) {
        next.push_back(prefix);
        next.back().push_back(f);
      }
    }
    out = std::move(next);
    if (out.size() > 4096) {
      throw Error(ErrorCode::kInvalidArgument, "averaging over later layers needs more than 4096 evaluations");
    }
  }
  return out;
}

}  // namespace

GreedyResult greedy_layerwise_baseline(const SearchSpace& space, const Objective& objective,
                                       std::size_t per_layer_budget, std::uint64_t seed, LaterLayerRule rule) {
  space.validate();
  if (per_layer_budget == 0) throw Error(ErrorCode::kInvalidArgument, "per-layer budget must be positive");

  GreedyResult result;
  result.configuration = default_configuration(space);
  SeededRng root(seed);
  std::uint64_t eval_counter = 0;
  const auto evaluate = [&](const Configuration& c) {
    ++result.evaluations;
    return objective(c, root.substream(1'000'000 + eval_counter++).seed());
  };

  for (std::size_t l = 0; l < space.layer_count(); ++l) {
    SearchSpace block = space;
    block.activations = {space.activations[l]};
    block.pe_allowed = false;
    SeededRng rng = root.substream(l);
    std::vector<Configuration> draws = sample_lhs(block, per_layer_budget, rng);
    const auto& allowed = space.activations[l];
    const auto later =
        rule == LaterLayerRule::kAverage ? activation_combinations(space, l + 1)
                                         : std::vector<std::vector<ActivationFamily>>{{}};

    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < draws.size(); ++k) {
      Configuration candidate = result.configuration;
      candidate.layers[l] = draws[k].layers[0];
      if (per_layer_budget >= allowed.size()) candidate.layers[l].activation = allowed[k % allowed.size()];

      double value = 0.0;
      Score last;
      for (const auto& tail : later) {
        Configuration probe = candidate;
        for (std::size_t j = 0; j < tail.size(); ++j) probe.layers[l + 1 + j].activation = tail[j];
        last = evaluate(probe);
        value += last.value;
      }
      value /= static_cast<double>(later.size());
      if (value > best_value) {
        best_value = value;
        result.configuration = candidate;
        if (l + 1 == space.layer_count()) result.score = last;
      }
    }
  }
  return result;
}

namespace {

constexpr double kPayoff[2][2] = {{12.0, 5.0}, {10.0, 8.0}};  // [first][second], 0 = A, 1 = B

int payoff_choice(const SearchSpace& space, const Configuration& c, std::size_t layer) {
  const auto& allowed = space.activations[layer];
  const auto it = std::find(allowed.begin(), allowed.end(), c.layers[layer].activation);
  return static_cast<int>(it - allowed.begin());
}

}  // namespace

PayoffReport payoff_counterexample() {
  PayoffReport r;
  for (int a = 0; a < 2; ++a) r.first_layer_means[a] = 0.5 * (kPayoff[a][0] + kPayoff[a][1]);
  const int first = r.first_layer_means[1] > r.first_layer_means[0] ? 1 : 0;
  const int second = kPayoff[first][1] > kPayoff[first][0] ? 1 : 0;
  r.greedy_choice = {static_cast<char>('A' + first), static_cast<char>('A' + second)};
  r.greedy_value = kPayoff[first][second];

  int ga = 0, gb = 0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      if (kPayoff[a][b] > kPayoff[ga][gb]) ga = a, gb = b;
    }
  }
  r.global_choice = {static_cast<char>('A' + ga), static_cast<char>('A' + gb)};
  r.global_value = kPayoff[ga][gb];
  return r;
}

SearchSpace payoff_space() {
  return SearchSpace::with_defaults(2, {ActivationFamily::kSiren, ActivationFamily::kGauss}, false);
}

Objective payoff_objective() {
  const SearchSpace space = payoff_space();
  return [space](const Configuration& c, std::uint64_t) {
    const double v = kPayoff[payoff_choice(space, c, 0)][payoff_choice(space, c, 1)];
    return Score{v, Metric::kPsnr, false};
  };
}

Objective synthetic_quadratic(const SearchSpace& space) {
  return [space](const Configuration& c, std::uint64_t) {
    double sum = 0.0;
    for (const LayerChoice& layer : c.layers) {
      for (std::size_t p = 0; p < kLayerParamCount; ++p) {
        const auto param = static_cast<LayerParam>(p);
        const double t = space.bounds(param).normalize(layer.param(param));
        sum += (t - 0.7) * (t - 0.7);
      }
    }
    return Score{-sum, Metric::kPsnr, false};
  };
}

}  // namespace inrbo
