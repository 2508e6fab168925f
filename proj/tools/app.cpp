#include "app.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "oracles/checks.hpp"
#include "reports.hpp"
#include "run_file.hpp"

namespace inrbo::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  int workers = 1;
  bool json = false;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::kIoError, "cannot create output directory " + dir);
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

int cmd_optimize(const std::string& run_path, const Overrides& ov, bool force, const Common& c, std::ostream& out,
                 std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  RunFile rf = load_run_file(run_path);
  apply(ov, rf);
  const SearchSpace space = load_space(rf);
  const SignalDataset data = load_dataset(rf);
  const std::string dir = output_dir(rf);
  ensure_dir(dir);
  const std::string log = (fs::path(dir) / "run.jsonl").string();

  ObjectiveSettings os = rf.settings.objective;
  os.workers = c.workers;
  const Objective objective = make_inr_objective(data, os);
  const std::size_t total = rf.settings.total();
  double incumbent = -std::numeric_limits<double>::infinity();
  RunOptions ro;
  ro.log_path = log;
  ro.workers = c.workers;
  ro.on_trial = [&](const TrialRecord& t) {
    incumbent = std::max(incumbent, t.score);
    err << "[trial " << t.index + 1 << "/" << total << "] " << (t.phase == Phase::kInit ? "init" : "bo  ") << "  "
        << to_string(t.metric) << " " << fmt(t.score) << (t.diverged ? " (diverged)" : "") << "  best "
        << fmt(incumbent) << "  " << fmt(t.wall_seconds, 1) << "s" << std::endl;
  };

  RunState run;
  if (fs::exists(log) && !force) {
    const RunState previous = read_run_log(log);
    if (space_to_json(previous.space) != space_to_json(space)) {
      throw Error(ErrorCode::kSettingsMismatch,
                  "run log " + log + " was written for a different search space (use --force to start over)");
    }
    for (const auto& t : previous.trials) incumbent = std::max(incumbent, t.score);
    err << "resuming " << log << " at trial " << previous.trials.size() << "/" << total << std::endl;
    try {
      run = resume(log, objective, ro, &rf.settings);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kSettingsMismatch) throw;
      throw Error(ErrorCode::kSettingsMismatch, std::string(e.what()) + " (use --force to start over)");
    }
  } else {
    run = run_optimization(space, objective, rf.settings, ro);
  }

  write_convergence_csv(run, (fs::path(dir) / "convergence.csv").string());
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json doc = summary(run, elapsed);
  {
    const std::string path = (fs::path(dir) / "summary.json").string();
    std::ofstream s(path, std::ios::trunc);
    s << doc.dump(2) << '\n';
    if (!s) throw Error(ErrorCode::kIoError, "cannot write " + path);
  }
  if (c.json) {
    out << doc.dump(2) << '\n';
  } else {
    const BestTrial b = best(run);
    out << "trials: " << run.trials.size() << "\n"
        << "best_trial: " << b.index << "\n"
        << to_string(b.score.metric) << ": " << fmt(b.score.value) << "\n"
        << "configuration: " << describe(b.configuration) << "\n"
        << "outputs: " << dir << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& run_path, const std::string& config_path, const Overrides& ov, const Common& c,
                 std::ostream& out) {
  RunFile rf = load_run_file(run_path);
  apply(ov, rf);
  const SearchSpace space = load_space(rf);
  if (!fs::exists(config_path)) throw Error(ErrorCode::kConfigError, config_path + ": configuration file not found");
  const Configuration config = load_configuration(config_path);
  try {
    validate(space, config);
  } catch (const Error& e) {
    throw Error(e.code(), config_path + ": " + e.what());
  }
  const SignalDataset data = load_dataset(rf);
  ObjectiveSettings os = rf.settings.objective;
  os.workers = c.workers;
  const Evaluation ev = evaluate_objective(config, data, os, rf.settings.master_seed);

  json history = json::array();
  for (const auto& [epoch, loss] : ev.report.history) history.push_back({epoch, loss});
  const json doc = {{"metric", std::string(to_string(ev.score.metric))},
                    {"score", ev.score.value},
                    {"diverged", ev.score.diverged},
                    {"final_loss", std::isfinite(ev.report.final_loss) ? json(ev.report.final_loss) : json(nullptr)},
                    {"epochs_run", ev.report.epochs_run},
                    {"wall_seconds", ev.report.wall_seconds},
                    {"history", history}};
  if (c.json) {
    out << doc.dump(2) << '\n';
  } else {
    out << "metric: " << doc["metric"].get<std::string>() << "\n"
        << "score: " << fmt(ev.score.value) << "\n"
        << "diverged: " << (ev.score.diverged ? "true" : "false") << "\n"
        << "final_loss: " << std::setprecision(6) << ev.report.final_loss << "\n"
        << "epochs_run: " << ev.report.epochs_run << "\n"
        << "wall_seconds: " << fmt(ev.report.wall_seconds, 2) << "\n"
        << "history:";
    for (const auto& [epoch, loss] : ev.report.history) out << ' ' << epoch << '=' << std::setprecision(4) << loss;
    out << '\n';
  }
  return 0;
}

int cmd_report(const std::string& log_path, const std::string& out_dir, const Common& c, std::ostream& out) {
  const RunState run = read_run_log(log_path);
  if (run.trials.empty()) throw Error(ErrorCode::kEmptyRun, log_path + ": run log has no trials");
  ensure_dir(out_dir);
  write_convergence_csv(run, (fs::path(out_dir) / "convergence.csv").string());
  write_convergence_svg(run, (fs::path(out_dir) / "convergence.svg").string());
  const std::string table = top_table(run, 5);
  {
    const std::string path = (fs::path(out_dir) / "top5.txt").string();
    std::ofstream s(path, std::ios::trunc);
    s << table;
    if (!s) throw Error(ErrorCode::kIoError, "cannot write " + path);
  }
  if (c.json) {
    json top = json::array();
    for (std::size_t i : top_trials(run, 5)) {
      const auto& t = run.trials[i];
      top.push_back({{"trial", t.index}, {"score", t.score}, {"configuration", configuration_to_json(t.configuration)}});
    }
    out << json{{"trials", run.trials.size()}, {"top", top}}.dump(2) << '\n';
  } else {
    out << table;
  }
  return 0;
}

int cmd_selftest(const std::string& level, bool inject_ei_fault, std::ostream& out) {
  const bool full = level == "full";
  testing::set_broken_ei(inject_ei_fault);
  struct Restore {
    ~Restore() { testing::set_broken_ei(false); }
  } restore;
  std::vector<checks::Verdict> verdicts;
  const auto record = [&](checks::Verdict v) {
    out << (v.passed ? "PASS " : "FAIL ") << v.name << ": " << v.detail << " (" << fmt(v.seconds, 1) << " s)"
        << std::endl;
    verdicts.push_back(std::move(v));
  };
  record(checks::gp_posterior(50, 2025));
  record(checks::kernel_psd(200, 64, 2026));
  record(checks::matheron_moments(full ? 10000 : 2000, full ? 10 : 5, 2027));
  record(checks::eei_consistency(10000, full ? 50 : 0, 2028));
  record(checks::analytic_ei_integral());
  record(checks::payoff_counterexample());
  record(checks::gradients(20, 2031));

  std::string failed;
  for (const auto& v : verdicts) {
    if (!v.passed) failed += (failed.empty() ? "" : ", ") + v.name;
  }
  if (failed.empty()) {
    out << "selftest (" << level << "): all " << verdicts.size() << " checks passed\n";
    return 0;
  }
  out << "selftest (" << level << ") FAILED: " << failed << "\n";
  return 1;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kInvalidSpace:
    case ErrorCode::kOutOfBounds:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kSettingsMismatch:
    case ErrorCode::kModalityMismatch:
    case ErrorCode::kUnsupportedNu:
      return 2;
    case ErrorCode::kIoError:
    case ErrorCode::kCorruptFile:
    case ErrorCode::kUnsupportedFormat:
    case ErrorCode::kCorruptLog:
    case ErrorCode::kEmptyRun:
      return 3;
    default:
      return 1;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian optimization of implicit neural representation configurations"};
  app.name("inrbo");
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--workers", common.workers, "worker threads for training and acquisition")
      ->check(CLI::Range(1, 256));
  app.add_flag("--json", common.json, "machine-readable output");

  Overrides ov;
  std::size_t n_init = 0, n_iter = 0, epochs = 0, batch = 0, width = 0;
  std::uint64_t seed = 0;
  const auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--n-init", n_init, "initial-design size");
    cmd->add_option("--n-iter", n_iter, "BO iterations");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--epochs", epochs, "training epochs per trial");
    cmd->add_option("--batch", batch, "mini-batch size (0: full batch)");
    cmd->add_option("--width", width, "hidden width");
  };

  std::string run_path, config_path, log_path, out_dir, level = "fast";
  bool force = false, inject = false;
  CLI::App* optimize = app.add_subcommand("optimize", "run or resume an optimization");
  optimize->add_option("run_file", run_path, "run file (JSON)")->required();
  optimize->add_flag("--force", force, "discard an existing run log and start over");
  add_overrides(optimize);
  CLI::App* evaluate = app.add_subcommand("evaluate", "train and score one configuration");
  evaluate->add_option("run_file", run_path, "run file (JSON)")->required();
  evaluate->add_option("config", config_path, "configuration file (JSON)")->required();
  add_overrides(evaluate);
  CLI::App* report = app.add_subcommand("report", "convergence CSV, SVG plot and top-5 table from a run log");
  report->add_option("log", log_path, "run log")->required();
  report->add_option("out_dir", out_dir, "output directory")->required();
  CLI::App* selftest = app.add_subcommand("selftest", "run the built-in oracle checks");
  selftest->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  selftest->add_flag("--inject-ei-fault", inject, "")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  const auto set_if = [](CLI::App* cmd, const char* flag, auto value, auto& slot) {
    if (cmd->count(flag) > 0) slot = value;
  };
  for (CLI::App* cmd : {optimize, evaluate}) {
    set_if(cmd, "--n-init", n_init, ov.n_init);
    set_if(cmd, "--n-iter", n_iter, ov.n_iter);
    set_if(cmd, "--seed", seed, ov.seed);
    set_if(cmd, "--epochs", epochs, ov.epochs);
    set_if(cmd, "--batch", batch, ov.batch);
    set_if(cmd, "--width", width, ov.width);
  }

  try {
    if (optimize->parsed()) return cmd_optimize(run_path, ov, force, common, out, err);
    if (evaluate->parsed()) return cmd_evaluate(run_path, config_path, ov, common, out);
    if (report->parsed()) return cmd_report(log_path, out_dir, common, out);
    if (selftest->parsed()) return cmd_selftest(level, inject, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace inrbo::cli
