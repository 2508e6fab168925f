#include "reports.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "inrbo/errors.hpp"

namespace inrbo::cli {
namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  return out;
}

void close_out(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw Error(ErrorCode::kIoError, "write to " + path + " failed");
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

std::vector<double> best_so_far(const RunState& run) {
  std::vector<double> out;
  double incumbent = -std::numeric_limits<double>::infinity();
  for (const auto& t : run.trials) {
    incumbent = std::max(incumbent, t.score);
    out.push_back(incumbent);
  }
  return out;
}

void write_convergence_csv(const RunState& run, const std::string& path) {
  std::ofstream out = open_out(path);
  const auto incumbent = best_so_far(run);
  out << "trial,score,best_so_far\n" << std::setprecision(17);
  for (std::size_t i = 0; i < run.trials.size(); ++i) {
    out << run.trials[i].index << ',' << run.trials[i].score << ',' << incumbent[i] << '\n';
  }
  close_out(out, path);
}

void write_convergence_svg(const RunState& run, const std::string& path) {
  if (run.trials.empty()) throw Error(ErrorCode::kEmptyRun, "run has no completed trials");
  const double w = 720, h = 420, left = 70, right = 20, top = 30, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  const auto incumbent = best_so_far(run);
  double lo = run.trials.front().score, hi = lo;
  for (const auto& t : run.trials) lo = std::min(lo, t.score), hi = std::max(hi, t.score);
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double n = static_cast<double>(std::max<std::size_t>(run.trials.size() - 1, 1));
  const auto px = [&](double i) { return left + pw * i / n; };
  const auto py = [&](double v) { return top + ph * (hi - v) / (hi - lo); };
  const std::string metric(to_string(run.trials.front().metric));

  std::ofstream out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const std::size_t n_init = std::min(run.settings.n_init, run.trials.size());
  if (n_init > 0) {
    const double x1 = px(static_cast<double>(n_init) - 0.5 < 0 ? 0 : static_cast<double>(n_init) - 0.5);
    out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << std::max(0.0, x1 - left) << "\" height=\""
        << ph << "\" fill=\"#e8e8f4\"/>\n"
        << "<text x=\"" << left + 4 << "\" y=\"" << top + 14 << "\" fill=\"#667\">initial design</text>\n";
  }
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fixed(v, 2)
        << "</text>\n";
  }
  out << "<text x=\"" << left << "\" y=\"" << h - 20 << "\">0</text>\n"
      << "<text x=\"" << left + pw << "\" y=\"" << h - 20 << "\" text-anchor=\"end\">" << run.trials.size() - 1
      << "</text>\n"
      << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">trial</text>\n"
      << "<text x=\"16\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 16 " << top + ph / 2
      << ")\" text-anchor=\"middle\">" << metric << "</text>\n";
  for (std::size_t i = 0; i < run.trials.size(); ++i) {
    out << "<circle cx=\"" << px(static_cast<double>(i)) << "\" cy=\"" << py(run.trials[i].score)
        << "\" r=\"2.5\" fill=\"" << (run.trials[i].diverged ? "#c33" : "#89a") << "\"/>\n";
  }
  out << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < incumbent.size(); ++i) {
    if (i > 0) out << px(static_cast<double>(i)) << ',' << py(incumbent[i - 1]) << ' ';
    out << px(static_cast<double>(i)) << ',' << py(incumbent[i]) << ' ';
  }
  out << "\"/>\n</svg>\n";
  close_out(out, path);
}

std::vector<std::size_t> top_trials(const RunState& run, std::size_t k) {
  std::vector<std::size_t> order(run.trials.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return run.trials[a].score > run.trials[b].score; });
  order.resize(std::min(k, order.size()));
  return order;
}

std::string describe(const Configuration& config) {
  std::ostringstream s;
  s << (config.use_pe ? "pe(scale " + fixed(config.pe_scale, 2) + ")" : std::string("no-pe"));
  for (const auto& l : config.layers) {
    s << " | " << to_string(l.activation) << (l.siren_init ? "*" : "") << " w0=" << fixed(l.omega0, 2)
      << " s0=" << fixed(l.s0, 2) << " b=" << fixed(l.bias_scale, 2) << " c=" << fixed(l.weight_range, 2)
      << " lr=" << std::scientific << std::setprecision(2) << l.lr << std::fixed;
  }
  return s.str();
}

std::string top_table(const RunState& run, std::size_t k) {
  std::ostringstream s;
  const std::string metric = run.trials.empty() ? "score" : std::string(to_string(run.trials.front().metric));
  s << "rank  trial  phase  " << std::setw(9) << metric << "  configuration\n";
  std::size_t rank = 1;
  for (std::size_t i : top_trials(run, k)) {
    const auto& t = run.trials[i];
    s << std::setw(4) << rank++ << "  " << std::setw(5) << t.index << "  " << std::setw(5)
      << (t.phase == Phase::kInit ? "init" : "bo") << "  " << std::setw(9) << fixed(t.score, 4)
      << (t.diverged ? "!" : " ") << " " << describe(t.configuration) << '\n';
  }
  return s.str();
}

nlohmann::json summary(const RunState& run, double elapsed_seconds) {
  const BestTrial b = best(run);
  double trial_seconds = 0.0;
  for (const auto& t : run.trials) trial_seconds += t.wall_seconds;
  return {{"best_trial", b.index},
          {"metric", std::string(to_string(b.score.metric))},
          {"score", b.score.value},
          {"diverged", b.score.diverged},
          {"configuration", configuration_to_json(b.configuration)},
          {"trials", run.trials.size()},
          {"status", run.status == RunStatus::kComplete ? "complete" : "running"},
          {"trial_seconds", trial_seconds},
          {"elapsed_seconds", elapsed_seconds}};
}

}  // namespace inrbo::cli
