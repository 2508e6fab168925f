// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 iff all
// selected criteria pass. Criterion 9 (desk-scale INR search) takes tens of
// minutes and is usually run on its own with `--only 9`.

#include <png.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "inrbo/bo_driver.hpp"
#include "inrbo/config_space.hpp"
#include "inrbo/inr.hpp"
#include "inrbo/objectives.hpp"
#include "oracles/checks.hpp"

using namespace inrbo;
namespace fs = std::filesystem;

namespace {

const std::vector<ActivationFamily> kAll{ActivationFamily::kSiren, ActivationFamily::kGauss, ActivationFamily::kWire,
                                         ActivationFamily::kFiner};

struct Outcome {
  bool passed = false;
  std::string detail;
};

Outcome from(const checks::Verdict& v) { return {v.passed, v.name + ": " + v.detail}; }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string pnm(const char* magic, std::size_t w, std::size_t h, const std::vector<unsigned char>& px) {
  std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  s.append(px.begin(), px.end());
  return s;
}

void write_png(const fs::path& path, std::size_t w, std::size_t h, int channels, const std::vector<unsigned char>& px) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = w * static_cast<std::size_t>(channels);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(px.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

std::string wav_pcm16(int channels, const std::vector<int>& samples) {
  const auto put = [](std::string& s, unsigned v, int bytes) {
    for (int b = 0; b < bytes; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  };
  std::string data;
  for (int v : samples) put(data, static_cast<unsigned>(v) & 0xffff, 2);
  std::string s = "RIFF";
  put(s, static_cast<unsigned>(36 + data.size()), 4);
  s += "WAVEfmt ";
  put(s, 16, 4);
  put(s, 1, 2);
  put(s, static_cast<unsigned>(channels), 2);
  put(s, 8000, 4);
  put(s, static_cast<unsigned>(8000 * channels * 2), 4);
  put(s, static_cast<unsigned>(channels * 2), 2);
  put(s, 16, 2);
  s += "data";
  put(s, static_cast<unsigned>(data.size()), 4);
  return s + data;
}

// Smooth shading, an oriented stripe pattern, a soft disc and fine texture,
// quantized to 8 bits.
std::vector<unsigned char> procedural_image(std::size_t side) {
  std::vector<unsigned char> px(side * side);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double x = (2.0 * c + 1.0) / side - 1.0, y = (2.0 * r + 1.0) / side - 1.0;
      const double disc = 1.0 / (1.0 + std::exp(-40.0 * (0.35 - std::hypot(x - 0.3, y + 0.2))));
      double v = 0.45 + 0.2 * std::sin(2.5 * x + 1.2 * y) + 0.12 * std::cos(6.0 * y - 3.0 * x) + 0.25 * disc +
                 0.04 * std::sin(19.0 * x) * std::sin(15.0 * y);
      v = std::clamp(v, 0.0, 1.0);
      px[r * side + c] = static_cast<unsigned char>(std::lround(255.0 * v));
    }
  }
  return px;
}

// ---------------------------------------------------------------------------
// 8: synthetic BO efficacy

Outcome synthetic_efficacy() {
  const SearchSpace space = SearchSpace::with_defaults(1, kAll, false);
  const Objective objective = synthetic_quadratic(space);
  const int seeds = 10;
  std::vector<double> bo, lhs;
  int hits = 0;
  for (int s = 0; s < seeds; ++s) {
    RunSettings settings;
    settings.n_init = 10;
    settings.n_iter = 40;
    settings.master_seed = 2024 + static_cast<std::uint64_t>(s);
    settings.acquisition.sample_count = 32;
    settings.acquisition.candidate_count = 1024;
    settings.acquisition.feature_count = 512;
    settings.dataset = "synthetic quadratic";
    const double b = best(run_optimization(space, objective, settings)).score.value;
    bo.push_back(b);
    hits += b >= -0.02;

    SeededRng rng(settings.master_seed, 77);
    double top = -std::numeric_limits<double>::infinity();
    std::uint64_t k = 0;
    for (const auto& c : sample_lhs(space, 50, rng)) top = std::max(top, objective(c, k++).value);
    lhs.push_back(top);
  }
  const double mb = median(bo), ml = median(lhs);
  return {hits >= 8 && mb > ml, std::to_string(hits) + "/10 seeds within 0.02 of the optimum 0; median best " +
                                    fmt(mb) + " vs 50-trial LHS median " + fmt(ml)};
}

// ---------------------------------------------------------------------------
// 9: desk-scale INR search against family defaults

Outcome desk_scale(const fs::path& work, int seeds) {
  fs::create_directories(work);
  const fs::path image = work / "procedural.pgm";
  spit(image, pnm("P5", 64, 64, procedural_image(64)));
  const SignalDataset data = load_image(image.string(), 64);

  const SearchSpace space = SearchSpace::with_defaults(3, kAll, true);
  ObjectiveSettings os;
  os.epochs = 500;
  os.width = 64;
  int wins = 0;
  std::ostringstream d;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = 2024 + static_cast<std::uint64_t>(s);
    double baseline = -std::numeric_limits<double>::infinity();
    for (ActivationFamily f : {ActivationFamily::kSiren, ActivationFamily::kGauss, ActivationFamily::kFiner}) {
      baseline = std::max(baseline, evaluate_objective(family_default(f, 3), data, os, seed).score.value);
    }
    RunSettings settings;
    settings.n_init = 10;
    settings.n_iter = 30;
    settings.master_seed = seed;
    settings.objective = os;
    settings.dataset = "procedural 64x64";
    const double found = best(run_optimization(space, make_inr_objective(data, os), settings)).score.value;
    const bool ok = found >= baseline - 0.1;
    wins += ok;
    d << (s ? "; " : "") << "seed " << seed << ": BO " << fmt(found, 2) << " dB vs defaults " << fmt(baseline, 2)
      << " dB" << (ok ? "" : " (short)");
    std::cerr << "  criterion 9 seed " << seed << ": BO " << fmt(found, 2) << " dB, best default "
              << fmt(baseline, 2) << " dB" << std::endl;
  }
  return {wins >= (seeds * 4 + 4) / 5, std::to_string(wins) + "/" + std::to_string(seeds) + " seeds; " + d.str()};
}

// ---------------------------------------------------------------------------
// 10: kill-and-resume through the command-line tool

std::size_t complete_lines(const fs::path& p) {
  const std::string text = slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::string without_wall_time(const std::string& log) {
  static const std::regex wall("\"wall_seconds\":[^,}]*");
  return std::regex_replace(log, wall, "\"wall_seconds\":0");
}

pid_t spawn(const std::string& cli, const fs::path& run_file) {
  const pid_t pid = fork();
  if (pid == 0) {
    if (std::freopen("/dev/null", "w", stdout) == nullptr ||
        std::freopen((run_file.parent_path() / "stderr.txt").c_str(), "a", stderr) == nullptr) {
      _exit(126);
    }
    execl(cli.c_str(), cli.c_str(), "optimize", run_file.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  return pid;
}

int wait_exit(pid_t pid) {
  int status = 0;
  waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Runs to completion, or SIGKILLs the tool once the log holds `kill_after`
// complete lines. Returns false if the tool finished before it could be killed.
bool run_tool(const std::string& cli, const fs::path& run_file, std::size_t kill_after, std::string& why) {
  const pid_t pid = spawn(cli, run_file);
  if (pid < 0) {
    why = "fork failed";
    return false;
  }
  if (kill_after == 0) {
    const int code = wait_exit(pid);
    if (code != 0) why = "tool exited with " + std::to_string(code);
    return code == 0;
  }
  const fs::path log = run_file.parent_path() / "out" / "run.jsonl";
  for (;;) {
    int status = 0;
    if (waitpid(pid, &status, WNOHANG) == pid) {
      why = "run finished before the kill point";
      return false;
    }
    if (fs::exists(log) && complete_lines(log) >= kill_after) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  kill(pid, SIGKILL);
  waitpid(pid, nullptr, 0);
  return true;
}

Outcome kill_and_resume(const fs::path& work, const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "command-line tool not found: '" + cli + "'"};
  const nlohmann::json run = {{"modality", "image"},
                              {"dataset", "img.pgm"},
                              {"output_dir", "out"},
                              {"seed", 11},
                              {"budget", {{"n_init", 4}, {"n_iter", 8}, {"epochs", 300}}},
                              {"acquisition", {{"sample_count", 16}, {"candidate_count", 512}, {"feature_count", 256}}},
                              {"network", {{"depth", 2}, {"width", 24}}}};
  const auto prepare = [&](const std::string& name) {
    const fs::path dir = work / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    spit(dir / "img.pgm", pnm("P5", 32, 32, procedural_image(32)));
    spit(dir / "run.json", run.dump(2));
    return dir / "run.json";
  };

  std::string why;
  const fs::path whole = prepare("uninterrupted"), again = prepare("repeat"), broken = prepare("killed");
  if (!run_tool(cli, whole, 0, why) || !run_tool(cli, again, 0, why)) return {false, why};
  // Header plus two trials, then well into the BO phase, then to completion.
  for (std::size_t kill_after : {3u, 9u, 0u}) {
    if (!run_tool(cli, broken, kill_after, why)) return {false, "kill at " + std::to_string(kill_after) + ": " + why};
  }
  const std::string reference = slurp(whole.parent_path() / "out" / "run.jsonl");
  const bool resumed = without_wall_time(slurp(broken.parent_path() / "out" / "run.jsonl")) ==
                       without_wall_time(reference);
  const bool repeated =
      without_wall_time(slurp(again.parent_path() / "out" / "run.jsonl")) == without_wall_time(reference);
  const std::size_t trials = complete_lines(whole.parent_path() / "out" / "run.jsonl") - 1;
  return {resumed && repeated && trials == 12,
          std::to_string(trials) + "-trial log; killed twice and resumed: " + (resumed ? "identical" : "DIFFERS") +
              "; repeated run: " + (repeated ? "identical" : "DIFFERS") + " (wall_seconds masked)"};
}

// ---------------------------------------------------------------------------
// 11: metrics and loaders

Outcome metric_suite(const fs::path& work) {
  fs::create_directories(work);
  std::vector<std::string> failures;
  int cases = 0;
  const auto expect = [&](bool ok, const std::string& what) {
    ++cases;
    if (!ok) failures.push_back(what);
  };

  DenseMatrix target(4, 1), pred(4, 1);
  target << 0.1, 0.4, 0.5, 0.8;
  expect(psnr(target, target, 1.0) == 100.0, "psnr identical != 100");
  pred = target.array() + 0.1;
  expect(std::abs(psnr(pred, target, 1.0) - 20.0) < 1e-12, "psnr peak 1 mse 0.01");
  pred = target.array() - 0.2;
  expect(std::abs(psnr(pred, target, 2.0) - 20.0) < 1e-12, "psnr peak 2 mse 0.04");

  DenseMatrix a(6, 1), b(6, 1), none = DenseMatrix::Zero(6, 1);
  a << 1, 1, 1, 1, 0, 0;
  b << 1, 1, 0, 0, 0, 0;
  expect(iou(a, a) == 1.0, "iou identical");
  DenseMatrix disjoint(6, 1);
  disjoint << 0, 0, 0, 0, 1, 1;
  expect(iou(disjoint, a) == 0.0, "iou disjoint");
  expect(iou(b, a) == 0.5, "iou half of target");
  expect(iou(none, none) == 1.0, "iou both empty");

  const SignalDataset two = load_image(([&] {
                                         spit(work / "two.pgm", pnm("P5", 2, 2, {0, 255, 0, 255}));
                                         return (work / "two.pgm").string();
                                       })(),
                                       64);
  bool two_ok = two.targets.rows() == 4;
  for (Eigen::Index i = 0; two_ok && i < 4; ++i) {
    two_ok = two.targets(i, 0) == (i % 2 == 0 ? 0.0 : 1.0) && std::abs(two.coords(i, 0)) == 0.5 &&
             std::abs(two.coords(i, 1)) == 0.5;
  }
  expect(two_ok && two.coords(0, 0) == -0.5 && two.coords(0, 1) == -0.5, "2x2 PGM values and half-pixel centres");

  std::vector<unsigned char> gray(7 * 5), rgb(3 * 4 * 3);
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<unsigned char>((i * 73 + 5) % 256);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<unsigned char>((i * 41 + 9) % 256);
  const auto exact = [](const SignalDataset& d, const std::vector<unsigned char>& px) {
    if (static_cast<std::size_t>(d.targets.size()) != px.size()) return false;
    for (Eigen::Index r = 0; r < d.targets.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.targets.cols(); ++c) {
        if (d.targets(r, c) != px[static_cast<std::size_t>(r * d.targets.cols() + c)] / 255.0) return false;
      }
    }
    return true;
  };
  spit(work / "g.pgm", pnm("P5", 7, 5, gray));
  expect(exact(load_image((work / "g.pgm").string(), 64), gray), "binary PGM roundtrip");
  std::string ascii = "P2\n7 5\n255\n";
  for (unsigned char v : gray) ascii += std::to_string(v) + " ";
  spit(work / "a.pgm", ascii);
  expect(exact(load_image((work / "a.pgm").string(), 64), gray), "ASCII PGM roundtrip");
  spit(work / "c.ppm", pnm("P6", 3, 4, rgb));
  expect(exact(load_image((work / "c.ppm").string(), 64), rgb), "binary PPM roundtrip");
  write_png(work / "g.png", 7, 5, 1, gray);
  expect(exact(load_image((work / "g.png").string(), 64), gray), "gray PNG roundtrip");
  write_png(work / "c.png", 3, 4, 3, rgb);
  expect(exact(load_image((work / "c.png").string(), 64), rgb), "RGB PNG roundtrip");

  spit(work / "three.wav", wav_pcm16(1, {32767, 0, -32768}));
  const SignalDataset three = load_audio_wav((work / "three.wav").string(), 100);
  expect(three.coords.rows() == 3 && three.coords(0, 0) == -100.0 && three.coords(1, 0) == 0.0 &&
             three.coords(2, 0) == 100.0,
         "3-sample WAV coordinates");
  expect(three.targets.rows() == 3 && three.targets(0, 0) == 32767.0 / 32768.0 && three.targets(2, 0) == -1.0,
         "PCM16 amplitude scaling");
  spit(work / "stereo.wav", wav_pcm16(2, {1000, 3000, -200, 200}));
  const SignalDataset stereo = load_audio_wav((work / "stereo.wav").string(), 100);
  expect(stereo.targets.rows() == 2 && stereo.targets(0, 0) == 2000.0 / 32768.0 && stereo.targets(1, 0) == 0.0,
         "stereo averaged to mono");

  std::string detail = std::to_string(cases - static_cast<int>(failures.size())) + "/" + std::to_string(cases) +
                       " closed-form and roundtrip cases exact";
  for (const auto& f : failures) detail += "; failed: " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria runner"};
  std::vector<int> only, skip;
  std::string cli, work = (fs::temp_directory_path() / "inrbo_acceptance").string();
  int desk_seeds = 5;
  app.add_option("--only", only, "run just these criteria");
  app.add_option("--skip", skip, "criteria to leave out");
  app.add_option("--cli", cli, "path of the inrbo command-line tool (criterion 10)");
  app.add_option("--work-dir", work, "scratch directory");
  app.add_option("--desk-seeds", desk_seeds, "seeds for criterion 9")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const fs::path root(work);
  const std::vector<Criterion> criteria{
      {1, "GP oracle equivalence", 5, [] { return from(checks::gp_posterior(50, 2025)); }},
      {2, "kernel PSD", 30, [] { return from(checks::kernel_psd(200, 64, 2026)); }},
      {3, "Matheron moments", 60, [] { return from(checks::matheron_moments(10000, 10, 2027)); }},
      {4, "EEI consistency", 60, [] { return from(checks::eei_consistency(10000, 50, 2028)); }},
      {5, "analytic EI vs integral", 5, [] { return from(checks::analytic_ei_integral()); }},
      {6, "greedy counterexample", 1, [] { return from(checks::payoff_counterexample()); }},
      {7, "gradient correctness", 30, [] { return from(checks::gradients(20, 2031)); }},
      {8, "synthetic BO efficacy", 120, synthetic_efficacy},
      {9, "desk-scale INR run", 1800, [&] { return desk_scale(root / "desk", desk_seeds); }},
      {10, "determinism and resume", 300, [&] { return kill_and_resume(root / "resume", cli); }},
      {11, "metric unit suite", 5, [&] { return metric_suite(root / "metrics"); }},
  };

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    if (std::find(skip.begin(), skip.end(), c.id) != skip.end()) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.limit_seconds;
    const bool ok = o.passed && in_time;
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << fmt(seconds, 1) << " s, limit " << c.limit_seconds << " s" << (in_time ? "" : ", EXCEEDED") << "]"
              << std::endl;
  }
  std::cout << (failed == 0 ? "all " + std::to_string(ran) + " criteria passed"
                            : std::to_string(failed) + " of " + std::to_string(ran) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
