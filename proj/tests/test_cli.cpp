#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "app.hpp"
#include "inrbo/bo_driver.hpp"
#include "inrbo/config_space.hpp"
#include "inrbo/inr.hpp"

using namespace inrbo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "inrbo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

void write_pgm(const fs::path& p, std::size_t side, bool constant) {
  std::string bytes = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  for (std::size_t i = 0; i < side * side; ++i) {
    bytes.push_back(static_cast<char>(constant ? 128 : (i * 37 + (i / side) * 11) % 256));
  }
  spit(p, bytes);
}

// Fresh scratch directory holding a 16x16 image and a tiny run file.
struct Workspace {
  fs::path dir;

  explicit Workspace(const std::string& name, bool constant_image = false, json overrides = json::object()) {
    dir = fs::temp_directory_path() / ("inrbo_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_pgm(dir / "img.pgm", 16, constant_image);
    json rf = {{"modality", "image"},
               {"dataset", "img.pgm"},
               {"output_dir", "out"},
               {"seed", 7},
               {"budget", {{"n_init", 3}, {"n_iter", 2}, {"epochs", 50}}},
               {"acquisition", {{"sample_count", 16}, {"candidate_count", 256}, {"feature_count", 256}}},
               {"network", {{"depth", 2}, {"width", 16}}}};
    rf.merge_patch(overrides);
    spit(dir / "run.json", rf.dump(2));
  }

  std::string run_file() const { return (dir / "run.json").string(); }
  fs::path log() const { return dir / "out" / "run.jsonl"; }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("optimize runs the budget, writes outputs and resumes without duplicates") {
    const Workspace ws("optimize");
    const Outcome first = invoke({"optimize", ws.run_file()});
    REQUIRE_MESSAGE(first.code == 0, first.err);
    const RunState run = read_run_log(ws.log().string());
    CHECK(run.trials.size() == 5);
    CHECK(run.status == RunStatus::kComplete);
    CHECK(fs::exists(ws.dir / "out" / "convergence.csv"));
    const json summary = json::parse(slurp(ws.dir / "out" / "summary.json"));
    CHECK(summary.at("trials") == 5);
    CHECK(summary.at("metric") == "psnr");
    CHECK(summary.at("configuration").contains("layers"));

    const std::string before = slurp(ws.log());
    const Outcome again = invoke({"optimize", ws.run_file()});
    CHECK(again.code == 0);
    CHECK(slurp(ws.log()) == before);

    SUBCASE("a changed override is refused") {
      const Outcome changed = invoke({"optimize", ws.run_file(), "--epochs", "60"});
      CHECK(changed.code == 2);
      CHECK(changed.err.find("epochs") != std::string::npos);
      CHECK(slurp(ws.log()) == before);
    }
    SUBCASE("--force starts over") {
      const Outcome forced = invoke({"optimize", ws.run_file(), "--force", "--n-iter", "1"});
      CHECK(forced.code == 0);
      CHECK(read_run_log(ws.log().string()).trials.size() == 4);
    }
  }

  TEST_CASE("optimize reports a missing dataset as a config error") {
    const Workspace ws("missing", false, {{"dataset", "nowhere.pgm"}});
    const Outcome o = invoke({"optimize", ws.run_file()});
    CHECK(o.code == 2);
    CHECK(o.err.find("nowhere.pgm") != std::string::npos);
  }

  TEST_CASE("optimize rejects unknown run-file fields naming them") {
    const Workspace ws("unknown", false, {{"budget", {{"n_inti", 4}}}});
    const Outcome o = invoke({"optimize", ws.run_file()});
    CHECK(o.code == 2);
    CHECK(o.err.find("n_inti") != std::string::npos);
  }

  TEST_CASE("the output-directory environment variable wins over the run file") {
    const Workspace ws("envdir", false, {{"budget", {{"n_init", 2}, {"n_iter", 0}}}});
    const fs::path target = ws.dir / "elsewhere";
    ::setenv("INRBO_OUTPUT_DIR", target.c_str(), 1);
    const Outcome o = invoke({"optimize", ws.run_file()});
    ::unsetenv("INRBO_OUTPUT_DIR");
    CHECK(o.code == 0);
    CHECK(fs::exists(target / "run.jsonl"));
    CHECK_FALSE(fs::exists(ws.log()));
  }

  TEST_CASE("evaluate scores one configuration") {
    const Workspace ws("evaluate", true, {{"budget", {{"epochs", 500}}}, {"network", {{"depth", 3}, {"width", 64}}}});
    const fs::path config = ws.dir / "siren.json";
    spit(config, configuration_to_json(family_default(ActivationFamily::kSiren, 3)).dump(2));

    const Outcome text = invoke({"evaluate", ws.run_file(), config.string()});
    REQUIRE_MESSAGE(text.code == 0, text.err);
    CHECK(text.out.find("metric: psnr") != std::string::npos);

    const Outcome js = invoke({"--json", "evaluate", ws.run_file(), config.string()});
    REQUIRE(js.code == 0);
    const json doc = json::parse(js.out);
    for (const char* key : {"metric", "score", "diverged", "final_loss", "epochs_run", "wall_seconds", "history"}) {
      CHECK_MESSAGE(doc.contains(key), key);
    }
    CHECK(doc.at("score").get<double>() >= 60.0);
    CHECK(doc.at("diverged") == false);
    CHECK(doc.at("epochs_run") == 500);
  }

  TEST_CASE("evaluate rejects an out-of-bounds frequency naming it") {
    const Workspace ws("bounds", false, {{"network", {{"depth", 3}}}});
    Configuration c = family_default(ActivationFamily::kSiren, 3);
    c.layers[1].omega0 = 1e6;
    const fs::path config = ws.dir / "bad.json";
    spit(config, configuration_to_json(c).dump(2));
    const Outcome o = invoke({"evaluate", ws.run_file(), config.string()});
    CHECK(o.code == 2);
    CHECK(o.err.find("omega0") != std::string::npos);
  }

  TEST_CASE("report writes the convergence table, plot and ranking") {
    const Workspace ws("report");
    REQUIRE(invoke({"optimize", ws.run_file()}).code == 0);
    const fs::path out = ws.dir / "rep";
    const Outcome o = invoke({"report", ws.log().string(), out.string()});
    REQUIRE_MESSAGE(o.code == 0, o.err);

    std::istringstream csv(slurp(out / "convergence.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "trial,score,best_so_far");
    std::vector<double> incumbent;
    while (std::getline(csv, line)) incumbent.push_back(std::stod(line.substr(line.rfind(',') + 1)));
    REQUIRE(incumbent.size() == 5);
    for (std::size_t i = 1; i < incumbent.size(); ++i) CHECK(incumbent[i] >= incumbent[i - 1]);

    const std::string svg = slurp(out / "convergence.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(line_count(slurp(out / "top5.txt")) == 6);
  }

  TEST_CASE("report fails with a data error on empty or corrupt logs") {
    const fs::path dir = fs::temp_directory_path() / "inrbo_cli_badlog";
    fs::remove_all(dir);
    fs::create_directories(dir);
    spit(dir / "empty.jsonl", "");
    const Outcome empty = invoke({"report", (dir / "empty.jsonl").string(), (dir / "o").string()});
    CHECK(empty.code == 3);

    spit(dir / "garbage.jsonl", "{\"type\":\"header\"}\nnot json\n{}\n");
    const Outcome bad = invoke({"report", (dir / "garbage.jsonl").string(), (dir / "o").string()});
    CHECK(bad.code == 3);
    CHECK(bad.err.find(":1:") != std::string::npos);
  }

  TEST_CASE("selftest exits 1 naming the EI check when the formula is broken") {
    const Outcome o = invoke({"selftest", "--inject-ei-fault"});
    CHECK(o.code == 1);
    CHECK(o.out.find("FAIL analytic_ei_integral") != std::string::npos);
    CHECK(o.out.find("PASS payoff_counterexample: greedy=10 at (B,A), global=12 at (A,A)") != std::string::npos);
  }

  TEST_CASE("usage errors exit 2") {
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"optimize"}).code == 2);
    CHECK(invoke({"selftest", "--level", "medium"}).code == 2);
  }
}
