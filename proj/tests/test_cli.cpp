#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(LCZ_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (const auto n = fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  const int raw = pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lcz_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

const std::string kSmoke = std::string(LCZ_SOURCE_DIR) + "/configs/smoke.cfg";

}  // namespace

TEST_CASE("usage errors exit 1 and name the token") {
  auto r = run("");
  CHECK(r.status == 1);
  r = run("pipeline --no-such-flag");
  CHECK(r.status == 1);
  CHECK(r.output.find("--no-such-flag") != std::string::npos);
  r = run("frobnicate");
  CHECK(r.status == 1);
  r = run("synth --vae.epochs=abc --out " + scratch("bad").string());
  CHECK(r.status == 1);
  CHECK(r.output.find("vae.epochs") != std::string::npos);
}

TEST_CASE("help exits 0") { CHECK(run("--help").status == 0); }

TEST_CASE("data errors exit 2") {
  const auto dir = scratch("missing");
  const auto r = run("train-vae --out " + dir.string());
  CHECK(r.status == 2);
}

TEST_CASE("check passes and reports the gradient error") {
  const auto r = run("check");
  CHECK(r.status == 0);
  const auto at = r.output.find("max gradient error: ");
  REQUIRE(at != std::string::npos);
  CHECK(std::stod(r.output.substr(at + 20)) <= 1e-5);
  CHECK(r.output.find("check: pass") != std::string::npos);
}

TEST_CASE("staged run matches the chained pipeline byte for byte") {
  const auto a = scratch("a"), b = scratch("b"), c = scratch("c");
  REQUIRE(run("pipeline --config " + kSmoke + " --out " + a.string()).status == 0);
  REQUIRE(run("pipeline --config " + kSmoke + " --out " + b.string()).status == 0);
  for (const char* stage : {"synth", "rasterize", "train-vae", "train-reg", "perturb", "label", "analyze"})
    REQUIRE(run(std::string(stage) + " --config " + kSmoke + " --out " + c.string()).status == 0);
  const auto fig = slurp(a / "report" / "figure.csv");
  CHECK_FALSE(fig.empty());
  CHECK(fig == slurp(b / "report" / "figure.csv"));
  CHECK(fig == slurp(c / "report" / "figure.csv"));
  CHECK(slurp(a / "labels" / "records.csv") == slurp(b / "labels" / "records.csv"));
  CHECK(slurp(a / "models" / "vae.lczm") == slurp(c / "models" / "vae.lczm"));
  CHECK(slurp(a / "report" / "report.txt") == slurp(c / "report" / "report.txt"));
}

TEST_CASE("resolved config is written and replays the run") {
  const auto a = scratch("replay_a"), b = scratch("replay_b");
  REQUIRE(run("pipeline --config " + kSmoke + " --seed 11 --out " + a.string()).status == 0);
  const auto cfg = slurp(a / "config.resolved.cfg");
  CHECK(cfg.find("run.seed = 11") != std::string::npos);
  REQUIRE(run("pipeline --config " + (a / "config.resolved.cfg").string() + " --out " + b.string()).status == 0);
  CHECK(slurp(a / "report" / "figure.csv") == slurp(b / "report" / "figure.csv"));
}

TEST_CASE("dt sweep flag") {
  const auto dir = scratch("sweep");
  REQUIRE(run("pipeline --config " + kSmoke + " --out " + dir.string()).status == 0);
  const auto r = run("perturb --config " + kSmoke + " --out " + dir.string() + " --dt-sweep=1,3,5,10,-1,-3,-5,-10");
  REQUIRE(r.status == 0);
  CHECK(slurp(dir / "config.resolved.cfg").find("perturb.dt_sweep = 1,3,5,10,-1,-3,-5,-10") != std::string::npos);
  // The baseline is added, so 8 requested changes yield 9 per scene.
  std::ifstream idx(dir / "perturb" / "index.csv");
  std::string line;
  std::getline(idx, line);
  std::size_t rows = 0;
  while (std::getline(idx, line)) ++rows;
  CHECK(rows % 9 == 0);
  CHECK(rows > 0);
}

TEST_CASE("config key flags override the file") {
  const auto dir = scratch("override");
  const auto r = run("synth --config " + kSmoke + " --synth.n_scenes 6 --out " + dir.string());
  REQUIRE(r.status == 0);
  std::ifstream manifest(dir / "corpus" / "manifest.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(manifest, line)) ++rows;
  CHECK(rows == 7);
}
