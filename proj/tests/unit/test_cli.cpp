#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>
#include <sys/wait.h>

#include "cmj/commands.hpp"
#include "cmj/config.hpp"
#include "cmj/errors.hpp"
#include "cmj/io.hpp"

using namespace cmj;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cmj_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

const char* kSmallBernoulli = R"(
[law]
variant = bernoulli_split
p = 0.75
lifetime = exponential
lifetime.mean = 1

[run]
horizon = 16
grid.start = 0
grid.stop = 16
grid.step = 0.5
replicas = 300
seed = 5

[verify]
t = 6
T = 16
clt.min_retained = 100
c_delta.samples = 20000
curve.min_replicas = 50
deltas = 1, 4, 10
)";

#ifdef CMJSIM_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(CMJSIM_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace

TEST_CASE("config grammar") {
  const auto f = KeyValueFile::parse(
      "# comment\n"
      "top.key = 3  # trailing\n"
      "[law]\n"
      "variant = \"poisson_ages\"\n"
      "rate = 2\n");
  CHECK(f.text("law.variant") == "poisson_ages");
  CHECK(f.real("law.rate") == 2.0);
  CHECK(f.integer("top.key") == 3);
  CHECK(f.real("missing", 1.5) == 1.5);
  CHECK_THROWS_AS(f.real("missing"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parse("[a]\nx = 1\nx = 2\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parse("[a]\nno equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_real("1.5x", "v"), ConfigError);
  CHECK(parse_real("inf", "v") == kInfinity);
  CHECK(parse_integer("0xC0FFEE", "v") == 0xC0FFEE);
  CHECK(parse_integer("1e6", "v") == 1000000);
  CHECK_THROWS_AS(parse_integer("1.5", "v"), ConfigError);
  CHECK(format_real(0.1) == "0.1");
  CHECK(format_real(1.0 / 3.0) == "0.3333333333333333");
}

TEST_CASE("grid resolution") {
  GridSpec g;
  g.start = 0.0;
  g.stop = 1.0;
  g.step = 0.1;
  g.extra = {0.55, 0.5};
  const auto pts = g.resolve(1.0);
  REQUIRE(pts.size() == 12);
  CHECK(pts[3] == 0.3);
  CHECK(pts[6] == 0.55);
  CHECK(pts.back() == 1.0);
  CHECK_THROWS_AS(g.resolve(0.9), ConfigError);

  GridSpec list;
  list.list = {2.5, 0.5, 1.5, 0.5};
  CHECK(list.resolve(4.0) == std::vector<double>{0.5, 1.5, 2.5});
}

TEST_CASE("schema validation") {
  CHECK_NOTHROW(parse_run_config(KeyValueFile::parse(kSmallBernoulli)));
  CHECK_THROWS_AS(parse_run_config(KeyValueFile::parse(std::string(kSmallBernoulli) + "typo = 1\n")), ConfigError);
  CHECK_THROWS_AS(parse_law(KeyValueFile::parse("[law]\nvariant = nope\n")), ConfigError);
  CHECK_THROWS_AS(parse_law(KeyValueFile::parse("[law]\nvariant = bernoulli_split\np = 1.5\nlifetime = fixed\nlifetime.age = 1\n")),
                  ConfigError);
  const auto cfg = parse_run_config(KeyValueFile::parse(kSmallBernoulli));
  CHECK(cfg.run.replicas == 300);
  CHECK(cfg.verify.clt.min_retained == 100);
  CHECK_FALSE(cfg.run.age_cap.has_value());
  const std::string echo = cfg.echo();
  CHECK(echo.find("run.replicas = 300\n") != std::string::npos);
  CHECK(echo.find("run.age_cap = auto\n") != std::string::npos);
  CHECK(echo.find("jobs") == std::string::npos);  // outputs must not depend on it
}

TEST_CASE("ensemble csv round trip") {
  auto cfg = parse_run_config(KeyValueFile::parse(kSmallBernoulli));
  cfg.run.replicas = 20;
  CommandOptions o;
  const auto c = constants_for(cfg.law, o);
  const auto e = simulate(cfg, c, o);
  std::stringstream paths, gens;
  write_paths_csv(paths, e);
  write_generations_csv(gens, e);
  const auto back = read_ensemble_csv(paths, gens, cfg.run.horizon);
  REQUIRE(back.replicas.size() == e.replicas.size());
  CHECK(back.grid == e.grid);
  for (std::size_t i = 0; i < e.replicas.size(); ++i) {
    CHECK(back.replicas[i].w == e.replicas[i].w);
    CHECK(back.replicas[i].q == e.replicas[i].q);
    CHECK(back.replicas[i].births == e.replicas[i].births);
    CHECK(back.replicas[i].z == e.replicas[i].z);
    CHECK(back.replicas[i].complete_generations == e.replicas[i].complete_generations);
    CHECK(back.replicas[i].extinct == e.replicas[i].extinct);
  }
}

TEST_CASE("simulate output does not depend on jobs") {
  const auto cfg = parse_run_config(KeyValueFile::parse(kSmallBernoulli));
  const auto one = scratch("jobs1");
  const auto four = scratch("jobs4");
  std::ostringstream sink;
  CommandOptions o;
  o.out_dir = one;
  o.jobs = 1;
  CHECK(cmd_simulate(cfg, o, sink) == kExitPass);
  o.out_dir = four;
  o.jobs = 4;
  CHECK(cmd_simulate(cfg, o, sink) == kExitPass);
  CHECK(slurp(one / "paths.csv") == slurp(four / "paths.csv"));
  CHECK(slurp(one / "generations.csv") == slurp(four / "generations.csv"));
  CHECK(slurp(one / "paths.csv").size() > 1000);
}

TEST_CASE("failed writes leave no partial outputs") {
  const auto cfg = parse_run_config(KeyValueFile::parse(kSmallBernoulli));
  const auto dir = scratch("partial");
  fs::create_directories(dir / "manifest.txt");  // a directory where the manifest should go
  CommandOptions o;
  o.out_dir = dir;
  std::ostringstream sink, err;
  const int code = run_command([&] { return cmd_simulate(cfg, o, sink); }, err);
  CHECK(code == kExitPrecondition);
  CHECK_FALSE(fs::exists(dir / "paths.csv"));
  CHECK_FALSE(fs::exists(dir / "generations.csv"));
}

TEST_CASE("exit codes of the library commands") {
  std::ostringstream out, err;
  CommandOptions o;
  const auto pair = ReproductionLaw::deterministic_ages({1.0, 1.0});
  CHECK(run_command([&] { return cmd_constants(pair, o, out); }, err) == kExitPrecondition);
  CHECK(err.str().find("(A4)") != std::string::npos);
  o.debug_degenerate = true;
  CHECK(run_command([&] { return cmd_constants(pair, o, out); }, err) == kExitPass);

  std::ostringstream err1;
  const auto sub = ReproductionLaw::bernoulli_split(0.4, ExponentialAge{1.0});
  CHECK(run_command([&] { return cmd_constants(sub, CommandOptions{}, out); }, err1) == kExitPrecondition);
  CHECK(err1.str().find("assumption (A1) violated") != std::string::npos);
}

TEST_CASE("verify writes reports and honours the mis-scale knob") {
  const auto cfg = parse_run_config(KeyValueFile::parse(kSmallBernoulli));
  const auto dir = scratch("verify");
  std::ostringstream out;
  CommandOptions o;
  o.out_dir = dir;
  o.debug_miscale = 4.0;
  CHECK(cmd_verify(cfg, "clt", o, out) == kExitFail);
  CHECK(fs::exists(dir / "clt_report.txt"));
  CHECK(fs::exists(dir / "clt_report.csv"));
  CHECK(fs::exists(dir / "variance_curve.csv"));
  CHECK(fs::exists(dir / "c_delta.csv"));
  CHECK(slurp(dir / "clt_report.txt").find("verdict = fail") != std::string::npos);
}

#ifdef CMJSIM_PATH
TEST_CASE("cmjsim exit codes") {
  const std::string configs = CMJ_CONFIG_DIR;
  CHECK(run_cli("constants --config " + configs + "/bernoulli.cfg") == 0);
  CHECK(run_cli("constants --config " + configs + "/poisson.cfg") == 0);
  CHECK(run_cli("constants --config " + configs + "/deterministic.cfg") == 2);
  CHECK(run_cli("constants --config " + configs + "/subcritical.cfg") == 2);
  CHECK(run_cli("constants --config /nonexistent.cfg") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("verify nosuchsuite --config " + configs + "/bernoulli.cfg") == 2);

  const auto dir = scratch("exe");
  const auto small = write_file(dir / "small.cfg", kSmallBernoulli);
  // t1 + 6/alpha = 14 + 12 > T = 16: refused before any simulation.
  CHECK(run_cli("verify lil --config " + small.string()) == 2);
  CHECK(run_cli("verify clt --debug-miscale 4 --config " + small.string()) == 1);
  CHECK(run_cli("simulate --config " + small.string() + " --out " + (dir / "ens").string()) == 0);
  CHECK(run_cli("verify clt --debug-miscale 4 --config " + small.string() + " --ensemble " +
                (dir / "ens").string()) == 1);
  CHECK(run_cli("simulate --debug-degenerate --config " + configs + "/deterministic.cfg --out " +
                (dir / "det").string()) == 0);
  const std::string paths = slurp(dir / "det" / "paths.csv");
  CHECK(paths.find("0,2.5,1,0.125,7,8,") != std::string::npos);
}
#endif
