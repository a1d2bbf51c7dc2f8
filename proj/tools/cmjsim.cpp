// cmjsim: constants, ensembles and verification suites for CMJ processes.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cmj/commands.hpp"
#include "cmj/config.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<unsigned> jobs;
  std::optional<std::uint64_t> seed;
  bool debug_degenerate = false;
  double debug_miscale = 1.0;
  double debug_alpha_scale = 1.0;
  std::string ensemble;
};

cmj::CommandOptions to_options(const Flags& f) {
  cmj::CommandOptions o;
  o.out_dir = f.out;
  o.jobs = f.jobs;
  o.seed = f.seed;
  o.debug_degenerate = f.debug_degenerate;
  o.debug_miscale = f.debug_miscale;
  o.debug_alpha_scale = f.debug_alpha_scale;
  if (!f.ensemble.empty()) o.ensemble_dir = f.ensemble;
  return o;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Run configuration (sectioned key = value)")->required();
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--jobs", f.jobs, "Worker threads (overrides run.jobs)")->check(CLI::Range(1u, 1024u));
  cmd->add_option("--seed", f.seed, "Master seed (overrides run.seed)");
  cmd->add_flag("--debug-degenerate", f.debug_degenerate, "Accept sigma^2 = 0 and lattice laws");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crump-Mode-Jagers process simulator and limit-theorem checks"};
  app.require_subcommand(1);
  Flags flags;

  auto* constants = app.add_subcommand("constants", "Print the model constants of the configured law");
  add_common(constants, flags);

  auto* simulate = app.add_subcommand("simulate", "Simulate an ensemble and write paths.csv, generations.csv, manifest.txt");
  add_common(simulate, flags);

  std::string suite;
  auto* verify = app.add_subcommand("verify", "Run one verification suite");
  verify->add_option("suite", suite, "lln | clt | fclt | lil | meansq | cdelta")
      ->required()
      ->check(CLI::IsMember({"lln", "clt", "fclt", "lil", "meansq", "cdelta"}));
  add_common(verify, flags);
  verify->add_option("--ensemble", flags.ensemble, "Reuse the ensemble written by simulate in this directory");
  verify->add_option("--debug-miscale", flags.debug_miscale, "Multiply the normalizing constant (sanity runs)");
  verify->add_option("--debug-alpha-scale", flags.debug_alpha_scale, "Multiply alpha in the meansq normalization");

  auto* report = app.add_subcommand("report", "Variance curve, c_delta table and ensemble summary");
  add_common(report, flags);
  report->add_option("--ensemble", flags.ensemble, "Reuse the ensemble written by simulate in this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cmj::kExitPrecondition;
  }

  const auto options = to_options(flags);
  return cmj::run_command(
      [&]() -> int {
        if (constants->parsed()) {
          const auto file = cmj::KeyValueFile::load(flags.config);
          return cmj::cmd_constants(cmj::parse_law(file), options, std::cout);
        }
        const auto config = cmj::load_run_config(flags.config);
        if (simulate->parsed()) return cmj::cmd_simulate(config, options, std::cout);
        if (verify->parsed()) return cmj::cmd_verify(config, suite, options, std::cout);
        return cmj::cmd_report(config, options, std::cout);
      },
      std::cerr);
}
