#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "cmj/config.hpp"
#include "cmj/engine.hpp"
#include "cmj/malthusian.hpp"

namespace cmj {

enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitPrecondition = 2 };

struct CommandOptions {
  std::filesystem::path out_dir;  // empty: print only
  std::optional<unsigned> jobs;
  std::optional<std::uint64_t> seed;
  bool debug_degenerate = false;  // accept sigma^2 = 0 and lattice laws
  double debug_miscale = 1.0;     // multiplies the suite's normalizing constant
  double debug_alpha_scale = 1.0; // meansq only
  std::optional<std::filesystem::path> ensemble_dir;  // reuse a simulate output
};

int cmd_constants(const ReproductionLaw& law, const CommandOptions& options, std::ostream& out);
int cmd_simulate(const RunConfig& config, const CommandOptions& options, std::ostream& out);
int cmd_verify(const RunConfig& config, const std::string& suite, const CommandOptions& options,
               std::ostream& out);
// Variance curve, c_delta table and an ensemble summary.
int cmd_report(const RunConfig& config, const CommandOptions& options, std::ostream& out);

// Runs `body`, mapping library errors to exit code 2 with the message on `err`
// (assumption violations name the assumption).
int run_command(const std::function<int()>& body, std::ostream& err);

// Shared pipeline pieces, exposed for tests.
ModelConstants constants_for(const ReproductionLaw& law, const CommandOptions& options);
Ensemble simulate(const RunConfig& config, const ModelConstants& constants, const CommandOptions& options);

}  // namespace cmj
