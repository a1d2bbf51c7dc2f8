#include "cmj/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "cmj/analysis.hpp"
#include "cmj/errors.hpp"
#include "cmj/io.hpp"
#include "cmj/runner.hpp"

namespace cmj {
namespace fs = std::filesystem;
namespace {

// Files created by a command; removed again unless commit() is reached.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : files_) fs::remove(p, ec);
  }

  bool enabled() const { return !dir_.empty(); }

  std::ofstream open(const std::string& name) {
    if (files_.empty()) fs::create_directories(dir_);
    const auto path = dir_ / name;
    files_.push_back(path);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    return f;
  }

  void adopt(const std::vector<fs::path>& written) { files_.insert(files_.end(), written.begin(), written.end()); }
  const fs::path& dir() {
    fs::create_directories(dir_);
    return dir_;
  }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool committed_ = false;
};

void close_checked(std::ofstream& f, const std::string& what) {
  f.close();
  if (!f) throw std::runtime_error("write failed: " + what);
}

SuiteOptions suite_options(const CommandOptions& o) {
  SuiteOptions s;
  s.allow_degenerate = o.debug_degenerate;
  s.miscale = o.debug_miscale;
  s.alpha_scale = o.debug_alpha_scale;
  return s;
}

double resolved_age_cap(const RunConfig& config, const ModelConstants& constants) {
  return config.run.age_cap ? *config.run.age_cap : auto_age_cap(config.law, constants.alpha);
}

Ensemble load_ensemble(const fs::path& dir) {
  std::ifstream paths(dir / "paths.csv");
  std::ifstream gens(dir / "generations.csv");
  if (!paths || !gens) throw std::runtime_error("no ensemble (paths.csv, generations.csv) in " + dir.string());
  return read_ensemble_csv(paths, gens, read_manifest_horizon(dir / "manifest.txt"));
}

Ensemble obtain_ensemble(const RunConfig& config, const ModelConstants& constants, const CommandOptions& options) {
  if (options.ensemble_dir) return load_ensemble(*options.ensemble_dir);
  return simulate(config, constants, options);
}

// Deltas of the configured table plus any lag a suite needs.
std::vector<double> table_deltas(const RunConfig& config, std::initializer_list<double> needed) {
  std::vector<double> d = config.verify.deltas;
  d.insert(d.end(), needed.begin(), needed.end());
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  return d;
}

struct CurveAndTable {
  VarianceCurve curve;
  CDeltaTable table;
};

CurveAndTable curve_and_table(const RunConfig& config, const ModelConstants& constants, const Ensemble& ensemble,
                              const std::vector<double>& deltas) {
  CurveAndTable r;
  r.curve = estimate_variance_curve(ensemble, config.verify.curve_min_replicas);
  Rng rng = make_stream(config.verify.c_delta_seed);
  r.table = compute_c_delta_table(config.law, constants, r.curve, deltas, config.verify.c_delta_samples, rng);
  return r;
}

void write_curve_outputs(OutputSet& outputs, const CurveAndTable& ct) {
  auto v = outputs.open("variance_curve.csv");
  write_variance_curve_csv(v, ct.curve);
  close_checked(v, "variance_curve.csv");
  auto c = outputs.open("c_delta.csv");
  write_c_delta_csv(c, ct.table);
  close_checked(c, "c_delta.csv");
}

}  // namespace

ModelConstants constants_for(const ReproductionLaw& law, const CommandOptions& options) {
  return derive_constants(law, 1e-12, options.debug_degenerate ? DegeneratePolicy::Allow : DegeneratePolicy::Reject);
}

Ensemble simulate(const RunConfig& config, const ModelConstants& constants, const CommandOptions& options) {
  EnsembleSpec spec{config.law,
                    config.run.horizon,
                    config.run.grid.resolve(config.run.horizon),
                    resolved_age_cap(config, constants),
                    config.run.max_births,
                    options.seed.value_or(config.run.seed),
                    config.run.replicas,
                    options.jobs.value_or(config.run.jobs),
                    {}};
  return run_ensemble(spec, constants);
}

int run_command(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const AssumptionViolated& e) {
    err << "assumption " << e.what() << "\n";
  } catch (const PreconditionError& e) {
    err << "precondition failed: " << e.what() << "\n";
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitPrecondition;
}

int cmd_constants(const ReproductionLaw& law, const CommandOptions& options, std::ostream& out) {
  const ModelConstants c = constants_for(law, options);
  auto fields = c.fields();
  out << "law = " << law.describe() << "\n";
  write_constants_text(out, fields);
  out << "lattice = " << (c.lattice ? 1 : 0) << "\n";
  out << "degenerate = " << (c.degenerate ? 1 : 0) << "\n";
  out << "a5 = " << (c.a5.holds ? 1 : 0) << "  # " << c.a5.justification << "\n";
  if (!law.has_finite_offspring())
    out << "auto_age_cap = " << format_real(auto_age_cap(law, c.alpha)) << "\n";
  out << "\n";
  write_constants_csv(out, fields);

  OutputSet outputs(options.out_dir);
  if (outputs.enabled()) {
    auto f = outputs.open("constants.csv");
    write_constants_csv(f, fields);
    close_checked(f, "constants.csv");
    outputs.commit();
  }
  return kExitPass;
}

int cmd_simulate(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  if (options.out_dir.empty()) throw ConfigError("simulate needs --out DIR");
  const ModelConstants constants = constants_for(config.law, options);
  const auto start = std::chrono::steady_clock::now();
  const Ensemble ensemble = simulate(config, constants, options);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  OutputSet outputs(options.out_dir);
  auto paths = outputs.open("paths.csv");
  write_paths_csv(paths, ensemble);
  close_checked(paths, "paths.csv");
  auto gens = outputs.open("generations.csv");
  write_generations_csv(gens, ensemble);
  close_checked(gens, "generations.csv");

  ManifestInfo info;
  info.config_echo = config.echo();
  info.horizon = config.run.horizon;
  info.age_cap = resolved_age_cap(config, constants);
  info.truncation_bound = std::isfinite(info.age_cap) ? truncation_bias_bound(config.law, constants.alpha, info.age_cap)
                                                      : 0.0;
  info.master_seed = options.seed.value_or(config.run.seed);
  info.wall_seconds = wall;
  auto manifest = outputs.open("manifest.txt");
  write_manifest(manifest, info, constants, ensemble);
  close_checked(manifest, "manifest.txt");
  outputs.commit();

  std::size_t extinct = 0;
  std::size_t guard = 0;
  for (const auto& p : ensemble.replicas) {
    extinct += p.extinct;
    guard += p.guard_tripped;
  }
  out << "replicas = " << ensemble.replicas.size() << "\n"
      << "extinct = " << extinct << "\n"
      << "guard_tripped = " << guard << "\n"
      << "wall_seconds = " << format_real(wall) << "\n"
      << "out = " << options.out_dir.string() << "\n";
  return kExitPass;
}

int cmd_verify(const RunConfig& config, const std::string& suite, const CommandOptions& options, std::ostream& out) {
  if (std::find(known_suites().begin(), known_suites().end(), suite) == known_suites().end())
    throw ConfigError("unknown suite '" + suite + "'");
  const ModelConstants constants = constants_for(config.law, options);
  const SuiteOptions so = suite_options(options);
  const auto& v = config.verify;

  // Horizon checks up front, before simulating.
  if (suite == "lil" && v.window_t1 + 6.0 / constants.alpha > v.T + 1e-12)
    throw WindowBeyondHorizon("lil needs t1 + 6/alpha <= T (t1 = " + format_real(v.window_t1) +
                              ", T = " + format_real(v.T) + ")");
  if (v.T > config.run.horizon + 1e-12) throw GridBeyondHorizon("verify.T exceeds run.horizon");

  const Ensemble ensemble = obtain_ensemble(config, constants, options);
  OutputSet outputs(options.out_dir);

  VerificationReport report;
  if (suite == "lln") {
    report = verify_lln_q(ensemble, constants, v.lln_t.value_or(v.t), v.T, v.lln, so);
  } else if (suite == "clt") {
    const auto ct = curve_and_table(config, constants, ensemble, table_deltas(config, {v.T - v.t}));
    report = verify_clt(ensemble, constants, ct.table, v.t, v.T, v.clt, so);
    if (outputs.enabled()) write_curve_outputs(outputs, ct);
  } else if (suite == "fclt") {
    report = verify_fclt_cov(ensemble, constants, v.t, v.s_grid, v.T, v.fclt, so);
  } else if (suite == "lil") {
    report = verify_lil(ensemble, constants, v.window_t0, v.window_t1, v.window_step, v.T, v.lil, so);
  } else if (suite == "meansq") {
    const auto ct = curve_and_table(config, constants, ensemble, table_deltas(config, {v.T - v.t}));
    report = verify_mean_square(ensemble, constants, ct.table, v.t, v.T, v.meansq, so);
    if (outputs.enabled()) write_curve_outputs(outputs, ct);
  } else {
    const auto ct = curve_and_table(config, constants, ensemble, table_deltas(config, {}));
    report = verify_c_delta(ct.curve, ct.table, constants, v.curve);
    if (outputs.enabled()) write_curve_outputs(outputs, ct);
  }

  const std::string echo = config.echo();
  write_report_text(out, report, "");
  if (outputs.enabled()) {
    auto text = outputs.open(suite + "_report.txt");
    write_report_text(text, report, echo);
    close_checked(text, suite + "_report.txt");
    auto csv = outputs.open(suite + "_report.csv");
    write_report_csv(csv, report);
    close_checked(csv, suite + "_report.csv");
    outputs.adopt(write_gnuplot(outputs.dir(), report));
    outputs.commit();
  }
  return report.passed() ? kExitPass : kExitFail;
}

int cmd_report(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  const ModelConstants constants = constants_for(config.law, options);
  CommandOptions opts = options;
  if (!opts.ensemble_dir && !options.out_dir.empty() && fs::exists(options.out_dir / "paths.csv"))
    opts.ensemble_dir = options.out_dir;
  const Ensemble ensemble = obtain_ensemble(config, constants, opts);
  const auto ct = curve_and_table(config, constants, ensemble, table_deltas(config, {}));

  std::size_t extinct = 0;
  std::size_t guard = 0;
  std::vector<double> w_last;
  for (const auto& p : ensemble.replicas) {
    extinct += p.extinct;
    guard += p.guard_tripped;
    if (!p.guard_tripped) w_last.push_back(p.w.back());
  }
  std::ostringstream summary;
  summary << "replicas = " << ensemble.replicas.size() << "\n"
          << "extinct = " << extinct << "\n"
          << "guard_tripped = " << guard << "\n"
          << "t_last = " << format_real(ensemble.grid.back()) << "\n";
  if (w_last.size() >= 2) {
    summary << "mean_W_last = " << format_real(sample_mean(w_last)) << "\n"
            << "se_W_last = " << format_real(std::sqrt(sample_variance(w_last) / static_cast<double>(w_last.size())))
            << "\n";
  }
  summary << "v_last = " << format_real(ct.curve.v.back()) << "\n"
          << "sigma_w2 = " << format_real(constants.sigma_w2) << "\n"
          << "c_inf = " << format_real(constants.c_inf) << "\n";
  for (const auto& e : ct.table.entries)
    summary << "c_delta[" << format_real(e.delta) << "] = " << format_real(e.value) << "  # error "
            << format_real(e.error()) << "\n";
  out << summary.str();

  OutputSet outputs(options.out_dir);
  if (outputs.enabled()) {
    write_curve_outputs(outputs, ct);
    auto s = outputs.open("summary.txt");
    s << summary.str();
    close_checked(s, "summary.txt");
    outputs.commit();
  }
  return kExitPass;
}

}  // namespace cmj
