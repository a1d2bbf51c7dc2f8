// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
// The Monte-Carlo criteria share one 10^4-replica ensemble of the reference
// law (configs/bernoulli.cfg); the LIL band uses configs/lil.cfg.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cmj/analysis.hpp"
#include "cmj/commands.hpp"
#include "cmj/config.hpp"
#include "cmj/engine.hpp"
#include "cmj/errors.hpp"
#include "cmj/malthusian.hpp"

using namespace cmj;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(int number, const std::string& title, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (!o.passed) ++failures;
  std::printf("[%s] %2d %s: %s (%.2f s)\n", o.passed ? "PASS" : "FAIL", number, title.c_str(), o.detail.c_str(),
              secs);
  std::fflush(stdout);
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

std::string describe(const Check& c) {
  return c.name + "=" + num(c.value) + " in [" + num(c.lower) + "," + num(c.upper) + "]";
}

// Pass iff every listed check passed; detail lists them.
Outcome from_checks(const VerificationReport& r, const std::vector<std::string>& names) {
  Outcome o{true, ""};
  for (const auto& n : names) {
    const Check& c = r.check(n);
    o.passed = o.passed && c.passed;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += describe(c);
  }
  return o;
}

struct MeanSe {
  double mean;
  double se;
  double sd;
};

MeanSe summarize(const std::vector<double>& x) {
  const double sd = std::sqrt(sample_variance(x));
  return {sample_mean(x), sd / std::sqrt(static_cast<double>(x.size())), sd};
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

int main() {
  const fs::path configs = CMJ_CONFIG_DIR;
  const auto reference = ReproductionLaw::bernoulli_split(0.75, ExponentialAge{1.0});

  report(1, "reference constants", [&] {
    const auto start = Clock::now();
    const auto c = derive_constants(reference);
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool ok = within(c.alpha, 0.5, 1e-10) && within(c.m_prime_alpha, -2.0 / 3.0, 1e-10) &&
                    within(c.m_two_alpha, 0.75, 1e-10) && within(c.sigma2, 0.5, 1e-10) &&
                    within(c.sigma_w2, 2.0, 1e-10) && within(c.c_inf, 1.5, 1e-10) &&
                    within(c.extinction_q, 1.0 / 3.0, 1e-10) && secs < 1.0;
    return Outcome{ok, "alpha=" + num(c.alpha) + " m'=" + num(c.m_prime_alpha) + " m(2a)=" + num(c.m_two_alpha) +
                           " sigma2=" + num(c.sigma2) + " sigmaW2=" + num(c.sigma_w2) + " c_inf=" + num(c.c_inf) +
                           " q=" + num(c.extinction_q)};
  });

  report(2, "poisson constants", [&] {
    const auto c = derive_constants(ReproductionLaw::poisson_ages(2.0));
    const bool ok = within(c.alpha, 2.0, 1e-10) && within(c.sigma_w2, 1.0, 1e-10) && within(c.c_inf, 0.5, 1e-10);
    return Outcome{ok, "alpha=" + num(c.alpha) + " sigmaW2=" + num(c.sigma_w2) + " c_inf=" + num(c.c_inf)};
  });

  report(3, "degenerate law exactness", [&] {
    const auto law = ReproductionLaw::deterministic_ages({1.0, 1.0});
    const auto c = derive_constants(law, kDefaultSolverTolerance, DegeneratePolicy::Allow);
    SimConfig cfg{law, 4.0, {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0}};
    const auto path = run_replica(cfg, c);
    bool exact = true;
    for (const double w : path.w) exact = exact && w == 1.0;
    const auto n25 = path.births[5];
    return Outcome{exact && n25 == 7, std::string("W==1 everywhere: ") + (exact ? "yes" : "no") +
                                          ", N_2.5=" + std::to_string(n25)};
  });

  // Main ensemble.
  const RunConfig main_cfg = load_run_config(configs / "bernoulli.cfg");
  const ModelConstants constants = derive_constants(main_cfg.law);
  CommandOptions options;
  options.jobs = worker_count();
  std::printf("simulating %zu replicas to T=%g on %u thread(s)...\n", main_cfg.run.replicas, main_cfg.run.horizon,
              *options.jobs);
  std::fflush(stdout);
  const auto sim_start = Clock::now();
  const Ensemble ensemble = simulate(main_cfg, constants, options);
  const double sim_secs = std::chrono::duration<double>(Clock::now() - sim_start).count();
  std::printf("ensemble ready in %.1f s\n", sim_secs);

  const auto& v = main_cfg.verify;
  const VarianceCurve curve = estimate_variance_curve(ensemble, v.curve_min_replicas);
  Rng c_rng = make_stream(v.c_delta_seed);
  const CDeltaTable table = compute_c_delta_table(main_cfg.law, constants, curve, v.deltas, v.c_delta_samples, c_rng);

  report(4, "martingale mean at T=18", [&] {
    const std::size_t i = ensemble.index_of(18.0);
    std::vector<double> w;
    for (const auto& p : ensemble.replicas)
      if (!p.guard_tripped) w.push_back(p.w[i]);
    const auto s = summarize(w);
    const double band = 4.0 * s.sd / std::sqrt(static_cast<double>(w.size()));
    return Outcome{std::abs(s.mean - 1.0) <= band && sim_secs < 300.0,
                   "mean W_18=" + num(s.mean) + " band=" + num(band) + " n=" + std::to_string(w.size()) +
                       " sim=" + num(sim_secs) + "s"};
  });

  report(5, "extinction fraction", [&] {
    std::size_t extinct = 0, usable = 0;
    for (const auto& p : ensemble.replicas) {
      if (p.guard_tripped) continue;
      ++usable;
      extinct += p.extinct;
    }
    const double frac = static_cast<double>(extinct) / usable;
    const double q = constants.extinction_q;
    const double se = std::sqrt(q * (1.0 - q) / usable);
    return Outcome{std::abs(frac - q) <= 4.0 * se, "fraction=" + num(frac) + " q=" + num(q) + " se=" + num(se)};
  });

  report(6, "frontier square sum at t=10", [&] {
    const auto r = verify_lln_q(ensemble, constants, 10.0, 18.0, v.lln);
    auto o = from_checks(r, {"mean_scaled_q_minus_target"});
    o.detail += "; mean=" + num(r.statistic("mean_scaled_q")) + " target=0.75";
    return o;
  });

  const VerificationReport curve_report = verify_c_delta(curve, table, constants, v.curve);

  report(7, "variance curve", [&] {
    auto o = from_checks(curve_report, {"v_last_minus_sigma_w2", "v_max_drop_in_se"});
    o.detail += "; v(" + num(curve.times.back()) + ")=" + num(curve.v.back()) + " se=" + num(curve.se.back());
    return o;
  });

  report(8, "c_delta table", [&] {
    auto o = from_checks(curve_report,
                         {"c_delta_max_drop_in_error", "c_delta_largest_minus_c_inf", "c_delta_smallest_over_c_inf"});
    const auto* c20 = table.find(20.0);
    const auto* c0 = table.find(0.001);
    if (!c20 || !c0) return Outcome{false, "table lacks delta 20 or 0.001"};
    const bool c20_ok = std::abs(c20->value - 1.5) <= std::max(0.05 * 1.5, c20->error());
    const bool c0_ok = c0->value < 0.05 * 1.5;
    o.passed = o.passed && c20_ok && c0_ok;
    o.detail += "; c_20=" + num(c20->value) + " err=" + num(c20->error()) + " c_0.001=" + num(c0->value);
    return o;
  });

  report(9, "mean square increment t=6 T=20", [&] {
    MeanSquareParams p = v.meansq;
    p.force_c_inf_check = true;
    const auto r = verify_mean_square(ensemble, constants, table, 6.0, 20.0, p);
    auto o = from_checks(r, {"mean_minus_c_delta", "mean_minus_c_inf"});
    o.detail += "; mean=" + num(r.statistic("mean_scaled_square")) + " c_14=" + num(table.value_at(14.0));
    return o;
  });

  report(10, "clt residuals t=6 T=18", [&] {
    const auto r = verify_clt(ensemble, constants, table, 6.0, 18.0, v.clt);
    auto o = from_checks(r, {"ks_distance", "mean", "variance"});
    o.detail += "; retained=" + std::to_string(r.exclusions.retained);
    return o;
  });

  report(11, "fclt covariance s={0,1,2}", [&] {
    const auto r = verify_fclt_cov(ensemble, constants, 6.0, v.s_grid, 18.0, v.fclt);
    std::vector<std::string> names;
    for (const auto& c : r.checks)
      if (c.name.rfind("cov[", 0) == 0) names.push_back(c.name);
    return from_checks(r, names);
  });

  report(12, "lil bands on [8,14], T=26", [&] {
    const RunConfig cfg = load_run_config(configs / "lil.cfg");
    const auto c = derive_constants(cfg.law);
    const Ensemble e = simulate(cfg, c, options);
    const auto& lv = cfg.verify;
    const auto r = verify_lil(e, c, lv.window_t0, lv.window_t1, lv.window_step, lv.T, lv.lil);
    SuiteOptions mis;
    mis.miscale = 4.0;
    const auto bad = verify_lil(e, c, lv.window_t0, lv.window_t1, lv.window_step, lv.T, lv.lil, mis);
    auto o = from_checks(r, {"median_normalized_max", "median_normalized_min", "symmetry_gap"});
    o.passed = o.passed && r.exclusions.retained >= 300 && !bad.passed();
    o.detail += "; retained=" + std::to_string(r.exclusions.retained) +
                " control(4W)=" + (bad.passed() ? "passed (wrong)" : "failed");
    return o;
  });

  report(13, "many-to-one vs tree mean of N_6", [&] {
    const std::size_t i = ensemble.index_of(6.0);
    std::vector<double> n;
    for (const auto& p : ensemble.replicas)
      if (!p.guard_tripped) n.push_back(static_cast<double>(p.births[i]));
    const auto tree = summarize(n);
    Rng rng = make_stream(606);
    const auto walk = many_to_one_mean_nt(main_cfg.law, constants, 6.0, 1'000'000, rng);
    const double se = std::hypot(tree.se, walk.standard_error);
    return Outcome{std::abs(tree.mean - walk.value) <= 4.0 * se,
                   "tree=" + num(tree.mean) + " walk=" + num(walk.value) + " combined_se=" + num(se)};
  });

  report(14, "determinism jobs=1 vs jobs=8", [&] {
    RunConfig cfg = main_cfg;
    cfg.run.replicas = 100;
    const fs::path root = fs::temp_directory_path() / "cmj_acceptance_determinism";
    fs::remove_all(root);
    std::ostringstream sink;
    CommandOptions a;
    a.out_dir = root / "jobs1";
    a.jobs = 1;
    CommandOptions b = a;
    b.out_dir = root / "jobs8";
    b.jobs = 8;
    if (cmd_simulate(cfg, a, sink) != kExitPass || cmd_simulate(cfg, b, sink) != kExitPass)
      return Outcome{false, "simulate failed"};
    const bool paths = slurp(a.out_dir / "paths.csv") == slurp(b.out_dir / "paths.csv");
    const bool gens = slurp(a.out_dir / "generations.csv") == slurp(b.out_dir / "generations.csv");
    const auto bytes = slurp(a.out_dir / "paths.csv").size();
    fs::remove_all(root);
    return Outcome{paths && gens, std::string("paths.csv ") + (paths ? "identical" : "differ") + ", generations.csv " +
                                      (gens ? "identical" : "differ") + " (" + std::to_string(bytes) + " bytes)"};
  });

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
