#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmj/engine.hpp"
#include "cmj/malthusian.hpp"
#include "cmj/reproduction.hpp"
#include "cmj/rng.hpp"

namespace cmj {

// ---------------------------------------------------------------------------
// Variance curve v_t = E[(W_t - 1)^2]

struct VarianceCurve {
  std::vector<double> times;
  std::vector<double> v;
  std::vector<double> se;
  std::size_t replicas = 0;

  // Interpolant used by c_delta; v = 0 below 0 and `tail` past the last time.
  PiecewiseCurve as_curve(double tail) const;
};

// Centered at the exact mean 1, not the sample mean. Guard-tripped replicas
// are skipped. Throws TooFewReplicas below `min_replicas`.
VarianceCurve estimate_variance_curve(const Ensemble& ensemble, std::size_t min_replicas = 100);

// ---------------------------------------------------------------------------
// c_delta

struct CDeltaEntry {
  double delta = 0.0;
  double value = 0.0;
  double mc_se = 0.0;             // Monte-Carlo standard error over offspring draws
  double quadrature_bound = 0.0;  // linear-interpolation error of the curve
  double curve_se = 0.0;          // variance-curve standard errors pushed through
  double extrapolated_fraction = 0.0;

  double error() const { return mc_se + quadrature_bound + curve_se; }
};

struct CDeltaTable {
  std::vector<CDeltaEntry> entries;  // ascending delta

  // Exact entry for delta (relative tolerance 1e-9), else linear
  // interpolation between neighbours. Throws GridBeyondHorizon outside the
  // table.
  double value_at(double delta) const;
  const CDeltaEntry* find(double delta) const;
};

inline constexpr double kMaxExtrapolatedFraction = 0.2;

// c_delta = E[sum_k e^{-2 alpha X_k} int_0^{X_k} e^{alpha x} v(delta + x - X_k) dx] / -m'(alpha),
// averaged over `n_mc` offspring draws. The inner integral is exact for the
// piecewise-linear curve. All deltas share the same draws. Throws
// CurveTooShort when more than 20% of an integral comes from the
// extrapolated tail (v = sigma_W^2 past the curve).
CDeltaTable compute_c_delta_table(const ReproductionLaw& law, const ModelConstants& constants,
                                  const VarianceCurve& curve, std::span<const double> deltas,
                                  std::size_t n_mc, Rng& rng);

CDeltaEntry compute_c_delta(const ReproductionLaw& law, const ModelConstants& constants,
                            const VarianceCurve& curve, double delta, std::size_t n_mc, Rng& rng);

// ---------------------------------------------------------------------------
// Reports

struct Check {
  std::string name;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool passed = false;
};

struct ExclusionCounts {
  std::size_t total = 0;
  std::size_t extinct = 0;
  std::size_t guard_tripped = 0;
  std::size_t low_w = 0;
  std::size_t retained = 0;
};

struct VerificationReport {
  std::string suite;
  bool weak = false;  // qualitative band check, not a sharp reproduction
  std::vector<Check> checks;
  std::vector<std::pair<std::string, double>> statistics;  // diagnostics, no threshold
  ExclusionCounts exclusions;
  std::vector<SourcedValue> constants;

  // Normalized residuals (replica order), and covariance data for fclt.
  std::vector<double> residuals;
  std::vector<double> times;
  std::vector<std::vector<double>> matrix;
  std::vector<std::vector<double>> target;
  std::vector<std::vector<double>> matrix_se;

  bool passed() const;
  void add_check(std::string name, double value, double lower, double upper);
  void add_statistic(std::string name, double value);
  double statistic(const std::string& name) const;
  const Check& check(const std::string& name) const;
};

// Debug knobs shared by the suites.
struct SuiteOptions {
  bool allow_degenerate = false;  // accept lattice / sigma^2 = 0 laws
  double miscale = 1.0;           // multiplies the normalizing constant (W_T for lil)
  double alpha_scale = 1.0;       // meansq: multiplies alpha in e^{alpha t}
};

struct NormalityBand {
  double ks_coefficient = 1.63;  // D_n <= coefficient / sqrt(n)
  double mean_coefficient = 4.0; // |mean| <= coefficient / sqrt(n)
  double variance_tolerance = 0.1;
};

struct LlnParams {
  double w_threshold = 0.01;
  std::size_t min_replicas = 1000;
  double se_multiple = 4.0;
};

VerificationReport verify_lln_q(const Ensemble& ensemble, const ModelConstants& constants, double t,
                                double T, const LlnParams& params = {}, const SuiteOptions& options = {});

struct CltParams {
  double w_min = 0.05;
  std::size_t min_retained = 2000;
  NormalityBand band;
};

VerificationReport verify_clt(const Ensemble& ensemble, const ModelConstants& constants,
                              const CDeltaTable& c_table, double t, double T, const CltParams& params = {},
                              const SuiteOptions& options = {});

struct FcltParams {
  double w_min = 0.05;
  std::size_t min_retained = 2000;
  std::size_t bootstrap = 1000;
  double se_multiple = 5.0;
  std::uint64_t bootstrap_seed = 0x5eedb007;
  NormalityBand band;
};

VerificationReport verify_fclt_cov(const Ensemble& ensemble, const ModelConstants& constants, double t,
                                   std::span<const double> s_grid, double T, const FcltParams& params = {},
                                   const SuiteOptions& options = {});

struct LilParams {
  double w_min = 0.05;
  std::size_t min_retained = 300;
  double max_median_lo = 0.4;
  double max_median_hi = 1.3;
  double symmetry_gap = 0.3;
  double extinction_se_multiple = 4.0;
};

VerificationReport verify_lil(const Ensemble& ensemble, const ModelConstants& constants, double t0, double t1,
                              double grid_step, double T, const LilParams& params = {},
                              const SuiteOptions& options = {});

struct MeanSquareParams {
  std::size_t min_replicas = 2000;
  double se_multiple = 4.0;
  double c_inf_tolerance = 0.1;
  // Compare against c_inf when T - t >= lag_factor / alpha.
  double lag_factor = 10.0;
  bool force_c_inf_check = false;
};

VerificationReport verify_mean_square(const Ensemble& ensemble, const ModelConstants& constants,
                                      const CDeltaTable& c_table, double t, double T,
                                      const MeanSquareParams& params = {}, const SuiteOptions& options = {});

struct CurveParams {
  double se_multiple = 4.0;
  double monotone_se_multiple = 2.0;
  double c_inf_relative = 0.05;
  double small_delta_fraction = 0.05;
};

// Sanity checks on the variance curve and the c_delta table.
VerificationReport verify_c_delta(const VarianceCurve& curve, const CDeltaTable& table,
                                  const ModelConstants& constants, const CurveParams& params = {});

// ---------------------------------------------------------------------------
// Statistics helpers

enum class ReferenceCdf { StandardNormal };

// Phi(x) = erfc(-x / sqrt 2) / 2 via std::erfc (glibc's erfc is accurate to a
// few ulp, far below 1e-12 absolute).
double standard_normal_cdf(double x);

// sup_x |F_n(x) - F(x)| for ascending samples. Throws TooFewSamples below 2
// samples and std::invalid_argument when the input is not sorted.
double ks_distance(std::span<const double> sorted, ReferenceCdf reference = ReferenceCdf::StandardNormal);

double sample_mean(std::span<const double> x);
// Unbiased (n - 1) covariance; sample_variance(x) == sample_covariance(x, x).
double sample_covariance(std::span<const double> x, std::span<const double> y);
double sample_variance(std::span<const double> x);
double median(std::vector<double> x);

}  // namespace cmj
