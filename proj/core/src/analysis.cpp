#include "cmj/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cmj/errors.hpp"

namespace cmj {
namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

void require_theorem_law(const ModelConstants& c, const SuiteOptions& options, std::string_view suite) {
  if (options.allow_degenerate) return;
  if (c.degenerate) throw A4Violated(std::string(suite) + ": sigma^2 = 0, nothing to verify");
  if (c.lattice) throw LatticeLaw(std::string(suite) + ": theorem suites need a non-lattice law");
}

// Sum of e^{alpha s} g(s) over [0, y] for a piecewise-linear g given as
// segments [start, end) with endpoint values (left, right). The last segment
// extends to +inf with a constant value.
class ExpWeightedIntegral {
 public:
  struct Segment {
    double start;
    double end;
    double left;
    double right;
  };

  ExpWeightedIntegral(double alpha, std::vector<Segment> segments)
      : alpha_(alpha), segments_(std::move(segments)) {
    cumulative_.reserve(segments_.size());
    double acc = 0.0;
    for (const auto& s : segments_) {
      cumulative_.push_back(acc);
      if (std::isfinite(s.end)) acc += partial(s, s.end - s.start);
    }
    starts_.reserve(segments_.size());
    for (const auto& s : segments_) starts_.push_back(s.start);
  }

  double operator()(double y) const {
    if (y <= 0.0) return 0.0;
    const auto it = std::upper_bound(starts_.begin(), starts_.end(), y);
    const std::size_t i = static_cast<std::size_t>(it - starts_.begin()) - 1;
    const auto& s = segments_[i];
    return cumulative_[i] + partial(s, std::min(y, s.end) - s.start);
  }

 private:
  // int_0^u e^{alpha (start + r)} (left + slope r) dr
  double partial(const Segment& s, double u) const {
    if (u <= 0.0) return 0.0;
    const double a = alpha_;
    const double grow = std::expm1(a * u);
    const double e1 = grow / a;
    double slope = 0.0;
    if (std::isfinite(s.end) && s.end > s.start) slope = (s.right - s.left) / (s.end - s.start);
    const double e2 = (u * (grow + 1.0)) / a - grow / (a * a);
    return std::exp(a * s.start) * (s.left * e1 + slope * e2);
  }

  double alpha_;
  std::vector<Segment> segments_;
  std::vector<double> cumulative_;
  std::vector<double> starts_;
};

using Segments = std::vector<ExpWeightedIntegral::Segment>;

// Segments of the interpolated curve with per-node `values`; `tail` past the end.
Segments curve_segments(const std::vector<double>& times, const std::vector<double>& values, double tail) {
  Segments out;
  if (times.front() > 0.0) out.push_back({0.0, times.front(), values.front(), values.front()});
  for (std::size_t i = 0; i + 1 < times.size(); ++i)
    out.push_back({times[i], times[i + 1], values[i], values[i + 1]});
  out.push_back({times.back(), kInfinity, tail, tail});
  return out;
}

// Piecewise-constant bound h^2 |v''| / 8 on the interpolation error.
Segments interpolation_error_segments(const VarianceCurve& curve) {
  const auto& t = curve.times;
  const auto& v = curve.v;
  const std::size_t n = t.size();
  std::vector<double> second(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hl = t[i] - t[i - 1];
    const double hr = t[i + 1] - t[i];
    second[i] = std::abs(2.0 * ((v[i + 1] - v[i]) / hr - (v[i] - v[i - 1]) / hl) / (hl + hr));
  }
  Segments out;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = t[i + 1] - t[i];
    const double e = h * h * std::max(second[i], second[i + 1]) / 8.0;
    out.push_back({t[i], t[i + 1], e, e});
  }
  if (t.front() > 0.0) out.insert(out.begin(), {0.0, t.front(), 0.0, 0.0});
  out.push_back({t.back(), kInfinity, 0.0, 0.0});
  return out;
}

Segments tail_only_segments(const VarianceCurve& curve, double tail) {
  Segments out;
  out.push_back({0.0, curve.times.back(), 0.0, 0.0});
  out.push_back({curve.times.back(), kInfinity, tail, tail});
  return out;
}

double standard_error_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  return std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
}

std::size_t count_usable(const Ensemble& e) {
  return static_cast<std::size_t>(
      std::count_if(e.replicas.begin(), e.replicas.end(), [](const ReplicaPath& p) { return !p.guard_tripped; }));
}

void add_normality_checks(VerificationReport& report, const std::string& prefix, std::vector<double> residuals,
                          const NormalityBand& band, double variance) {
  const double n = static_cast<double>(residuals.size());
  std::sort(residuals.begin(), residuals.end());
  const double d = ks_distance(residuals);
  const double mean = sample_mean(residuals);
  report.add_check(prefix + "ks_distance", d, 0.0, band.ks_coefficient / std::sqrt(n));
  report.add_check(prefix + "mean", mean, -band.mean_coefficient / std::sqrt(n), band.mean_coefficient / std::sqrt(n));
  report.add_check(prefix + "variance", variance, 1.0 - band.variance_tolerance, 1.0 + band.variance_tolerance);
}

}  // namespace

// ---------------------------------------------------------------------------
// Statistics helpers

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_distance(std::span<const double> sorted, ReferenceCdf reference) {
  if (sorted.size() < 2) throw TooFewSamples("ks_distance needs at least 2 samples");
  if (!std::is_sorted(sorted.begin(), sorted.end()))
    throw std::invalid_argument("ks_distance: samples must be sorted");
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    double f = 0.0;
    switch (reference) {
      case ReferenceCdf::StandardNormal: f = standard_normal_cdf(sorted[i]); break;
    }
    const double above = static_cast<double>(i + 1) / n - f;
    const double below = f - static_cast<double>(i) / n;
    d = std::max({d, above, below});
  }
  return d;
}

double sample_mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_covariance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("sample_covariance needs two equal-length samples of size >= 2");
  const double mx = sample_mean(x);
  const double my = sample_mean(y);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - mx) * (y[i] - my);
  return acc / static_cast<double>(x.size() - 1);
}

double sample_variance(std::span<const double> x) { return sample_covariance(x, x); }

double median(std::vector<double> x) {
  if (x.empty()) throw TooFewSamples("median of an empty sample");
  const std::size_t mid = x.size() / 2;
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid), x.end());
  const double upper = x[mid];
  if (x.size() % 2 == 1) return upper;
  const double lower = *std::max_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

// ---------------------------------------------------------------------------
// Variance curve

PiecewiseCurve VarianceCurve::as_curve(double tail) const { return PiecewiseCurve{times, v, tail}; }

VarianceCurve estimate_variance_curve(const Ensemble& ensemble, std::size_t min_replicas) {
  const std::size_t usable = count_usable(ensemble);
  if (usable < min_replicas)
    throw TooFewReplicas("variance curve needs " + std::to_string(min_replicas) + " replicas, got " +
                         std::to_string(usable));
  VarianceCurve curve;
  curve.times = ensemble.grid;
  curve.replicas = usable;
  const std::size_t cells = ensemble.grid.size();
  curve.v.assign(cells, 0.0);
  curve.se.assign(cells, 0.0);
  std::vector<double> dev(usable);
  for (std::size_t i = 0; i < cells; ++i) {
    std::size_t k = 0;
    for (const auto& p : ensemble.replicas) {
      if (p.guard_tripped) continue;
      const double d = p.w[i] - 1.0;
      dev[k++] = d * d;
    }
    curve.v[i] = sample_mean(dev);
    curve.se[i] = standard_error_of(dev);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// c_delta

const CDeltaEntry* CDeltaTable::find(double delta) const {
  for (const auto& e : entries)
    if (near(e.delta, delta)) return &e;
  return nullptr;
}

double CDeltaTable::value_at(double delta) const {
  if (const auto* e = find(delta)) return e->value;
  if (entries.empty() || delta < entries.front().delta || delta > entries.back().delta)
    throw GridBeyondHorizon("delta = " + fmt(delta) + " lies outside the c_delta table");
  const auto it = std::lower_bound(entries.begin(), entries.end(), delta,
                                   [](const CDeltaEntry& e, double d) { return e.delta < d; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double frac = (delta - lo.delta) / (hi.delta - lo.delta);
  return lo.value + frac * (hi.value - lo.value);
}

CDeltaTable compute_c_delta_table(const ReproductionLaw& law, const ModelConstants& constants,
                                  const VarianceCurve& curve, std::span<const double> deltas, std::size_t n_mc,
                                  Rng& rng) {
  if (curve.times.empty()) throw TooFewReplicas("empty variance curve");
  if (n_mc < 2) throw TooFewSamples("c_delta needs at least 2 offspring draws");
  const double alpha = constants.alpha;
  const double tail = constants.sigma_w2;

  const ExpWeightedIntegral value_int(alpha, curve_segments(curve.times, curve.v, tail));
  const ExpWeightedIntegral se_int(alpha, curve_segments(curve.times, curve.se, 0.0));
  const ExpWeightedIntegral err_int(alpha, interpolation_error_segments(curve));
  const ExpWeightedIntegral tail_int(alpha, tail_only_segments(curve, tail));

  // Common offspring draws for every delta.
  const double cap = law.has_finite_offspring()
                         ? kInfinity
                         : std::log(std::get<PoissonAges>(law.variant()).rate / (alpha * 1e-12)) / alpha;
  std::vector<std::vector<double>> draws(n_mc);
  OffspringSample draw;
  for (auto& d : draws) {
    sample_offspring(law, cap, rng, draw);
    d = draw.ages;
  }

  const double scale = 1.0 / -constants.m_prime_alpha;
  CDeltaTable table;
  std::vector<double> sorted(deltas.begin(), deltas.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> per_draw(n_mc);
  for (const double delta : sorted) {
    if (!(delta > 0.0)) throw std::invalid_argument("c_delta needs delta > 0");
    const double f_delta = value_int(delta);
    const double se_delta = se_int(delta);
    const double err_delta = err_int(delta);
    const double tail_delta = tail_int(delta);
    double se_sum = 0.0;
    double err_sum = 0.0;
    double tail_sum = 0.0;
    for (std::size_t j = 0; j < n_mc; ++j) {
      double acc = 0.0;
      for (const double x : draws[j]) {
        // e^{-2 alpha x} int_0^x e^{alpha s} v(delta + s - x) ds
        //   = e^{-alpha (x + delta)} int_{max(0, delta - x)}^{delta} e^{alpha y} v(y) dy
        const double lower = std::max(0.0, delta - x);
        const double weight = std::exp(-alpha * (x + delta));
        acc += weight * (f_delta - value_int(lower));
        se_sum += weight * (se_delta - se_int(lower));
        err_sum += weight * (err_delta - err_int(lower));
        tail_sum += weight * (tail_delta - tail_int(lower));
      }
      per_draw[j] = acc;
    }
    const double n = static_cast<double>(n_mc);
    CDeltaEntry e;
    e.delta = delta;
    const double raw = sample_mean(per_draw);
    e.value = scale * raw;
    e.mc_se = scale * standard_error_of(per_draw);
    e.curve_se = scale * se_sum / n;
    e.quadrature_bound = scale * err_sum / n;
    e.extrapolated_fraction = raw > 0.0 ? (tail_sum / n) / raw : 0.0;
    if (e.extrapolated_fraction > kMaxExtrapolatedFraction)
      throw CurveTooShort("c_delta at delta = " + fmt(delta) + ": " + fmt(100.0 * e.extrapolated_fraction) +
                          "% of the integral comes from beyond the variance curve (ends at " +
                          fmt(curve.times.back()) + ")");
    table.entries.push_back(e);
  }
  return table;
}

CDeltaEntry compute_c_delta(const ReproductionLaw& law, const ModelConstants& constants, const VarianceCurve& curve,
                            double delta, std::size_t n_mc, Rng& rng) {
  const double d[] = {delta};
  return compute_c_delta_table(law, constants, curve, d, n_mc, rng).entries.front();
}

// ---------------------------------------------------------------------------
// Reports

bool VerificationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

void VerificationReport::add_check(std::string name, double value, double lower, double upper) {
  const bool ok = std::isfinite(value) && value >= lower && value <= upper;
  checks.push_back({std::move(name), value, lower, upper, ok});
}

void VerificationReport::add_statistic(std::string name, double value) {
  statistics.emplace_back(std::move(name), value);
}

double VerificationReport::statistic(const std::string& name) const {
  for (const auto& [k, v] : statistics)
    if (k == name) return v;
  throw std::out_of_range("no statistic named " + name);
}

const Check& VerificationReport::check(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw std::out_of_range("no check named " + name);
}

// ---------------------------------------------------------------------------
// Frontier square sum: e^{alpha t} Q_t against (1 - m(2 alpha)) / (-alpha m'(alpha)) W

VerificationReport verify_lln_q(const Ensemble& ensemble, const ModelConstants& constants, double t, double T,
                                const LlnParams& params, const SuiteOptions& options) {
  require_theorem_law(constants, options, "lln");
  const double alpha = constants.alpha;
  if (!(std::exp(-alpha * t) < 0.01))
    throw PreconditionError("TimeTooSmall", "lln needs e^{-alpha t} < 0.01, t = " + fmt(t));
  const std::size_t it = ensemble.index_of(t);
  const std::size_t iT = ensemble.index_of(T);

  VerificationReport report;
  report.suite = "lln";
  report.constants = constants.fields();
  const double target = constants.frontier_square_limit() * options.miscale;
  report.constants.push_back({"frontier_square_limit", target, Provenance::ClosedForm, 0.0});

  // The gating ratio divides by W_t. Dividing by W_T instead adds the Jensen
  // term E[W_t / W_T] - 1 ~ c e^{-alpha t} E[1 / W_t], a few percent at
  // t = 10; it is still reported, as a diagnostic.
  std::vector<double> scaled;
  std::vector<double> ratios;
  std::vector<double> ratios_final;
  const double growth = std::exp(alpha * t);
  for (const auto& p : ensemble.replicas) {
    ++report.exclusions.total;
    if (p.guard_tripped) {
      ++report.exclusions.guard_tripped;
      continue;
    }
    if (p.extinct) ++report.exclusions.extinct;
    scaled.push_back(growth * p.q[it]);
    if (p.w[iT] > params.w_threshold) {
      ratios.push_back(growth * p.q[it] / (target * p.w[it]));
      ratios_final.push_back(growth * p.q[it] / (target * p.w[iT]));
    } else if (!p.extinct) {
      ++report.exclusions.low_w;
    }
  }
  report.exclusions.retained = scaled.size();
  if (scaled.size() < params.min_replicas)
    throw TooFewReplicas("lln needs " + std::to_string(params.min_replicas) + " replicas, got " +
                         std::to_string(scaled.size()));

  const double mean_scaled = sample_mean(scaled);
  const double se_scaled = standard_error_of(scaled);
  report.add_statistic("mean_scaled_q", mean_scaled);
  report.add_statistic("se_scaled_q", se_scaled);
  report.add_check("mean_scaled_q_minus_target", mean_scaled - target, -params.se_multiple * se_scaled,
                   params.se_multiple * se_scaled);
  if (ratios.size() >= 2) {
    const double mean_ratio = sample_mean(ratios);
    const double se_ratio = standard_error_of(ratios);
    report.add_statistic("mean_ratio", mean_ratio);
    report.add_statistic("se_ratio", se_ratio);
    report.add_check("mean_ratio_minus_one", mean_ratio - 1.0, -params.se_multiple * se_ratio,
                     params.se_multiple * se_ratio);
    report.add_statistic("mean_ratio_over_w_final", sample_mean(ratios_final));
    report.add_statistic("se_ratio_over_w_final", standard_error_of(ratios_final));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Central limit theorem

namespace {

struct Retained {
  std::vector<const ReplicaPath*> paths;
  ExclusionCounts counts;
};

Retained retain_surviving(const Ensemble& ensemble, std::size_t iT, double w_min) {
  Retained r;
  for (const auto& p : ensemble.replicas) {
    ++r.counts.total;
    if (p.guard_tripped) {
      ++r.counts.guard_tripped;
    } else if (p.extinct) {
      ++r.counts.extinct;
    } else if (p.w[iT] < w_min) {
      ++r.counts.low_w;
    } else {
      r.paths.push_back(&p);
    }
  }
  r.counts.retained = r.paths.size();
  return r;
}

// e^{alpha t / 2} (W_T - W_{t}) / sqrt(W_T) per retained replica.
std::vector<double> unscaled_increments(const Retained& r, double alpha, double t, std::size_t it, std::size_t iT) {
  std::vector<double> out;
  out.reserve(r.paths.size());
  const double growth = std::exp(0.5 * alpha * t);
  for (const auto* p : r.paths) out.push_back(growth * (p->w[iT] - p->w[it]) / std::sqrt(p->w[iT]));
  return out;
}

}  // namespace

VerificationReport verify_clt(const Ensemble& ensemble, const ModelConstants& constants, const CDeltaTable& c_table,
                              double t, double T, const CltParams& params, const SuiteOptions& options) {
  require_theorem_law(constants, options, "clt");
  const double alpha = constants.alpha;
  if (!(T - t >= 4.0 / alpha - 1e-12))
    throw PreconditionError("LagTooShort", "clt needs T - t >= 4/alpha");
  const std::size_t it = ensemble.index_of(t);
  const std::size_t iT = ensemble.index_of(T);

  const Retained kept = retain_surviving(ensemble, iT, params.w_min);
  if (kept.paths.size() < params.min_retained || kept.paths.size() < 2)
    throw TooFewRetained("clt retained " + std::to_string(kept.paths.size()) + " replicas, needs " +
                         std::to_string(params.min_retained));

  VerificationReport report;
  report.suite = "clt";
  report.exclusions = kept.counts;
  report.constants = constants.fields();
  const double c_lag = c_table.value_at(T - t);
  const double c_used = c_lag * options.miscale;
  const CDeltaEntry* entry = c_table.find(T - t);
  report.constants.push_back({"c_delta(T-t)", c_lag, Provenance::MonteCarlo, entry ? entry->error() : 0.0});

  const std::vector<double> raw = unscaled_increments(kept, alpha, t, it, iT);
  const double raw_variance = sample_variance(raw);
  report.add_statistic("raw_variance", raw_variance);
  report.add_statistic("c_used", c_used);
  report.add_statistic("retained", static_cast<double>(raw.size()));

  report.residuals.reserve(raw.size());
  const double norm = std::sqrt(c_used);
  for (double x : raw) report.residuals.push_back(x / norm);

  add_normality_checks(report, "", report.residuals, params.band, raw_variance / c_used);

  // Conditional diagnostic: slope of R^2 on W_T. No threshold.
  std::vector<double> sq;
  std::vector<double> wt;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    sq.push_back(report.residuals[i] * report.residuals[i]);
    wt.push_back(kept.paths[i]->w[iT]);
  }
  report.add_statistic("slope_r2_on_wT", sample_covariance(sq, wt) / sample_variance(wt));
  return report;
}

// ---------------------------------------------------------------------------
// Functional CLT: covariance of the time-changed Brownian limit

VerificationReport verify_fclt_cov(const Ensemble& ensemble, const ModelConstants& constants, double t,
                                   std::span<const double> s_grid, double T, const FcltParams& params,
                                   const SuiteOptions& options) {
  require_theorem_law(constants, options, "fclt");
  const double alpha = constants.alpha;
  if (s_grid.empty()) throw std::invalid_argument("fclt needs a nonempty s grid");
  const double s_max = *std::max_element(s_grid.begin(), s_grid.end());
  if (t + s_max + 4.0 / alpha > T + 1e-12)
    throw GridBeyondHorizon("fclt needs t + max(s) + 4/alpha <= T");
  const std::size_t iT = ensemble.index_of(T);

  const Retained kept = retain_surviving(ensemble, iT, params.w_min);
  if (kept.paths.size() < params.min_retained || kept.paths.size() < 2)
    throw TooFewRetained("fclt retained " + std::to_string(kept.paths.size()) + " replicas, needs " +
                         std::to_string(params.min_retained));

  VerificationReport report;
  report.suite = "fclt";
  report.exclusions = kept.counts;
  report.constants = constants.fields();
  report.times.assign(s_grid.begin(), s_grid.end());

  const std::size_t m = s_grid.size();
  std::vector<std::vector<double>> columns(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t ij = ensemble.index_of(t + s_grid[j]);
    const double growth = std::exp(0.5 * alpha * t);
    columns[j].reserve(kept.paths.size());
    for (const auto* p : kept.paths) columns[j].push_back(growth * (p->w[iT] - p->w[ij]) / std::sqrt(p->w[iT]));
  }

  const double c_inf = constants.c_inf * options.miscale;
  report.matrix.assign(m, std::vector<double>(m, 0.0));
  report.target.assign(m, std::vector<double>(m, 0.0));
  report.matrix_se.assign(m, std::vector<double>(m, 0.0));
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < m; ++k) {
      report.matrix[j][k] = sample_covariance(columns[j], columns[k]);
      report.target[j][k] = c_inf * std::exp(-alpha * std::max(s_grid[j], s_grid[k]));
    }

  // Bootstrap standard errors, one seeded stream.
  const std::size_t n = kept.paths.size();
  Rng rng = make_stream(params.bootstrap_seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::vector<double>> sum(m, std::vector<double>(m, 0.0));
  std::vector<std::vector<double>> sum_sq(m, std::vector<double>(m, 0.0));
  std::vector<std::vector<double>> resampled(m, std::vector<double>(n));
  std::vector<std::size_t> idx(n);
  for (std::size_t b = 0; b < params.bootstrap; ++b) {
    for (auto& i : idx) i = pick(rng);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t r = 0; r < n; ++r) resampled[j][r] = columns[j][idx[r]];
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        const double c = sample_covariance(resampled[j], resampled[k]);
        sum[j][k] += c;
        sum_sq[j][k] += c * c;
      }
  }
  const double nb = static_cast<double>(params.bootstrap);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < m; ++k) {
      const double mean = sum[j][k] / nb;
      report.matrix_se[j][k] = std::sqrt(std::max(0.0, (sum_sq[j][k] - nb * mean * mean) / (nb - 1.0)));
    }

  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = j; k < m; ++k) {
      const double dev = report.matrix[j][k] - report.target[j][k];
      const double band = params.se_multiple * report.matrix_se[j][k];
      report.add_check("cov[" + fmt(s_grid[j]) + "," + fmt(s_grid[k]) + "]_minus_target", dev, -band, band);
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double scale = c_inf * std::exp(-alpha * s_grid[j]);
    std::vector<double> marginal;
    marginal.reserve(n);
    for (double x : columns[j]) marginal.push_back(x / std::sqrt(scale));
    add_normality_checks(report, "marginal[" + fmt(s_grid[j]) + "]_", marginal, params.band,
                         report.matrix[j][j] / scale);
    report.add_statistic("raw_variance[" + fmt(s_grid[j]) + "]", report.matrix[j][j]);
  }
  report.add_statistic("retained", static_cast<double>(n));
  return report;
}

// ---------------------------------------------------------------------------
// Law of the iterated logarithm (qualitative bands)

VerificationReport verify_lil(const Ensemble& ensemble, const ModelConstants& constants, double t0, double t1,
                              double grid_step, double T, const LilParams& params, const SuiteOptions& options) {
  require_theorem_law(constants, options, "lil");
  const double alpha = constants.alpha;
  if (!(t0 >= 2.0)) throw PreconditionError("WindowTooEarly", "lil needs t0 >= 2");
  if (!(t1 > t0)) throw std::invalid_argument("lil needs t0 < t1");
  if (t1 + 6.0 / alpha > T + 1e-12) throw WindowBeyondHorizon("lil needs t1 + 6/alpha <= T");
  if (!(grid_step > 0.0)) throw std::invalid_argument("lil needs a positive grid step");
  const std::size_t iT = ensemble.index_of(T);

  std::vector<std::size_t> cells;
  const auto steps = static_cast<std::size_t>(std::floor((t1 - t0) / grid_step + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) cells.push_back(ensemble.index_of(t0 + static_cast<double>(k) * grid_step));

  const Retained kept = retain_surviving(ensemble, iT, params.w_min);
  if (kept.paths.size() < params.min_retained)
    throw TooFewRetained("lil retained " + std::to_string(kept.paths.size()) + " replicas, needs " +
                         std::to_string(params.min_retained));

  VerificationReport report;
  report.suite = "lil";
  report.weak = true;
  report.exclusions = kept.counts;
  report.constants = constants.fields();

  std::vector<double> maxima;
  std::vector<double> minima;
  for (const auto* p : kept.paths) {
    const double w_norm = options.miscale * p->w[iT];
    double hi = -kInfinity;
    double lo = kInfinity;
    for (const std::size_t c : cells) {
      const double time = ensemble.grid[c];
      const double x = std::exp(0.5 * alpha * time) * (p->w[iT] - p->w[c]) /
                       std::sqrt(2.0 * constants.c_inf * w_norm * std::log(time));
      hi = std::max(hi, x);
      lo = std::min(lo, x);
    }
    maxima.push_back(hi);
    minima.push_back(lo);
  }
  report.residuals = maxima;
  const double med_max = median(maxima);
  const double med_min = median(minima);
  report.add_check("median_normalized_max", med_max, params.max_median_lo, params.max_median_hi);
  report.add_check("median_normalized_min", med_min, -params.max_median_hi, -params.max_median_lo);
  report.add_check("symmetry_gap", std::abs(med_max + med_min), 0.0, params.symmetry_gap);

  const std::size_t usable = kept.counts.total - kept.counts.guard_tripped;
  if (usable >= 2) {
    const double frac = static_cast<double>(kept.counts.extinct) / static_cast<double>(usable);
    const double se = std::sqrt(constants.extinction_q * (1.0 - constants.extinction_q) / static_cast<double>(usable));
    report.add_statistic("extinct_fraction", frac);
    report.add_check("extinct_fraction_minus_q", frac - constants.extinction_q, -params.extinction_se_multiple * se,
                     params.extinction_se_multiple * se);
  }
  report.add_statistic("window_points", static_cast<double>(cells.size()));
  return report;
}

// ---------------------------------------------------------------------------
// Mean-square decay of W - W_t

VerificationReport verify_mean_square(const Ensemble& ensemble, const ModelConstants& constants,
                                      const CDeltaTable& c_table, double t, double T, const MeanSquareParams& params,
                                      const SuiteOptions& options) {
  require_theorem_law(constants, options, "meansq");
  const double alpha = constants.alpha;
  if (!(T - t >= 4.0 / alpha - 1e-12))
    throw PreconditionError("LagTooShort", "meansq needs T - t >= 4/alpha");
  const std::size_t it = ensemble.index_of(t);
  const std::size_t iT = ensemble.index_of(T);

  VerificationReport report;
  report.suite = "meansq";
  report.constants = constants.fields();
  const double growth = std::exp(alpha * options.alpha_scale * t);
  std::vector<double> values;
  for (const auto& p : ensemble.replicas) {
    ++report.exclusions.total;
    if (p.guard_tripped) {
      ++report.exclusions.guard_tripped;
      continue;
    }
    if (p.extinct) ++report.exclusions.extinct;
    const double d = p.w[iT] - p.w[it];
    values.push_back(growth * d * d);
  }
  report.exclusions.retained = values.size();
  if (values.size() < params.min_replicas || values.size() < 2)
    throw TooFewRetained("meansq has " + std::to_string(values.size()) + " replicas, needs " +
                         std::to_string(params.min_replicas));

  const double mean = sample_mean(values);
  const double se = standard_error_of(values);
  const double c_lag = c_table.value_at(T - t) * options.miscale;
  const CDeltaEntry* entry = c_table.find(T - t);
  report.constants.push_back({"c_delta(T-t)", c_lag, Provenance::MonteCarlo, entry ? entry->error() : 0.0});
  report.add_statistic("mean_scaled_square", mean);
  report.add_statistic("se_scaled_square", se);
  report.add_check("mean_minus_c_delta", mean - c_lag, -params.se_multiple * se, params.se_multiple * se);
  if (params.force_c_inf_check || T - t >= params.lag_factor / alpha) {
    const double tol = params.c_inf_tolerance * constants.c_inf;
    report.add_check("mean_minus_c_inf", mean - constants.c_inf, -tol, tol);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Variance curve and c_delta table sanity

VerificationReport verify_c_delta(const VarianceCurve& curve, const CDeltaTable& table,
                                  const ModelConstants& constants, const CurveParams& params) {
  VerificationReport report;
  report.suite = "cdelta";
  report.constants = constants.fields();
  report.exclusions.total = curve.replicas;
  report.exclusions.retained = curve.replicas;

  const std::size_t last = curve.v.size() - 1;
  report.add_check("v_last_minus_sigma_w2", curve.v[last] - constants.sigma_w2, -params.se_multiple * curve.se[last],
                   params.se_multiple * curve.se[last]);
  if (curve.times.front() == 0.0)
    report.add_check("v0_minus_sigma2", curve.v.front() - constants.sigma2, -params.se_multiple * curve.se.front(),
                     kInfinity);
  // Largest drop between neighbours, in units of the larger standard error.
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < curve.v.size(); ++i) {
    const double se = std::max(curve.se[i], curve.se[i + 1]);
    const double drop = curve.v[i] - curve.v[i + 1];
    if (drop > 0.0) worst = std::max(worst, se > 0.0 ? drop / se : kInfinity);
  }
  report.add_check("v_max_drop_in_se", worst, 0.0, params.monotone_se_multiple);

  double worst_c = 0.0;
  for (std::size_t i = 0; i + 1 < table.entries.size(); ++i) {
    const auto& a = table.entries[i];
    const auto& b = table.entries[i + 1];
    const double drop = a.value - b.value;
    const double err = a.error() + b.error();
    if (drop > 0.0) worst_c = std::max(worst_c, err > 0.0 ? drop / err : kInfinity);
  }
  report.add_check("c_delta_max_drop_in_error", worst_c, 0.0, 1.0);

  double over = -kInfinity;
  for (const auto& e : table.entries) over = std::max(over, e.value - constants.c_inf - e.error());
  report.add_check("c_delta_excess_over_c_inf", over, -kInfinity, 0.0);

  if (!table.entries.empty()) {
    const auto& big = table.entries.back();
    const double tol = std::max(params.c_inf_relative * constants.c_inf, big.error());
    report.add_check("c_delta_largest_minus_c_inf", big.value - constants.c_inf, -tol, tol);
    const auto& small = table.entries.front();
    report.add_check("c_delta_smallest_over_c_inf", small.value / constants.c_inf, 0.0, params.small_delta_fraction);
    for (const auto& e : table.entries) report.add_statistic("c_delta[" + fmt(e.delta) + "]", e.value);
  }
  return report;
}

}  // namespace cmj
