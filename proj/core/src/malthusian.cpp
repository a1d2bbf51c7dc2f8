#include "cmj/malthusian.hpp"

#include <cmath>
#include <sstream>

#include "cmj/errors.hpp"

namespace cmj {
namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

void require_supercritical(const ReproductionLaw& law) {
  const double mean = mean_offspring(law);
  if (!(mean > 1.0)) throw SubcriticalLaw("mean offspring E[N] = " + fmt(mean) + " <= 1");
}

// Root of E[N] * E[e^{-theta X}] = 1 when the age Laplace transform inverts.
std::optional<double> invert_age_laplace(const AgeDistribution& age, double mass) {
  if (const auto* e = std::get_if<ExponentialAge>(&age)) return (mass - 1.0) / e->mean;
  if (const auto* f = std::get_if<FixedAge>(&age)) return std::log(mass) / f->age;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::ClosedForm: return "closed-form";
    case Provenance::Bisection: return "bisection";
    case Provenance::FixedPoint: return "fixed-point";
    case Provenance::Quadrature: return "quadrature";
    case Provenance::MonteCarlo: return "monte-carlo";
  }
  return "unknown";
}

std::vector<SourcedValue> ModelConstants::fields() const {
  return {
      {"alpha", alpha, alpha_source, 0.0},
      {"m_prime_alpha", m_prime_alpha, Provenance::ClosedForm, 0.0},
      {"m_two_alpha", m_two_alpha, Provenance::ClosedForm, 0.0},
      {"sigma2", sigma2, Provenance::ClosedForm, 0.0},
      {"sigma_w2", sigma_w2, Provenance::ClosedForm, 0.0},
      {"c_inf", c_inf, Provenance::ClosedForm, 0.0},
      {"mean_n", mean_n, Provenance::ClosedForm, 0.0},
      {"extinction_q", extinction_q, extinction_source, 0.0},
  };
}

double solve_malthusian(const ReproductionLaw& law, double tol) {
  require_supercritical(law);
  const auto m = [&](double theta) { return laplace_m(law, theta); };

  constexpr int kProbeLimit = 64;
  double hi = 1.0;
  for (int k = 0; !(m(hi) < 1.0); ++k) {
    if (k == kProbeLimit) throw NoFiniteBranch("m(theta) >= 1 for every theta up to 2^64");
    hi *= 2.0;
  }
  double lo = 1.0;
  for (int k = 0; !(m(lo) > 1.0); ++k) {  // +inf counts as > 1
    if (k == kProbeLimit) throw NoFiniteBranch("m(theta) <= 1 for every theta down to 2^-64");
    lo *= 0.5;
  }

  for (int it = 0; it < 4096; ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    const double value = m(mid);
    if (hi - lo <= tol * std::max(1.0, mid) && std::abs(value - 1.0) <= tol) return mid;
    if (mid <= lo || mid >= hi) return mid;  // interval exhausted at double precision
    if (value > 1.0)
      lo = mid;
    else
      hi = mid;
  }
  return lo + 0.5 * (hi - lo);
}

std::optional<double> malthusian_closed_form(const ReproductionLaw& law) {
  const auto& v = law.variant();
  if (const auto* p = std::get_if<PoissonAges>(&v)) return p->rate;
  if (const auto* d = std::get_if<DeterministicAges>(&v)) {
    if (d->atoms.size() != 1) return std::nullopt;
    return std::log(static_cast<double>(d->atoms.front().multiplicity)) / d->atoms.front().age;
  }
  if (const auto* b = std::get_if<BernoulliSplit>(&v)) return invert_age_laplace(b->lifetime, 2.0 * b->p);
  const auto& l = std::get<IidLitter>(v);
  return invert_age_laplace(l.age, count_mean(l.count));
}

double extinction_probability(const ReproductionLaw& law, double tol) {
  require_supercritical(law);
  double q = 0.0;
  for (long it = 0; it < 10'000'000; ++it) {
    const double next = offspring_pgf(law, q);
    // Linear convergence: a step of size tol still leaves an error of
    // tol * r / (1 - r), so iterate well past it.
    if (std::abs(next - q) <= 1e-3 * tol || next == q) return next;
    q = next;
  }
  return q;
}

ModelConstants derive_constants(const ReproductionLaw& law, double tol, DegeneratePolicy policy) {
  require_supercritical(law);
  ModelConstants c;
  c.mean_n = mean_offspring(law);

  if (auto exact = malthusian_closed_form(law)) {
    c.alpha = *exact;
    c.alpha_source = Provenance::ClosedForm;
  } else {
    c.alpha = solve_malthusian(law, tol);
    c.alpha_source = Provenance::Bisection;
  }

  c.m_prime_alpha = laplace_m_prime(law, c.alpha);
  if (!(c.m_prime_alpha < 0.0)) throw A3Violated("m'(alpha) = " + fmt(c.m_prime_alpha) + " is not negative");

  c.m_two_alpha = laplace_m(law, 2.0 * c.alpha);
  c.sigma2 = sigma2_raw(law, c.alpha);
  if (!std::isfinite(c.sigma2)) throw A4Violated("sigma^2 is infinite");
  if (std::abs(c.sigma2) < kSigma2ZeroTolerance) {
    if (policy == DegeneratePolicy::Reject)
      throw A4Violated("sigma^2 = 0: the discounted offspring sum is deterministic");
    c.degenerate = true;
  }
  if (!(c.m_two_alpha < 1.0)) throw A4Violated("m(2 alpha) = " + fmt(c.m_two_alpha) + " >= 1");

  c.sigma_w2 = c.sigma2 / (1.0 - c.m_two_alpha);
  c.c_inf = c.sigma2 / (-c.alpha * c.m_prime_alpha);
  c.extinction_q = extinction_probability(law, tol);
  c.extinction_source = Provenance::FixedPoint;
  c.lattice = law.is_lattice();
  c.a5 = certify_a5(law, c.alpha);
  return c;
}

}  // namespace cmj
