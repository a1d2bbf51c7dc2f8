#include "cmj/reproduction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cmj/errors.hpp"

namespace cmj {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

void validate(const AgeDistribution& d) {
  std::visit(Overloaded{
                 [](const ExponentialAge& e) {
                   if (!positive_finite(e.mean)) throw ConfigError("exponential age: mean must be > 0");
                 },
                 [](const FixedAge& f) {
                   if (!positive_finite(f.age)) throw ConfigError("fixed age: age must be > 0");
                 },
                 [](const UniformAge& u) {
                   if (!(std::isfinite(u.lo) && std::isfinite(u.hi) && u.lo >= 0.0 && u.hi > u.lo))
                     throw ConfigError("uniform age: need 0 <= lo < hi");
                 },
             },
             d);
}

void validate(const CountDistribution& c) {
  std::visit(Overloaded{
                 [](const PoissonCount& p) {
                   if (!positive_finite(p.mean)) throw ConfigError("poisson count: mean must be > 0");
                 },
                 [](const GeometricCount& g) {
                   if (!positive_finite(g.mean)) throw ConfigError("geometric count: mean must be > 0");
                 },
                 [](const FixedCount&) {},
             },
             c);
}

std::string describe_age(const AgeDistribution& d) {
  std::ostringstream os;
  os.precision(17);
  std::visit(Overloaded{
                 [&](const ExponentialAge& e) { os << "exponential{mean=" << e.mean << "}"; },
                 [&](const FixedAge& f) { os << "fixed{age=" << f.age << "}"; },
                 [&](const UniformAge& u) { os << "uniform{lo=" << u.lo << ", hi=" << u.hi << "}"; },
             },
             d);
  return os.str();
}

std::string describe_count(const CountDistribution& c) {
  std::ostringstream os;
  os.precision(17);
  std::visit(Overloaded{
                 [&](const PoissonCount& p) { os << "poisson{mean=" << p.mean << "}"; },
                 [&](const GeometricCount& g) { os << "geometric{mean=" << g.mean << "}"; },
                 [&](const FixedCount& f) { os << "fixed{n=" << f.n << "}"; },
             },
             c);
  return os.str();
}

bool age_is_lattice(const AgeDistribution& d) { return std::holds_alternative<FixedAge>(d); }

// All ratios a_i / a_0 within 1e-9 of a fraction with denominator <= 1000.
bool atoms_on_common_lattice(const std::vector<AgeAtom>& atoms) {
  const double base = atoms.front().age;
  for (const auto& atom : atoms) {
    const double ratio = atom.age / base;
    bool found = false;
    for (int q = 1; q <= 1000 && !found; ++q) {
      const double scaled = ratio * q;
      found = std::abs(scaled - std::round(scaled)) <= 1e-9 * std::max(1.0, scaled);
    }
    if (!found) return false;
  }
  return true;
}

double one_minus_exp_over(double x) {
  // (1 - e^{-x}) / x, stable at small x.
  if (x < 1e-8) return 1.0 - 0.5 * x;
  return -std::expm1(-x) / x;
}

// int_0^w y e^{-theta y} dy
double ramp_integral(double theta, double w) {
  const double x = theta * w;
  if (x < 1e-3) return w * w * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0);
  return (-std::expm1(-x) - x * std::exp(-x)) / (theta * theta);
}

double geometric_success(double mean) { return 1.0 / (1.0 + mean); }

unsigned long sample_count(const CountDistribution& c, Rng& rng) {
  return std::visit(Overloaded{
                        [&](const PoissonCount& p) {
                          return std::poisson_distribution<unsigned long>(p.mean)(rng);
                        },
                        [&](const GeometricCount& g) {
                          return std::geometric_distribution<unsigned long>(geometric_success(g.mean))(rng);
                        },
                        [&](const FixedCount& f) { return static_cast<unsigned long>(f.n); },
                    },
                    c);
}

}  // namespace

// ---------------------------------------------------------------------------
// Age and count helpers

double age_laplace(const AgeDistribution& d, double theta) {
  return std::visit(Overloaded{
                        [&](const ExponentialAge& e) { return 1.0 / (1.0 + theta * e.mean); },
                        [&](const FixedAge& f) { return std::exp(-theta * f.age); },
                        [&](const UniformAge& u) {
                          const double w = u.hi - u.lo;
                          return std::exp(-theta * u.lo) * one_minus_exp_over(theta * w);
                        },
                    },
                    d);
}

double age_laplace_slope(const AgeDistribution& d, double theta) {
  return std::visit(Overloaded{
                        [&](const ExponentialAge& e) {
                          const double s = 1.0 + theta * e.mean;
                          return e.mean / (s * s);
                        },
                        [&](const FixedAge& f) { return f.age * std::exp(-theta * f.age); },
                        [&](const UniformAge& u) {
                          const double w = u.hi - u.lo;
                          const double head = u.lo * one_minus_exp_over(theta * w);
                          return std::exp(-theta * u.lo) * (head + ramp_integral(theta, w) / w);
                        },
                    },
                    d);
}

double age_discounted_tail(const AgeDistribution& d, double theta, double cap) {
  if (cap == kInfinity) return 0.0;
  return std::visit(Overloaded{
                        [&](const ExponentialAge& e) {
                          const double rate = 1.0 / e.mean;
                          return rate * std::exp(-(theta + rate) * cap) / (theta + rate);
                        },
                        [&](const FixedAge& f) { return f.age > cap ? std::exp(-theta * f.age) : 0.0; },
                        [&](const UniformAge& u) {
                          const double from = std::max(cap, u.lo);
                          if (from >= u.hi) return 0.0;
                          const double span = u.hi - from;
                          return std::exp(-theta * from) * span * one_minus_exp_over(theta * span) /
                                 (u.hi - u.lo);
                        },
                    },
                    d);
}

double sample_age(const AgeDistribution& d, Rng& rng) {
  return std::visit(Overloaded{
                        [&](const ExponentialAge& e) { return -e.mean * std::log(open_uniform(rng)); },
                        [&](const FixedAge& f) { return f.age; },
                        [&](const UniformAge& u) { return u.lo + (u.hi - u.lo) * open_uniform(rng); },
                    },
                    d);
}

double age_support_max(const AgeDistribution& d) noexcept {
  return std::visit(Overloaded{
                        [](const ExponentialAge&) { return kInfinity; },
                        [](const FixedAge& f) { return f.age; },
                        [](const UniformAge& u) { return u.hi; },
                    },
                    d);
}

double count_mean(const CountDistribution& c) noexcept {
  return std::visit(Overloaded{
                        [](const PoissonCount& p) { return p.mean; },
                        [](const GeometricCount& g) { return g.mean; },
                        [](const FixedCount& f) { return static_cast<double>(f.n); },
                    },
                    c);
}

double count_factorial_moment2(const CountDistribution& c) noexcept {
  return std::visit(Overloaded{
                        [](const PoissonCount& p) { return p.mean * p.mean; },
                        [](const GeometricCount& g) { return 2.0 * g.mean * g.mean; },
                        [](const FixedCount& f) {
                          const double n = f.n;
                          return n * (n - 1.0);
                        },
                    },
                    c);
}

// ---------------------------------------------------------------------------
// ReproductionLaw

ReproductionLaw::ReproductionLaw(Variant v) : v_(std::move(v)) {
  std::visit(Overloaded{
                 [](const PoissonAges& p) {
                   if (!positive_finite(p.rate)) throw ConfigError("poisson_ages: rate must be > 0");
                 },
                 [](DeterministicAges& d) {
                   if (d.atoms.empty()) throw ConfigError("deterministic_ages: need at least one age");
                   for (const auto& a : d.atoms) {
                     if (!positive_finite(a.age)) throw ConfigError("deterministic_ages: ages must be > 0");
                     if (a.multiplicity == 0) throw ConfigError("deterministic_ages: multiplicity must be >= 1");
                   }
                   std::sort(d.atoms.begin(), d.atoms.end(),
                             [](const AgeAtom& a, const AgeAtom& b) { return a.age < b.age; });
                   std::vector<AgeAtom> merged;
                   for (const auto& a : d.atoms) {
                     if (!merged.empty() && merged.back().age == a.age)
                       merged.back().multiplicity += a.multiplicity;
                     else
                       merged.push_back(a);
                   }
                   d.atoms = std::move(merged);
                 },
                 [](const BernoulliSplit& b) {
                   if (!(b.p > 0.0 && b.p <= 1.0)) throw ConfigError("bernoulli_split: p must lie in (0, 1]");
                   validate(b.lifetime);
                 },
                 [](const IidLitter& l) {
                   validate(l.count);
                   validate(l.age);
                 },
             },
             v_);
}

ReproductionLaw ReproductionLaw::poisson_ages(double rate) { return ReproductionLaw(PoissonAges{rate}); }

ReproductionLaw ReproductionLaw::deterministic_ages(std::vector<double> ages) {
  DeterministicAges d;
  for (double a : ages) d.atoms.push_back({a, 1});
  return ReproductionLaw(std::move(d));
}

ReproductionLaw ReproductionLaw::bernoulli_split(double p, AgeDistribution lifetime) {
  return ReproductionLaw(BernoulliSplit{p, lifetime});
}

ReproductionLaw ReproductionLaw::iid_litter(CountDistribution count, AgeDistribution age) {
  return ReproductionLaw(IidLitter{count, age});
}

std::string_view ReproductionLaw::tag() const noexcept {
  return std::visit(Overloaded{
                        [](const PoissonAges&) { return std::string_view("poisson_ages"); },
                        [](const DeterministicAges&) { return std::string_view("deterministic_ages"); },
                        [](const BernoulliSplit&) { return std::string_view("bernoulli_split"); },
                        [](const IidLitter&) { return std::string_view("iid_litter"); },
                    },
                    v_);
}

std::string ReproductionLaw::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(Overloaded{
                 [&](const PoissonAges& p) { os << "poisson_ages{rate=" << p.rate << "}"; },
                 [&](const DeterministicAges& d) {
                   os << "deterministic_ages{";
                   for (std::size_t i = 0; i < d.atoms.size(); ++i) {
                     if (i) os << ", ";
                     os << d.atoms[i].age << "x" << d.atoms[i].multiplicity;
                   }
                   os << "}";
                 },
                 [&](const BernoulliSplit& b) {
                   os << "bernoulli_split{p=" << b.p << ", lifetime=" << describe_age(b.lifetime) << "}";
                 },
                 [&](const IidLitter& l) {
                   os << "iid_litter{count=" << describe_count(l.count) << ", age=" << describe_age(l.age)
                      << "}";
                 },
             },
             v_);
  return os.str();
}

bool ReproductionLaw::is_lattice() const {
  return std::visit(Overloaded{
                        [](const PoissonAges&) { return false; },
                        [](const DeterministicAges& d) { return atoms_on_common_lattice(d.atoms); },
                        [](const BernoulliSplit& b) { return age_is_lattice(b.lifetime); },
                        [](const IidLitter& l) { return age_is_lattice(l.age); },
                    },
                    v_);
}

bool ReproductionLaw::has_finite_offspring() const noexcept {
  return !std::holds_alternative<PoissonAges>(v_);
}

double ReproductionLaw::max_age() const noexcept {
  return std::visit(Overloaded{
                        [](const PoissonAges&) { return kInfinity; },
                        [](const DeterministicAges& d) { return d.atoms.back().age; },
                        [](const BernoulliSplit& b) { return age_support_max(b.lifetime); },
                        [](const IidLitter& l) { return age_support_max(l.age); },
                    },
                    v_);
}

bool ReproductionLaw::can_exceed(double age_cap) const noexcept { return max_age() > age_cap; }

// ---------------------------------------------------------------------------
// Sampling

void sample_offspring(const ReproductionLaw& law, double age_cap, Rng& rng, OffspringSample& out) {
  out.ages.clear();
  out.truncated = law.can_exceed(age_cap);
  std::visit(Overloaded{
                 [&](const PoissonAges& p) {
                   if (!std::isfinite(age_cap))
                     throw std::invalid_argument("poisson_ages needs a finite age cap");
                   double t = 0.0;
                   for (;;) {
                     t -= std::log(open_uniform(rng)) / p.rate;
                     if (t > age_cap) break;
                     out.ages.push_back(t);
                   }
                 },
                 [&](const DeterministicAges& d) {
                   for (const auto& atom : d.atoms) {
                     if (atom.age > age_cap) break;
                     out.ages.insert(out.ages.end(), atom.multiplicity, atom.age);
                   }
                 },
                 [&](const BernoulliSplit& b) {
                   if (open_uniform(rng) >= b.p) return;
                   const double life = sample_age(b.lifetime, rng);
                   if (life <= age_cap) out.ages.insert(out.ages.end(), 2, life);
                 },
                 [&](const IidLitter& l) {
                   const unsigned long n = sample_count(l.count, rng);
                   for (unsigned long k = 0; k < n; ++k) {
                     const double a = sample_age(l.age, rng);
                     if (a <= age_cap) out.ages.push_back(a);
                   }
                   std::sort(out.ages.begin(), out.ages.end());
                 },
             },
             law.variant());
}

OffspringSample sample_offspring(const ReproductionLaw& law, double age_cap, Rng& rng) {
  OffspringSample out;
  sample_offspring(law, age_cap, rng, out);
  return out;
}

// ---------------------------------------------------------------------------
// Intensity-measure transforms

double laplace_m(const ReproductionLaw& law, double theta) {
  if (!(theta >= 0.0)) throw std::invalid_argument("laplace_m: theta must be >= 0");
  return std::visit(Overloaded{
                        [&](const PoissonAges& p) { return theta > 0.0 ? p.rate / theta : kInfinity; },
                        [&](const DeterministicAges& d) {
                          double sum = 0.0;
                          for (const auto& a : d.atoms) sum += a.multiplicity * std::exp(-theta * a.age);
                          return sum;
                        },
                        [&](const BernoulliSplit& b) { return 2.0 * b.p * age_laplace(b.lifetime, theta); },
                        [&](const IidLitter& l) { return count_mean(l.count) * age_laplace(l.age, theta); },
                    },
                    law.variant());
}

double laplace_m_prime(const ReproductionLaw& law, double theta) {
  if (!(theta > 0.0)) throw std::invalid_argument("laplace_m_prime: theta must be > 0");
  const double value =
      std::visit(Overloaded{
                     [&](const PoissonAges& p) { return -p.rate / (theta * theta); },
                     [&](const DeterministicAges& d) {
                       double sum = 0.0;
                       for (const auto& a : d.atoms) sum += a.multiplicity * a.age * std::exp(-theta * a.age);
                       return -sum;
                     },
                     [&](const BernoulliSplit& b) { return -2.0 * b.p * age_laplace_slope(b.lifetime, theta); },
                     [&](const IidLitter& l) { return -count_mean(l.count) * age_laplace_slope(l.age, theta); },
                 },
                 law.variant());
  if (!std::isfinite(value)) throw A3Violated("m'(theta) diverges at theta = " + std::to_string(theta));
  return value;
}

double discounted_tail(const ReproductionLaw& law, double theta, double cap) {
  if (cap == kInfinity) return 0.0;
  return std::visit(Overloaded{
                        [&](const PoissonAges& p) {
                          return theta > 0.0 ? p.rate * std::exp(-theta * cap) / theta : kInfinity;
                        },
                        [&](const DeterministicAges& d) {
                          double sum = 0.0;
                          for (const auto& a : d.atoms)
                            if (a.age > cap) sum += a.multiplicity * std::exp(-theta * a.age);
                          return sum;
                        },
                        [&](const BernoulliSplit& b) {
                          return 2.0 * b.p * age_discounted_tail(b.lifetime, theta, cap);
                        },
                        [&](const IidLitter& l) {
                          return count_mean(l.count) * age_discounted_tail(l.age, theta, cap);
                        },
                    },
                    law.variant());
}

double mean_offspring(const ReproductionLaw& law) { return laplace_m(law, 0.0); }

double sigma2_raw(const ReproductionLaw& law, double alpha) {
  const double m_alpha = laplace_m(law, alpha);
  if (!(std::abs(m_alpha - 1.0) <= 1e-8))
    throw PreconditionError("NotMalthusian", "sigma2 needs m(alpha) = 1, got " + std::to_string(m_alpha));
  return std::visit(Overloaded{
                        [&](const PoissonAges& p) { return p.rate / (2.0 * alpha); },
                        [&](const DeterministicAges&) {
                          const double dev = m_alpha - 1.0;
                          return dev * dev;
                        },
                        [&](const BernoulliSplit& b) {
                          return 4.0 * b.p * age_laplace(b.lifetime, 2.0 * alpha) - 1.0;
                        },
                        [&](const IidLitter& l) {
                          const double single = age_laplace(l.age, alpha);
                          return count_factorial_moment2(l.count) * single * single +
                                 count_mean(l.count) * age_laplace(l.age, 2.0 * alpha) - 1.0;
                        },
                    },
                    law.variant());
}

double sigma2(const ReproductionLaw& law, double alpha) {
  const double value = sigma2_raw(law, alpha);
  if (!std::isfinite(value)) throw A4Violated("sigma^2 is infinite");
  if (std::abs(value) < kSigma2ZeroTolerance)
    throw A4Violated("sigma^2 = 0: the discounted offspring sum is deterministic");
  return value;
}

MonteCarloEstimate sigma2_monte_carlo(const ReproductionLaw& law, double alpha, std::size_t n, Rng& rng) {
  double cap = kInfinity;
  if (!law.has_finite_offspring()) {
    // Poisson tail (rate / alpha) e^{-alpha cap} <= 1e-12.
    const auto& p = std::get<PoissonAges>(law.variant());
    cap = std::log(p.rate / (alpha * 1e-12)) / alpha;
  }
  OffspringSample draw;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sample_offspring(law, cap, rng, draw);
    double z = 0.0;
    for (double x : draw.ages) z += std::exp(-alpha * x);
    const double dev = (z - 1.0) * (z - 1.0);
    sum += dev;
    sum_sq += dev * dev;
  }
  MonteCarloEstimate est;
  est.samples = n;
  est.value = sum / static_cast<double>(n);
  const double var = (sum_sq - sum * est.value) / static_cast<double>(n - 1);
  est.standard_error = std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  return est;
}

double offspring_pgf(const ReproductionLaw& law, double s) {
  return std::visit(Overloaded{
                        [&](const PoissonAges&) { return s >= 1.0 ? 1.0 : 0.0; },
                        [&](const DeterministicAges& d) {
                          unsigned total = 0;
                          for (const auto& a : d.atoms) total += a.multiplicity;
                          return std::pow(s, static_cast<double>(total));
                        },
                        [&](const BernoulliSplit& b) { return 1.0 - b.p + b.p * s * s; },
                        [&](const IidLitter& l) {
                          return std::visit(Overloaded{
                                                [&](const PoissonCount& c) { return std::exp(c.mean * (s - 1.0)); },
                                                [&](const GeometricCount& c) {
                                                  const double q = geometric_success(c.mean);
                                                  return q / (1.0 - (1.0 - q) * s);
                                                },
                                                [&](const FixedCount& c) {
                                                  return std::pow(s, static_cast<double>(c.n));
                                                },
                                            },
                                            l.count);
                        },
                    },
                    law.variant());
}

A5Certificate certify_a5(const ReproductionLaw& law, double alpha) {
  const double half = laplace_m(law, 0.5 * alpha);
  A5Certificate cert;
  cert.holds = std::isfinite(half);
  std::ostringstream os;
  os.precision(12);
  if (std::isfinite(law.max_age()))
    os << "ages bounded by " << law.max_age() << "; ";
  os << "g(t) = exp(-alpha t / 2) is nonincreasing and integrable, and "
        "sup_t sum_k e^{-alpha X_k} 1{t < X_k} / g(t) <= sum_k e^{-alpha X_k / 2}, "
        "whose mean m(alpha/2) = "
     << half << (cert.holds ? " is finite" : " diverges");
  cert.justification = os.str();
  return cert;
}

}  // namespace cmj
