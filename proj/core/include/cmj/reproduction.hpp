#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cmj/rng.hpp"

namespace cmj {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Positive age (lifetime) distributions.

struct ExponentialAge {
  double mean;
};
struct FixedAge {
  double age;
};
struct UniformAge {
  double lo;
  double hi;
};
using AgeDistribution = std::variant<ExponentialAge, FixedAge, UniformAge>;

// ---------------------------------------------------------------------------
// Nonnegative integer count distributions.

struct PoissonCount {
  double mean;
};
// Number of failures before the first success; mean = (1 - q) / q.
struct GeometricCount {
  double mean;
};
struct FixedCount {
  unsigned n;
};
using CountDistribution = std::variant<PoissonCount, GeometricCount, FixedCount>;

// ---------------------------------------------------------------------------
// Offspring point-process laws.

// Homogeneous Poisson process of births on (0, inf); N is infinite.
struct PoissonAges {
  double rate;
};

struct AgeAtom {
  double age;
  unsigned multiplicity;
};
// Fixed counting measure: `multiplicity` children at each listed age.
struct DeterministicAges {
  std::vector<AgeAtom> atoms;
};

// With probability p exactly two children, both at the same random age L.
struct BernoulliSplit {
  double p;
  AgeDistribution lifetime;
};

// N ~ count, then N independent ages.
struct IidLitter {
  CountDistribution count;
  AgeDistribution age;
};

class ReproductionLaw {
 public:
  using Variant = std::variant<PoissonAges, DeterministicAges, BernoulliSplit, IidLitter>;

  // Validates parameters and normalizes DeterministicAges (sorted, duplicate
  // ages merged). Throws ConfigError on invalid parameters.
  explicit ReproductionLaw(Variant v);

  static ReproductionLaw poisson_ages(double rate);
  static ReproductionLaw deterministic_ages(std::vector<double> ages);
  static ReproductionLaw bernoulli_split(double p, AgeDistribution lifetime);
  static ReproductionLaw iid_litter(CountDistribution count, AgeDistribution age);

  const Variant& variant() const noexcept { return v_; }

  // Config tag of the variant: poisson_ages, deterministic_ages, ...
  std::string_view tag() const noexcept;
  std::string describe() const;

  bool is_lattice() const;
  // True when N < inf almost surely.
  bool has_finite_offspring() const noexcept;
  // Supremum of the support of the age distribution (may be +inf).
  double max_age() const noexcept;
  // True iff offspring ages can exceed `age_cap` with positive probability.
  bool can_exceed(double age_cap) const noexcept;

 private:
  Variant v_;
};

struct OffspringSample {
  std::vector<double> ages;  // ascending, every age <= cap
  bool truncated = false;
};

OffspringSample sample_offspring(const ReproductionLaw& law, double age_cap, Rng& rng);
// Allocation-free variant for the event loop; reuses `out.ages`.
void sample_offspring(const ReproductionLaw& law, double age_cap, Rng& rng, OffspringSample& out);

// m(theta) = int e^{-theta t} mu(dt). Returns +inf where the integral diverges.
double laplace_m(const ReproductionLaw& law, double theta);

// m'(theta) = -int t e^{-theta t} mu(dt). Requires theta > 0; throws A3Violated
// when the integral diverges.
double laplace_m_prime(const ReproductionLaw& law, double theta);

// Tail of the discounted intensity: int_{(cap, inf)} e^{-theta x} mu(dx).
double discounted_tail(const ReproductionLaw& law, double theta, double cap);

// E[N] = mu((0, inf)); +inf for PoissonAges.
double mean_offspring(const ReproductionLaw& law);

// E[(int e^{-alpha t} xi(dt) - 1)^2] in closed form. Requires m(alpha) = 1.
// sigma2() throws A4Violated when the value is zero (|.| < 1e-12) or infinite;
// sigma2_raw() returns it unchecked.
double sigma2(const ReproductionLaw& law, double alpha);
double sigma2_raw(const ReproductionLaw& law, double alpha);

inline constexpr double kSigma2ZeroTolerance = 1e-12;

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

// Sample mean of (sum_k e^{-alpha X_k} - 1)^2 over `n` offspring draws with
// an age cap whose discounted tail is below 1e-12.
MonteCarloEstimate sigma2_monte_carlo(const ReproductionLaw& law, double alpha, std::size_t n,
                                      Rng& rng);

// Probability generating function of N. PoissonAges has N = inf a.s., so the
// function is 0 on [0, 1).
double offspring_pgf(const ReproductionLaw& law, double s);

// Integrability condition on the frontier weights used by the almost-sure
// results. Certified analytically, never simulated.
struct A5Certificate {
  bool holds = false;
  std::string justification;
};
A5Certificate certify_a5(const ReproductionLaw& law, double alpha);

// Helpers on the age distributions, shared with the engine and analysis.
double age_laplace(const AgeDistribution& d, double theta);      // E[e^{-theta X}]
double age_laplace_slope(const AgeDistribution& d, double theta);  // E[X e^{-theta X}]
double age_discounted_tail(const AgeDistribution& d, double theta, double cap);
double sample_age(const AgeDistribution& d, Rng& rng);
double age_support_max(const AgeDistribution& d) noexcept;
double count_mean(const CountDistribution& c) noexcept;
double count_factorial_moment2(const CountDistribution& c) noexcept;  // E[N(N-1)]

}  // namespace cmj
