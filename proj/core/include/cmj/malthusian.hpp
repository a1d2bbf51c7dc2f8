#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cmj/reproduction.hpp"

namespace cmj {

inline constexpr double kDefaultSolverTolerance = 1e-12;

// Where a constant came from.
enum class Provenance { ClosedForm, Bisection, FixedPoint, Quadrature, MonteCarlo };

std::string_view to_string(Provenance p);

struct SourcedValue {
  std::string name;
  double value = 0.0;
  Provenance source = Provenance::ClosedForm;
  double standard_error = 0.0;  // nonzero only for MonteCarlo
};

struct ModelConstants {
  double alpha = 0.0;
  double m_prime_alpha = 0.0;
  double m_two_alpha = 0.0;
  double sigma2 = 0.0;
  double sigma_w2 = 0.0;  // sigma2 / (1 - m_two_alpha)
  double c_inf = 0.0;     // sigma2 / (-alpha * m_prime_alpha)
  double mean_n = 0.0;
  double extinction_q = 0.0;

  Provenance alpha_source = Provenance::ClosedForm;
  Provenance extinction_source = Provenance::FixedPoint;

  bool lattice = false;
  bool degenerate = false;  // sigma2 == 0, only reachable with DegeneratePolicy::Allow
  A5Certificate a5;

  // Limit of e^{alpha t} sum_{u in I_t} e^{-2 alpha S(u)} / W.
  double frontier_square_limit() const { return (1.0 - m_two_alpha) / (-alpha * m_prime_alpha); }
  // Limit of e^{-alpha t} N_t / W.
  double population_limit() const { return 1.0 / (-alpha * m_prime_alpha); }

  // Every constant with its provenance, in a fixed order.
  std::vector<SourcedValue> fields() const;
};

// Solves m(alpha) = 1 by bracketing and bisection. Throws SubcriticalLaw when
// E[N] <= 1 and NoFiniteBranch when no finite branch is found.
double solve_malthusian(const ReproductionLaw& law, double tol = kDefaultSolverTolerance);

// Exact root for variants where m(theta) = 1 can be inverted by hand; empty
// otherwise (uniform ages, several distinct deterministic ages).
std::optional<double> malthusian_closed_form(const ReproductionLaw& law);

// Smallest fixed point of the offspring generating function, by iteration
// from 0. Requires E[N] > 1.
double extinction_probability(const ReproductionLaw& law, double tol = kDefaultSolverTolerance);

enum class DegeneratePolicy { Reject, Allow };

// Assembles every constant. Throws SubcriticalLaw / NoFiniteBranch /
// A3Violated / A4Violated. With DegeneratePolicy::Allow a zero sigma2 is
// accepted and flagged instead (debug runs on deterministic laws).
ModelConstants derive_constants(const ReproductionLaw& law, double tol = kDefaultSolverTolerance,
                                DegeneratePolicy policy = DegeneratePolicy::Reject);

}  // namespace cmj
