#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "cmj/malthusian.hpp"
#include "cmj/reproduction.hpp"
#include "cmj/rng.hpp"

namespace cmj {

// Piecewise-linear interpolant through (times[i], values[i]); zero for
// negative arguments and `tail` beyond the last node. On [0, times[0]) it
// takes values[0].
struct PiecewiseCurve {
  std::vector<double> times;
  std::vector<double> values;
  double tail = 0.0;

  double operator()(double t) const;
};

// ---------------------------------------------------------------------------
// Characteristics counted during the event loop.

enum class CharacteristicKind {
  BornIndicator,       // psi_t = 1{t >= 0}; Z^psi_t = N_t
  DiscountedFrontier,  // frontier children weighted by e^{-2 alpha S} f(t - S)
};

enum class FrontierWeight {
  Constant,         // f = 1
  ShiftedVariance,  // f(x) = v(shift + x) for a variance curve v
};

struct CharacteristicSpec {
  CharacteristicKind kind = CharacteristicKind::BornIndicator;
  FrontierWeight weight = FrontierWeight::Constant;
  std::shared_ptr<const PiecewiseCurve> curve;
  double shift = 0.0;

  static CharacteristicSpec born_indicator();
  static CharacteristicSpec discounted_frontier();
  static CharacteristicSpec shifted_variance(std::shared_ptr<const PiecewiseCurve> curve, double shift);

  double weight_at(double x) const;
};

struct CharacteristicTrack {
  CharacteristicSpec spec;
  // Z^psi_t on the grid.
  std::vector<double> values;
  // DiscountedFrontier only: e^{-2 alpha t} Z^psi_t, i.e.
  // sum_{u in I_t} e^{-2 alpha S(u)} f(t - S(u)), accumulated directly.
  std::vector<double> discounted;
};

// ---------------------------------------------------------------------------
// Replica simulation.

inline constexpr std::uint64_t kDefaultMaxBirths = 10'000'000;
inline constexpr double kDefaultTruncationBound = 1e-9;

struct SimConfig {
  ReproductionLaw law;
  double horizon = 0.0;
  std::vector<double> grid;  // ascending, inside [0, horizon]
  double age_cap = kInfinity;
  std::uint64_t max_births = kDefaultMaxBirths;
  std::uint64_t seed = 0;
  std::uint64_t replica_index = 0;
  std::vector<CharacteristicSpec> characteristics;
  bool retain_tree = false;  // small-tree debug mode
};

// One individual of a retained genealogy.
struct GenealogyNode {
  std::int64_t parent = -1;
  double birth = 0.0;
  double weight = 1.0;  // e^{-alpha S(u)}
  std::uint32_t generation = 0;
  bool expanded = false;  // offspring drawn (born <= horizon)
};

struct ReplicaPath {
  std::uint64_t replica_index = 0;
  std::uint64_t seed = 0;

  // Per grid time.
  std::vector<double> w;                 // Nerman's martingale W_t
  std::vector<double> q;                 // sum_{u in I_t} e^{-2 alpha S(u)}
  std::vector<std::int64_t> births;      // N_t, births in [0, t]
  std::vector<std::int64_t> frontier;    // |I_t|

  // Z_n = sum_{|u| = n} e^{-alpha S(u)}; exact for n < complete_generations.
  std::vector<double> z;
  std::size_t complete_generations = 0;

  bool extinct = false;
  bool guard_tripped = false;
  std::uint64_t total_births = 0;

  std::vector<CharacteristicTrack> characteristics;
  std::vector<GenealogyNode> tree;  // empty unless SimConfig::retain_tree

  double z_at(std::size_t n) const { return n < z.size() ? z[n] : 0.0; }
};

// Grows one tree by popping individuals in birth-time order (ties broken by
// creation order) up to the horizon.
ReplicaPath run_replica(const SimConfig& config, const ModelConstants& constants);

// Track for the first characteristic of the given kind; throws
// std::out_of_range when the replica did not record one.
const CharacteristicTrack& characteristic_process(const ReplicaPath& path, CharacteristicKind kind);

// int_{(age_cap, inf)} e^{-alpha x} mu(dx): frontier mass dropped per
// individual by the age cap.
double truncation_bias_bound(const ReproductionLaw& law, double alpha, double age_cap);

// Age cap resolving "auto": +inf when N is finite (no truncation needed),
// otherwise the closed-form cap with truncation_bias_bound < bound.
double auto_age_cap(const ReproductionLaw& law, double alpha, double bound = kDefaultTruncationBound);

// ---------------------------------------------------------------------------
// Many-to-one oracle.

// Sampler for the tilted increment law e^{-alpha x} mu(dx).
//   poisson_ages      -> exponential with rate alpha (rate / alpha = 1)
//   deterministic     -> atom a_i with probability m_i e^{-alpha a_i}
//   exponential ages  -> exponential with rate alpha + 1/mean
//   fixed ages        -> the fixed age
//   uniform [lo, hi]  -> density proportional to e^{-alpha x} on [lo, hi],
//                        inverted as lo - log1p(u expm1(-alpha w)) / alpha
// The count law of bernoulli_split / iid_litter only scales the intensity
// and drops out of the normalized increment law.
class TiltedIncrementSampler {
 public:
  TiltedIncrementSampler(const ReproductionLaw& law, double alpha);
  double operator()(Rng& rng) const;

 private:
  enum class Kind { Exponential, Atoms, Fixed, TruncatedExponential };
  Kind kind_ = Kind::Exponential;
  double rate_ = 0.0;
  double lo_ = 0.0;
  double width_ = 0.0;
  std::vector<double> atoms_;
  std::vector<double> cumulative_;
};

struct MeanEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

// E[N_t] = sum_{n >= 0} E[e^{alpha S_n} 1{S_n <= t}] over the tilted random
// walk S_n; the n = 0 term is the ancestor.
MeanEstimate many_to_one_mean_nt(const ReproductionLaw& law, const ModelConstants& constants, double t,
                                 std::size_t n_walks, Rng& rng);

// ---------------------------------------------------------------------------

// A set of replicas sharing one grid and horizon, stored in replica order.
struct Ensemble {
  std::vector<double> grid;
  double horizon = 0.0;
  std::vector<ReplicaPath> replicas;

  // Index of the grid point equal to t (relative tolerance 1e-9); throws
  // GridBeyondHorizon if absent.
  std::size_t index_of(double t) const;
  bool has_time(double t) const;
};

}  // namespace cmj
