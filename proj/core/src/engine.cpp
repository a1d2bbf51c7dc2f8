#include "cmj/engine.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "cmj/errors.hpp"

namespace cmj {

// ---------------------------------------------------------------------------
// PiecewiseCurve / characteristics

double PiecewiseCurve::operator()(double t) const {
  if (t < 0.0) return 0.0;
  if (times.empty()) return tail;
  if (t <= times.front()) return values.front();
  if (t > times.back()) return tail;
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - times.begin());
  if (times[hi] == t) return values[hi];
  const std::size_t lo = hi - 1;
  const double frac = (t - times[lo]) / (times[hi] - times[lo]);
  return values[lo] + frac * (values[hi] - values[lo]);
}

CharacteristicSpec CharacteristicSpec::born_indicator() { return {}; }

CharacteristicSpec CharacteristicSpec::discounted_frontier() {
  CharacteristicSpec s;
  s.kind = CharacteristicKind::DiscountedFrontier;
  return s;
}

CharacteristicSpec CharacteristicSpec::shifted_variance(std::shared_ptr<const PiecewiseCurve> curve,
                                                        double shift) {
  CharacteristicSpec s;
  s.kind = CharacteristicKind::DiscountedFrontier;
  s.weight = FrontierWeight::ShiftedVariance;
  s.curve = std::move(curve);
  s.shift = shift;
  return s;
}

double CharacteristicSpec::weight_at(double x) const {
  if (weight == FrontierWeight::Constant) return 1.0;
  return (*curve)(shift + x);
}

const CharacteristicTrack& characteristic_process(const ReplicaPath& path, CharacteristicKind kind) {
  for (const auto& track : path.characteristics)
    if (track.spec.kind == kind) return track;
  throw std::out_of_range("replica has no track for the requested characteristic");
}

// ---------------------------------------------------------------------------
// Event loop

namespace {

struct Pending {
  double birth;
  double weight;
  std::uint64_t sequence;
  std::uint32_t generation;
  std::int64_t node;
};

struct LaterFirst {
  bool operator()(const Pending& a, const Pending& b) const {
    if (a.birth != b.birth) return a.birth > b.birth;
    return a.sequence > b.sequence;
  }
};

std::size_t first_at_or_after(const std::vector<double>& grid, double t) {
  return static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), t) - grid.begin());
}

void validate(const SimConfig& config) {
  if (!(config.horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  if (config.grid.empty()) throw std::invalid_argument("grid must be nonempty");
  if (!std::is_sorted(config.grid.begin(), config.grid.end()))
    throw std::invalid_argument("grid must be sorted");
  if (config.grid.front() < 0.0 || config.grid.back() > config.horizon)
    throw GridBeyondHorizon("grid must lie inside [0, horizon]");
  if (!(config.age_cap > 0.0)) throw std::invalid_argument("age_cap must be > 0");
  if (config.max_births == 0) throw std::invalid_argument("max_births must be >= 1");
  for (const auto& c : config.characteristics)
    if (c.weight == FrontierWeight::ShiftedVariance && !c.curve)
      throw std::invalid_argument("shifted-variance characteristic needs a curve");
}

}  // namespace

ReplicaPath run_replica(const SimConfig& config, const ModelConstants& constants) {
  validate(config);
  const double alpha = constants.alpha;
  const auto& grid = config.grid;
  const std::size_t cells = grid.size();

  ReplicaPath path;
  path.replica_index = config.replica_index;
  path.seed = config.seed;

  // Difference arrays over the grid: an edge (s, s') of the genealogy adds to
  // every grid time in [s, s').
  std::vector<double> w_diff(cells + 1, 0.0);
  std::vector<double> q_diff(cells + 1, 0.0);
  std::vector<std::int64_t> frontier_diff(cells + 1, 0);
  std::vector<std::int64_t> birth_hist(cells + 1, 0);

  struct TrackState {
    const CharacteristicSpec* spec;
    std::vector<double> diff;   // Constant weight
    std::vector<double> direct; // ShiftedVariance weight
  };
  std::vector<TrackState> tracks;
  for (const auto& spec : config.characteristics) {
    TrackState st{&spec, {}, {}};
    if (spec.kind == CharacteristicKind::DiscountedFrontier) {
      if (spec.weight == FrontierWeight::Constant)
        st.diff.assign(cells + 1, 0.0);
      else
        st.direct.assign(cells, 0.0);
    }
    tracks.push_back(std::move(st));
  }

  std::vector<double>& z = path.z;
  auto add_generation = [&z](std::uint32_t gen, double weight) {
    if (z.size() <= gen) z.resize(gen + 1, 0.0);
    z[gen] += weight;
  };

  std::priority_queue<Pending, std::vector<Pending>, LaterFirst> queue;
  std::uint64_t sequence = 0;
  std::int64_t root_node = -1;
  if (config.retain_tree) {
    path.tree.push_back({-1, 0.0, 1.0, 0, false});
    root_node = 0;
  }
  queue.push({0.0, 1.0, sequence++, 0, root_node});
  add_generation(0, 1.0);

  constexpr std::uint32_t kNoGeneration = UINT32_MAX;
  std::uint32_t first_unexpanded = kNoGeneration;

  Rng rng = make_stream(config.seed);
  OffspringSample draw;
  const double horizon = config.horizon;

  while (!queue.empty()) {
    if (path.total_births == config.max_births) {
      path.guard_tripped = true;
      while (!queue.empty()) {
        first_unexpanded = std::min(first_unexpanded, queue.top().generation);
        queue.pop();
      }
      break;
    }
    const Pending parent = queue.top();
    queue.pop();
    ++path.total_births;
    if (parent.node >= 0) path.tree[static_cast<std::size_t>(parent.node)].expanded = true;

    const std::size_t born_cell = first_at_or_after(grid, parent.birth);
    ++birth_hist[born_cell];

    sample_offspring(config.law, config.age_cap, rng, draw);
    double last_age = -1.0;
    double factor = 0.0;
    for (const double age : draw.ages) {
      if (age != last_age) {
        factor = std::exp(-alpha * age);
        last_age = age;
      }
      const double child_birth = parent.birth + age;
      const double weight = parent.weight * factor;
      const double weight_sq = weight * weight;
      const std::uint32_t gen = parent.generation + 1;

      const std::size_t end_cell = first_at_or_after(grid, child_birth);
      if (born_cell < end_cell) {
        w_diff[born_cell] += weight;
        w_diff[end_cell] -= weight;
        q_diff[born_cell] += weight_sq;
        q_diff[end_cell] -= weight_sq;
        ++frontier_diff[born_cell];
        --frontier_diff[end_cell];
        for (auto& tr : tracks) {
          if (!tr.diff.empty()) {
            tr.diff[born_cell] += weight_sq;
            tr.diff[end_cell] -= weight_sq;
          } else if (!tr.direct.empty()) {
            for (std::size_t i = born_cell; i < end_cell; ++i)
              tr.direct[i] += weight_sq * tr.spec->weight_at(grid[i] - child_birth);
          }
        }
      }

      add_generation(gen, weight);
      std::int64_t node = -1;
      if (config.retain_tree) {
        node = static_cast<std::int64_t>(path.tree.size());
        path.tree.push_back({parent.node, child_birth, weight, gen, false});
      }
      if (child_birth <= horizon)
        queue.push({child_birth, weight, sequence++, gen, node});
      else
        first_unexpanded = std::min(first_unexpanded, gen);
    }
  }

  path.extinct = !path.guard_tripped && first_unexpanded == kNoGeneration;
  path.complete_generations =
      first_unexpanded == kNoGeneration ? z.size() : static_cast<std::size_t>(first_unexpanded) + 1;

  path.w.resize(cells);
  path.q.resize(cells);
  path.frontier.resize(cells);
  path.births.resize(cells);
  double w_run = 0.0;
  double q_run = 0.0;
  std::int64_t f_run = 0;
  std::int64_t n_run = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    w_run += w_diff[i];
    q_run += q_diff[i];
    f_run += frontier_diff[i];
    n_run += birth_hist[i];
    path.frontier[i] = f_run;
    path.births[i] = n_run;
    // An empty coming generation has W_t = Q_t = 0 exactly; the running sums
    // would otherwise carry cancellation residue.
    path.w[i] = f_run == 0 ? 0.0 : w_run;
    path.q[i] = f_run == 0 ? 0.0 : q_run;
  }

  for (auto& tr : tracks) {
    CharacteristicTrack out;
    out.spec = *tr.spec;
    if (tr.spec->kind == CharacteristicKind::BornIndicator) {
      out.values.assign(path.births.begin(), path.births.end());
    } else {
      out.discounted.resize(cells);
      if (!tr.diff.empty()) {
        double run = 0.0;
        for (std::size_t i = 0; i < cells; ++i) {
          run += tr.diff[i];
          out.discounted[i] = path.frontier[i] == 0 ? 0.0 : run;
        }
      } else {
        out.discounted = tr.direct;
      }
      out.values.resize(cells);
      for (std::size_t i = 0; i < cells; ++i)
        out.values[i] = std::exp(2.0 * alpha * grid[i]) * out.discounted[i];
    }
    path.characteristics.push_back(std::move(out));
  }
  return path;
}

// ---------------------------------------------------------------------------

double truncation_bias_bound(const ReproductionLaw& law, double alpha, double age_cap) {
  if (!(age_cap > 0.0)) throw std::invalid_argument("age_cap must be > 0");
  return discounted_tail(law, alpha, age_cap);
}

double auto_age_cap(const ReproductionLaw& law, double alpha, double bound) {
  if (law.has_finite_offspring()) return kInfinity;
  const auto& p = std::get<PoissonAges>(law.variant());
  // (rate / alpha) e^{-alpha A} = bound / 2
  return std::max(0.0, std::log(2.0 * p.rate / (alpha * bound)) / alpha);
}

// ---------------------------------------------------------------------------
// Tilted sampler and many-to-one

namespace {

struct TiltedAge {
  int kind;  // 0 exponential, 1 fixed, 2 truncated exponential
  double rate;
  double lo;
  double width;
};

TiltedAge tilt(const AgeDistribution& d, double alpha) {
  if (const auto* e = std::get_if<ExponentialAge>(&d)) return {0, alpha + 1.0 / e->mean, 0.0, 0.0};
  if (const auto* f = std::get_if<FixedAge>(&d)) return {1, 0.0, f->age, 0.0};
  const auto& u = std::get<UniformAge>(d);
  return {2, alpha, u.lo, u.hi - u.lo};
}

}  // namespace

TiltedIncrementSampler::TiltedIncrementSampler(const ReproductionLaw& law, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("tilted sampler needs alpha > 0");
  const auto& v = law.variant();
  const AgeDistribution* age = nullptr;
  if (std::holds_alternative<PoissonAges>(v)) {
    kind_ = Kind::Exponential;
    rate_ = alpha;
    return;
  }
  if (const auto* d = std::get_if<DeterministicAges>(&v)) {
    kind_ = Kind::Atoms;
    double total = 0.0;
    for (const auto& atom : d->atoms) {
      total += atom.multiplicity * std::exp(-alpha * atom.age);
      atoms_.push_back(atom.age);
      cumulative_.push_back(total);
    }
    for (double& c : cumulative_) c /= total;
    return;
  }
  if (const auto* b = std::get_if<BernoulliSplit>(&v)) age = &b->lifetime;
  else age = &std::get<IidLitter>(v).age;

  const TiltedAge t = tilt(*age, alpha);
  switch (t.kind) {
    case 0: kind_ = Kind::Exponential; rate_ = t.rate; break;
    case 1: kind_ = Kind::Fixed; lo_ = t.lo; break;
    default: kind_ = Kind::TruncatedExponential; rate_ = t.rate; lo_ = t.lo; width_ = t.width; break;
  }
}

double TiltedIncrementSampler::operator()(Rng& rng) const {
  switch (kind_) {
    case Kind::Exponential:
      return -std::log(open_uniform(rng)) / rate_;
    case Kind::Fixed:
      return lo_;
    case Kind::Atoms: {
      const double u = open_uniform(rng);
      const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                                  atoms_.size() - 1);
      return atoms_[i];
    }
    case Kind::TruncatedExponential: {
      const double u = open_uniform(rng);
      return lo_ - std::log1p(u * std::expm1(-rate_ * width_)) / rate_;
    }
  }
  return 0.0;
}

MeanEstimate many_to_one_mean_nt(const ReproductionLaw& law, const ModelConstants& constants, double t,
                                 std::size_t n_walks, Rng& rng) {
  if (!(t > 0.0)) throw std::invalid_argument("many_to_one_mean_nt: t must be > 0");
  if (constants.alpha * t > 700.0)
    throw PreconditionError("TimeTooLarge", "e^{alpha t} overflows for t = " + std::to_string(t));
  if (n_walks < 2) throw TooFewSamples("many_to_one_mean_nt needs at least 2 walks");

  const TiltedIncrementSampler step(law, constants.alpha);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < n_walks; ++k) {
    double value = 1.0;  // n = 0: the ancestor
    double position = step(rng);
    while (position <= t) {
      value += std::exp(constants.alpha * position);
      position += step(rng);
    }
    sum += value;
    sum_sq += value * value;
  }
  const double n = static_cast<double>(n_walks);
  MeanEstimate est;
  est.samples = n_walks;
  est.value = sum / n;
  const double var = std::max(0.0, (sum_sq - sum * est.value) / (n - 1.0));
  est.standard_error = std::sqrt(var / n);
  return est;
}

// ---------------------------------------------------------------------------

std::size_t Ensemble::index_of(double t) const {
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(grid[i] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return i;
  throw GridBeyondHorizon("time " + std::to_string(t) + " is not on the ensemble grid");
}

bool Ensemble::has_time(double t) const {
  return std::any_of(grid.begin(), grid.end(),
                     [t](double g) { return std::abs(g - t) <= 1e-9 * std::max(1.0, std::abs(t)); });
}

}  // namespace cmj
