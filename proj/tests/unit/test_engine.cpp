#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "cmj/engine.hpp"
#include "cmj/errors.hpp"
#include "cmj/malthusian.hpp"
#include "cmj/runner.hpp"

using namespace cmj;

namespace {

const ReproductionLaw kReference = ReproductionLaw::bernoulli_split(0.75, ExponentialAge{1.0});

std::vector<double> range_grid(double start, double stop, double step) {
  std::vector<double> g;
  for (int k = 0;; ++k) {
    const double t = start + k * step;
    if (t > stop + 1e-12) break;
    g.push_back(t);
  }
  return g;
}

SimConfig make_config(const ReproductionLaw& law, double horizon, std::vector<double> grid, std::uint64_t seed) {
  SimConfig c{law, horizon, std::move(grid)};
  c.seed = seed;
  return c;
}

// Values recomputed from a retained genealogy, independent of the engine's
// difference arrays.
struct TreeOracle {
  const std::vector<GenealogyNode>& tree;
  std::vector<std::vector<std::size_t>> children;

  explicit TreeOracle(const std::vector<GenealogyNode>& t) : tree(t), children(t.size()) {
    for (std::size_t i = 1; i < t.size(); ++i) children[static_cast<std::size_t>(t[i].parent)].push_back(i);
  }

  // Direct scan: u is in the coming generation iff S(parent) <= t < S(u).
  void scan(double t, double& w, double& q, long& frontier, long& born) const {
    w = q = 0.0;
    frontier = born = 0;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      if (tree[i].birth <= t) ++born;
      if (i == 0) continue;
      const double parent_birth = tree[static_cast<std::size_t>(tree[i].parent)].birth;
      if (parent_birth <= t && t < tree[i].birth) {
        w += tree[i].weight;
        q += tree[i].weight * tree[i].weight;
        ++frontier;
      }
    }
  }

  // Recursive decomposition W_t = sum over children c of the root of either
  // e^{-alpha S(c)} (c born after t) or the same sum over c's subtree.
  double w_recursive(std::size_t node, double t) const {
    double total = 0.0;
    for (const std::size_t c : children[node])
      total += tree[c].birth > t ? tree[c].weight : w_recursive(c, t);
    return total;
  }
};

}  // namespace

TEST_CASE("deterministic pair law: W is exactly one and N_2.5 = 7") {
  const auto law = ReproductionLaw::deterministic_ages({1.0, 1.0});
  const auto c = derive_constants(law, kDefaultSolverTolerance, DegeneratePolicy::Allow);
  auto cfg = make_config(law, 4.0, {0.5, 1.5, 2.5, 3.5, 4.0}, 1);
  cfg.characteristics = {CharacteristicSpec::born_indicator()};
  const auto path = run_replica(cfg, c);
  for (const double w : path.w) CHECK(w == 1.0);
  CHECK(path.births[0] == 1);
  CHECK(path.births[1] == 3);
  CHECK(path.births[2] == 7);
  CHECK(path.births[3] == 15);
  CHECK(path.frontier[2] == 8);
  CHECK_FALSE(path.extinct);
  CHECK(characteristic_process(path, CharacteristicKind::BornIndicator).values[2] == 7.0);
  for (std::size_t n = 0; n < path.complete_generations; ++n) CHECK(path.z[n] == 1.0);
}

TEST_CASE("engine agrees with a brute-force scan of the genealogy") {
  const ReproductionLaw laws[] = {
      kReference,
      ReproductionLaw::poisson_ages(1.5),
      ReproductionLaw::iid_litter(GeometricCount{1.6}, UniformAge{0.2, 1.4}),
  };
  for (const auto& law : laws) {
    const auto c = derive_constants(law);
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
      auto cfg = make_config(law, 5.0, range_grid(0.0, 5.0, 0.25), seed);
      cfg.age_cap = auto_age_cap(law, c.alpha);
      cfg.retain_tree = true;
      const auto path = run_replica(cfg, c);
      const TreeOracle oracle(path.tree);
      for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
        const double t = cfg.grid[i];
        double w, q;
        long frontier, born;
        oracle.scan(t, w, q, frontier, born);
        INFO(law.describe(), " seed ", seed, " t ", t);
        CHECK(path.frontier[i] == frontier);
        CHECK(path.births[i] == born);
        CHECK(path.w[i] == doctest::Approx(w).epsilon(1e-12));
        CHECK(path.q[i] == doctest::Approx(q).epsilon(1e-12));
        CHECK(path.w[i] == doctest::Approx(oracle.w_recursive(0, t)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("frontier invariants") {
  const auto c = derive_constants(kReference);
  const auto grid = range_grid(0.0, 8.0, 0.5);
  for (std::uint64_t seed = 100; seed < 160; ++seed) {
    auto cfg = make_config(kReference, 8.0, grid, seed);
    cfg.characteristics = {CharacteristicSpec::born_indicator(), CharacteristicSpec::discounted_frontier()};
    const auto path = run_replica(cfg, c);
    const auto& born = characteristic_process(path, CharacteristicKind::BornIndicator);
    const auto& disc = characteristic_process(path, CharacteristicKind::DiscountedFrontier);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(path.q[i] <= path.w[i] * std::exp(-c.alpha * grid[i]) * (1.0 + 1e-12));
      CHECK(path.w[i] >= 0.0);
      if (path.frontier[i] == 0) {
        CHECK(path.w[i] == 0.0);
        CHECK(path.q[i] == 0.0);
      }
      CHECK(born.values[i] == static_cast<double>(path.births[i]));
      CHECK(disc.discounted[i] == path.q[i]);
      if (i > 0) CHECK(path.births[i] >= path.births[i - 1]);
    }
    if (path.extinct) {
      CHECK(path.w.back() == 0.0);
      CHECK(path.frontier.back() == 0);
    }
  }
}

TEST_CASE("shifted-variance weight with a constant curve equals the constant times Q") {
  const auto c = derive_constants(kReference);
  auto curve = std::make_shared<PiecewiseCurve>(PiecewiseCurve{{0.0, 100.0}, {2.0, 2.0}, 2.0});
  auto cfg = make_config(kReference, 6.0, range_grid(0.0, 6.0, 1.0), 5);
  cfg.characteristics = {CharacteristicSpec::shifted_variance(curve, 60.0)};
  const auto path = run_replica(cfg, c);
  const auto& tr = path.characteristics.front();
  for (std::size_t i = 0; i < cfg.grid.size(); ++i)
    CHECK(tr.discounted[i] == doctest::Approx(2.0 * path.q[i]).epsilon(1e-12));
}

TEST_CASE("coming generation at k - 1/2 is generation k for unit ages") {
  const auto law = ReproductionLaw::iid_litter(PoissonCount{2.0}, FixedAge{1.0});
  const auto c = derive_constants(law);
  const auto grid = range_grid(0.5, 5.5, 1.0);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto path = run_replica(make_config(law, 6.0, grid, seed), c);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::size_t k = i + 1;
      if (!path.extinct) REQUIRE(k < path.complete_generations);
      CHECK(path.w[i] == doctest::Approx(path.z_at(k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("runs are reproducible from the seed") {
  const auto c = derive_constants(kReference);
  const auto grid = range_grid(0.0, 6.0, 0.5);
  const auto a = run_replica(make_config(kReference, 6.0, grid, 42), c);
  const auto b = run_replica(make_config(kReference, 6.0, grid, 42), c);
  CHECK(a.w == b.w);
  CHECK(a.q == b.q);
  CHECK(a.births == b.births);
  CHECK(a.z == b.z);
  bool any_differs = false;
  for (std::uint64_t seed = 43; seed < 53; ++seed)
    any_differs = any_differs || run_replica(make_config(kReference, 6.0, grid, seed), c).w != a.w;
  CHECK(any_differs);
}

TEST_CASE("ensembles do not depend on the number of jobs") {
  const auto c = derive_constants(kReference);
  EnsembleSpec spec{kReference, 5.0, range_grid(0.0, 5.0, 0.5)};
  spec.master_seed = 9;
  spec.replicas = 40;
  spec.jobs = 1;
  const auto one = run_ensemble(spec, c);
  spec.jobs = 4;
  const auto four = run_ensemble(spec, c);
  REQUIRE(one.replicas.size() == four.replicas.size());
  for (std::size_t i = 0; i < one.replicas.size(); ++i) {
    CHECK(one.replicas[i].seed == replica_seed(9, i));
    CHECK(one.replicas[i].w == four.replicas[i].w);
    CHECK(one.replicas[i].z == four.replicas[i].z);
  }
}

TEST_CASE("birth guard stops runaway trees") {
  const auto c = derive_constants(kReference);
  auto cfg = make_config(kReference, 30.0, {0.0, 30.0}, 3);
  cfg.max_births = 50;
  for (std::uint64_t seed = 1; seed < 40; ++seed) {
    cfg.seed = seed;
    const auto path = run_replica(cfg, c);
    CHECK(path.total_births <= 50);
    if (path.guard_tripped) CHECK_FALSE(path.extinct);
  }
}

TEST_CASE("invalid simulation configs") {
  const auto c = derive_constants(kReference);
  CHECK_THROWS_AS(run_replica(make_config(kReference, 5.0, {0.0, 6.0}, 1), c), GridBeyondHorizon);
  CHECK_THROWS(run_replica(make_config(kReference, 5.0, {2.0, 1.0}, 1), c));
  CHECK_THROWS(run_replica(make_config(kReference, 5.0, {}, 1), c));
}

TEST_CASE("martingale mean and expected population size") {
  const auto c = derive_constants(kReference);
  EnsembleSpec spec{kReference, 6.0, {2.0, 4.0, 6.0}};
  spec.master_seed = 2024;
  spec.replicas = 4000;
  spec.characteristics = {CharacteristicSpec::born_indicator()};
  const auto ens = run_ensemble(spec, c);
  for (std::size_t i = 0; i < spec.grid.size(); ++i) {
    std::vector<double> w, n;
    for (const auto& r : ens.replicas) {
      w.push_back(r.w[i]);
      n.push_back(static_cast<double>(r.births[i]));
    }
    auto mean_se = [](const std::vector<double>& x) {
      double s = 0, s2 = 0;
      for (double v : x) s += v, s2 += v * v;
      const double m = s / x.size();
      return std::pair{m, std::sqrt((s2 / x.size() - m * m) / (x.size() - 1))};
    };
    const auto [wm, wse] = mean_se(w);
    const auto [nm, nse] = mean_se(n);
    const double t = spec.grid[i];
    INFO("t = ", t);
    CHECK(std::abs(wm - 1.0) <= 4.0 * wse);
    // E[N_t] = 3 e^{t/2} - 2 for the reference law (renewal equation).
    CHECK(std::abs(nm - (3.0 * std::exp(t / 2.0) - 2.0)) <= 4.0 * nse);
  }
}

TEST_CASE("many-to-one oracle") {
  Rng rng = make_stream(77);
  const auto pair = ReproductionLaw::deterministic_ages({1.0, 1.0});
  const auto pc = derive_constants(pair, kDefaultSolverTolerance, DegeneratePolicy::Allow);
  const auto exact = many_to_one_mean_nt(pair, pc, 2.5, 100, rng);
  CHECK(exact.value == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(exact.standard_error <= 1e-12);

  const auto c = derive_constants(kReference);
  const auto est = many_to_one_mean_nt(kReference, c, 6.0, 200000, rng);
  CHECK(std::abs(est.value - (3.0 * std::exp(3.0) - 2.0)) <= 4.0 * est.standard_error);
  CHECK(3.0 * std::exp(3.0) - 2.0 == doctest::Approx(58.256610769563003).epsilon(1e-14));

  // Poisson(lambda) ages: E[N_t] = e^{lambda t}; tilted steps are Exp(lambda).
  const auto poisson = ReproductionLaw::poisson_ages(1.0);
  const auto p = derive_constants(poisson);
  const auto pe = many_to_one_mean_nt(poisson, p, 2.0, 200000, rng);
  CHECK(std::abs(pe.value - std::exp(2.0)) <= 4.0 * pe.standard_error);
}

TEST_CASE("truncation bias bound") {
  // Poisson(2): (lambda / alpha) e^{-alpha A} = e^{-2A}.
  const auto poisson = ReproductionLaw::poisson_ages(2.0);
  CHECK(truncation_bias_bound(poisson, 2.0, 3.0) == doctest::Approx(std::exp(-6.0)).epsilon(1e-12));
  const double cap = auto_age_cap(poisson, 2.0);
  CHECK(cap == doctest::Approx(10.708).epsilon(1e-4));
  CHECK(truncation_bias_bound(poisson, 2.0, cap) == doctest::Approx(0.5e-9).epsilon(1e-9));
  // Reference law: 1.5 int_A^inf e^{-3x/2} dx = e^{-3A/2}.
  CHECK(truncation_bias_bound(kReference, 0.5, 4.0) == doctest::Approx(std::exp(-6.0)).epsilon(1e-12));
  CHECK(auto_age_cap(kReference, 0.5) == kInfinity);
  CHECK(truncation_bias_bound(ReproductionLaw::deterministic_ages({1.0, 2.0}), std::log(2.0), 2.5) == 0.0);
}

TEST_CASE("piecewise curve interpolation") {
  const PiecewiseCurve v{{1.0, 2.0, 4.0}, {0.5, 1.5, 1.0}, 2.0};
  CHECK(v(-1.0) == 0.0);
  CHECK(v(0.0) == 0.5);
  CHECK(v(1.5) == 1.0);
  CHECK(v(3.0) == 1.25);
  CHECK(v(4.0) == 1.0);
  CHECK(v(5.0) == 2.0);
}
