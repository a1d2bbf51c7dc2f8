#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "cmj/engine.hpp"
#include "cmj/malthusian.hpp"
#include "cmj/reproduction.hpp"

namespace cmj {

struct EnsembleSpec {
  ReproductionLaw law;
  double horizon = 0.0;
  std::vector<double> grid;
  double age_cap = kInfinity;
  std::uint64_t max_births = kDefaultMaxBirths;
  std::uint64_t master_seed = 0;
  std::size_t replicas = 0;
  unsigned jobs = 1;
  std::vector<CharacteristicSpec> characteristics;
};

// Runs replicas 0..replicas-1 on `jobs` worker threads. Replica i always
// uses replica_seed(master_seed, i), and results land at index i, so the
// ensemble does not depend on `jobs` or on scheduling.
Ensemble run_ensemble(const EnsembleSpec& spec, const ModelConstants& constants);

// Generic index-ordered parallel map used by run_ensemble. The first
// exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& task);

}  // namespace cmj
