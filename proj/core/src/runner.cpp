#include "cmj/runner.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "cmj/rng.hpp"

namespace cmj {

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& task) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), std::max<std::size_t>(n, 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

Ensemble run_ensemble(const EnsembleSpec& spec, const ModelConstants& constants) {
  Ensemble ensemble;
  ensemble.grid = spec.grid;
  ensemble.horizon = spec.horizon;
  ensemble.replicas.resize(spec.replicas);
  parallel_for(spec.replicas, spec.jobs, [&](std::size_t i) {
    SimConfig cfg{spec.law, spec.horizon, spec.grid, spec.age_cap, spec.max_births,
                  replica_seed(spec.master_seed, i), i, spec.characteristics, false};
    ensemble.replicas[i] = run_replica(cfg, constants);
  });
  return ensemble;
}

}  // namespace cmj
