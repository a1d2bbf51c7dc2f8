#pragma once

#include <cstdint>
#include <random>

namespace cmj {

// Every consumer owns its stream; streams are never shared between replicas.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed of replica `index` under `master`: two rounds of the splitmix64
// finalizer over (master, index), so neighbouring indices and neighbouring
// master seeds give unrelated streams.
std::uint64_t replica_seed(std::uint64_t master, std::uint64_t index) noexcept;

Rng make_stream(std::uint64_t seed);

// Uniform on the open interval (0, 1); safe to feed into log().
inline double open_uniform(Rng& rng) {
  // 53 random bits, shifted by half an ulp so that 0 is never returned.
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace cmj
