#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fedlcbq/errors.hpp"

namespace fedlcbq {

// Deterministic random primitives. std::mt19937_64 is bit-exact across
// conforming implementations, but the std::*_distribution adapters are not,
// so every transform from raw 64-bit draws to samples is spelled out here.
// This is what makes the "same seed, byte-identical dataset" contract hold
// across toolchains.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-agent stream seed: master seed xor agent id, diffused through
// splitmix64 so that consecutive agent ids land in unrelated streams.
inline uint64_t derive_agent_seed(uint64_t master_seed, uint32_t agent_id) {
  return splitmix64(master_seed ^ static_cast<uint64_t>(agent_id));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Index sampled from an (unnormalized is not allowed) probability vector by
  // inverse-CDF walk. The final index absorbs any floating-point slack.
  int categorical(const std::vector<double>& probs) {
    if (probs.empty()) throw ValidationError("categorical: empty probability vector");
    double u = uniform01();
    double cum = 0.0;
    for (size_t i = 0; i + 1 < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
  }

  // Dirichlet(1,...,1) row: normalized standard exponentials, i.e. a uniform
  // draw from the probability simplex.
  std::vector<double> dirichlet_uniform(int n) {
    std::vector<double> row(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      // -log of a (0,1] uniform; 1 - uniform01() never returns 0.
      row[i] = -std::log(1.0 - uniform01());
      total += row[i];
    }
    for (int i = 0; i < n; ++i) row[i] /= total;
    return row;
  }

  uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fedlcbq
