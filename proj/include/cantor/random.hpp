#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cantor/errors.hpp"

// Reproducibility contract: every randomized routine in this library draws
// from std::mt19937_64 (whose output sequence is fixed by the standard)
// through the hand-rolled samplers below. std::*_distribution is never used
// because its mapping from raw bits to variates is implementation-defined;
// with these samplers a (seed, input) pair yields bit-identical results on
// every platform.

namespace cantor {

/// SplitMix64 step. Used to spread user seeds and to derive independent
/// per-index seeds for parallel work.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic seed for work item `index` under a master seed. Items can
/// then be processed in any order (or in parallel) without changing results.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t state = seed ^ (0x5851f42d4c957f2dULL * (index + 1));
  splitmix64(state);
  return splitmix64(state);
}

/// 64-bit FNV-1a. Used to fold strings into seed material and to digest
/// input files for the run manifest.
inline std::uint64_t fnv1a64_bytes(std::span<const char> bytes,
                                   std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64_bytes(std::span<const char>(s.data(), s.size()));
}

/// Seedable generator with portable samplers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw InvalidArgumentError("next_below: bound must be > 0");
    const std::uint64_t threshold = (0ULL - bound) % bound;  // 2^64 mod bound
    for (;;) {
      std::uint64_t r = gen_();
      if (r >= threshold) return r % bound;
    }
  }

  std::size_t next_index(std::size_t n) {
    return static_cast<std::size_t>(next_below(n));
  }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw InvalidArgumentError("next_int: empty range");
    return lo + static_cast<std::int64_t>(
                    next_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Standard normal via Box-Muller (pairs cached).
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - next_unit();  // (0, 1], keeps log finite
    double u2 = next_unit();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Index drawn from a discrete distribution given by `probs` (need not be
  /// normalized; all entries must be >= 0 with a positive sum).
  std::size_t next_weighted(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) {
      if (p < 0.0 || !std::isfinite(p))
        throw InvalidArgumentError("next_weighted: bad weight");
      total += p;
    }
    if (total <= 0.0) throw InvalidArgumentError("next_weighted: zero mass");
    double u = next_unit() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cantor
