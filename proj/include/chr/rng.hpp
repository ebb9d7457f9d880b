#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace chr {

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic child seed for (seed, stream, index). Serial and parallel
/// generation derive identical per-item states from it.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// xoshiro256** generator with platform-independent distributions.
///
/// std::uniform_*_distribution output differs between standard libraries,
/// so every draw used for data generation or initialization goes through
/// the helpers here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Returns a permutation of [0, n) drawn from `rng`.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace chr
