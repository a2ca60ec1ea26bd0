#pragma once

#include <cstdint>

namespace ngan {

/// Stateless 64-bit mixer (splitmix64 finalizer over key and index).
std::uint64_t hash64(std::uint64_t key, std::uint64_t index) noexcept;

/// Counter-based random stream. The full state is (seed, counter), so it can be
/// checkpointed as two integers and any draw is reproducible regardless of how
/// many threads consume derived keys.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64() noexcept { return hash64(seed_, counter_++); }
  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) noexcept;
  double normal() noexcept;

  /// Independent child stream keyed by tag; does not advance this stream.
  RngStream fork(std::uint64_t tag) const noexcept {
    return RngStream(hash64(seed_ ^ 0x9e3779b97f4a7c15ULL, tag), 0);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Uniform [0,1) derived from a key and element index; used for per-element
/// masks generated in parallel.
inline double uniform_at(std::uint64_t key, std::uint64_t index) noexcept {
  return static_cast<double>(hash64(key, index) >> 11) * 0x1.0p-53;
}

}  // namespace ngan
