#pragma once

#include <cmath>
#include <cstdint>

namespace sllt {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Counter-based generator: the k-th draw of stream (seed, stream) is a pure
/// function of (seed, stream, k). Replica i of an experiment uses stream i, so
/// results never depend on how replicas are scheduled across threads.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ull))) {}

  /// Derive a sub-stream key, e.g. for (seed, horizon, initial law) triples.
  static std::uint64_t combine(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(a ^ (splitmix64(b) + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
  }

  std::uint64_t next_u64() noexcept { return splitmix64(key_ + 0xD1B54A32D192ED03ull * ++counter_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Exponential(rate) by inverse CDF.
  double exponential(double rate) noexcept { return -std::log1p(-uniform()) / rate; }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sllt
