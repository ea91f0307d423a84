#ifndef SARAHVI_RANDOM_HPP
#define SARAHVI_RANDOM_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

namespace sarahvi {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: draw j of stream (seed, stream) is a pure
/// function of (seed, stream, j). Streams never share state, so any draw can
/// be reproduced without replaying the ones before it.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t at(std::uint64_t counter) const {
    return mix64(key_ + counter * 0xd1b54a32d192ed03ULL);
  }

  std::uint64_t next() { return at(counter_++); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform on {0, ..., n-1}, unbiased (Lemire's multiply-shift with
  /// rejection).
  std::size_t index(std::size_t n) {
    const auto range = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - range) % range;
    for (;;) {
      const unsigned __int128 m =
          static_cast<unsigned __int128>(next()) * range;
      if (static_cast<std::uint64_t>(m) >= threshold)
        return static_cast<std::size_t>(m >> 64);
    }
  }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Component index sampled at (epoch, step) of a run with the given seed.
/// Depends on nothing else, so checkpointing or metric evaluation can never
/// shift the stream.
inline std::size_t sample_component(std::uint64_t seed, std::uint64_t epoch,
                                    std::uint64_t step, std::size_t n) {
  CounterRng rng(seed, mix64(epoch) ^ (step * 0x9e3779b97f4a7c15ULL));
  return rng.index(n);
}

}  // namespace sarahvi

#endif
