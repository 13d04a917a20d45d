#pragma once

#include <cstdint>
#include <random>

namespace tdlab {

namespace detail {
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Reproducible random stream keyed by (master_seed, stream_index).
///
/// Streams with different indices are statistically independent for all
/// practical purposes, and the sequence drawn from one stream does not depend
/// on how many other streams exist or in which order they are consumed. This
/// is what makes trajectory-parallel experiments independent of the worker
/// count.
class RngStream {
 public:
  explicit RngStream(std::uint64_t master_seed, std::uint64_t stream_index = 0)
      : engine_(detail::splitmix64(detail::splitmix64(master_seed) ^
                                   detail::splitmix64(stream_index + 0x632be59bd9b4e019ULL))) {}

  /// Uniform double in [0, 1) with 53 random bits. Implemented directly
  /// rather than through std::uniform_real_distribution so that streams are
  /// bit-identical across standard library implementations.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tdlab
