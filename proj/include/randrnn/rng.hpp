#pragma once

#include <cstddef>
#include <cstdint>

namespace randrnn {

using Seed = std::uint64_t;

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Independent random streams share a master seed but differ by domain.
enum class StreamDomain : std::uint64_t {
  rnn_weights = 0x524E4E57ULL,   // "RNNW"
  pool_weights = 0x504F4F4CULL,  // "POOL"
  svm_order = 0x5356434DULL,     // "SVCM"
  split_draw = 0x53504C54ULL,    // "SPLT"
  reseed = 0x52534544ULL,        // "RSED"
};

/// Counter-based generator: the value at a counter is a pure function of
/// (master seed, domain, a, b, counter), so any slice of a stream can be
/// produced independently and in any order.
class CounterRng {
 public:
  CounterRng(Seed master, StreamDomain domain, std::uint64_t a, std::uint64_t b) noexcept
      : key_(mix64(mix64(mix64(master ^ static_cast<std::uint64_t>(domain)) + a) + b)) {}

  std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix64(key_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform integer in [0, n) by multiply-high reduction.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const noexcept {
    __extension__ using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((static_cast<u128>(bits(counter)) * n) >> 64);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

/// Largest float strictly below 0.1; every symmetric draw lies in
/// [-kUniformBound, kUniformBound) and so inside [-0.1, 0.1] in any precision.
inline constexpr float kUniformBound = 0x1.999998p-4f;  // nextafter(0.1f, 0)

/// Maps the top 24 bits of a word onto a symmetric uniform grid in
/// [-bound, bound). Pure integer work plus one IEEE multiply, so the result
/// is identical on every conforming machine.
inline float symmetric_uniform24(std::uint32_t top24, float bound) noexcept {
  const auto centered = static_cast<std::int32_t>(top24) - (1 << 23);
  return static_cast<float>(centered) * (bound * 0x1p-23f);
}

/// Fills `out[0..count)` with i.i.d. draws on [-kUniformBound, kUniformBound).
/// Each 64-bit counter value yields two draws (low then high 32-bit halves).
inline void fill_symmetric_uniform(const CounterRng& rng, float* out, std::size_t count) {
  const std::size_t pairs = count / 2;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::uint64_t word = rng.bits(i);
    out[2 * i] = symmetric_uniform24(static_cast<std::uint32_t>(word) >> 8, kUniformBound);
    out[2 * i + 1] = symmetric_uniform24(static_cast<std::uint32_t>(word >> 32) >> 8, kUniformBound);
  }
  if (count % 2 != 0) {
    const std::uint64_t word = rng.bits(pairs);
    out[count - 1] = symmetric_uniform24(static_cast<std::uint32_t>(word) >> 8, kUniformBound);
  }
}

}  // namespace randrnn
