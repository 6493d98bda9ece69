#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace psel {

/// splitmix64 finalizer; also used to fold stream paths into a 64-bit key.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Combine a root seed with a path of stream identifiers (replication index,
/// population index, purpose tag, ...). Distinct paths give unrelated keys.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

/// xoshiro256++ generator. Satisfies UniformRandomBitGenerator so it can drive
/// the <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept;

  /// Independent stream addressed by (seed, path...).
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    return Rng(derive_seed(seed, path));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept;

  /// Standard normal via the polar method; no cached second variate, so the
  /// number of draws consumed depends only on the stream.
  double standard_normal() noexcept;

 private:
  std::array<std::uint64_t, 4> s_{};
};

/// Tags keeping MC purposes on disjoint streams for a shared root seed.
namespace stream_tag {
inline constexpr std::uint64_t sample = 0x5a4d'504c'4500ULL;
inline constexpr std::uint64_t select = 0x5345'4c45'4354ULL;
inline constexpr std::uint64_t selection_probability = 0x5052'5345'4cULL;
inline constexpr std::uint64_t gradient = 0x4752'4144ULL;
inline constexpr std::uint64_t psfim = 0x5053'4649'4dULL;
inline constexpr std::uint64_t bias = 0x4249'4153ULL;
inline constexpr std::uint64_t fixture = 0x4649'5854ULL;
}  // namespace stream_tag

}  // namespace psel
