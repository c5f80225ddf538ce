#pragma once

// Counter-based random numbers with a fixed, documented algorithm so that a
// (seed, stream) pair produces the same draws on every platform and thread
// layout.
//
// Raw bits come from Philox4x32-10 (Salmon et al. 2011) keyed by the 64-bit
// seed, with the 128-bit counter split into a 64-bit draw index and a
// 64-bit stream id. On top of that:
//   uniform  : 53 random bits mapped to the open interval (0, 1)
//   normal   : Box-Muller, both values used
//   gamma    : Marsaglia-Tsang squeeze; shape < 1 via the U^(1/a) boost
//   poisson  : multiplicative inversion below mean 10, PTRS (Hoermann) above
// Nothing here uses <random> distributions, whose output is
// implementation-defined.

#include <array>
#include <cstdint>

namespace difflik {

class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  double normal() noexcept;
  double gamma(double shape) noexcept;
  std::uint64_t poisson(double mean) noexcept;

  /// One Philox4x32-10 block, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key) noexcept;

 private:
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::uint64_t index_ = 0;
  std::uint64_t stream_;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace difflik
