#pragma once

#include <array>
#include <cstdint>

namespace gb {

/// Philox4x32-10 counter-based generator. A block of four 32-bit words is a
/// pure function of (key, counter), so any sub-stream can be produced
/// without touching the others.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Counter operator()(Counter ctr) const noexcept {
    Key key = key_;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeylA;
        key[1] += kWeylB;
      }
      const std::uint64_t p0 = std::uint64_t{kMulA} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMulB} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMulA = 0xD2511F53u;
  static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
  static constexpr std::uint32_t kWeylB = 0xBB67AE85u;
  Key key_;
};

/// Uniform double in the open interval (0, 1): the midpoint of one of 2^52
/// equal cells, exactly representable, so 0 and 1 never occur.
inline double uniform_open(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/// Standard normal quantile, accurate to a few ulps on (0, 1).
double normal_quantile(double p);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace gb
