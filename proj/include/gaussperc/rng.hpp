#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace gaussperc {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Output is a pure function of (key, counter); no hidden state.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Standard normal variates addressed by (seed, stream, position). Position p
/// lives in Philox block p/2; each block yields two Box-Muller normals.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

  /// Normal pair at block `block`.
  std::array<double, 2> pair(std::uint64_t block) const {
    const auto r = Philox4x32::generate(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        key_);
    const double u1 = to_unit_open((std::uint64_t{r[0]} << 32) | r[1]);
    const double u2 = to_unit_open((std::uint64_t{r[2]} << 32) | r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  double operator[](std::uint64_t position) const { return pair(position / 2)[position % 2]; }

  /// Uniform on (0, 1) at `position` (independent of the normal draws at the same position
  /// only through distinct streams; callers use a dedicated stream).
  double uniform(std::uint64_t position) const {
    const auto r = Philox4x32::generate(
        {static_cast<std::uint32_t>(position), static_cast<std::uint32_t>(position >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        key_);
    return to_unit_open((std::uint64_t{r[0]} << 32) | r[1]);
  }

  template <typename OutIt>
  void fill(std::uint64_t count, OutIt out) const {
    for (std::uint64_t b = 0; b < count / 2; ++b) {
      const auto p = pair(b);
      *out++ = p[0];
      *out++ = p[1];
    }
    if (count % 2) *out++ = pair(count / 2)[0];
  }

 private:
  static double to_unit_open(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
};

/// Streams reserved for distinct uses of the same seed.
namespace streams {
inline constexpr std::uint64_t kWhiteNoise = 0;
inline constexpr std::uint64_t kKacRice = 1;
inline constexpr std::uint64_t kTesting = 7;
}  // namespace streams

}  // namespace gaussperc
