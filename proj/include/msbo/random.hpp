#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace msbo {

/// SplitMix64 finaliser. Used both as the stream generator and as a key mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream. The i-th output of a stream depends only on
/// (key, i), so child streams derived with split() are reproducible regardless
/// of the order in which they are consumed.
///
/// Satisfies UniformRandomBitGenerator, so it can feed <random> distributions,
/// but normal() and uniform() are implemented here to keep draws bit-identical
/// across standard libraries.
class StreamRng {
 public:
  using result_type = std::uint64_t;

  explicit StreamRng(std::uint64_t key = 0) noexcept : key_(mix64(key ^ 0x6a09e667f3bcc908ULL)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  /// Child stream keyed by `stream`. Does not advance this stream.
  [[nodiscard]] StreamRng split(std::uint64_t stream) const noexcept {
    StreamRng child;
    child.key_ = mix64(key_ ^ mix64(stream + 0x3c6ef372fe94f82bULL));
    return child;
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

  /// Uniform in the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; bias is negligible for the sizes used here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by a StreamRng (std::shuffle is not portable).
template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, StreamRng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace msbo
