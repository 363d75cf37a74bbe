#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace rtr {

/// SplitMix64 step; used to expand seeds and to mix seed-derivation keys.
inline std::uint64_t splitmix64(std::uint64_t& state)
{
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a list of keys
/// (cell index, replicate index, component tag, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys)
{
  std::uint64_t state = master;
  std::uint64_t h = splitmix64(state);
  for (std::uint64_t key : keys) {
    state = h ^ (key + 0x632BE59BD9B4E019ULL);
    h = splitmix64(state);
  }
  return h;
}

/// Component tags for derive_seed.
enum class StreamTag : std::uint64_t {
  target = 1,
  design = 2,
  noise = 3,
  contamination = 4,
  perturbation = 5,
  direction = 6,
};

/// xoshiro256** 1.0 with SplitMix64 state expansion. All variate generators
/// below are written out explicitly so draws are reproducible across
/// standard libraries.
class Rng
{
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed)
  {
    std::uint64_t sm = seed;
    for (auto& s : s_)
      s = splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()()
  {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via the Marsaglia polar method.
  double normal();

  /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the U^(1/shape) boost.
  double gamma(double shape);

  double student_t(double nu);

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0;
  bool has_spare_ = false;
};

} // namespace rtr
