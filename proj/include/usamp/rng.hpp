#ifndef USAMP_RNG_HPP
#define USAMP_RNG_HPP

// Portable randomness. std::mt19937_64 has a fully specified output
// sequence, but the standard distributions and std::shuffle do not, so
// everything that must be bit-reproducible across platforms goes through
// the helpers below.

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace usamp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-style key derivation: each component is folded in through
// splitmix64, so seeds for distinct keys are independent streams.
inline std::uint64_t derive_seed(std::uint64_t base) { return splitmix64(base); }

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t base, std::string_view key,
                          const Rest&... rest);

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key,
                          const Rest&... rest) {
  return derive_seed(splitmix64(base ^ splitmix64(key)), rest...);
}

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t base, std::string_view key,
                          const Rest&... rest) {
  return derive_seed(base, fnv1a64(key), rest...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p);
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace usamp

#endif  // USAMP_RNG_HPP
