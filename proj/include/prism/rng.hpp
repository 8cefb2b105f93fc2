#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace prism {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; the mixing function behind every derived seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based seed splitter. A run owns one root seed; every consumer
/// derives its own stream from (root, tag, counter) so results do not depend
/// on call order.
class SeedSplitter {
 public:
  constexpr explicit SeedSplitter(std::uint64_t root) noexcept : root_(root) {}

  constexpr std::uint64_t root() const noexcept { return root_; }

  constexpr std::uint64_t derive(std::string_view tag, std::uint64_t counter = 0) const noexcept {
    return mix64(mix64(root_ ^ hash_tag(tag)) + mix64(counter + 0x632be59bd9b4e019ULL));
  }

  Engine engine(std::string_view tag, std::uint64_t counter = 0) const {
    return Engine(derive(tag, counter));
  }

  constexpr SeedSplitter child(std::string_view tag, std::uint64_t counter = 0) const noexcept {
    return SeedSplitter(derive(tag, counter));
  }

 private:
  std::uint64_t root_;
};

/// Uniform index in [0, n). Avoids std::uniform_int_distribution so streams are
/// identical across standard libraries.
inline std::size_t uniform_index(Engine& eng, std::size_t n) {
  // Lemire's nearly-divisionless method without the rejection step; the bias is
  // below 2^-40 for the sizes used here.
  const auto x = static_cast<unsigned __int128>(eng()) * n;
  return static_cast<std::size_t>(x >> 64);
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller on uniform01 (one draw per call).
inline double standard_normal(Engine& eng) {
  double u1 = uniform01(eng);
  while (u1 <= 0.0) u1 = uniform01(eng);
  const double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Fisher-Yates with uniform_index.
template <typename Vec>
void shuffle_in_place(Vec& v, Engine& eng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = uniform_index(eng, i);
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace prism
