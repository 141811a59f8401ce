#include "stratgeo/rng.hpp"

#include <cmath>
#include <numbers>

namespace stratgeo::rng {

double uniform(SplitMix64& gen) noexcept { return to_unit_open_closed(gen()); }

namespace {
double box_muller(std::uint64_t a, std::uint64_t b) noexcept {
  double u1 = to_unit_open_closed(a);
  double u2 = to_unit_open_closed(b);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}
}  // namespace

double normal(SplitMix64& gen) noexcept {
  std::uint64_t a = gen();
  std::uint64_t b = gen();
  return box_muller(a, b);
}

double normal_at(std::uint64_t key, std::uint64_t index) noexcept {
  return box_muller(SplitMix64::at(key, 2 * index), SplitMix64::at(key, 2 * index + 1));
}

std::uint64_t below(SplitMix64& gen, std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  // Rejection on the top of the range keeps the draw exactly uniform.
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = gen();
  } while (x >= limit);
  return x % n;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t global, std::initializer_list<std::string_view> parts) noexcept {
  std::uint64_t h = mix64(global ^ 0x5354524154474f00ULL);
  for (std::string_view p : parts) {
    auto bytes = std::span(reinterpret_cast<const unsigned char*>(p.data()), p.size());
    h = fnv1a64(bytes, h);
    // Separator so {"ab","c"} and {"a","bc"} differ.
    h = mix64(h + kGamma);
  }
  return h;
}

}  // namespace stratgeo::rng
