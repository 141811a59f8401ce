#pragma once

// Portable seeded randomness. The standard <random> distributions are
// implementation-defined, so every draw that feeds a reported number goes
// through these helpers instead.

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace stratgeo::rng {

/// SplitMix64 output function (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 used as a counter-based generator: draw n of stream `key` is
/// mix64(key + (n + 1) * gamma), so any draw is addressable without replay.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return at(key_, counter_++); }

  static constexpr result_type at(std::uint64_t key, std::uint64_t index) noexcept {
    return mix64(key + (index + 1) * kGamma);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Maps 64 random bits to (0, 1].
constexpr double to_unit_open_closed(std::uint64_t bits) noexcept {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

double uniform(SplitMix64& gen) noexcept;

/// Standard normal by Box–Muller (cosine branch, two draws per variate).
double normal(SplitMix64& gen) noexcept;

/// Standard normal at a fixed position of stream `key`; uses draws 2i and 2i+1.
double normal_at(std::uint64_t key, std::uint64_t index) noexcept;

/// Unbiased integer in [0, n).
std::uint64_t below(SplitMix64& gen, std::uint64_t n) noexcept;

/// Fisher–Yates shuffle with the portable integer draw.
template <typename T>
void shuffle(std::span<T> items, SplitMix64& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(below(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Stage seed from the global seed and a tuple of labels such as
/// {"case1", model, concept, "noise=0.5"}. Independent of execution order.
std::uint64_t derive_seed(std::uint64_t global, std::initializer_list<std::string_view> parts) noexcept;

}  // namespace stratgeo::rng
