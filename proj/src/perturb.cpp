#include "stratgeo/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stratgeo/error.hpp"
#include "stratgeo/rng.hpp"

namespace stratgeo {

void NoiseSpec::validate(std::size_t d_model) const {
  require(noise_std >= 0.0 && std::isfinite(noise_std), ErrorCode::InvariantViolation, "noise_std must be >= 0");
  require(top_k >= 1, ErrorCode::InvariantViolation, "top_k must be positive");
  require(top_k <= d_model, ErrorCode::TopKTooLarge,
          "top_k " + std::to_string(top_k) + " exceeds d_model " + std::to_string(d_model));
  require(hi_scale >= lo_scale && lo_scale >= 0.0, ErrorCode::InvariantViolation,
          "scales must satisfy hi_scale >= lo_scale >= 0");
}

std::vector<double> activation_frequency(const ActivationTensor& x) {
  x.validate();
  auto idx = kept_tokens(x);
  std::vector<float> magnitudes;
  magnitudes.reserve(idx.size() * x.width);
  for (auto t : idx)
    for (float v : x.row(t)) magnitudes.push_back(std::fabs(v));
  // Median with the usual even-count midpoint.
  auto n = magnitudes.size();
  std::nth_element(magnitudes.begin(), magnitudes.begin() + static_cast<std::ptrdiff_t>(n / 2), magnitudes.end());
  double median = magnitudes[n / 2];
  if (n % 2 == 0) {
    float lower = *std::max_element(magnitudes.begin(), magnitudes.begin() + static_cast<std::ptrdiff_t>(n / 2));
    median = 0.5 * (median + static_cast<double>(lower));
  }

  std::vector<double> freq(x.width, 0.0);
  for (auto t : idx) {
    auto row = x.row(t);
    for (std::size_t k = 0; k < x.width; ++k)
      if (std::fabs(static_cast<double>(row[k])) > median) freq[k] += 1.0;
  }
  for (auto& f : freq) f /= static_cast<double>(idx.size());
  return freq;
}

std::vector<std::size_t> frequency_ranking(const ActivationTensor& x, std::size_t top_k) {
  require(top_k >= 1 && top_k <= x.width, ErrorCode::TopKTooLarge,
          "top_k " + std::to_string(top_k) + " outside [1, " + std::to_string(x.width) + "]");
  auto freq = activation_frequency(x);
  std::vector<std::size_t> order(x.width);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
  order.resize(top_k);
  return order;
}

ActivationTensor inject_noise(const ActivationTensor& x, const NoiseSpec& spec,
                              const std::vector<std::size_t>& hi_set) {
  x.validate();
  spec.validate(x.width);
  std::vector<std::uint8_t> is_hi(x.width, 0);
  for (auto k : hi_set) {
    require(k < x.width, ErrorCode::IndexOutOfRange,
            "hi_set index " + std::to_string(k) + " >= d_model " + std::to_string(x.width));
    is_hi[k] = 1;
  }
  ActivationTensor out = x;
  if (spec.noise_std == 0.0) return out;

  const std::uint64_t key_hi = rng::mix64(spec.seed ^ 0x68696768ULL);  // "high"
  const std::uint64_t key_lo = rng::mix64(spec.seed ^ 0x6c6f77ULL);     // "low"
  const double sd_hi = spec.hi_scale * spec.noise_std;
  const double sd_lo = spec.lo_scale * spec.noise_std;
  for (std::size_t t = 0; t < x.tokens(); ++t) {
    for (std::size_t k = 0; k < x.width; ++k) {
      const std::uint64_t pos = t * x.width + k;
      double eta = is_hi[k] ? sd_hi * rng::normal_at(key_hi, pos) : sd_lo * rng::normal_at(key_lo, pos);
      out.data[pos] = static_cast<float>(static_cast<double>(x.data[pos]) + eta);
    }
  }
  return out;
}

}  // namespace stratgeo
