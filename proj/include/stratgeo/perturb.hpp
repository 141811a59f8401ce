#pragma once

#include <cstdint>
#include <vector>

#include "stratgeo/tensorio.hpp"

namespace stratgeo {

/// Feature-directed Gaussian noise: coordinates in the high-frequency set get
/// standard deviation hi_scale · noise_std, the rest lo_scale · noise_std.
struct NoiseSpec {
  double noise_std = 0.0;
  std::size_t top_k = 100;
  double hi_scale = 2.0;
  double lo_scale = 0.2;
  std::uint64_t seed = 0;

  void validate(std::size_t d_model) const;
};

/// Residual coordinates ranked by activation frequency: the fraction of kept
/// tokens whose |value| exceeds the median |value| over all kept entries of
/// the tensor. Descending frequency, lower index first on ties.
std::vector<std::size_t> frequency_ranking(const ActivationTensor& x, std::size_t top_k);

/// Per-coordinate activation frequencies used by frequency_ranking.
std::vector<double> activation_frequency(const ActivationTensor& x);

/// x + η. Noise is computed in f64 and stored f32; it does not consult the mask.
///
/// Reproducibility: two SplitMix64 counter streams are keyed from spec.seed,
/// one for high-frequency coordinates and one for the rest. Element
/// (token, coordinate) uses position token·d_model + coordinate of its
/// stream, so the draw is independent of iteration order.
ActivationTensor inject_noise(const ActivationTensor& x, const NoiseSpec& spec,
                              const std::vector<std::size_t>& hi_set);

}  // namespace stratgeo
