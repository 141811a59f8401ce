#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stratgeo/perturb.hpp"
#include "stratgeo/saecore.hpp"

namespace stratgeo {

enum class Mode { Batch = 1, Seq = 2, Feature = 3 };

inline constexpr double kSspdEpsilon = 1e-5;

/// Symmetric Gram matrix of a mode unfolding, shifted by εI.
struct SspdMatrix {
  Eigen::MatrixXd data;
  double epsilon = kSspdEpsilon;
  Mode mode = Mode::Feature;

  Eigen::Index dim() const noexcept { return data.rows(); }
};

struct RankResult {
  std::size_t rank = 0;
  double tau = 0.0;
};

struct RankTriplet {
  std::array<std::size_t, 3> r{};
  std::array<double, 3> tau{};
};

struct SweepRecord {
  double noise_std = 0.0;
  RankTriplet triplet;
  double agd = 0.0;
};

/// Mode-i matricization (i in 1..3). Row = index along mode i; column = the
/// remaining two indices combined row-major in ascending mode order.
Eigen::MatrixXd unfold(const TokenTensor& t, int mode);

/// Copy of `t` with masked-out token vectors set to zero.
TokenTensor zero_masked(const TokenTensor& t);

/// S = (FFᵀ + (FFᵀ)ᵀ)/2 + εI.
SspdMatrix sspd(const Eigen::MatrixXd& F, double epsilon = kSspdEpsilon, Mode mode = Mode::Feature);

/// Rank from a spectrum sorted in descending order.
///
/// Effective set E = {λ_j > 1e-6 λ_1}; τ is the type-7 first quartile of the
/// ratios λ_j/λ_1 over E; rank = #{j : λ_j/λ_1 > τ}. Ratios within 1e-12 of τ
/// count as ties (not above). When τ >= 1 − 1e-12 every effective ratio is
/// equal and the rank is |E|.
RankResult rank_from_spectrum(std::span<const double> descending);

/// Type-7 (linear interpolation) quantile of unsorted values.
double quantile_linear(std::vector<double> values, double q);

RankResult effective_rank(const SspdMatrix& S);

/// Effective rank of sspd(F, ε) without forming the larger Gram matrix: when
/// F has fewer columns than rows, the spectrum is eig(FᵀF) + ε padded with ε.
RankResult effective_rank_of_unfolding(const Eigen::MatrixXd& F, double epsilon = kSspdEpsilon);

/// Ranks of the three mode SSPDs; masked-out tokens contribute zero vectors.
RankTriplet rank_triplet(const TokenTensor& t, double epsilon = kSspdEpsilon);

/// Bures–Wasserstein distance √(tr A + tr B − 2 tr((A^½ B A^½)^½)).
///
/// Evaluated as ‖A^½ − B^½ Q‖_F with Q the orthogonal polar factor that
/// attains the nuclear norm ‖A^½ B^½‖_*, which is the same quantity without
/// the cancellation of the trace form near A = B.
double bures_distance(const SspdMatrix& A, const SspdMatrix& B);

/// Symmetric PSD square root via eigendecomposition; negative round-off clamped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& A);

enum class AgdMetric { Bures, Frobenius };

/// Mean pairwise distance over all N(N−1)/2 sample pairs.
double agd(std::span<const SspdMatrix> samples, AgdMetric metric = AgdMetric::Bures);

/// Feature-mode SSPDs of `groups` contiguous slices of the kept tokens.
std::vector<SspdMatrix> agd_samples(const TokenTensor& latent, std::size_t groups,
                                    double epsilon = kSspdEpsilon);

struct SweepOptions {
  std::size_t feature_cap = kDefaultFeatureCap;
  double epsilon = kSspdEpsilon;
  AgdMetric agd_metric = AgdMetric::Bures;
  std::size_t max_agd_groups = 16;
};

/// Number of AGD groups for a tensor: min(max_groups, batch), clamped to
/// [2, kept tokens].
std::size_t agd_group_count(const TokenTensor& t, std::size_t max_groups);

/// Noise stream seed for one level; depends on the level value, not its position.
std::uint64_t noise_level_seed(std::uint64_t base_seed, double level);

/// Per level: noise → encode → downsample → rank triplet and AGD.
/// The high-frequency coordinate set is ranked once on the clean input.
std::vector<SweepRecord> case1_sweep(const ActivationTensor& x, const SaeParams& params,
                                     std::span<const double> levels, const NoiseSpec& spec,
                                     const SweepOptions& options = {});

/// The zero-noise latent used by later stages: encode then downsample.
LatentTensor clean_latent(const ActivationTensor& x, const SaeParams& params, std::size_t feature_cap);

}  // namespace stratgeo
