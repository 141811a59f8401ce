#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stratgeo/geostruct.hpp"
#include "stratgeo/saecore.hpp"
#include "stratgeo/transport.hpp"

namespace stratgeo {

/// Pairwise distances scaled so the largest entry is 1 (all zero when every
/// point coincides).
struct MetricMatrix {
  Eigen::MatrixXd D;

  Eigen::Index size() const noexcept { return D.rows(); }
  void validate() const;
};

MetricMatrix normalized_distance_matrix(const Eigen::MatrixXd& points);

/// Uniform-marginal GW discrepancy; see `gromov_wasserstein` for the solver.
GwResult gw_solve(const MetricMatrix& a, const MetricMatrix& b, const GwOptions& options = {});
double gw_distance(const MetricMatrix& a, const MetricMatrix& b);

/// Average Euclidean distance over all center pairs.
double aedp(const Eigen::MatrixXd& centers);

enum class LossKind { Gw, InvAedp };

std::string loss_kind_name(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct InterventionConfig {
  double alpha = 0.5;
  std::size_t iterations = 10;
  double lambda_mse = 1.0;
  LossKind loss_kind = LossKind::Gw;
  std::size_t subsample = 256;
  std::uint64_t seed = 0;

  void validate(bool allow_zero_alpha = false) const;
};

double intervention_loss(const InterventionConfig& cfg, const MetricMatrix& D0, const MetricMatrix& D1,
                         const Eigen::MatrixXd& centers, double mse_value);

struct InterventionRecord {
  LossKind loss_kind = LossKind::Gw;
  double alpha = 0.0;
  double d_gw = 0.0;
  double mse = 0.0;
  double aedp_orig = 0.0;
  double aedp_best = 0.0;
  std::optional<double> inv_aedp;
  /// Incumbent loss after the baseline and after each proposal.
  std::vector<double> loss_trace;
};

/// Seeded subsample of at most `cap` clustered points, with per-cluster quotas
/// proportional to cluster size. Returned indices are ascending.
std::vector<std::size_t> stratified_subsample(const ClusterAssignment& labels, std::size_t cap, std::uint64_t seed);

/// Random-search translation of cluster centers. `labels` refer to the kept
/// tokens of `latent`, in order. The baseline (untranslated) latents are the
/// first incumbent; each of the `iterations` proposals displaces every
/// cluster by α times a seeded unit direction and replaces the incumbent only
/// when its loss is strictly lower. Directions depend on the seed and loss
/// kind but not on α. α = 0 is accepted only when `allow_zero_alpha` is set.
InterventionRecord random_search_intervene(const LatentTensor& latent, const ClusterAssignment& labels,
                                           const SaeParams& params, const ActivationTensor& x,
                                           const InterventionConfig& cfg, bool allow_zero_alpha = false);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct Case3Result {
  std::vector<InterventionRecord> records;
  /// Pearson(aedp_best, mse) over the α records, one entry per loss kind in
  /// the order requested.
  std::vector<std::pair<LossKind, double>> correlation;
};

inline const std::vector<double> kDefaultAlphas{0.5, 0.8, 1.0, 1.2, 1.5};

Case3Result case3_sweep(const LatentTensor& latent, const ClusterAssignment& labels, const SaeParams& params,
                        const ActivationTensor& x, const std::vector<double>& alphas,
                        const std::vector<LossKind>& losses, const InterventionConfig& base);

}  // namespace stratgeo
