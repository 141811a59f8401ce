#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stratgeo/saecore.hpp"

namespace stratgeo {

enum class Provenance { Residual, Latent };

struct PointCloud {
  Eigen::MatrixXd points;  // N × d
  Provenance provenance = Provenance::Residual;

  void validate() const;
};

/// Labels are −1 for noise, otherwise 0..K−1 numbered by first occurrence.
struct ClusterAssignment {
  std::vector<int> labels;
  int K = 0;

  std::vector<std::size_t> members(int label) const;
};

struct ClusterLocalStats {
  std::size_t size = 0;
  double twonn_id = std::numeric_limits<double>::quiet_NaN();
  std::size_t pca_id = 0;
  std::size_t betti0 = 0;
};

struct LocalStats {
  std::vector<ClusterLocalStats> clusters;
  double avg_twonn_id = std::numeric_limits<double>::quiet_NaN();
  double avg_pca_id = std::numeric_limits<double>::quiet_NaN();
  double avg_betti0 = std::numeric_limits<double>::quiet_NaN();
};

struct GlobalStats {
  double mstw = std::numeric_limits<double>::quiet_NaN();
  double procrustes_disparity = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd cluster_centers;  // K × d
};

/// Column z-score (zero-variance columns become 0), then unit-L2 rows (zero rows stay 0).
PointCloud standardize(const PointCloud& p);

enum class ReduceMethod { Pca, NeighborEmbedding };

struct EmbeddingOptions {
  std::size_t n_neighbors = 15;
  std::size_t epochs = 200;
  double min_dist = 0.1;
  std::size_t negative_samples = 5;
  std::uint64_t seed = 0;
};

struct ReduceOptions {
  std::size_t target_dim = 50;
  ReduceMethod method = ReduceMethod::Pca;
  EmbeddingOptions embedding;
};

PointCloud reduce(const PointCloud& p, const ReduceOptions& options);

/// Projection on the top principal components; each component's
/// largest-magnitude loading is made positive.
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& points, std::size_t target_dim);

/// UMAP-style layout: k-NN graph with fuzzy-union weights, spectral
/// initialization, then seeded stochastic cross-entropy optimization.
Eigen::MatrixXd neighbor_embedding(const Eigen::MatrixXd& points, std::size_t target_dim,
                                   const EmbeddingOptions& options);

/// HDBSCAN over Euclidean distance with excess-of-mass cluster selection.
/// `min_samples` of 0 means "same as min_cluster_size"; the count includes
/// the point itself.
ClusterAssignment hdbscan(const Eigen::MatrixXd& points, std::size_t min_cluster_size = 10,
                          std::size_t min_samples = 0);

/// Maximum-likelihood TwoNN estimate N_valid / Σ ln(r₂/r₁); points whose
/// nearest neighbour is at distance 0 are skipped.
double twonn_id(const Eigen::MatrixXd& points);

/// Number of covariance eigenvalues whose share of total variance exceeds tau_dim.
std::size_t pca_id(const Eigen::MatrixXd& points, double tau_dim = 0.01);

/// 0-dimensional Vietoris–Rips bars, ascending; the essential bar is +inf.
std::vector<double> h0_bar_lengths(const Eigen::MatrixXd& points);

std::size_t betti0(const Eigen::MatrixXd& points, double tau_pers = 0.1);

struct WeightedEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double weight = 0.0;
};

/// Prim's algorithm on the complete Euclidean graph of the rows.
std::vector<WeightedEdge> euclidean_mst(const Eigen::MatrixXd& points);

double mst_weight(const Eigen::MatrixXd& centers);

/// Residual of the best rigid (orthogonal + translation) fit of B onto A,
/// divided by the centered sum of squares of A.
double procrustes_disparity(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

/// Greedy nearest-pair matching of two centroid sets after each is centered
/// and scaled to unit Frobenius norm (narrower set zero-padded). Returns
/// min(K_A, K_B) pairs (row of A, row of B) in ascending A order.
std::vector<std::pair<std::size_t, std::size_t>> match_centers(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

/// Mean of member rows per cluster; noise rows are ignored. Throws NoClusters when K is 0.
Eigen::MatrixXd cluster_centers(const Eigen::MatrixXd& points, const ClusterAssignment& labels);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct Case2Config {
  ReduceOptions reduce;
  std::size_t min_cluster_size = 10;
  double tau_dim = 0.01;
  double tau_pers = 0.1;
};

struct Case2Side {
  std::size_t n_points = 0;
  std::size_t reduced_dim = 0;
  ClusterAssignment clusters;
  LocalStats local;
  GlobalStats global;
};

struct Case2Report {
  Case2Side resid;
  Case2Side latent;
  std::size_t matched_pairs = 0;
};

/// Runs one cloud through standardize → reduce → cluster → local/global stats.
/// The reduction target is clamped to min(target_dim, d, N − 1).
Case2Side analyze_cloud(const PointCloud& cloud, const Case2Config& cfg);

Case2Report case2_report(const ActivationTensor& resid, const LatentTensor& latent, const Case2Config& cfg);

}  // namespace stratgeo
