#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace stratgeo {

/// Minimum-cost perfect assignment for a square cost matrix; result[i] is the
/// column assigned to row i.
std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost);

struct TransportEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  double mass = 0.0;
};

/// Exact discrete optimal transport between weights `mu` (rows) and `nu`
/// (columns) for the given cost. Returns the nonzero entries of an optimal
/// vertex coupling. Square problems with uniform weights go through
/// `hungarian`; everything else through successive shortest paths.
std::vector<TransportEntry> optimal_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu,
                                              const Eigen::VectorXd& nu);

/// 1-D Wasserstein-1 distance between two weighted samples.
double wasserstein1_1d(std::vector<double> a, const Eigen::VectorXd& wa, std::vector<double> b,
                       const Eigen::VectorXd& wb);

struct GwOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-9;
};

struct GwResult {
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Gromov–Wasserstein discrepancy with absolute loss,
/// min_π Σ |A(i,k) − B(j,l)| π(i,j) π(k,l), by conditional gradient with
/// exact line search. Two starts (product coupling and the distance-profile
/// coupling) are run and the lower objective is kept. Argument order is
/// canonicalized so swapping A and B gives the same value.
GwResult gromov_wasserstein(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& mu,
                            const Eigen::VectorXd& nu, const GwOptions& options = {});

/// Objective of a given dense coupling, by direct quadruple sum. Meant for
/// tests and small inputs.
double gw_objective(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& coupling);

}  // namespace stratgeo
