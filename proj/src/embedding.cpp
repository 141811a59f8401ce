#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "stratgeo/error.hpp"
#include "stratgeo/geostruct.hpp"
#include "stratgeo/rng.hpp"

namespace stratgeo {

namespace {

constexpr std::size_t kSpectralLimit = 2000;

struct Neighbors {
  std::vector<std::vector<std::size_t>> index;
  std::vector<std::vector<double>> distance;
};

Neighbors nearest_neighbors(const Eigen::MatrixXd& X, std::size_t k) {
  const auto n = static_cast<std::size_t>(X.rows());
  Neighbors nb{std::vector<std::vector<std::size_t>>(n), std::vector<std::vector<double>>(n)};
  std::vector<std::size_t> order(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      dist[j] = (X.row(static_cast<Eigen::Index>(i)) - X.row(static_cast<Eigen::Index>(j))).norm();
    std::iota(order.begin(), order.end(), 0);
    std::erase(order, i);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] != dist[b] ? dist[a] < dist[b] : a < b; });
    order.resize(k);
    nb.index[i] = order;
    for (std::size_t j : order) nb.distance[i].push_back(dist[j]);
    order.resize(n);
  }
  return nb;
}

// Membership strengths exp(−(d − ρ)/σ) with σ calibrated so they sum to log2(k).
std::map<std::pair<std::size_t, std::size_t>, double> fuzzy_graph(const Neighbors& nb, std::size_t k) {
  const double target = std::log2(static_cast<double>(k));
  std::map<std::pair<std::size_t, std::size_t>, double> directed;
  for (std::size_t i = 0; i < nb.index.size(); ++i) {
    const auto& d = nb.distance[i];
    double rho = 0.0;
    for (double v : d)
      if (v > 0.0) {
        rho = v;
        break;
      }
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), sigma = 1.0;
    for (int it = 0; it < 64; ++it) {
      double psum = 0.0;
      for (double v : d) psum += std::exp(-std::max(0.0, v - rho) / sigma);
      if (std::abs(psum - target) < 1e-5) break;
      if (psum > target) {
        hi = sigma;
        sigma = (lo + hi) / 2;
      } else {
        lo = sigma;
        sigma = std::isinf(hi) ? sigma * 2 : (lo + hi) / 2;
      }
    }
    double mean_d = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    sigma = std::max(sigma, 1e-3 * mean_d);
    if (sigma <= 0.0) sigma = 1e-12;
    for (std::size_t j = 0; j < d.size(); ++j)
      directed[{i, nb.index[i][j]}] = std::exp(-std::max(0.0, d[j] - rho) / sigma);
  }
  std::map<std::pair<std::size_t, std::size_t>, double> sym;
  for (const auto& [key, w] : directed) {
    auto it = directed.find({key.second, key.first});
    double wt = it == directed.end() ? 0.0 : it->second;
    sym[key] = w + wt - w * wt;
    sym[{key.second, key.first}] = w + wt - w * wt;
  }
  return sym;
}

// Fits 1/(1 + a x^{2b}) to the min_dist-offset exponential curve by Gauss–Newton.
std::pair<double, double> fit_curve(double min_dist) {
  double a = 1.5, b = 0.9;
  constexpr int samples = 300;
  for (int it = 0; it < 100; ++it) {
    Eigen::Matrix2d JtJ = Eigen::Matrix2d::Zero();
    Eigen::Vector2d Jtr = Eigen::Vector2d::Zero();
    for (int s = 1; s <= samples; ++s) {
      double x = 3.0 * s / samples;
      double y = x < min_dist ? 1.0 : std::exp(-(x - min_dist));
      double p = std::pow(x, 2 * b);
      double f = 1.0 / (1.0 + a * p);
      double da = -p * f * f;
      double db = -a * p * 2.0 * std::log(x) * f * f;
      Eigen::Vector2d J(da, db);
      JtJ += J * J.transpose();
      Jtr += J * (f - y);
    }
    Eigen::Vector2d step = (JtJ + 1e-9 * Eigen::Matrix2d::Identity()).ldlt().solve(Jtr);
    a -= step(0);
    b -= step(1);
    if (step.norm() < 1e-12) break;
  }
  return {a, b};
}

bool spectral_init(std::size_t n, const std::map<std::pair<std::size_t, std::size_t>, double>& graph,
                   std::size_t dim, Eigen::MatrixXd& out) {
  if (n > kSpectralLimit || dim + 1 > n) return false;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& [key, w] : graph) W(static_cast<Eigen::Index>(key.first), static_cast<Eigen::Index>(key.second)) = w;
  Eigen::VectorXd deg = W.rowwise().sum();
  if ((deg.array() <= 0.0).any()) return false;
  Eigen::VectorXd inv_sqrt = deg.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(W.rows(), W.cols()) - inv_sqrt.asDiagonal() * W * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver((L + L.transpose()) * 0.5);
  if (solver.info() != Eigen::Success) return false;
  // A second near-zero eigenvalue means the graph is disconnected.
  if (solver.eigenvalues()(1) < 1e-8) return false;
  out = solver.eigenvectors().middleCols(1, static_cast<Eigen::Index>(dim));
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    Eigen::Index arg = 0;
    out.col(c).cwiseAbs().maxCoeff(&arg);
    if (out(arg, c) < 0.0) out.col(c) *= -1.0;
  }
  return true;
}

double clip(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace

Eigen::MatrixXd neighbor_embedding(const Eigen::MatrixXd& points, std::size_t target_dim,
                                   const EmbeddingOptions& options) {
  const auto n = static_cast<std::size_t>(points.rows());
  require(n >= 3, ErrorCode::TooFewPoints, "neighbor embedding needs at least three points");
  require(target_dim >= 1 && target_dim < n && static_cast<Eigen::Index>(target_dim) <= points.cols(),
          ErrorCode::TargetTooLarge, "embedding target too large");
  const std::size_t k = std::clamp<std::size_t>(options.n_neighbors, 2, n - 1);
  auto graph = fuzzy_graph(nearest_neighbors(points, k), k);

  Eigen::MatrixXd Y;
  if (!spectral_init(n, graph, target_dim, Y)) Y = pca_project(points, target_dim);
  double span = Y.cwiseAbs().maxCoeff();
  Y *= span > 0.0 ? 10.0 / span : 1.0;

  struct Edge {
    std::size_t head, tail;
    double w;
  };
  std::vector<Edge> edges;
  double wmax = 0.0;
  for (const auto& [key, w] : graph) wmax = std::max(wmax, w);
  const double epochs = static_cast<double>(options.epochs);
  for (const auto& [key, w] : graph)
    if (w >= wmax / epochs) edges.push_back({key.first, key.second, w});

  auto [a, b] = fit_curve(options.min_dist);
  std::vector<double> per_sample(edges.size()), next_sample(edges.size()), per_negative(edges.size()),
      next_negative(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    per_sample[e] = next_sample[e] = wmax / edges[e].w;
    per_negative[e] = next_negative[e] = per_sample[e] / static_cast<double>(std::max<std::size_t>(options.negative_samples, 1));
  }

  rng::SplitMix64 gen(rng::derive_seed(options.seed, {"neighbor-embedding"}));
  const Eigen::Index dim = Y.cols();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const double alpha = 1.0 - static_cast<double>(epoch) / epochs;
    const double now = static_cast<double>(epoch);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (next_sample[e] > now) continue;
      const auto j = static_cast<Eigen::Index>(edges[e].head);
      const auto kk = static_cast<Eigen::Index>(edges[e].tail);
      double d2 = (Y.row(j) - Y.row(kk)).squaredNorm();
      double coeff = d2 > 0.0 ? -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0) : 0.0;
      for (Eigen::Index c = 0; c < dim; ++c) {
        double g = clip(coeff * (Y(j, c) - Y(kk, c)));
        Y(j, c) += g * alpha;
        Y(kk, c) -= g * alpha;
      }
      next_sample[e] += per_sample[e];

      auto negatives = static_cast<std::size_t>((now - next_negative[e]) / per_negative[e]);
      for (std::size_t p = 0; p < negatives; ++p) {
        const auto o = static_cast<Eigen::Index>(rng::below(gen, n));
        if (o == j) continue;
        double dn = (Y.row(j) - Y.row(o)).squaredNorm();
        double rc = dn > 0.0 ? 2.0 * b / ((0.001 + dn) * (a * std::pow(dn, b) + 1.0)) : 0.0;
        for (Eigen::Index c = 0; c < dim; ++c) {
          double g = rc > 0.0 ? clip(rc * (Y(j, c) - Y(o, c))) : 4.0;
          Y(j, c) += g * alpha;
        }
      }
      next_negative[e] += static_cast<double>(negatives) * per_negative[e];
    }
  }
  require(Y.allFinite(), ErrorCode::NumericalFailure, "embedding diverged");
  return Y;
}

}  // namespace stratgeo
