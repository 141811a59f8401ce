#include "stratgeo/intervene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stratgeo/error.hpp"
#include "stratgeo/rng.hpp"

namespace stratgeo {

namespace {

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Eigen::MatrixXd unit_directions(std::uint64_t key, std::size_t proposal, Eigen::Index K, Eigen::Index width) {
  Eigen::MatrixXd G(K, width);
  const auto base = static_cast<std::uint64_t>(proposal) * static_cast<std::uint64_t>(K * width);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index c = 0; c < width; ++c)
      G(k, c) = rng::normal_at(key, base + static_cast<std::uint64_t>(k * width + c));
    double n = G.row(k).norm();
    require(n > 0.0, ErrorCode::NumericalFailure, "zero random direction");
    G.row(k) /= n;
  }
  return G;
}

}  // namespace

void MetricMatrix::validate() const {
  require(D.rows() == D.cols(), ErrorCode::ShapeMismatch, "metric matrix must be square");
  require(D.allFinite(), ErrorCode::InvariantViolation, "metric matrix has non-finite entries");
  require((D.array() >= 0.0).all() && (D.array() <= 1.0).all(), ErrorCode::InvariantViolation,
          "metric matrix entries must lie in [0, 1]");
  require(D.diagonal().isZero(0.0) && D == D.transpose(), ErrorCode::InvariantViolation,
          "metric matrix must be symmetric with zero diagonal");
}

MetricMatrix normalized_distance_matrix(const Eigen::MatrixXd& points) {
  require(points.rows() >= 2, ErrorCode::TooFewPoints, "distance matrix needs at least two points");
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) D(i, j) = D(j, i) = (points.row(i) - points.row(j)).norm();
  double top = D.maxCoeff();
  if (top > 0.0) D /= top;
  return {std::move(D)};
}

GwResult gw_solve(const MetricMatrix& a, const MetricMatrix& b, const GwOptions& options) {
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(a.size(), 1.0 / static_cast<double>(a.size()));
  Eigen::VectorXd nu = Eigen::VectorXd::Constant(b.size(), 1.0 / static_cast<double>(b.size()));
  return gromov_wasserstein(a.D, b.D, mu, nu, options);
}

double gw_distance(const MetricMatrix& a, const MetricMatrix& b) { return gw_solve(a, b).value; }

double aedp(const Eigen::MatrixXd& centers) {
  const Eigen::Index K = centers.rows();
  require(K >= 2, ErrorCode::TooFewClusters, "AEDP needs at least two centers");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = i + 1; j < K; ++j) sum += (centers.row(i) - centers.row(j)).norm();
  return 2.0 * sum / static_cast<double>(K * (K - 1));
}

std::string loss_kind_name(LossKind k) { return k == LossKind::Gw ? "gw" : "inv_aedp"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "gw") return LossKind::Gw;
  if (s == "inv_aedp") return LossKind::InvAedp;
  fail(ErrorCode::ConfigError, "unknown loss kind '" + s + "'");
}

void InterventionConfig::validate(bool allow_zero_alpha) const {
  require(std::isfinite(alpha) && (alpha > 0.0 || (allow_zero_alpha && alpha == 0.0)), ErrorCode::ConfigError,
          "alpha must be positive");
  require(iterations >= 1, ErrorCode::ConfigError, "iterations must be at least 1");
  require(std::isfinite(lambda_mse) && lambda_mse >= 0.0, ErrorCode::ConfigError, "lambda_mse must be nonnegative");
  require(subsample >= 2, ErrorCode::ConfigError, "subsample must be at least 2");
}

double intervention_loss(const InterventionConfig& cfg, const MetricMatrix& D0, const MetricMatrix& D1,
                         const Eigen::MatrixXd& centers, double mse_value) {
  if (cfg.loss_kind == LossKind::Gw) return gw_distance(D0, D1) + cfg.lambda_mse * mse_value;
  double a = aedp(centers);
  require(a > 0.0, ErrorCode::DegenerateConfiguration, "all centers coincide");
  return 1.0 / a + cfg.lambda_mse * mse_value;
}

std::vector<std::size_t> stratified_subsample(const ClusterAssignment& labels, std::size_t cap, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(labels.K));
  for (std::size_t i = 0; i < labels.labels.size(); ++i)
    if (labels.labels[i] >= 0) groups[static_cast<std::size_t>(labels.labels[i])].push_back(i);
  std::size_t total = 0;
  for (const auto& g : groups) total += g.size();
  std::vector<std::size_t> out;
  if (total <= cap) {
    for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
    std::sort(out.begin(), out.end());
    return out;
  }
  // Largest-remainder apportionment of the cap across clusters.
  std::vector<std::size_t> quota(groups.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    double exact = static_cast<double>(cap) * static_cast<double>(groups[k].size()) / static_cast<double>(total);
    quota[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[k];
    remainder.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < cap && r < remainder.size(); ++r, ++assigned) ++quota[remainder[r].second];

  for (std::size_t k = 0; k < groups.size(); ++k) {
    rng::SplitMix64 gen(rng::derive_seed(seed, {"subsample", std::to_string(k)}));
    auto members = groups[k];
    rng::shuffle(std::span<std::size_t>(members), gen);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(std::min(quota[k], members.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

InterventionRecord random_search_intervene(const LatentTensor& latent, const ClusterAssignment& labels,
                                           const SaeParams& params, const ActivationTensor& x,
                                           const InterventionConfig& cfg, bool allow_zero_alpha) {
  cfg.validate(allow_zero_alpha);
  require(labels.K >= 1, ErrorCode::NoClusters, "intervention needs clusters");
  require(labels.K >= 2, ErrorCode::TooFewClusters, "intervention needs at least two clusters");
  const Eigen::MatrixXd Z = masked_rows(latent);
  const Eigen::MatrixXd X = masked_rows(x);
  require(Z.rows() == X.rows(), ErrorCode::ShapeMismatch, "latent and activation kept-token counts differ");
  require(labels.labels.size() == static_cast<std::size_t>(Z.rows()), ErrorCode::ShapeMismatch,
          "labels do not match kept tokens");

  const Eigen::MatrixXd centers = cluster_centers(Z, labels);
  auto sub = stratified_subsample(labels, cfg.subsample, cfg.seed);
  require(sub.size() >= 2, ErrorCode::TooFewPoints, "subsample has fewer than two points");
  const MetricMatrix D0 = normalized_distance_matrix(select_rows(Z, sub));

  InterventionRecord rec;
  rec.loss_kind = cfg.loss_kind;
  rec.alpha = cfg.alpha;
  rec.aedp_orig = aedp(centers);

  Eigen::MatrixXd best_centers = centers;
  MetricMatrix best_D = D0;
  double best_mse = mse_rows(X, decode_rows(params, Z, latent.feature_index_map));
  double best_loss = intervention_loss(cfg, D0, D0, centers, best_mse);
  rec.loss_trace.push_back(best_loss);

  const std::uint64_t key = rng::derive_seed(cfg.seed, {"directions", loss_kind_name(cfg.loss_kind)});
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    Eigen::MatrixXd shift = cfg.alpha * unit_directions(key, t, centers.rows(), centers.cols());
    Eigen::MatrixXd proposal = Z;
    for (std::size_t i = 0; i < labels.labels.size(); ++i)
      if (labels.labels[i] >= 0) proposal.row(static_cast<Eigen::Index>(i)) += shift.row(labels.labels[i]);
    Eigen::MatrixXd moved_centers = centers + shift;
    MetricMatrix D1 = normalized_distance_matrix(select_rows(proposal, sub));
    double m = mse_rows(X, decode_rows(params, proposal, latent.feature_index_map));
    double l = intervention_loss(cfg, D0, D1, moved_centers, m);
    if (l < best_loss) {
      best_loss = l;
      best_mse = m;
      best_centers = std::move(moved_centers);
      best_D = std::move(D1);
    }
    rec.loss_trace.push_back(best_loss);
  }

  rec.mse = best_mse;
  rec.d_gw = gw_distance(D0, best_D);
  rec.aedp_best = aedp(best_centers);
  if (cfg.loss_kind == LossKind::InvAedp) rec.inv_aedp = 1.0 / rec.aedp_best;
  return rec;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), ErrorCode::ShapeMismatch, "pearson inputs differ in length");
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(a.size());
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

Case3Result case3_sweep(const LatentTensor& latent, const ClusterAssignment& labels, const SaeParams& params,
                        const ActivationTensor& x, const std::vector<double>& alphas,
                        const std::vector<LossKind>& losses, const InterventionConfig& base) {
  require(!alphas.empty(), ErrorCode::ConfigError, "alpha list is empty");
  for (double a : alphas) require(std::isfinite(a) && a > 0.0, ErrorCode::ConfigError, "alphas must be positive");
  Case3Result out;
  for (LossKind kind : losses) {
    std::vector<double> aedps, mses;
    for (double a : alphas) {
      InterventionConfig cfg = base;
      cfg.alpha = a;
      cfg.loss_kind = kind;
      auto rec = random_search_intervene(latent, labels, params, x, cfg);
      aedps.push_back(rec.aedp_best);
      mses.push_back(rec.mse);
      out.records.push_back(std::move(rec));
    }
    out.correlation.emplace_back(kind, pearson(aedps, mses));
  }
  return out;
}

}  // namespace stratgeo
