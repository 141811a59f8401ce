#include "stratgeo/geostruct.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "stratgeo/error.hpp"

namespace stratgeo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd centered(const Eigen::MatrixXd& X) { return X.rowwise() - X.colwise().mean(); }

Eigen::MatrixXd pad_columns(const Eigen::MatrixXd& X, Eigen::Index cols) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X.rows(), cols);
  out.leftCols(X.cols()) = X;
  return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

double nan_mean(const std::vector<double>& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  return n == 0 ? kNaN : sum / static_cast<double>(n);
}

}  // namespace

void PointCloud::validate() const {
  require(points.rows() > 0 && points.cols() > 0, ErrorCode::EmptyMatrix, "point cloud is empty");
  require(points.allFinite(), ErrorCode::InvariantViolation, "point cloud has non-finite entries");
}

std::vector<std::size_t> ClusterAssignment::members(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) out.push_back(i);
  return out;
}

PointCloud standardize(const PointCloud& p) {
  p.validate();
  require(p.points.rows() >= 2, ErrorCode::TooFewPoints, "standardizing needs at least two points");
  Eigen::MatrixXd X = centered(p.points);
  Eigen::RowVectorXd sd = (X.array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (sd(j) > 0.0)
      X.col(j) /= sd(j);
    else
      X.col(j).setZero();
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double n = X.row(i).norm();
    if (n > 0.0) X.row(i) /= n;
  }
  return {std::move(X), p.provenance};
}

Eigen::MatrixXd pca_project(const Eigen::MatrixXd& points, std::size_t target_dim) {
  const auto k = static_cast<Eigen::Index>(target_dim);
  require(k >= 1 && k <= points.cols(), ErrorCode::TargetTooLarge, "PCA target exceeds input dimension");
  require(points.rows() > k, ErrorCode::TargetTooLarge, "PCA needs more points than target dimensions");
  Eigen::MatrixXd X = centered(points);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
  Eigen::MatrixXd V = svd.matrixV().leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    V.col(c).cwiseAbs().maxCoeff(&arg);
    if (V(arg, c) < 0.0) V.col(c) *= -1.0;
  }
  return X * V;
}

PointCloud reduce(const PointCloud& p, const ReduceOptions& options) {
  p.validate();
  require(options.target_dim >= 1 && static_cast<Eigen::Index>(options.target_dim) <= p.points.cols(),
          ErrorCode::TargetTooLarge, "reduction target exceeds input dimension");
  if (options.method == ReduceMethod::Pca) return {pca_project(p.points, options.target_dim), p.provenance};
  return {neighbor_embedding(p.points, options.target_dim, options.embedding), p.provenance};
}

double twonn_id(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  require(n >= 3, ErrorCode::TooFewPoints, "TwoNN needs at least three points");
  double log_sum = 0.0;
  std::size_t valid = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double r1 = kInf, r2 = kInf;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = (points.row(i) - points.row(j)).norm();
      if (d < r1) {
        r2 = r1;
        r1 = d;
      } else if (d < r2) {
        r2 = d;
      }
    }
    if (r1 <= 0.0) continue;
    log_sum += std::log(r2 / r1);
    ++valid;
  }
  require(valid > 0, ErrorCode::AllDuplicates, "every point has a duplicate nearest neighbour");
  require(log_sum > 0.0, ErrorCode::DegenerateConfiguration, "all neighbour ratios equal one");
  return static_cast<double>(valid) / log_sum;
}

std::size_t pca_id(const Eigen::MatrixXd& points, double tau_dim) {
  require(points.rows() >= 2, ErrorCode::TooFewPoints, "PCA-ID needs at least two points");
  Eigen::MatrixXd X = centered(points);
  Eigen::MatrixXd C = X.transpose() * X / static_cast<double>(points.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(C, Eigen::EigenvaluesOnly);
  require(solver.info() == Eigen::Success, ErrorCode::NumericalFailure, "eigendecomposition did not converge");
  Eigen::VectorXd ev = solver.eigenvalues().cwiseMax(0.0);
  double total = ev.sum();
  if (total <= 0.0) return 0;
  return static_cast<std::size_t>((ev.array() / total > tau_dim).count());
}

std::vector<WeightedEdge> euclidean_mst(const Eigen::MatrixXd& points) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<WeightedEdge> edges;
  if (n < 2) return edges;
  edges.reserve(n - 1);
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, kInf);
  std::vector<std::size_t> from(n, 0);
  std::size_t cur = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      double d = (points.row(static_cast<Eigen::Index>(cur)) - points.row(static_cast<Eigen::Index>(j))).norm();
      if (d < best[j]) {
        best[j] = d;
        from[j] = cur;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    edges.push_back({from[next], next, best[next]});
    cur = next;
  }
  return edges;
}

std::vector<double> h0_bar_lengths(const Eigen::MatrixXd& points) {
  require(points.rows() >= 1, ErrorCode::TooFewPoints, "persistence of an empty cloud");
  std::vector<double> bars;
  for (const auto& e : euclidean_mst(points)) bars.push_back(e.weight);
  std::sort(bars.begin(), bars.end());
  bars.push_back(kInf);
  return bars;
}

std::size_t betti0(const Eigen::MatrixXd& points, double tau_pers) {
  auto bars = h0_bar_lengths(points);
  return static_cast<std::size_t>(std::count_if(bars.begin(), bars.end(), [&](double b) { return b > tau_pers; }));
}

double mst_weight(const Eigen::MatrixXd& centers) {
  require(centers.rows() >= 1, ErrorCode::NoClusters, "MST weight of no centers");
  double total = 0.0;
  for (const auto& e : euclidean_mst(centers)) total += e.weight;
  return total;
}

double procrustes_disparity(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  require(A.rows() == B.rows() && A.cols() == B.cols(), ErrorCode::ShapeMismatch,
          "Procrustes inputs must have equal shapes");
  require(A.rows() >= 2, ErrorCode::TooFewClusters, "Procrustes needs at least two points");
  Eigen::MatrixXd Ac = centered(A);
  Eigen::MatrixXd Bc = centered(B);
  double norm_a = Ac.squaredNorm();
  double scale = std::max(1.0, std::max(A.cwiseAbs().maxCoeff(), B.cwiseAbs().maxCoeff()));
  double tiny = 1e-24 * scale * scale * static_cast<double>(A.size());
  require(norm_a > tiny && Bc.squaredNorm() > tiny, ErrorCode::DegenerateConfiguration,
          "Procrustes input collapses to a single point");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Bc.transpose() * Ac, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd R = svd.matrixU() * svd.matrixV().transpose();
  double d = (Ac - Bc * R).squaredNorm() / norm_a;
  return std::max(d, 0.0);
}

std::vector<std::pair<std::size_t, std::size_t>> match_centers(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index dim = std::max(A.cols(), B.cols());
  auto prepare = [dim](const Eigen::MatrixXd& X) {
    Eigen::MatrixXd c = centered(X);
    double n = c.norm();
    if (n > 0.0) c /= n;
    return pad_columns(c, dim);
  };
  Eigen::MatrixXd a = prepare(A);
  Eigen::MatrixXd b = prepare(B);
  struct Candidate {
    double d;
    std::size_t i, j;
  };
  std::vector<Candidate> cands;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      cands.push_back({(a.row(i) - b.row(j)).norm(), static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.d != y.d) return x.d < y.d;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> used_a(static_cast<std::size_t>(a.rows()), false), used_b(static_cast<std::size_t>(b.rows()), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = true;
    pairs.emplace_back(c.i, c.j);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

Eigen::MatrixXd cluster_centers(const Eigen::MatrixXd& points, const ClusterAssignment& labels) {
  require(labels.labels.size() == static_cast<std::size_t>(points.rows()), ErrorCode::ShapeMismatch,
          "label count differs from point count");
  require(labels.K >= 1, ErrorCode::NoClusters, "no clusters to average");
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(labels.K, points.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(labels.K), 0);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    int l = labels.labels[i];
    if (l < 0) continue;
    require(l < labels.K, ErrorCode::IndexOutOfRange, "label exceeds cluster count");
    centers.row(l) += points.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int k = 0; k < labels.K; ++k) {
    require(counts[static_cast<std::size_t>(k)] > 0, ErrorCode::InvariantViolation, "cluster without members");
    centers.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
  }
  return centers;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  require(a.size() == b.size(), ErrorCode::ShapeMismatch, "label vectors differ in length");
  const double n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : table) index += c2(v);
  for (const auto& [k, v] : rows) sa += c2(v);
  for (const auto& [k, v] : cols) sb += c2(v);
  double expected = sa * sb / c2(n);
  double max_index = (sa + sb) / 2;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

Case2Side analyze_cloud(const PointCloud& cloud, const Case2Config& cfg) {
  cloud.validate();
  Case2Side side;
  side.n_points = static_cast<std::size_t>(cloud.points.rows());
  require(side.n_points >= 3, ErrorCode::TooFewPoints, "case 2 needs at least three points");
  PointCloud z = standardize(cloud);
  ReduceOptions ro = cfg.reduce;
  ro.target_dim = std::min({ro.target_dim, static_cast<std::size_t>(z.points.cols()), side.n_points - 1});
  PointCloud r = reduce(z, ro);
  side.reduced_dim = static_cast<std::size_t>(r.points.cols());
  side.clusters = hdbscan(r.points, cfg.min_cluster_size);

  std::vector<double> ids, pcas, bettis;
  for (int k = 0; k < side.clusters.K; ++k) {
    Eigen::MatrixXd members = select_rows(r.points, side.clusters.members(k));
    ClusterLocalStats s;
    s.size = static_cast<std::size_t>(members.rows());
    try {
      s.twonn_id = twonn_id(members);
    } catch (const Error&) {
      s.twonn_id = kNaN;
    }
    s.pca_id = pca_id(members, cfg.tau_dim);
    s.betti0 = betti0(members, cfg.tau_pers);
    ids.push_back(s.twonn_id);
    pcas.push_back(static_cast<double>(s.pca_id));
    bettis.push_back(static_cast<double>(s.betti0));
    side.local.clusters.push_back(s);
  }
  side.local.avg_twonn_id = nan_mean(ids);
  side.local.avg_pca_id = nan_mean(pcas);
  side.local.avg_betti0 = nan_mean(bettis);
  if (side.clusters.K >= 1) {
    side.global.cluster_centers = cluster_centers(r.points, side.clusters);
    side.global.mstw = mst_weight(side.global.cluster_centers);
  } else {
    side.global.cluster_centers.resize(0, r.points.cols());
  }
  return side;
}

Case2Report case2_report(const ActivationTensor& resid, const LatentTensor& latent, const Case2Config& cfg) {
  Case2Report report;
  report.resid = analyze_cloud({masked_rows(resid), Provenance::Residual}, cfg);
  report.latent = analyze_cloud({masked_rows(latent), Provenance::Latent}, cfg);

  const Eigen::MatrixXd& ca = report.resid.global.cluster_centers;
  const Eigen::MatrixXd& cb = report.latent.global.cluster_centers;
  auto pairs = match_centers(ca, cb);
  report.matched_pairs = pairs.size();
  if (pairs.size() >= 2) {
    const Eigen::Index dim = std::max(ca.cols(), cb.cols());
    Eigen::MatrixXd A(static_cast<Eigen::Index>(pairs.size()), dim), B(static_cast<Eigen::Index>(pairs.size()), dim);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      A.row(static_cast<Eigen::Index>(p)) = pad_columns(ca.row(static_cast<Eigen::Index>(pairs[p].first)), dim);
      B.row(static_cast<Eigen::Index>(p)) = pad_columns(cb.row(static_cast<Eigen::Index>(pairs[p].second)), dim);
    }
    double d = kNaN;
    try {
      d = procrustes_disparity(A, B);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateConfiguration) throw;
    }
    report.resid.global.procrustes_disparity = d;
    report.latent.global.procrustes_disparity = d;
  }
  return report;
}

}  // namespace stratgeo
