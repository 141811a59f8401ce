#include "stratgeo/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stratgeo/error.hpp"

namespace stratgeo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMassEpsilon = 1e-14;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool is_uniform(const Eigen::VectorXd& w) {
  const double target = 1.0 / static_cast<double>(w.size());
  return ((w.array() - target).abs() <= 1e-12 * target).all();
}

std::vector<TransportEntry> min_cost_flow(const Eigen::MatrixXd& C, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu) {
  const auto n = static_cast<std::size_t>(C.rows());
  const auto m = static_cast<std::size_t>(C.cols());
  const std::size_t V = n + m + 2, S = 0, T = n + m + 1;
  auto row_node = [](std::size_t i) { return 1 + i; };
  auto col_node = [n](std::size_t j) { return 1 + n + j; };

  std::vector<double> sent(n, 0.0), received(m, 0.0);
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(C.rows(), C.cols());
  std::vector<double> pot(V, 0.0);
  for (std::size_t j = 0; j < m; ++j) pot[col_node(j)] = C.col(static_cast<Eigen::Index>(j)).minCoeff();
  pot[T] = *std::min_element(pot.begin() + static_cast<std::ptrdiff_t>(n + 1), pot.begin() + static_cast<std::ptrdiff_t>(T));

  auto cij = [&](std::size_t i, std::size_t j) { return C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); };
  double remaining = mu.sum();
  std::vector<double> dist(V);
  std::vector<std::size_t> prev(V);
  std::vector<bool> done(V);
  while (remaining > kMassEpsilon) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(done.begin(), done.end(), false);
    dist[S] = 0.0;
    for (;;) {
      std::size_t u = V;
      for (std::size_t v = 0; v < V; ++v)
        if (!done[v] && dist[v] < kInf && (u == V || dist[v] < dist[u])) u = v;
      if (u == V) break;
      done[u] = true;
      // Finalized nodes stay fixed; rounding in the reduced costs must not rewire their predecessors.
      auto relax = [&](std::size_t v, double cost) {
        if (done[v]) return;
        double nd = dist[u] + cost + pot[u] - pot[v];
        if (nd < dist[v]) {
          dist[v] = nd;
          prev[v] = u;
        }
      };
      if (u == S) {
        for (std::size_t i = 0; i < n; ++i)
          if (mu(static_cast<Eigen::Index>(i)) - sent[i] > kMassEpsilon) relax(row_node(i), 0.0);
      } else if (u <= n) {
        std::size_t i = u - 1;
        for (std::size_t j = 0; j < m; ++j) relax(col_node(j), cij(i, j));
      } else if (u != T) {
        std::size_t j = u - 1 - n;
        for (std::size_t i = 0; i < n; ++i)
          if (flow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > kMassEpsilon) relax(row_node(i), -cij(i, j));
        if (nu(static_cast<Eigen::Index>(j)) - received[j] > kMassEpsilon) relax(T, 0.0);
      }
    }
    require(dist[T] < kInf, ErrorCode::NumericalFailure, "transport problem became infeasible");
    for (std::size_t v = 0; v < V; ++v) pot[v] += std::min(dist[v], dist[T]);

    double push = kInf;
    for (std::size_t v = T; v != S; v = prev[v]) {
      std::size_t u = prev[v];
      if (u == S) push = std::min(push, mu(static_cast<Eigen::Index>(v - 1)) - sent[v - 1]);
      else if (v == T) push = std::min(push, nu(static_cast<Eigen::Index>(u - 1 - n)) - received[u - 1 - n]);
      else if (u > n) push = std::min(push, flow(static_cast<Eigen::Index>(v - 1), static_cast<Eigen::Index>(u - 1 - n)));
    }
    for (std::size_t v = T; v != S; v = prev[v]) {
      std::size_t u = prev[v];
      if (u == S) sent[v - 1] += push;
      else if (v == T) received[u - 1 - n] += push;
      else if (u <= n) flow(static_cast<Eigen::Index>(u - 1), static_cast<Eigen::Index>(v - 1 - n)) += push;
      else flow(static_cast<Eigen::Index>(v - 1), static_cast<Eigen::Index>(u - 1 - n)) -= push;
    }
    double out = std::accumulate(sent.begin(), sent.end(), 0.0);
    remaining = mu.sum() - out;
  }

  std::vector<TransportEntry> entries;
  for (Eigen::Index i = 0; i < C.rows(); ++i)
    for (Eigen::Index j = 0; j < C.cols(); ++j)
      if (flow(i, j) > kMassEpsilon) entries.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), flow(i, j)});
  return entries;
}

struct SortedRow {
  std::vector<double> value, weight;
};

std::vector<SortedRow> sort_rows(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
  std::vector<SortedRow> out(static_cast<std::size_t>(X.rows()));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return X(r, a) < X(r, b); });
    for (Eigen::Index c : order) {
      out[static_cast<std::size_t>(r)].value.push_back(X(r, c));
      out[static_cast<std::size_t>(r)].weight.push_back(w(c));
    }
  }
  return out;
}

// ∫|F_a − F_b| for two sorted weighted samples, by merging breakpoints.
double w1_sorted(const SortedRow& a, const SortedRow& b) {
  std::size_t i = 0, j = 0;
  double Fa = 0.0, Fb = 0.0, total = 0.0, x = 0.0;
  bool started = false;
  while (i < a.value.size() || j < b.value.size()) {
    bool take_a = j >= b.value.size() || (i < a.value.size() && a.value[i] <= b.value[j]);
    double nx = take_a ? a.value[i] : b.value[j];
    if (started) total += std::abs(Fa - Fb) * (nx - x);
    started = true;
    x = nx;
    if (take_a) Fa += a.weight[i++];
    else Fb += b.weight[j++];
  }
  return total;
}

// T(s)(i,j) = Σ_e w_e |A(i,k_e) − B(j,l_e)| for a sparse coupling s.
Eigen::MatrixXd sparse_gradient(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const std::vector<TransportEntry>& s) {
  const auto E = static_cast<Eigen::Index>(s.size());
  RowMajor Ae(A.rows(), E), Be(B.rows(), E);
  Eigen::RowVectorXd w(E);
  for (Eigen::Index e = 0; e < E; ++e) {
    const auto& t = s[static_cast<std::size_t>(e)];
    Ae.col(e) = A.col(static_cast<Eigen::Index>(t.row));
    Be.col(e) = B.col(static_cast<Eigen::Index>(t.col));
    w(e) = t.mass;
  }
  Eigen::MatrixXd T(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j) T(i, j) = (Ae.row(i) - Be.row(j)).cwiseAbs().dot(w);
  return T;
}

// T(μνᵀ)(i,j) = E|X − Y| with X over row i of A (weights μ) and Y over row j of B (weights ν).
Eigen::MatrixXd product_gradient(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& mu,
                                 const Eigen::VectorXd& nu) {
  auto sa = sort_rows(A, mu);
  auto sb = sort_rows(B, nu);
  Eigen::MatrixXd T(A.rows(), B.rows());
  for (std::size_t i = 0; i < sa.size(); ++i)
    for (std::size_t j = 0; j < sb.size(); ++j) {
      const SortedRow& a = sa[i];
      const SortedRow& b = sb[j];
      double total = 0.0;
      for (std::size_t l = 0; l < b.value.size(); ++l) total += b.weight[l] * b.value[l];
      double F = 0.0, Sm = 0.0, acc = 0.0;
      std::size_t p = 0;
      for (std::size_t k = 0; k < a.value.size(); ++k) {
        while (p < b.value.size() && b.value[p] <= a.value[k]) {
          F += b.weight[p];
          Sm += b.weight[p] * b.value[p];
          ++p;
        }
        acc += a.weight[k] * (a.value[k] * (2.0 * F - 1.0) + total - 2.0 * Sm);
      }
      T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::max(acc, 0.0);
    }
  return T;
}

double pair_with(const Eigen::MatrixXd& T, const std::vector<TransportEntry>& s) {
  double v = 0.0;
  for (const auto& e : s) v += e.mass * T(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col));
  return v;
}

GwResult conditional_gradient(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& mu,
                              const Eigen::VectorXd& nu, Eigen::MatrixXd T, double f, const GwOptions& options) {
  GwResult r;
  r.value = f;
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    r.iterations = it;
    auto s = optimal_transport(T, mu, nu);
    double c = pair_with(T, s);
    if (f - c <= options.tolerance) {
      r.converged = true;
      break;
    }
    Eigen::MatrixXd Ts = sparse_gradient(A, B, s);
    double e = pair_with(Ts, s);
    double q = f - 2.0 * c + e;
    double gamma = q > 0.0 ? std::min(1.0, (f - c) / q) : 1.0;
    double next = f + 2.0 * gamma * (c - f) + gamma * gamma * q;
    T = (1.0 - gamma) * T + gamma * Ts;
    double change = f - next;
    f = next;
    r.value = f;
    if (std::abs(change) < options.tolerance) {
      r.converged = true;
      break;
    }
  }
  r.value = std::max(r.value, 0.0);
  return r;
}

bool lexicographically_greater(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return std::lexicographical_compare(b.data(), b.data() + b.size(), a.data(), a.data() + a.size());
}

}  // namespace

std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost) {
  require(cost.rows() == cost.cols(), ErrorCode::ShapeMismatch, "assignment needs a square cost matrix");
  const auto n = static_cast<std::size_t>(cost.rows());
  const RowMajor a = cost;
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      const double* row = a.data() + (i0 - 1) * n;
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      require(j1 != 0, ErrorCode::NumericalFailure, "assignment cost is not finite");
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> result(n);
  for (std::size_t j = 1; j <= n; ++j) result[p[j] - 1] = j - 1;
  return result;
}

std::vector<TransportEntry> optimal_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu,
                                              const Eigen::VectorXd& nu) {
  require(cost.rows() == mu.size() && cost.cols() == nu.size(), ErrorCode::ShapeMismatch,
          "transport cost does not match marginals");
  require(mu.size() > 0 && nu.size() > 0, ErrorCode::EmptyMatrix, "transport between empty measures");
  require((mu.array() >= 0.0).all() && (nu.array() >= 0.0).all(), ErrorCode::InvariantViolation,
          "marginals must be nonnegative");
  require(std::abs(mu.sum() - nu.sum()) <= 1e-9 * std::max(1.0, mu.sum()), ErrorCode::InvariantViolation,
          "marginals must have equal mass");
  require(cost.allFinite(), ErrorCode::NumericalFailure, "transport cost is not finite");
  if (mu.size() == nu.size() && is_uniform(mu) && is_uniform(nu)) {
    auto assign = hungarian(cost);
    std::vector<TransportEntry> out;
    const double w = 1.0 / static_cast<double>(assign.size());
    for (std::size_t i = 0; i < assign.size(); ++i) out.push_back({i, assign[i], w});
    return out;
  }
  return min_cost_flow(cost, mu, nu);
}

double wasserstein1_1d(std::vector<double> a, const Eigen::VectorXd& wa, std::vector<double> b, const Eigen::VectorXd& wb) {
  require(a.size() == static_cast<std::size_t>(wa.size()) && b.size() == static_cast<std::size_t>(wb.size()),
          ErrorCode::ShapeMismatch, "sample and weight sizes differ");
  auto as = sort_rows(Eigen::Map<Eigen::RowVectorXd>(a.data(), static_cast<Eigen::Index>(a.size())), wa);
  auto bs = sort_rows(Eigen::Map<Eigen::RowVectorXd>(b.data(), static_cast<Eigen::Index>(b.size())), wb);
  return w1_sorted(as.front(), bs.front());
}

double gw_objective(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& P) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      if (P(i, j) == 0.0) continue;
      for (Eigen::Index k = 0; k < A.rows(); ++k)
        for (Eigen::Index l = 0; l < B.rows(); ++l) total += std::abs(A(i, k) - B(j, l)) * P(i, j) * P(k, l);
    }
  return total;
}

GwResult gromov_wasserstein(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& mu,
                            const Eigen::VectorXd& nu, const GwOptions& options) {
  require(A.rows() == A.cols() && B.rows() == B.cols(), ErrorCode::ShapeMismatch, "distance matrices must be square");
  require(A.rows() == mu.size() && B.rows() == nu.size(), ErrorCode::ShapeMismatch, "weights do not match matrices");
  require(A.rows() > 0 && B.rows() > 0, ErrorCode::EmptyMatrix, "empty metric space");
  require(A.allFinite() && B.allFinite(), ErrorCode::NumericalFailure, "distance matrix is not finite");

  bool swap = A.rows() > B.rows() ||
              (A.rows() == B.rows() && (lexicographically_greater(A, B) || (A == B && lexicographically_greater(mu, nu))));
  if (swap) return gromov_wasserstein(B, A, nu, mu, options);

  // Start 1: product coupling.
  Eigen::MatrixXd T0 = product_gradient(A, B, mu, nu);
  double f0 = mu.dot(T0 * nu);
  GwResult best = conditional_gradient(A, B, mu, nu, std::move(T0), f0, options);

  // Start 2: coupling that matches rows with similar distance profiles.
  Eigen::MatrixXd profile(A.rows(), B.rows());
  const auto sa = sort_rows(A, mu);
  const auto sb = sort_rows(B, nu);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j)
      profile(i, j) = w1_sorted(sa[static_cast<std::size_t>(i)], sb[static_cast<std::size_t>(j)]);
  auto start = optimal_transport(profile, mu, nu);
  Eigen::MatrixXd T1 = sparse_gradient(A, B, start);
  double f1 = pair_with(T1, start);
  GwResult second = conditional_gradient(A, B, mu, nu, std::move(T1), f1, options);

  if (second.value < best.value) best = second;
  return best;
}

}  // namespace stratgeo
