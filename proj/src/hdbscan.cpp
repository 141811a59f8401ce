#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "stratgeo/error.hpp"
#include "stratgeo/geostruct.hpp"

namespace stratgeo {

namespace {

struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

struct CondensedRow {
  std::size_t parent = 0;
  std::size_t child = 0;
  double lambda = 0.0;
  std::size_t child_size = 0;
};

double to_lambda(double distance) { return 1.0 / std::max(distance, 1e-300); }

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd D(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    D(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) D(i, j) = D(j, i) = (X.row(i) - X.row(j)).norm();
  }
  return D;
}

// Single-linkage hierarchy over the mutual-reachability MST.
std::vector<Merge> single_linkage(const Eigen::MatrixXd& D, const std::vector<double>& core) {
  const auto n = static_cast<std::size_t>(D.rows());
  auto mrd = [&](std::size_t i, std::size_t j) {
    return std::max({D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), core[i], core[j]});
  };
  struct Edge {
    std::size_t a, b;
    double w;
  };
  std::vector<Edge> edges;
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t cur = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      double w = mrd(cur, j);
      if (w < best[j]) {
        best[j] = w;
        from[j] = cur;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    edges.push_back({std::min(from[next], next), std::max(from[next], next), best[next]});
    cur = next;
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    if (x.w != y.w) return x.w < y.w;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });

  std::vector<std::size_t> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> size(2 * n - 1, 1);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::vector<Merge> merges;
  merges.reserve(n - 1);
  for (const auto& e : edges) {
    std::size_t ra = find(e.a), rb = find(e.b);
    std::size_t node = n + merges.size();
    size[node] = size[ra] + size[rb];
    parent[ra] = parent[rb] = node;
    merges.push_back({ra, rb, e.w, size[node]});
  }
  return merges;
}

std::vector<CondensedRow> condense(const std::vector<Merge>& merges, std::size_t n, std::size_t min_cluster_size) {
  const std::size_t root = 2 * n - 2;
  auto node_size = [&](std::size_t node) { return node < n ? std::size_t{1} : merges[node - n].size; };
  auto leaves_under = [&](std::size_t node, auto&& visit) {
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
      std::size_t x = stack.back();
      stack.pop_back();
      if (x < n) {
        visit(x);
      } else {
        stack.push_back(merges[x - n].right);
        stack.push_back(merges[x - n].left);
      }
    }
  };

  std::vector<std::size_t> relabel(2 * n - 1, 0);
  relabel[root] = n;
  std::size_t next_label = n + 1;
  std::vector<CondensedRow> rows;
  std::deque<std::size_t> queue{root};
  while (!queue.empty()) {
    std::size_t node = queue.front();
    queue.pop_front();
    if (node < n) continue;
    const Merge& m = merges[node - n];
    double lambda = to_lambda(m.distance);
    std::size_t ls = node_size(m.left), rs = node_size(m.right);
    std::size_t label = relabel[node];
    auto spill = [&](std::size_t sub) {
      leaves_under(sub, [&](std::size_t leaf) { rows.push_back({label, leaf, lambda, 1}); });
    };
    if (ls >= min_cluster_size && rs >= min_cluster_size) {
      relabel[m.left] = next_label++;
      rows.push_back({label, relabel[m.left], lambda, ls});
      relabel[m.right] = next_label++;
      rows.push_back({label, relabel[m.right], lambda, rs});
      queue.push_back(m.left);
      queue.push_back(m.right);
    } else if (ls < min_cluster_size && rs < min_cluster_size) {
      spill(m.left);
      spill(m.right);
    } else if (ls < min_cluster_size) {
      relabel[m.right] = label;
      spill(m.left);
      queue.push_back(m.right);
    } else {
      relabel[m.left] = label;
      spill(m.right);
      queue.push_back(m.left);
    }
  }
  return rows;
}

std::vector<int> select_and_label(const std::vector<CondensedRow>& rows, std::size_t n) {
  const std::size_t root = n;
  std::size_t max_label = root;
  for (const auto& r : rows) max_label = std::max({max_label, r.parent, r.child});
  const std::size_t count = max_label - root + 1;
  auto idx = [&](std::size_t c) { return c - root; };

  std::vector<double> birth(count, 0.0), stability(count, 0.0);
  std::vector<std::vector<std::size_t>> children(count);
  for (const auto& r : rows)
    if (r.child >= n) {
      birth[idx(r.child)] = r.lambda;
      children[idx(r.parent)].push_back(r.child);
    }
  for (const auto& r : rows) stability[idx(r.parent)] += (r.lambda - birth[idx(r.parent)]) * static_cast<double>(r.child_size);

  std::vector<bool> selected(count, true);
  selected[0] = false;
  for (std::size_t c = max_label; c > root; --c) {
    double subtree = 0.0;
    for (std::size_t ch : children[idx(c)]) subtree += stability[idx(ch)];
    if (!children[idx(c)].empty() && subtree > stability[idx(c)]) {
      selected[idx(c)] = false;
      stability[idx(c)] = subtree;
    } else {
      std::vector<std::size_t> stack(children[idx(c)].begin(), children[idx(c)].end());
      while (!stack.empty()) {
        std::size_t x = stack.back();
        stack.pop_back();
        selected[idx(x)] = false;
        for (std::size_t ch : children[idx(x)]) stack.push_back(ch);
      }
    }
  }

  // Each node points to its condensed-tree parent unless it is a selected cluster.
  std::vector<std::size_t> up(max_label + 1, max_label + 1);
  for (const auto& r : rows) {
    bool child_selected = r.child >= n && selected[idx(r.child)];
    if (!child_selected) up[r.child] = r.parent;
  }
  std::vector<int> labels(n, -1);
  std::vector<int> cluster_label(count, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t x = i;
    while (up[x] != max_label + 1) x = up[x];
    if (x < n || x == root) continue;
    if (cluster_label[idx(x)] < 0) cluster_label[idx(x)] = next++;
    labels[i] = cluster_label[idx(x)];
  }
  return labels;
}

}  // namespace

ClusterAssignment hdbscan(const Eigen::MatrixXd& points, std::size_t min_cluster_size, std::size_t min_samples) {
  require(min_cluster_size >= 2, ErrorCode::InvariantViolation, "min_cluster_size must be at least 2");
  require(points.allFinite(), ErrorCode::InvariantViolation, "HDBSCAN input has non-finite entries");
  if (min_samples == 0) min_samples = min_cluster_size;
  const auto n = static_cast<std::size_t>(points.rows());
  ClusterAssignment out;
  out.labels.assign(n, -1);
  if (n < 2 || n < min_cluster_size) return out;

  Eigen::MatrixXd D = pairwise_distances(points);
  std::vector<double> core(n, 0.0);
  const std::size_t kth = std::min(min_samples, n) - 1;
  if (kth > 0)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(n);
      for (std::size_t j = 0; j < n; ++j) row[j] = D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(kth), row.end());
      core[i] = row[kth];
    }

  auto merges = single_linkage(D, core);
  auto rows = condense(merges, n, min_cluster_size);
  out.labels = select_and_label(rows, n);
  out.K = out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end()) + 1;
  return out;
}

}  // namespace stratgeo
