// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "common/support.hpp"
#include "stratgeo/fixture.hpp"
#include "stratgeo/geostruct.hpp"
#include "stratgeo/intervene.hpp"
#include "stratgeo/perturb.hpp"
#include "stratgeo/saecore.hpp"
#include "stratgeo/strata.hpp"
#include "stratgeo/transport.hpp"

using namespace stratgeo;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Rank oracle

// Tucker tensor with orthonormal factors and a random core whose mode
// unfoldings have ranks (r1, r2, r3). Cores whose smallest planted singular
// value falls below `min_planted` (relative to the largest) are resampled.
struct PlantedTensor {
  TokenTensor t;
  std::array<std::size_t, 3> ranks{};
};

Eigen::MatrixXd core_unfolding(const std::vector<double>& core, std::array<Eigen::Index, 3> r, int mode) {
  const Eigen::Index rows = r[static_cast<std::size_t>(mode)];
  Eigen::MatrixXd F(rows, r[0] * r[1] * r[2] / rows);
  for (Eigen::Index a = 0; a < r[0]; ++a)
    for (Eigen::Index b = 0; b < r[1]; ++b)
      for (Eigen::Index c = 0; c < r[2]; ++c) {
        double v = core[static_cast<std::size_t>((a * r[1] + b) * r[2] + c)];
        if (mode == 0) F(a, b * r[2] + c) = v;
        else if (mode == 1) F(b, a * r[2] + c) = v;
        else F(c, a * r[1] + b) = v;
      }
  return F;
}

PlantedTensor planted_tensor(std::uint64_t seed, double min_planted) {
  constexpr Eigen::Index I1 = 16, I2 = 16, I3 = 32;
  rng::SplitMix64 gen(rng::derive_seed(seed, {"acceptance", "rank"}));
  std::array<Eigen::Index, 3> r{};
  do {
    r = {static_cast<Eigen::Index>(1 + rng::below(gen, 8)), static_cast<Eigen::Index>(1 + rng::below(gen, 8)),
         static_cast<Eigen::Index>(1 + rng::below(gen, 16))};
  } while (r[0] > r[1] * r[2] || r[1] > r[0] * r[2] || r[2] > r[0] * r[1]);

  std::vector<double> core(static_cast<std::size_t>(r[0] * r[1] * r[2]));
  double scale = 0.0;
  for (;;) {
    for (double& v : core) v = rng::normal(gen);
    double smallest = 1.0;
    scale = 0.0;
    for (int m = 0; m < 3; ++m) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(core_unfolding(core, r, m));
      const auto& s = svd.singularValues();
      scale = std::max(scale, s(0));
      smallest = std::min(smallest, s(r[static_cast<std::size_t>(m)] - 1) / s(0));
    }
    if (smallest >= min_planted) break;
  }

  const Eigen::MatrixXd U1 = testing::random_rotation(I1, gen()).leftCols(r[0]);
  const Eigen::MatrixXd U2 = testing::random_rotation(I2, gen()).leftCols(r[1]);
  const Eigen::MatrixXd U3 = testing::random_rotation(I3, gen()).leftCols(r[2]);

  PlantedTensor out;
  out.ranks = {static_cast<std::size_t>(r[0]), static_cast<std::size_t>(r[1]), static_cast<std::size_t>(r[2])};
  TokenTensor& t = out.t;
  t.batch_size = I1;
  t.seq_len = I2;
  t.width = I3;
  t.data.assign(static_cast<std::size_t>(I1 * I2 * I3), 0.0f);
  t.mask.assign(static_cast<std::size_t>(I1 * I2), 1);
  for (Eigen::Index i = 0; i < I1; ++i)
    for (Eigen::Index j = 0; j < I2; ++j)
      for (Eigen::Index k = 0; k < I3; ++k) {
        double v = 0.0;
        for (Eigen::Index a = 0; a < r[0]; ++a)
          for (Eigen::Index b = 0; b < r[1]; ++b) {
            double ab = U1(i, a) * U2(j, b);
            for (Eigen::Index c = 0; c < r[2]; ++c)
              v += core[static_cast<std::size_t>((a * r[1] + b) * r[2] + c)] * ab * U3(k, c);
          }
        t.data[static_cast<std::size_t>((i * I2 + j) * I3 + k)] = static_cast<float>(v / scale);
      }
  return out;
}

Outcome rank_oracle() {
  // Planted singular values lie in [0.1, 1] after scaling; the floor sits at
  // sqrt(epsilon) ~ 3e-3, a gap above 30x.
  const auto t0 = Clock::now();
  std::size_t hits = 0;
  constexpr std::size_t trials = 200;
  for (std::uint64_t seed = 0; seed < trials; ++seed) {
    auto p = planted_tensor(seed, 0.1);
    auto got = rank_triplet(p.t);
    if (got.r == p.ranks) ++hits;
  }
  double secs = seconds_since(t0);
  return {hits >= 198 && secs < 10.0,
          std::to_string(hits) + "/200 exact, " + testing::fixed(secs, 2) + " s (need >= 198, < 10 s)"};
}

// ---------------------------------------------------------------------------
// Noise monotonicity on the fixture SAE

Outcome noise_monotonicity() {
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto fx = make_synthetic_fixture(seed);
    auto x = activation_from_bundle(fx.bundle);
    auto params = sae_from_bundle(fx.bundle, Relu{});
    NoiseSpec spec;
    spec.top_k = 8;
    spec.seed = seed;
    const std::vector<double> levels{0.0, 1.0};
    auto rec = case1_sweep(x, params, levels, spec, {});
    if (rec[1].triplet.r[2] >= rec[0].triplet.r[2]) ++ok;
  }
  return {ok >= 95, std::to_string(ok) + "/100 seeds with r3(1) >= r3(0) (need >= 95)"};
}

// ---------------------------------------------------------------------------
// Bures metric axioms

Eigen::MatrixXd random_spd(Eigen::Index n, rng::SplitMix64& gen) {
  Eigen::MatrixXd G(n, n + 1);
  for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = rng::normal(gen);
  return G * G.transpose() / static_cast<double>(n) + 0.05 * Eigen::MatrixXd::Identity(n, n);
}

Outcome bures_axioms() {
  rng::SplitMix64 gen(rng::derive_seed(0, {"acceptance", "bures"}));
  double worst_sym = 0.0, worst_tri = 0.0, worst_self = 0.0, worst_diag = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng::below(gen, 16));
    SspdMatrix A{random_spd(n, gen)}, B{random_spd(n, gen)}, C{random_spd(n, gen)};
    double ab = bures_distance(A, B), ba = bures_distance(B, A);
    double bc = bures_distance(B, C), ac = bures_distance(A, C);
    worst_sym = std::max(worst_sym, std::abs(ab - ba));
    worst_tri = std::max({worst_tri, ac - ab - bc, ab - ac - bc, bc - ab - ac});
    worst_self = std::max(worst_self, bures_distance(A, A));

    Eigen::VectorXd a(n), b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a(i) = 0.01 + 10.0 * rng::uniform(gen);
      b(i) = 0.01 + 10.0 * rng::uniform(gen);
    }
    double closed = (a.cwiseSqrt() - b.cwiseSqrt()).norm();
    double got = bures_distance(SspdMatrix{Eigen::MatrixXd(a.asDiagonal())}, SspdMatrix{Eigen::MatrixXd(b.asDiagonal())});
    worst_diag = std::max(worst_diag, std::abs(got - closed));
  }
  bool pass = worst_sym <= 1e-8 && worst_tri <= 1e-8 && worst_self <= 1e-9 && worst_diag <= 1e-10;
  return {pass, "max |d(A,B)-d(B,A)| " + testing::sci(worst_sym) + ", triangle excess " + testing::sci(worst_tri) +
                    ", d(A,A) " + testing::sci(worst_self) + ", diagonal error " + testing::sci(worst_diag)};
}

// ---------------------------------------------------------------------------
// Betti-0 against a union-find threshold oracle

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

std::size_t components_at(const Eigen::MatrixXd& X, double tau) {
  const auto n = static_cast<std::size_t>(X.rows());
  UnionFind uf(n);
  std::size_t count = n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((X.row(static_cast<Eigen::Index>(i)) - X.row(static_cast<Eigen::Index>(j))).norm() <= tau && uf.unite(i, j))
        --count;
  return count;
}

Outcome betti0_equivalence() {
  rng::SplitMix64 gen(rng::derive_seed(0, {"acceptance", "betti0"}));
  std::size_t agree = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng::below(gen, 200));
    const auto d = static_cast<Eigen::Index>(1 + rng::below(gen, 4));
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng::uniform(gen);
    const double tau = 0.02 + 0.3 * rng::uniform(gen);
    if (betti0(X, tau) == components_at(X, tau)) ++agree;
  }
  return {agree == 500, std::to_string(agree) + "/500 clouds match exactly"};
}

// ---------------------------------------------------------------------------
// MST weight against exhaustive spanning-tree enumeration

double exhaustive_mst(const Eigen::MatrixXd& C) {
  const auto K = static_cast<std::size_t>(C.rows());
  if (K == 1) return 0.0;
  auto dist = [&](std::size_t a, std::size_t b) {
    return (C.row(static_cast<Eigen::Index>(a)) - C.row(static_cast<Eigen::Index>(b))).norm();
  };
  if (K == 2) return dist(0, 1);
  std::vector<std::size_t> code(K - 2, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    // Decode the Pruefer sequence into its tree and sum the edge lengths.
    std::vector<std::size_t> degree(K, 1);
    for (auto c : code) ++degree[c];
    double w = 0.0;
    for (auto c : code) {
      std::size_t leaf = 0;
      while (degree[leaf] != 1) ++leaf;
      w += dist(leaf, c);
      --degree[leaf];
      --degree[c];
    }
    std::size_t u = K, v = K;
    for (std::size_t i = 0; i < K; ++i)
      if (degree[i] == 1) (u == K ? u : v) = i;
    best = std::min(best, w + dist(u, v));
    std::size_t pos = 0;
    while (pos < code.size() && ++code[pos] == K) code[pos++] = 0;
    if (pos == code.size()) break;
  }
  return best;
}

Outcome mst_exactness() {
  rng::SplitMix64 gen(rng::derive_seed(0, {"acceptance", "mst"}));
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto K = static_cast<Eigen::Index>(1 + rng::below(gen, 8));
    const auto d = static_cast<Eigen::Index>(1 + rng::below(gen, 5));
    Eigen::MatrixXd C(K, d);
    for (Eigen::Index i = 0; i < C.size(); ++i) C.data()[i] = rng::normal(gen);
    double oracle = exhaustive_mst(C);
    double got = mst_weight(C);
    double rel = oracle > 0.0 ? std::abs(got - oracle) / oracle : std::abs(got);
    worst = std::max(worst, rel);
  }
  return {worst <= 1e-12, "max relative error " + testing::sci(worst) + " over 100 sets, K <= 8"};
}

// ---------------------------------------------------------------------------
// HDBSCAN recovery

Outcome hdbscan_recovery() {
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    constexpr Eigen::Index per = 100, d = 2;
    Eigen::MatrixXd X = testing::gaussian_matrix(2 * per, d, rng::derive_seed(seed, {"acceptance", "blobs"}), 1.0);
    std::vector<int> truth(2 * per, 0);
    for (Eigen::Index i = per; i < 2 * per; ++i) {
      X(i, 0) += 10.0;
      truth[static_cast<std::size_t>(i)] = 1;
    }
    auto labels = hdbscan(X, 10);
    if (labels.K == 2 && adjusted_rand_index(labels.labels, truth) > 0.99) ++ok;
  }
  Eigen::MatrixXd few = testing::gaussian_matrix(5, 2, 1);
  auto small = hdbscan(few, 10);
  bool all_noise = small.K == 0 && std::all_of(small.labels.begin(), small.labels.end(), [](int l) { return l == -1; });
  return {ok == 50 && all_noise, std::to_string(ok) + "/50 seeds with K = 2 and ARI > 0.99; N < min_cluster_size " +
                                     (all_noise ? "all noise" : "NOT all noise")};
}

// ---------------------------------------------------------------------------
// TwoNN accuracy

Outcome twonn_accuracy() {
  constexpr Eigen::Index N = 2000, D = 10;
  std::string detail;
  bool pass = true;
  for (Eigen::Index d = 1; d <= 3; ++d) {
    std::size_t within = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto s = rng::derive_seed(seed, {"acceptance", "twonn", std::to_string(d)});
      Eigen::MatrixXd Z = testing::gaussian_matrix(N, d, s);
      Eigen::MatrixXd frame = testing::random_rotation(D, s + 1).leftCols(d);
      double est = twonn_id(Z * frame.transpose());
      if (std::abs(est - static_cast<double>(d)) <= 0.3) ++within;
    }
    pass = pass && within >= 45;
    detail += (d > 1 ? ", " : "") + std::string("d=") + std::to_string(d) + ": " + std::to_string(within) + "/50";
  }
  return {pass, detail + " within 0.3 (need >= 45 each)"};
}

// ---------------------------------------------------------------------------
// Gromov-Wasserstein

double exhaustive_permutation_gw(const MetricMatrix& a, const MetricMatrix& b) {
  const auto n = a.size();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < n; ++k)
        s += std::abs(a.D(i, k) - b.D(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]));
    best = std::min(best, s / static_cast<double>(n * n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Outcome gw_solver() {
  rng::SplitMix64 gen(rng::derive_seed(0, {"acceptance", "gw"}));
  double worst_self = 0.0, worst_perm = 0.0, worst_oracle = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng::below(gen, 11));
    Eigen::MatrixXd P = testing::gaussian_matrix(n, 3, gen());
    auto a = normalized_distance_matrix(P);
    worst_self = std::max(worst_self, gw_distance(a, a));

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng::shuffle(std::span<Eigen::Index>(perm), gen);
    auto b = normalized_distance_matrix(P(perm, Eigen::all));
    worst_perm = std::max(worst_perm, gw_distance(a, b));
    // Exhaustive search is affordable up to 8 points; beyond that the planted
    // permutation itself certifies the zero optimum.
    if (n <= 8) {
      worst_oracle = std::max(worst_oracle, exhaustive_permutation_gw(a, b));
    } else {
      Eigen::MatrixXd coupling = Eigen::MatrixXd::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) coupling(perm[static_cast<std::size_t>(i)], i) = 1.0 / static_cast<double>(n);
      worst_oracle = std::max(worst_oracle, gw_objective(a.D, b.D, coupling));
    }
  }
  auto big_a = normalized_distance_matrix(testing::gaussian_matrix(256, 8, 11));
  auto big_b = normalized_distance_matrix(testing::gaussian_matrix(256, 8, 12));
  const auto t0 = Clock::now();
  double big = gw_distance(big_a, big_b);
  double secs = seconds_since(t0);
  bool pass = worst_self <= 1e-8 && worst_perm <= 1e-6 && worst_oracle <= 1e-12 && secs < 5.0 && std::isfinite(big);
  return {pass, "self " + testing::sci(worst_self) + ", permuted " + testing::sci(worst_perm) + ", oracle optimum " +
                    testing::sci(worst_oracle) + ", N=256 call " + testing::fixed(secs, 2) + " s"};
}

// ---------------------------------------------------------------------------
// Procrustes

// Disparity from the nuclear norm of the cross-covariance, which is computed
// from the eigenvalues of MᵀM rather than an SVD.
double procrustes_oracle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd Ac = A.rowwise() - A.colwise().mean();
  Eigen::MatrixXd Bc = B.rowwise() - B.colwise().mean();
  Eigen::MatrixXd M = Bc.transpose() * Ac;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M.transpose() * M);
  double nuclear = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (Ac.squaredNorm() + Bc.squaredNorm() - 2.0 * nuclear) / Ac.squaredNorm();
}

Outcome procrustes() {
  rng::SplitMix64 gen(rng::derive_seed(0, {"acceptance", "procrustes"}));
  double worst_rigid = 0.0, worst_noisy = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<Eigen::Index>(2 + rng::below(gen, 5));
    const auto n = static_cast<Eigen::Index>(d + 2 + rng::below(gen, 10));
    Eigen::MatrixXd A = testing::gaussian_matrix(n, d, gen());
    Eigen::MatrixXd R = testing::random_rotation(d, gen());
    Eigen::RowVectorXd T = testing::gaussian_matrix(1, d, gen(), 5.0).row(0);
    Eigen::MatrixXd rigid = (A * R).rowwise() + T;
    worst_rigid = std::max(worst_rigid, procrustes_disparity(A, rigid));

    Eigen::MatrixXd noisy = rigid + testing::gaussian_matrix(n, d, gen(), 0.2);
    worst_noisy = std::max(worst_noisy, std::abs(procrustes_disparity(A, noisy) - procrustes_oracle(A, noisy)));
  }
  return {worst_rigid <= 1e-9 && worst_noisy <= 1e-6,
          "rigid " + testing::sci(worst_rigid) + ", noisy vs oracle " + testing::sci(worst_noisy)};
}

// ---------------------------------------------------------------------------
// Intervention

Outcome intervention() {
  std::size_t monotone = 0;
  bool null_exact = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto t = testing::token_tensor(3, 10, 6, rng::derive_seed(seed, {"acceptance", "intervene"}), 0.5);
    ClusterAssignment labels;
    labels.K = 3;
    for (std::size_t i = 0; i < 30; ++i) {
      t.data[i * 6 + i % 3] += 4.0f;
      labels.labels.push_back(static_cast<int>(i % 3));
    }
    SaeParams p;
    p.W_enc = testing::random_rotation(6, seed + 1);
    p.b_enc = Eigen::VectorXd::Zero(6);
    p.W_dec = p.W_enc.transpose();
    p.b_dec = Eigen::VectorXd::Zero(6);
    p.nonlinearity = IdentityActivation{};
    auto latent = encode(p, t);

    InterventionConfig cfg;
    cfg.seed = seed;
    cfg.alpha = 0.5 + 0.01 * static_cast<double>(seed);
    cfg.loss_kind = seed % 2 ? LossKind::InvAedp : LossKind::Gw;
    auto rec = random_search_intervene(latent, labels, p, t, cfg);
    bool ok = rec.loss_trace.size() == cfg.iterations + 1;
    for (std::size_t i = 1; ok && i < rec.loss_trace.size(); ++i) ok = rec.loss_trace[i] <= rec.loss_trace[i - 1];
    if (ok) ++monotone;

    cfg.alpha = 0.0;
    auto null = random_search_intervene(latent, labels, p, t, cfg, true);
    double baseline = mse_rows(masked_rows(t), decode_rows(p, masked_rows(latent), std::nullopt));
    null_exact = null_exact && null.mse == baseline;
  }

  std::size_t negative = 0;
  constexpr std::size_t overlap_seeds = 50;
  for (std::uint64_t seed = 0; seed < overlap_seeds; ++seed) {
    auto inst = make_overlap_instance(seed);
    InterventionConfig base;
    base.seed = seed;
    auto res = case3_sweep(inst.latent, inst.labels, inst.params, inst.x, kDefaultAlphas, {LossKind::Gw}, base);
    if (res.correlation.front().second < 0.0) ++negative;
  }
  bool pass = monotone == 100 && null_exact && negative * 10 >= overlap_seeds * 9;
  return {pass, std::to_string(monotone) + "/100 monotone traces; alpha = 0 " +
                    (null_exact ? "reproduces" : "does NOT reproduce") + " baseline MSE; Pearson < 0 in " +
                    std::to_string(negative) + "/" + std::to_string(overlap_seeds) + " overlap seeds (need >= 90%)"};
}

// ---------------------------------------------------------------------------
// End-to-end determinism through the command-line tool

int run_command(const std::string& cmd) {
  int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  testing::TempDir dir("accept");
  const std::string cli = STRATGEO_CLI_PATH;
  if (run_command(cli + " fixture --seed 7 --out " + dir.path().string()) != 0) return {false, "fixture command failed"};
  double worst = 0.0;
  for (const char* out : {"run_a", "run_b"}) {
    const auto t0 = Clock::now();
    int rc = run_command(cli + " all --config " + (dir / "config.json").string() + " --out " + (dir / out).string());
    worst = std::max(worst, seconds_since(t0));
    if (rc != 0) return {false, std::string("`all` exited with ") + std::to_string(rc)};
  }
  std::size_t compared = 0;
  for (const char* csv : {"case1.csv", "case2.csv", "case3.csv", "case3_correlation.csv"}) {
    auto a = testing::read_file(dir / "run_a" / csv);
    auto b = testing::read_file(dir / "run_b" / csv);
    if (a.empty() || a != b) return {false, std::string(csv) + " differs between runs or is empty"};
    ++compared;
  }
  return {worst < 60.0, std::to_string(compared) + " CSVs byte-identical; slowest run " + testing::fixed(worst, 2) +
                            " s (need < 60 s)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"rank-oracle", rank_oracle},
      {"noise-monotonicity", noise_monotonicity},
      {"bures-metric-axioms", bures_axioms},
      {"betti0-equivalence", betti0_equivalence},
      {"mst-exactness", mst_exactness},
      {"hdbscan-recovery", hdbscan_recovery},
      {"twonn-accuracy", twonn_accuracy},
      {"gw-solver", gw_solver},
      {"procrustes", procrustes},
      {"intervention", intervention},
      {"determinism", determinism},
  };
  std::size_t failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
