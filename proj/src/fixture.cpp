#include "stratgeo/fixture.hpp"

#include <cmath>
#include <fstream>

#include "stratgeo/error.hpp"
#include "stratgeo/pipeline.hpp"
#include "stratgeo/rng.hpp"

namespace stratgeo {

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, rng::SplitMix64& gen) {
  Eigen::MatrixXd G(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) G(i, j) = rng::normal(gen);
  return G;
}

// Uniform sample from the d-ball of the given radius.
Eigen::VectorXd ball_point(Eigen::Index d, double radius, rng::SplitMix64& gen) {
  Eigen::VectorXd v = gaussian(d, 1, gen);
  v.normalize();
  return v * radius * std::pow(rng::uniform(gen), 1.0 / static_cast<double>(d));
}

TokenTensor token_tensor(const Eigen::MatrixXd& rows, std::size_t batch, std::size_t seq,
                         const std::vector<std::uint8_t>& mask) {
  TokenTensor t;
  t.batch_size = batch;
  t.seq_len = seq;
  t.width = static_cast<std::size_t>(rows.cols());
  t.data.resize(batch * seq * t.width);
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index c = 0; c < rows.cols(); ++c)
      t.data[static_cast<std::size_t>(i) * t.width + static_cast<std::size_t>(c)] = static_cast<float>(rows(i, c));
  t.mask = mask;
  return t;
}

}  // namespace

Eigen::MatrixXd random_orthogonal(std::size_t n, std::uint64_t seed) {
  rng::SplitMix64 gen(seed);
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(N, N, gen));
  Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd& R = qr.matrixQR();
  for (Eigen::Index i = 0; i < N; ++i)
    if (R(i, i) < 0.0) Q.col(i) *= -1.0;
  return Q;
}

nlohmann::json FixtureTruth::to_json(std::uint64_t seed, const FixtureShape& shape) const {
  return {{"seed", seed},
          {"d_model", shape.d_model},
          {"d_sae", shape.d_sae},
          {"batch", shape.batch},
          {"seq", shape.seq},
          {"masked_positions", {0}},
          {"clusters", clusters},
          {"dims", dims},
          {"radius", shape.radius},
          {"separation", shape.separation},
          {"labels", labels}};
}

SyntheticFixture make_synthetic_fixture(std::uint64_t seed, const FixtureShape& shape) {
  require(shape.d_sae == 4 * shape.d_model, ErrorCode::InvariantViolation, "fixture SAE needs d_sae = 4 d_model");
  require(shape.clusters * (1 + shape.cluster_dim) <= shape.d_model, ErrorCode::InvariantViolation,
          "fixture subspaces do not fit in d_model");
  require(shape.seq >= 2, ErrorCode::InvariantViolation, "fixture needs at least two positions");
  const auto d = static_cast<Eigen::Index>(shape.d_model);
  rng::SplitMix64 gen(rng::derive_seed(seed, {"fixture", "points"}));
  const Eigen::MatrixXd frame = random_orthogonal(shape.d_model, rng::derive_seed(seed, {"fixture", "frame"}));

  // Center k sits on frame column k; its subspace uses columns after the centers.
  const double center_norm = shape.separation * shape.radius;
  std::vector<Eigen::VectorXd> centers;
  std::vector<Eigen::MatrixXd> bases;
  for (std::size_t k = 0; k < shape.clusters; ++k) {
    centers.emplace_back(center_norm * frame.col(static_cast<Eigen::Index>(k)));
    bases.emplace_back(frame.middleCols(static_cast<Eigen::Index>(shape.clusters + k * shape.cluster_dim),
                                        static_cast<Eigen::Index>(shape.cluster_dim)));
  }
  const Eigen::VectorXd bos = 3.0 * center_norm * Eigen::VectorXd::Ones(d) / std::sqrt(static_cast<double>(d));

  const std::size_t tokens = shape.batch * shape.seq;
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(tokens), d);
  std::vector<std::uint8_t> mask(tokens, 1);
  FixtureTruth truth;
  truth.clusters = shape.clusters;
  truth.dims.assign(shape.clusters, shape.cluster_dim);
  std::size_t kept = 0;
  for (std::size_t t = 0; t < tokens; ++t) {
    if (t % shape.seq == 0) {
      mask[t] = 0;
      rows.row(static_cast<Eigen::Index>(t)) = bos.transpose();
      continue;
    }
    const std::size_t k = kept++ % shape.clusters;
    Eigen::VectorXd z = ball_point(static_cast<Eigen::Index>(shape.cluster_dim), shape.radius, gen);
    rows.row(static_cast<Eigen::Index>(t)) = (centers[k] + bases[k] * z).transpose();
    truth.labels.push_back(static_cast<int>(k));
  }

  SaeParams sae;
  const Eigen::MatrixXd Q1 = random_orthogonal(shape.d_model, rng::derive_seed(seed, {"fixture", "q1"}));
  const Eigen::MatrixXd Q2 = random_orthogonal(shape.d_model, rng::derive_seed(seed, {"fixture", "q2"}));
  sae.W_enc.resize(4 * d, d);
  sae.W_enc << Q1, -Q1, Q2, -Q2;
  sae.W_dec = sae.W_enc.transpose() / 2.0;
  sae.b_enc = Eigen::VectorXd::Zero(4 * d);
  sae.b_dec = Eigen::VectorXd::Zero(d);
  sae.nonlinearity = Relu{};

  SyntheticFixture out;
  add_token_tensor(out.bundle, token_tensor(rows, shape.batch, shape.seq, mask), "resid", "mask");
  add_sae_arrays(out.bundle, sae);
  out.bundle.metadata() = {{"model", "synthetic"}, {"concept", "planted"}, {"nonlinearity", "relu"},
                           {"seed", std::to_string(seed)}};
  out.truth = std::move(truth);
  return out;
}

void write_fixture(const std::filesystem::path& dir, std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::IoError, "cannot create " + dir.string());
  FixtureShape shape;
  auto fx = make_synthetic_fixture(seed, shape);
  save_bundle(fx.bundle, dir / "fixture.stg");

  auto write_json = [](const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream f(p);
    require(static_cast<bool>(f), ErrorCode::IoError, "cannot write " + p.string());
    f << j.dump(2) << '\n';
    require(static_cast<bool>(f), ErrorCode::IoError, "cannot write " + p.string());
  };
  write_json(dir / "fixture_truth.json", fx.truth.to_json(seed, shape));

  RunConfig cfg;
  cfg.seed = seed;
  cfg.output_dir = "out";
  cfg.noise_top_k = 8;
  cfg.bundles.push_back({"synthetic", "planted", "fixture.stg", Relu{}});
  write_json(dir / "config.json", config_to_json(cfg));
}

OverlapInstance make_overlap_instance(std::uint64_t seed) {
  constexpr Eigen::Index d = 16, M = 64, K = 3, batch = 6, seq = 10;
  constexpr double offset = 20.0;
  const Eigen::MatrixXd Q = random_orthogonal(d, rng::derive_seed(seed, {"overlap", "frame"}));
  const Eigen::MatrixXd U = Q.leftCols(K);            // per-cluster error directions
  const Eigen::MatrixXd B = Q.rightCols(d - K);       // shared subspace the encoder sees
  rng::SplitMix64 gen(rng::derive_seed(seed, {"overlap", "points"}));

  OverlapInstance out;
  SaeParams& p = out.params;
  const Eigen::Index shared = d - K;
  p.W_enc = Eigen::MatrixXd::Zero(M, d);
  p.W_enc.topRows(shared) = B.transpose();
  p.W_enc.middleRows(shared, shared) = -B.transpose();
  p.b_enc = Eigen::VectorXd::Zero(M);
  p.b_enc.tail(M - 2 * shared).setConstant(-100.0);
  p.W_dec = Eigen::MatrixXd::Zero(d, M);
  p.W_dec.leftCols(shared) = B;
  p.W_dec.middleCols(shared, shared) = -B;
  p.W_dec.middleCols(2 * shared, K) = U;
  for (Eigen::Index j = 2 * shared + K; j < M; ++j) {
    Eigen::VectorXd v = B * gaussian(shared, 1, gen);
    p.W_dec.col(j) = v.normalized();
  }
  p.b_dec = Eigen::VectorXd::Zero(d);
  p.nonlinearity = Relu{};

  const Eigen::VectorXd common = B * (2.0 * gaussian(shared, 1, gen));
  Eigen::MatrixXd rows(batch * seq, d);
  out.labels.K = static_cast<int>(K);
  for (Eigen::Index t = 0; t < batch * seq; ++t) {
    const Eigen::Index k = t % K;
    rows.row(t) = (common + B * gaussian(shared, 1, gen) + offset * U.col(k)).transpose();
    out.labels.labels.push_back(static_cast<int>(k));
  }
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(batch * seq), 1);
  out.x = token_tensor(rows, batch, seq, mask);
  out.latent = encode(p, out.x);
  return out;
}

}  // namespace stratgeo
