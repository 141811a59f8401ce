#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "common/support.hpp"
#include "stratgeo/saecore.hpp"

using namespace stratgeo;
using testing::error_code_of;

namespace {

SaeParams params_with(Eigen::MatrixXd W_enc, Nonlinearity n = Relu{}) {
  const auto M = W_enc.rows();
  const auto d = W_enc.cols();
  SaeParams p;
  p.W_enc = std::move(W_enc);
  p.b_enc = Eigen::VectorXd::Zero(M);
  p.W_dec = Eigen::MatrixXd::Zero(d, M);
  p.b_dec = Eigen::VectorXd::Zero(d);
  p.nonlinearity = n;
  return p;
}

ActivationTensor single_token(std::vector<float> v) {
  ActivationTensor x;
  x.batch_size = 1;
  x.seq_len = 1;
  x.width = v.size();
  x.data = std::move(v);
  x.mask = {1};
  return x;
}

LatentTensor latent_from_rows(const std::vector<std::vector<float>>& rows) {
  LatentTensor f;
  f.batch_size = 1;
  f.seq_len = rows.size();
  f.width = rows.front().size();
  for (const auto& r : rows) f.data.insert(f.data.end(), r.begin(), r.end());
  f.mask.assign(rows.size(), 1);
  return f;
}

}  // namespace

TEST_CASE("zero encoder yields an all-zero latent") {
  auto p = params_with(Eigen::MatrixXd::Zero(5, 3));
  auto x = testing::token_tensor(2, 3, 3, 1);
  auto f = encode(p, x);
  CHECK(f.width == 5);
  CHECK(std::all_of(f.data.begin(), f.data.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("hand-computed ReLU and TopK encodings") {
  Eigen::MatrixXd W(3, 2);
  W << 1, 0, 0, 1, -1, -1;
  auto x = single_token({1.0f, 2.0f});

  auto relu = encode(params_with(W, Relu{}), x);
  CHECK(relu.data == std::vector<float>{1.0f, 2.0f, 0.0f});

  auto top1 = encode(params_with(W, TopK{1}), x);
  CHECK(top1.data == std::vector<float>{0.0f, 2.0f, 0.0f});

  auto jump = encode(params_with(W, JumpRelu{1.0}), x);
  CHECK(jump.data == std::vector<float>{0.0f, 2.0f, 0.0f});
}

TEST_CASE("TopK breaks ties towards the lower index") {
  Eigen::MatrixXd W = Eigen::MatrixXd::Ones(4, 1);
  auto f = encode(params_with(W, TopK{2}), single_token({3.0f}));
  CHECK(f.data == std::vector<float>{3.0f, 3.0f, 0.0f, 0.0f});
}

TEST_CASE("TopK keeps at most k entries and they are the lexicographic argmax-k set") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Eigen::MatrixXd W = testing::gaussian_matrix(12, 6, seed);
    auto x = testing::token_tensor(2, 5, 6, 50 + seed);
    const std::size_t k = 1 + seed % 5;
    auto f = encode(params_with(W, TopK{k}), x);
    for (std::size_t t = 0; t < x.tokens(); ++t) {
      Eigen::VectorXd xv(6);
      for (int i = 0; i < 6; ++i) xv(i) = x.row(t)[static_cast<std::size_t>(i)];
      Eigen::VectorXd pre = W * xv;
      std::vector<int> order(12);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pre(a) > pre(b); });
      auto row = f.row(t);
      std::size_t nonzero = 0;
      for (int j = 0; j < 12; ++j) {
        bool kept = std::find(order.begin(), order.begin() + static_cast<long>(k), j) != order.begin() + static_cast<long>(k);
        if (kept) {
          CHECK(row[static_cast<std::size_t>(j)] == doctest::Approx(pre(j)).epsilon(1e-5));
        } else {
          CHECK(row[static_cast<std::size_t>(j)] == 0.0f);
        }
        if (row[static_cast<std::size_t>(j)] != 0.0f) ++nonzero;
      }
      CHECK(nonzero <= k);
    }
  }
}

TEST_CASE("encoding validates dimensions and parameters") {
  auto p = params_with(Eigen::MatrixXd::Ones(3, 2));
  CHECK(error_code_of([&] { encode(p, single_token({1.0f, 2.0f, 3.0f})); }) == ErrorCode::DimMismatch);
  auto bad = p;
  bad.b_enc = Eigen::VectorXd::Zero(2);
  CHECK(error_code_of([&] { bad.validate(); }) == ErrorCode::DimMismatch);
  auto topk = params_with(Eigen::MatrixXd::Ones(3, 2), TopK{4});
  CHECK(error_code_of([&] { topk.validate(); }) == ErrorCode::InvariantViolation);
  auto jump = params_with(Eigen::MatrixXd::Ones(3, 2), JumpRelu{-1.0});
  CHECK(error_code_of([&] { jump.validate(); }) == ErrorCode::InvariantViolation);
}

TEST_CASE("decoding a zero latent returns the decoder bias at every token") {
  auto p = params_with(Eigen::MatrixXd::Ones(4, 3));
  p.W_dec = testing::gaussian_matrix(3, 4, 2);
  p.b_dec = Eigen::Vector3d(0.5, -1.0, 2.0);
  LatentTensor f;
  f.batch_size = 2;
  f.seq_len = 2;
  f.width = 4;
  f.data.assign(16, 0.0f);
  f.mask.assign(4, 1);
  auto x = decode(p, f);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(x.row(t)[0] == 0.5f);
    CHECK(x.row(t)[1] == -1.0f);
    CHECK(x.row(t)[2] == 2.0f);
  }
}

TEST_CASE("identity dictionary decodes to the latent itself") {
  auto p = params_with(Eigen::MatrixXd::Identity(2, 2));
  p.W_dec = Eigen::MatrixXd::Identity(2, 2);
  auto x = decode(p, latent_from_rows({{3.0f, 4.0f}}));
  CHECK(x.data == std::vector<float>{3.0f, 4.0f});
}

TEST_CASE("identity activation with an inverse decoder reconstructs the input") {
  Eigen::MatrixXd W = testing::gaussian_matrix(4, 4, 9) + 3.0 * Eigen::MatrixXd::Identity(4, 4);
  auto p = params_with(W, IdentityActivation{});
  p.b_enc = Eigen::Vector4d(0.1, -0.2, 0.3, 0.0);
  p.W_dec = W.inverse();
  p.b_dec = -p.W_dec * p.b_enc;
  auto x = testing::token_tensor(3, 4, 4, 10);
  auto xhat = decode(p, encode(p, x));
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(xhat.data[i] == doctest::Approx(x.data[i]).epsilon(1e-4));
}

TEST_CASE("orthonormal encoder with transposed decoder round trips to 1e-5 relative error") {
  Eigen::MatrixXd Q = testing::random_rotation(8, 4);
  auto p = params_with(Q, IdentityActivation{});
  p.W_dec = Q.transpose();
  auto x = testing::token_tensor(2, 6, 8, 3);
  auto xhat = decode(p, encode(p, x));
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    num += std::pow(double(xhat.data[i]) - double(x.data[i]), 2);
    den += std::pow(double(x.data[i]), 2);
  }
  CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("decode with a feature map uses only the mapped decoder columns") {
  auto p = params_with(Eigen::MatrixXd::Ones(4, 2));
  p.W_dec << 1, 2, 3, 4, 5, 6, 7, 8;
  auto f = latent_from_rows({{1.0f, 10.0f}});
  f.feature_index_map = std::vector<std::int64_t>{3, 1};
  auto x = decode(p, f);
  // Columns 3 and 1 of W_dec are (4, 8) and (2, 6).
  CHECK(x.data == std::vector<float>{4.0f + 20.0f, 8.0f + 60.0f});

  f.feature_index_map = std::vector<std::int64_t>{3, 3};
  CHECK(error_code_of([&] { decode(p, f); }) == ErrorCode::InvariantViolation);
  f.feature_index_map = std::vector<std::int64_t>{3, 7};
  CHECK(error_code_of([&] { decode(p, f); }) == ErrorCode::DimMismatch);
}

TEST_CASE("downsampling below the cap is the identity without a map") {
  auto f = latent_from_rows({{1, 2, 3}, {4, 5, 6}});
  auto g = downsample_features(f, 2048);
  CHECK(g.data == f.data);
  CHECK_FALSE(g.feature_index_map.has_value());
}

TEST_CASE("variance-only feature wins when every covariance vanishes") {
  auto f = latent_from_rows({{1, 0, 0}, {-1, 0, 0}});
  auto s = feature_scores(f);
  CHECK(s(0) == doctest::Approx(1e-8).epsilon(1e-12));
  CHECK(s(1) == 0.0);
  CHECK(s(2) == 0.0);
  auto g = downsample_features(f, 1);
  REQUIRE(g.feature_index_map.has_value());
  CHECK(*g.feature_index_map == std::vector<std::int64_t>{0});
  CHECK(g.data == std::vector<float>{1, -1});
}

TEST_CASE("two correlated unit-variance features are kept over a zero feature") {
  auto f = latent_from_rows({{0, 1, 1}, {0, -1, -1}, {0, 1, 1}, {0, -1, -1}});
  auto s = feature_scores(f);
  CHECK(s(1) == doctest::Approx(1.0 + 1e-8));
  CHECK(s(2) == doctest::Approx(1.0 + 1e-8));
  CHECK(s(0) == 0.0);
  auto g = downsample_features(f, 2);
  CHECK(*g.feature_index_map == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("feature scores match a direct covariance oracle over kept tokens") {
  LatentTensor f;
  static_cast<TokenTensor&>(f) = testing::token_tensor(3, 5, 6, 77);
  f.mask[4] = 0;
  f.mask[9] = 0;
  auto s = feature_scores(f);
  auto R = masked_rows(f);
  const double n = static_cast<double>(R.rows());
  for (Eigen::Index j = 0; j < 6; ++j) {
    double mj = R.col(j).mean();
    double var = (R.col(j).array() - mj).square().sum() / n;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < 6; ++i) {
      if (i == j) continue;
      double mi = R.col(i).mean();
      acc += std::abs(((R.col(i).array() - mi) * (R.col(j).array() - mj)).sum() / n);
    }
    CHECK(s(j) == doctest::Approx(var * (acc + 1e-8)).epsilon(1e-10));
  }
}

TEST_CASE("downsampling is idempotent and preserves the original indices") {
  LatentTensor f;
  static_cast<TokenTensor&>(f) = testing::token_tensor(4, 6, 20, 5);
  auto g = downsample_features(f, 7);
  auto h = downsample_features(g, 7);
  CHECK(h.feature_index_map == g.feature_index_map);
  CHECK(h.data == g.data);

  auto narrower = downsample_features(g, 3);
  for (auto idx : *narrower.feature_index_map)
    CHECK(std::find(g.feature_index_map->begin(), g.feature_index_map->end(), idx) != g.feature_index_map->end());
}

TEST_CASE("downsampling needs two kept tokens") {
  auto f = latent_from_rows({{1, 2, 3}, {4, 5, 6}});
  f.mask = {1, 0};
  CHECK(error_code_of([&] { downsample_features(f, 1); }) == ErrorCode::TooFewTokens);
}

TEST_CASE("mse examples") {
  auto x = testing::token_tensor(2, 3, 4, 1);
  CHECK(mse(x, x) == 0.0);

  ActivationTensor zero;
  zero.batch_size = 1;
  zero.seq_len = 2;
  zero.width = 4;
  zero.data.assign(8, 0.0f);
  zero.mask = {1, 0};
  auto ones = zero;
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);
  CHECK(mse(zero, ones) == 1.0);

  // Differences on masked-out tokens are ignored.
  auto shifted = zero;
  shifted.data[5] = 100.0f;
  CHECK(mse(zero, shifted) == 0.0);

  auto y = testing::token_tensor(2, 3, 4, 2);
  x.mask[1] = 0;
  double sum = 0.0;
  int count = 0;
  for (std::size_t t = 0; t < 6; ++t) {
    if (!x.mask[t]) continue;
    for (std::size_t k = 0; k < 4; ++k) {
      double d = double(y.data[t * 4 + k]) - double(x.data[t * 4 + k]);
      sum += d * d;
      ++count;
    }
  }
  CHECK(mse(x, y) == doctest::Approx(sum / count).epsilon(1e-12));

  auto wrong = testing::token_tensor(2, 3, 5, 2);
  CHECK(error_code_of([&] { mse(x, wrong); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("SAE arrays round trip through a bundle") {
  testing::TempDir dir("sae");
  auto p = params_with(testing::gaussian_matrix(6, 4, 1), TopK{2});
  p.W_dec = testing::gaussian_matrix(4, 6, 2);
  p.b_enc = testing::gaussian_matrix(6, 1, 3).col(0);
  p.b_dec = testing::gaussian_matrix(4, 1, 4).col(0);
  TensorBundle b;
  add_sae_arrays(b, p);
  save_bundle(b, dir / "sae.stg");
  auto q = sae_from_bundle(load_bundle(dir / "sae.stg"), TopK{2});
  CHECK((q.W_enc - p.W_enc).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((q.W_dec - p.W_dec).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((q.b_enc - p.b_enc).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((q.b_dec - p.b_dec).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(nonlinearity_name(q.nonlinearity) == "topk(2)");
}
