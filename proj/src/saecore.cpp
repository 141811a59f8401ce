#include "stratgeo/saecore.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "stratgeo/error.hpp"

namespace stratgeo {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Eigen::MatrixXd read_matrix(const TensorBundle& b, std::string_view name) {
  const auto& d = b.descriptor(name);
  require(d.shape.size() == 2, ErrorCode::ShapeMismatch, "'" + d.name + "' must be 2-D");
  auto v = b.f32(name);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(d.shape[0]), static_cast<Eigen::Index>(d.shape[1]));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = v[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

Eigen::VectorXd read_vector(const TensorBundle& b, std::string_view name) {
  const auto& d = b.descriptor(name);
  require(d.shape.size() == 1, ErrorCode::ShapeMismatch, "'" + d.name + "' must be 1-D");
  auto v = b.f32(name);
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

std::vector<float> to_f32(const Eigen::MatrixXd& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<float>(m(r, c));
  return out;
}

Eigen::MatrixXd token_rows(const TokenTensor& t) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.tokens()), static_cast<Eigen::Index>(t.width));
  for (std::size_t i = 0; i < t.tokens(); ++i)
    for (std::size_t k = 0; k < t.width; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = t.data[i * t.width + k];
  return m;
}

void store_rows(TokenTensor& t, const Eigen::MatrixXd& m) {
  t.data.resize(t.tokens() * t.width);
  for (std::size_t i = 0; i < t.tokens(); ++i)
    for (std::size_t k = 0; k < t.width; ++k)
      t.data[i * t.width + k] = static_cast<float>(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
}

}  // namespace

std::string nonlinearity_name(const Nonlinearity& n) {
  return std::visit(overloaded{[](Relu) { return std::string("relu"); },
                               [](TopK t) { return "topk(" + std::to_string(t.k) + ")"; },
                               [](JumpRelu j) { return "jumprelu(" + std::to_string(j.theta) + ")"; },
                               [](IdentityActivation) { return std::string("identity"); }},
                    n);
}

void SaeParams::validate() const {
  const auto M = W_enc.rows();
  const auto n = W_enc.cols();
  require(M >= 1 && n >= 1, ErrorCode::DimMismatch, "SAE dimensions must be >= 1");
  require(b_enc.size() == M, ErrorCode::DimMismatch, "b_enc length != W_enc rows");
  require(W_dec.rows() == n && W_dec.cols() == M, ErrorCode::DimMismatch, "W_dec must be d_model x d_sae");
  require(b_dec.size() == n, ErrorCode::DimMismatch, "b_dec length != d_model");
  if (auto* t = std::get_if<TopK>(&nonlinearity))
    require(t->k >= 1 && static_cast<Eigen::Index>(t->k) <= M, ErrorCode::InvariantViolation,
            "TopK k must be in [1, d_sae]");
  if (auto* j = std::get_if<JumpRelu>(&nonlinearity))
    require(j->theta >= 0.0, ErrorCode::InvariantViolation, "JumpReLU theta must be >= 0");
}

SaeParams sae_from_bundle(const TensorBundle& bundle, Nonlinearity nonlinearity) {
  SaeParams p{read_matrix(bundle, "W_enc"), read_vector(bundle, "b_enc"), read_matrix(bundle, "W_dec"),
              read_vector(bundle, "b_dec"), nonlinearity};
  p.validate();
  return p;
}

void add_sae_arrays(TensorBundle& bundle, const SaeParams& p) {
  auto we = to_f32(p.W_enc);
  auto wd = to_f32(p.W_dec);
  auto be = to_f32(p.b_enc);
  auto bd = to_f32(p.b_dec);
  const auto M = static_cast<std::uint64_t>(p.d_sae());
  const auto n = static_cast<std::uint64_t>(p.d_model());
  bundle.add_f32("W_enc", {M, n}, we);
  bundle.add_f32("b_enc", {M}, be);
  bundle.add_f32("W_dec", {n, M}, wd);
  bundle.add_f32("b_dec", {n}, bd);
}

void LatentTensor::validate() const {
  TokenTensor::validate();
  if (feature_index_map) {
    require(feature_index_map->size() == width, ErrorCode::InvariantViolation,
            "feature_index_map length must equal d_sae");
    std::set<std::int64_t> seen(feature_index_map->begin(), feature_index_map->end());
    require(seen.size() == feature_index_map->size(), ErrorCode::InvariantViolation,
            "feature_index_map entries must be unique");
  }
}

void apply_nonlinearity(const Nonlinearity& n, Eigen::Ref<Eigen::VectorXd> pre) {
  std::visit(overloaded{[&](Relu) { pre = pre.cwiseMax(0.0); },
                        [&](JumpRelu j) {
                          for (Eigen::Index i = 0; i < pre.size(); ++i)
                            if (!(pre(i) > j.theta)) pre(i) = 0.0;
                        },
                        [&](TopK t) {
                          std::vector<Eigen::Index> order(static_cast<std::size_t>(pre.size()));
                          std::iota(order.begin(), order.end(), Eigen::Index{0});
                          std::size_t k = std::min<std::size_t>(t.k, order.size());
                          // Larger value first, lower index on ties.
                          std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                                            order.end(), [&](Eigen::Index a, Eigen::Index b) {
                                              return pre(a) > pre(b) || (pre(a) == pre(b) && a < b);
                                            });
                          Eigen::VectorXd kept = Eigen::VectorXd::Zero(pre.size());
                          for (std::size_t i = 0; i < k; ++i) kept(order[i]) = pre(order[i]);
                          pre = kept;
                        },
                        [&](IdentityActivation) {}},
             n);
}

LatentTensor encode(const SaeParams& params, const ActivationTensor& x) {
  params.validate();
  x.validate();
  require(static_cast<Eigen::Index>(x.width) == params.d_model(), ErrorCode::DimMismatch,
          "activation width " + std::to_string(x.width) + " != SAE d_model " + std::to_string(params.d_model()));
  Eigen::MatrixXd pre = (token_rows(x) * params.W_enc.transpose()).rowwise() + params.b_enc.transpose();
  for (Eigen::Index i = 0; i < pre.rows(); ++i) {
    Eigen::VectorXd row = pre.row(i).transpose();
    apply_nonlinearity(params.nonlinearity, row);
    pre.row(i) = row.transpose();
  }
  LatentTensor f;
  f.batch_size = x.batch_size;
  f.seq_len = x.seq_len;
  f.width = static_cast<std::size_t>(params.d_sae());
  f.mask = x.mask;
  store_rows(f, pre);
  return f;
}

Eigen::MatrixXd decode_rows(const SaeParams& params, const Eigen::MatrixXd& latents,
                            const std::optional<std::vector<std::int64_t>>& feature_map) {
  if (!feature_map) {
    require(latents.cols() == params.d_sae(), ErrorCode::DimMismatch,
            "latent width " + std::to_string(latents.cols()) + " != SAE d_sae " + std::to_string(params.d_sae()));
    return (latents * params.W_dec.transpose()).rowwise() + params.b_dec.transpose();
  }
  require(static_cast<Eigen::Index>(feature_map->size()) == latents.cols(), ErrorCode::DimMismatch,
          "feature map length != latent width");
  Eigen::MatrixXd cols(params.d_model(), latents.cols());
  for (std::size_t j = 0; j < feature_map->size(); ++j) {
    auto src = (*feature_map)[j];
    require(src >= 0 && src < params.d_sae(), ErrorCode::DimMismatch, "feature map index out of range");
    cols.col(static_cast<Eigen::Index>(j)) = params.W_dec.col(static_cast<Eigen::Index>(src));
  }
  return (latents * cols.transpose()).rowwise() + params.b_dec.transpose();
}

ActivationTensor decode(const SaeParams& params, const LatentTensor& f) {
  params.validate();
  f.validate();
  Eigen::MatrixXd xhat = decode_rows(params, token_rows(f), f.feature_index_map);
  ActivationTensor out;
  out.batch_size = f.batch_size;
  out.seq_len = f.seq_len;
  out.width = static_cast<std::size_t>(params.d_model());
  out.mask = f.mask;
  store_rows(out, xhat);
  return out;
}

Eigen::VectorXd feature_scores(const LatentTensor& f) {
  Eigen::MatrixXd rows = masked_rows(f);
  const auto n_tok = rows.rows();
  require(n_tok >= 2, ErrorCode::TooFewTokens, "feature scoring needs at least 2 kept tokens");
  Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  const auto d = centered.cols();
  const double inv_n = 1.0 / static_cast<double>(n_tok);

  Eigen::VectorXd var = centered.colwise().squaredNorm().transpose() * inv_n;
  Eigen::VectorXd abs_cov_sum = Eigen::VectorXd::Zero(d);
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index start = 0; start < d; start += kBlock) {
    Eigen::Index width = std::min(kBlock, d - start);
    Eigen::MatrixXd block = (centered.transpose() * centered.middleCols(start, width)) * inv_n;
    abs_cov_sum.segment(start, width) += block.cwiseAbs().colwise().sum().transpose();
  }
  // Drop the i == j term, which is |Var(f_j)|.
  abs_cov_sum -= var.cwiseAbs();
  abs_cov_sum = abs_cov_sum.cwiseMax(0.0);
  return var.cwiseProduct(abs_cov_sum.array().matrix() + Eigen::VectorXd::Constant(d, kScoreEpsilon));
}

LatentTensor downsample_features(const LatentTensor& f, std::size_t cap) {
  f.validate();
  require(cap >= 1, ErrorCode::InvariantViolation, "cap must be positive");
  require(f.kept() >= 2, ErrorCode::TooFewTokens, "downsampling needs at least 2 kept tokens");
  if (f.width <= cap) return f;

  Eigen::VectorXd score = feature_scores(f);
  std::vector<std::size_t> order(f.width);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score(static_cast<Eigen::Index>(a)) > score(static_cast<Eigen::Index>(b));
  });
  order.resize(cap);
  std::sort(order.begin(), order.end());

  LatentTensor out;
  out.batch_size = f.batch_size;
  out.seq_len = f.seq_len;
  out.width = cap;
  out.mask = f.mask;
  out.data.resize(out.tokens() * cap);
  std::vector<std::int64_t> map(cap);
  for (std::size_t j = 0; j < cap; ++j)
    map[j] = f.feature_index_map ? (*f.feature_index_map)[order[j]] : static_cast<std::int64_t>(order[j]);
  for (std::size_t t = 0; t < out.tokens(); ++t)
    for (std::size_t j = 0; j < cap; ++j) out.data[t * cap + j] = f.data[t * f.width + order[j]];
  out.feature_index_map = std::move(map);
  return out;
}

double mse_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_hat) {
  require(x.rows() == x_hat.rows() && x.cols() == x_hat.cols(), ErrorCode::ShapeMismatch,
          "mse operands differ in shape");
  require(x.size() > 0, ErrorCode::ShapeMismatch, "mse of empty operands");
  return (x_hat - x).squaredNorm() / static_cast<double>(x.size());
}

double mse(const ActivationTensor& x, const ActivationTensor& x_hat) {
  require(x.batch_size == x_hat.batch_size && x.seq_len == x_hat.seq_len && x.width == x_hat.width,
          ErrorCode::ShapeMismatch, "mse operands differ in shape");
  x.validate();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < x.tokens(); ++t) {
    if (!x.kept_at(t)) continue;
    for (std::size_t k = 0; k < x.width; ++k) {
      double diff = static_cast<double>(x_hat.data[t * x.width + k]) - static_cast<double>(x.data[t * x.width + k]);
      sum += diff * diff;
    }
    count += x.width;
  }
  return sum / static_cast<double>(count);
}

}  // namespace stratgeo
