#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "stratgeo/tensorio.hpp"

namespace stratgeo {

struct Relu {};
struct TopK {
  std::size_t k = 1;
};
struct JumpRelu {
  double theta = 0.0;
};
/// No sparsity; used for algebraic checks of the encoder/decoder pair.
struct IdentityActivation {};

using Nonlinearity = std::variant<Relu, TopK, JumpRelu, IdentityActivation>;

std::string nonlinearity_name(const Nonlinearity& n);

/// Encoder f = σ(W_enc x + b_enc), decoder x̂ = W_dec f + b_dec.
/// W_enc is M × n, W_dec is n × M, where n = d_model and M = d_sae.
struct SaeParams {
  Eigen::MatrixXd W_enc;
  Eigen::VectorXd b_enc;
  Eigen::MatrixXd W_dec;
  Eigen::VectorXd b_dec;
  Nonlinearity nonlinearity = Relu{};

  Eigen::Index d_model() const noexcept { return W_enc.cols(); }
  Eigen::Index d_sae() const noexcept { return W_enc.rows(); }

  void validate() const;
};

/// Reads "W_enc" (M × n), "b_enc", "W_dec" (n × M), "b_dec".
SaeParams sae_from_bundle(const TensorBundle& bundle, Nonlinearity nonlinearity);
void add_sae_arrays(TensorBundle& bundle, const SaeParams& params);

/// Latent tensor; width is d_sae. After downsampling, feature_index_map[j]
/// is the original feature index of column j.
struct LatentTensor : TokenTensor {
  std::optional<std::vector<std::int64_t>> feature_index_map;

  void validate() const;
};

/// Applies the nonlinearity in place to one token's pre-activations.
void apply_nonlinearity(const Nonlinearity& n, Eigen::Ref<Eigen::VectorXd> pre);

LatentTensor encode(const SaeParams& params, const ActivationTensor& x);

/// Masked-out tokens are decoded too; the mask is carried through.
ActivationTensor decode(const SaeParams& params, const LatentTensor& f);

/// Decodes latent rows (N × width) to residual rows (N × d_model) in f64.
/// `feature_map` selects decoder columns when the latents were downsampled.
Eigen::MatrixXd decode_rows(const SaeParams& params, const Eigen::MatrixXd& latents,
                            const std::optional<std::vector<std::int64_t>>& feature_map);

inline constexpr std::size_t kDefaultFeatureCap = 2048;
inline constexpr double kScoreEpsilon = 1e-8;

/// Per-feature score Var(f_j) · (Σ_{i≠j} |Cov(f_i, f_j)| + ε) over kept tokens,
/// population normalization. Covariance row sums are accumulated in column
/// blocks so d_sae² is never materialized.
Eigen::VectorXd feature_scores(const LatentTensor& f);

/// Keeps the `cap` highest-scoring features (ties to the lower index) in
/// ascending original-index order. Identity when d_sae <= cap.
LatentTensor downsample_features(const LatentTensor& f, std::size_t cap = kDefaultFeatureCap);

/// Mean of (x̂ − x)² over kept tokens of `x` and all coordinates.
double mse(const ActivationTensor& x, const ActivationTensor& x_hat);
double mse_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_hat);

}  // namespace stratgeo
