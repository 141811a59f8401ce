#include "stratgeo/strata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>

#include "stratgeo/error.hpp"
#include "stratgeo/rng.hpp"

namespace stratgeo {

namespace {

constexpr double kEffectiveFloor = 1e-6;
constexpr double kRatioTieTolerance = 1e-12;

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S, Eigen::EigenvaluesOnly);
  require(solver.info() == Eigen::Success, ErrorCode::NumericalFailure, "eigendecomposition did not converge");
  return solver.eigenvalues();
}

std::vector<double> descending(const Eigen::VectorXd& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

}  // namespace

Eigen::MatrixXd unfold(const TokenTensor& t, int mode) {
  require(mode >= 1 && mode <= 3, ErrorCode::BadMode, "mode must be 1, 2 or 3, got " + std::to_string(mode));
  const auto I1 = static_cast<Eigen::Index>(t.batch_size);
  const auto I2 = static_cast<Eigen::Index>(t.seq_len);
  const auto I3 = static_cast<Eigen::Index>(t.width);
  require(static_cast<std::size_t>(I1 * I2 * I3) == t.data.size(), ErrorCode::ShapeMismatch,
          "tensor data does not match its shape");
  Eigen::MatrixXd F;
  switch (mode) {
    case 1: F.resize(I1, I2 * I3); break;
    case 2: F.resize(I2, I1 * I3); break;
    default: F.resize(I3, I1 * I2); break;
  }
  for (Eigen::Index a = 0; a < I1; ++a)
    for (Eigen::Index b = 0; b < I2; ++b)
      for (Eigen::Index c = 0; c < I3; ++c) {
        double v = t.data[static_cast<std::size_t>((a * I2 + b) * I3 + c)];
        switch (mode) {
          case 1: F(a, b * I3 + c) = v; break;
          case 2: F(b, a * I3 + c) = v; break;
          default: F(c, a * I2 + b) = v; break;
        }
      }
  return F;
}

TokenTensor zero_masked(const TokenTensor& t) {
  TokenTensor out = t;
  for (std::size_t i = 0; i < t.tokens(); ++i)
    if (!t.kept_at(i)) std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(i * t.width), t.width, 0.0f);
  return out;
}

SspdMatrix sspd(const Eigen::MatrixXd& F, double epsilon, Mode mode) {
  require(F.rows() > 0 && F.cols() > 0, ErrorCode::EmptyMatrix, "sspd of an empty matrix");
  Eigen::MatrixXd G = F * F.transpose();
  Eigen::MatrixXd S = (G + G.transpose()) * 0.5;
  S.diagonal().array() += epsilon;
  return {std::move(S), epsilon, mode};
}

double quantile_linear(std::vector<double> values, double q) {
  require(!values.empty(), ErrorCode::EmptyMatrix, "quantile of no values");
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, values.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RankResult rank_from_spectrum(std::span<const double> desc) {
  require(!desc.empty(), ErrorCode::EmptyMatrix, "empty spectrum");
  const double top = desc.front();
  require(std::isfinite(top) && top > 0.0, ErrorCode::NumericalFailure, "leading singular value is not positive");

  std::vector<double> effective;
  for (double v : desc)
    if (v > kEffectiveFloor * top) effective.push_back(v / top);
  double tau = quantile_linear(effective, 0.25);
  if (tau >= 1.0 - kRatioTieTolerance) return {effective.size(), tau};

  std::size_t rank = 0;
  for (double v : desc)
    if (v / top > tau + kRatioTieTolerance) ++rank;
  return {rank, tau};
}

RankResult effective_rank(const SspdMatrix& S) {
  require(S.data.rows() == S.data.cols() && S.data.rows() > 0, ErrorCode::EmptyMatrix, "SSPD must be square");
  Eigen::MatrixXd sym = (S.data + S.data.transpose()) * 0.5;
  return rank_from_spectrum(descending(symmetric_eigenvalues(sym)));
}

RankResult effective_rank_of_unfolding(const Eigen::MatrixXd& F, double epsilon) {
  require(F.rows() > 0 && F.cols() > 0, ErrorCode::EmptyMatrix, "unfolding is empty");
  if (F.cols() >= F.rows()) return effective_rank(sspd(F, epsilon));
  Eigen::MatrixXd G = F.transpose() * F;
  Eigen::MatrixXd sym = (G + G.transpose()) * 0.5;
  std::vector<double> spectrum = descending(symmetric_eigenvalues(sym));
  for (double& v : spectrum) v = std::max(v, 0.0) + epsilon;
  spectrum.resize(static_cast<std::size_t>(F.rows()), epsilon);
  std::sort(spectrum.begin(), spectrum.end(), std::greater<>());
  return rank_from_spectrum(spectrum);
}

RankTriplet rank_triplet(const TokenTensor& t, double epsilon) {
  TokenTensor z = zero_masked(t);
  RankTriplet out;
  for (int mode = 1; mode <= 3; ++mode) {
    RankResult r = effective_rank_of_unfolding(unfold(z, mode), epsilon);
    out.r[static_cast<std::size_t>(mode - 1)] = r.rank;
    out.tau[static_cast<std::size_t>(mode - 1)] = r.tau;
  }
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver((A + A.transpose()) * 0.5);
  require(solver.info() == Eigen::Success, ErrorCode::NumericalFailure, "eigendecomposition did not converge");
  Eigen::VectorXd root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * root.asDiagonal() * solver.eigenvectors().transpose();
}

namespace {

// Bures distance from precomputed square roots via the polar factor of ra·rb.
double bures_from_roots(const Eigen::MatrixXd& ra, const Eigen::MatrixXd& rb) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(ra * rb, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd polar = svd.matrixV() * svd.matrixU().transpose();
  double d = (ra - rb * polar).norm();
  require(std::isfinite(d), ErrorCode::NumericalFailure, "non-finite Bures distance");
  return d;
}

}  // namespace

double bures_distance(const SspdMatrix& A, const SspdMatrix& B) {
  require(A.dim() == B.dim() && A.data.cols() == B.data.cols(), ErrorCode::DimMismatch,
          "bures_distance needs equal dimensions");
  return bures_from_roots(psd_sqrt(A.data), psd_sqrt(B.data));
}

double agd(std::span<const SspdMatrix> samples, AgdMetric metric) {
  require(samples.size() >= 2, ErrorCode::TooFewSamples, "AGD needs at least two samples");
  for (const auto& s : samples)
    require(s.dim() == samples.front().dim(), ErrorCode::DimMismatch, "AGD samples differ in dimension");
  std::vector<Eigen::MatrixXd> roots;
  if (metric == AgdMetric::Bures)
    for (const auto& s : samples) roots.push_back(psd_sqrt(s.data));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t m = 0; m < samples.size(); ++m)
    for (std::size_t n = m + 1; n < samples.size(); ++n) {
      sum += metric == AgdMetric::Bures ? bures_from_roots(roots[m], roots[n])
                                        : (samples[m].data - samples[n].data).norm();
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

std::size_t agd_group_count(const TokenTensor& t, std::size_t max_groups) {
  std::size_t n = std::min(max_groups, t.batch_size);
  return std::clamp<std::size_t>(n, 2, std::max<std::size_t>(t.kept(), 2));
}

std::vector<SspdMatrix> agd_samples(const TokenTensor& latent, std::size_t groups, double epsilon) {
  auto idx = kept_tokens(latent);
  require(groups >= 2 && groups <= idx.size(), ErrorCode::TooFewSamples,
          "need 2 <= groups <= kept tokens for AGD sampling");
  const auto d = static_cast<Eigen::Index>(latent.width);
  std::vector<SspdMatrix> out;
  out.reserve(groups);
  std::size_t begin = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    // First (n mod groups) slices take one extra token.
    std::size_t len = idx.size() / groups + (g < idx.size() % groups ? 1 : 0);
    Eigen::MatrixXd F(d, static_cast<Eigen::Index>(len));
    for (std::size_t j = 0; j < len; ++j) {
      auto row = latent.row(idx[begin + j]);
      for (Eigen::Index k = 0; k < d; ++k) F(k, static_cast<Eigen::Index>(j)) = row[static_cast<std::size_t>(k)];
    }
    out.push_back(sspd(F, epsilon, Mode::Feature));
    begin += len;
  }
  return out;
}

std::uint64_t noise_level_seed(std::uint64_t base_seed, double level) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, level);
  return rng::derive_seed(base_seed, {"noise-level", std::string_view(buf, static_cast<std::size_t>(res.ptr - buf))});
}

LatentTensor clean_latent(const ActivationTensor& x, const SaeParams& params, std::size_t feature_cap) {
  return downsample_features(encode(params, x), feature_cap);
}

std::vector<SweepRecord> case1_sweep(const ActivationTensor& x, const SaeParams& params,
                                     std::span<const double> levels, const NoiseSpec& spec,
                                     const SweepOptions& options) {
  require(!levels.empty(), ErrorCode::InvariantViolation, "noise level list is empty");
  for (double l : levels) require(l >= 0.0, ErrorCode::InvariantViolation, "noise levels must be >= 0");
  spec.validate(x.width);
  const auto hi_set = frequency_ranking(x, spec.top_k);
  const std::size_t groups = agd_group_count(x, options.max_agd_groups);

  std::vector<SweepRecord> records;
  records.reserve(levels.size());
  for (double level : levels) {
    NoiseSpec s = spec;
    s.noise_std = level;
    s.seed = noise_level_seed(spec.seed, level);
    LatentTensor f = clean_latent(inject_noise(x, s, hi_set), params, options.feature_cap);
    SweepRecord rec;
    rec.noise_std = level;
    rec.triplet = rank_triplet(f, options.epsilon);
    auto samples = agd_samples(f, groups, options.epsilon);
    rec.agd = agd(samples, options.agd_metric);
    records.push_back(rec);
  }
  return records;
}

}  // namespace stratgeo
