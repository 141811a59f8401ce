#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "stratgeo/geostruct.hpp"
#include "stratgeo/saecore.hpp"
#include "stratgeo/tensorio.hpp"

namespace stratgeo {

struct FixtureShape {
  std::size_t d_model = 32;
  std::size_t d_sae = 128;
  std::size_t batch = 8;
  std::size_t seq = 16;
  std::size_t clusters = 3;
  std::size_t cluster_dim = 2;
  double radius = 1.0;
  double separation = 10.0;  // minimum center distance in units of radius
};

/// Ground truth that comes with a synthetic bundle.
struct FixtureTruth {
  std::vector<int> labels;  // per kept token, scan order
  std::vector<std::size_t> dims;
  std::size_t clusters = 0;
  nlohmann::json to_json(std::uint64_t seed, const FixtureShape& shape) const;
};

struct SyntheticFixture {
  TensorBundle bundle;  // "resid", "mask", SAE arrays; ReLU nonlinearity
  FixtureTruth truth;
};

/// Planted clusters on low-dimensional subspaces in d_model space and an SAE
/// whose encoder rows are ±two orthogonal bases, so ReLU reconstruction is
/// exact. Sequence position 0 is masked out in every prompt.
SyntheticFixture make_synthetic_fixture(std::uint64_t seed, const FixtureShape& shape = {});

/// Writes fixture.stg, fixture_truth.json and config.json into `dir`.
void write_fixture(const std::filesystem::path& dir, std::uint64_t seed);

/// Case-3 instance whose clusters overlap in latent space while each cluster
/// carries its own reconstruction error along a decoder direction the encoder
/// never activates. Separating clusters along such directions lowers the MSE.
struct OverlapInstance {
  SaeParams params;
  ActivationTensor x;
  LatentTensor latent;
  ClusterAssignment labels;
};

OverlapInstance make_overlap_instance(std::uint64_t seed);

/// Uniformly random orthogonal matrix (QR of a Gaussian with sign correction).
Eigen::MatrixXd random_orthogonal(std::size_t n, std::uint64_t seed);

}  // namespace stratgeo
