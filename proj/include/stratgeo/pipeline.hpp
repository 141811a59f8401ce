#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stratgeo/geostruct.hpp"
#include "stratgeo/intervene.hpp"
#include "stratgeo/perturb.hpp"
#include "stratgeo/saecore.hpp"
#include "stratgeo/strata.hpp"

namespace stratgeo {

inline constexpr int kReportSchemaVersion = 1;

struct BundleSpec {
  std::string model;
  std::string concept_name;
  std::filesystem::path path;
  Nonlinearity nonlinearity = Relu{};
};

struct Case2Params {
  ReduceMethod reduce = ReduceMethod::Pca;
  std::size_t target_dim = 50;
  std::size_t min_cluster_size = 10;
  double tau_dim = 0.01;
  double tau_pers = 0.1;
  std::size_t n_neighbors = 15;
  std::size_t epochs = 200;
  double min_dist = 0.1;
};

struct Case3Params {
  std::vector<double> alphas = kDefaultAlphas;
  std::vector<LossKind> losses{LossKind::Gw, LossKind::InvAedp};
  std::size_t iterations = 10;
  double lambda_mse = 1.0;
  std::size_t subsample = 256;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  std::vector<std::string> cases{"case1", "case2", "case3"};
  std::vector<double> noise_levels{0, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5, 10};
  std::size_t noise_top_k = 100;
  double hi_scale = 2.0;
  double lo_scale = 0.2;
  std::size_t feature_cap = kDefaultFeatureCap;
  std::size_t max_agd_groups = 16;
  AgdMetric agd_metric = AgdMetric::Bures;
  Case2Params case2;
  Case3Params case3;
  std::vector<BundleSpec> bundles;

  void validate() const;
};

/// Relative bundle paths are resolved against `base_dir`. Unknown keys are
/// rejected so typos surface as ConfigError.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& cfg);

struct Overrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> noise_levels;
  std::optional<std::vector<double>> alphas;
  std::optional<LossKind> loss;
  std::optional<ReduceMethod> reduce;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

struct RunReport {
  std::vector<std::filesystem::path> files;
  nlohmann::json summary;
};

/// Runs the requested cases in the order case1, case2, case3 and writes the
/// CSV tables, caches and summary.json under cfg.output_dir.
RunReport run(const RunConfig& cfg, const std::vector<std::string>& cases);

/// Shortest round-trip decimal form; "nan" and "inf" for non-finite values.
std::string format_number(double v);

std::vector<double> parse_number_list(const std::string& text);

}  // namespace stratgeo
