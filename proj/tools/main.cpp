#include <iostream>

#include <CLI11.hpp>

#include "stratgeo/error.hpp"
#include "stratgeo/fixture.hpp"
#include "stratgeo/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int exit_code_for(stratgeo::ErrorCode code) {
  using stratgeo::ErrorCode;
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::MissingDependency:
    case ErrorCode::IoError:
    case ErrorCode::MagicMismatch:
    case ErrorCode::ManifestParseError:
    case ErrorCode::PayloadBoundsError:
    case ErrorCode::DtypeUnsupported:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stratified geometry analysis of sparse-autoencoder latents"};
  app.require_subcommand(1);

  std::string config_path, out_dir, noise, alphas, loss, reduce;
  std::uint64_t seed = 0;

  for (const char* name : {"case1", "case2", "case3", "all"}) {
    auto* sub = app.add_subcommand(name, std::string("Run ") + name + " from a JSON config");
    sub->add_option("--config", config_path, "Path to the run configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides config)");
    sub->add_option("--seed", seed, "Global seed (overrides config)");
    sub->add_option("--noise", noise, "Comma-separated noise levels, e.g. 0,0.5,1");
    sub->add_option("--alphas", alphas, "Comma-separated translation step sizes");
    sub->add_option("--loss", loss, "Intervention loss")->check(CLI::IsMember({"gw", "inv_aedp"}));
    sub->add_option("--reduce", reduce, "Reduction before clustering")->check(CLI::IsMember({"pca", "neighbor"}));
  }
  auto* fixture = app.add_subcommand("fixture", "Write the synthetic fixture, its ground truth and a config");
  std::string fixture_dir = ".";
  fixture->add_option("--out", fixture_dir, "Directory to write into");
  fixture->add_option("--seed", seed, "Fixture seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const std::string cmd = sub->get_name();
    if (cmd == "fixture") {
      stratgeo::write_fixture(fixture_dir, seed);
      std::cout << "wrote fixture.stg, fixture_truth.json, config.json to " << fixture_dir << '\n';
      return 0;
    }
    stratgeo::RunConfig cfg = stratgeo::load_config(config_path);
    stratgeo::Overrides o;
    if (sub->count("--out")) o.output_dir = out_dir;
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--noise")) o.noise_levels = stratgeo::parse_number_list(noise);
    if (sub->count("--alphas")) o.alphas = stratgeo::parse_number_list(alphas);
    if (sub->count("--loss")) o.loss = stratgeo::parse_loss_kind(loss);
    if (sub->count("--reduce")) o.reduce = reduce == "pca" ? stratgeo::ReduceMethod::Pca : stratgeo::ReduceMethod::NeighborEmbedding;
    stratgeo::apply_overrides(cfg, o);
    auto report = stratgeo::run(cfg, {cmd});
    for (const auto& f : report.files) std::cout << f.string() << '\n';
    return 0;
  } catch (const stratgeo::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
