#include "stratgeo/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "stratgeo/error.hpp"
#include "stratgeo/rng.hpp"

#ifndef STRATGEO_GIT_DESCRIBE
#define STRATGEO_GIT_DESCRIBE "unknown"
#endif

namespace stratgeo {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  require(j.is_object(), ErrorCode::ConfigError, std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    require(ok, ErrorCode::ConfigError, "unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("bad value for '") + key + "': " + e.what());
  }
}

Nonlinearity parse_nonlinearity(const json& j) {
  check_keys(j, {"kind", "k", "theta"}, "nonlinearity");
  auto kind = get_or<std::string>(j, "kind", "");
  if (kind == "relu") return Relu{};
  if (kind == "identity") return IdentityActivation{};
  if (kind == "topk") {
    require(j.contains("k"), ErrorCode::ConfigError, "topk nonlinearity needs k");
    return TopK{get_or<std::size_t>(j, "k", 0)};
  }
  if (kind == "jumprelu") {
    require(j.contains("theta"), ErrorCode::ConfigError, "jumprelu nonlinearity needs theta");
    return JumpRelu{get_or<double>(j, "theta", 0.0)};
  }
  fail(ErrorCode::ConfigError, "unknown nonlinearity kind '" + kind + "'");
}

json nonlinearity_json(const Nonlinearity& n) {
  return std::visit(
      [](const auto& v) -> json {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, Relu>) return {{"kind", "relu"}};
        else if constexpr (std::is_same_v<V, IdentityActivation>) return {{"kind", "identity"}};
        else if constexpr (std::is_same_v<V, TopK>) return {{"kind", "topk"}, {"k", v.k}};
        else return {{"kind", "jumprelu"}, {"theta", v.theta}};
      },
      n);
}

std::string reduce_name(ReduceMethod m) { return m == ReduceMethod::Pca ? "pca" : "neighbor"; }

ReduceMethod parse_reduce(const std::string& s) {
  if (s == "pca") return ReduceMethod::Pca;
  if (s == "neighbor") return ReduceMethod::NeighborEmbedding;
  fail(ErrorCode::ConfigError, "unknown reduction '" + s + "'");
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    require(row.size() == header_.size(), ErrorCode::InvariantViolation, "CSV row width mismatch");
    rows_.push_back(std::move(row));
  }

  void write(const fs::path& path) const {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::IoError, "cannot write " + path.string());
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) f << (i ? "," : "") << quote(cells[i]);
      f << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    require(static_cast<bool>(f), ErrorCode::IoError, "cannot write " + path.string());
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Loaded {
  TensorBundle bundle;
  ActivationTensor x;
  SaeParams params;
};

Loaded load_inputs(const BundleSpec& b) {
  Loaded l{load_bundle(b.path), {}, {}};
  l.x = activation_from_bundle(l.bundle, "resid", "mask");
  l.params = sae_from_bundle(l.bundle, b.nonlinearity);
  return l;
}

fs::path cache_dir(const RunConfig& cfg) { return cfg.output_dir / "cache"; }
fs::path latent_cache_path(const RunConfig& cfg, const BundleSpec& b) {
  return cache_dir(cfg) / (safe_name(b.model) + "__" + safe_name(b.concept_name) + ".latent.stg");
}
fs::path labels_cache_path(const RunConfig& cfg, const BundleSpec& b) {
  return cache_dir(cfg) / (safe_name(b.model) + "__" + safe_name(b.concept_name) + ".labels.stg");
}

std::map<std::string, std::string> latent_cache_key(const RunConfig& cfg, const BundleSpec& b,
                                                    const TensorBundle& source) {
  return {{"source_hash", source.content_hash()},
          {"feature_cap", std::to_string(cfg.feature_cap)},
          {"nonlinearity", nonlinearity_json(b.nonlinearity).dump()}};
}

void write_latent_cache(const RunConfig& cfg, const BundleSpec& b, const TensorBundle& source, const LatentTensor& f) {
  TensorBundle cache;
  add_token_tensor(cache, f, "latent", "mask");
  if (f.feature_index_map)
    cache.add_i64("feature_index_map", {f.feature_index_map->size()}, *f.feature_index_map);
  cache.metadata() = latent_cache_key(cfg, b, source);
  save_bundle(cache, latent_cache_path(cfg, b));
}

struct LatentCache {
  LatentTensor latent;
  std::string hash;
  bool reused = false;
};

std::optional<LatentCache> read_latent_cache(const RunConfig& cfg, const BundleSpec& b, const TensorBundle& source) {
  auto path = latent_cache_path(cfg, b);
  if (!fs::exists(path)) return std::nullopt;
  TensorBundle cache = load_bundle(path);
  for (const auto& [k, v] : latent_cache_key(cfg, b, source)) {
    auto it = cache.metadata().find(k);
    if (it == cache.metadata().end() || it->second != v) return std::nullopt;
  }
  LatentCache out;
  static_cast<TokenTensor&>(out.latent) = activation_from_bundle(cache, "latent", "mask");
  if (cache.has("feature_index_map")) out.latent.feature_index_map = cache.i64("feature_index_map");
  out.latent.validate();
  out.hash = cache.content_hash();
  out.reused = true;
  return out;
}

LatentCache latent_for_case2(const RunConfig& cfg, const BundleSpec& b, const Loaded& in) {
  if (auto c = read_latent_cache(cfg, b, in.bundle)) return *c;
  write_latent_cache(cfg, b, in.bundle, clean_latent(in.x, in.params, cfg.feature_cap));
  auto c = read_latent_cache(cfg, b, in.bundle);
  require(c.has_value(), ErrorCode::IoError, "latent cache could not be re-read");
  c->reused = false;
  return *c;
}

std::uint64_t stage_seed(const RunConfig& cfg, std::string_view stage, const BundleSpec& b) {
  return rng::derive_seed(cfg.seed, {stage, b.model, b.concept_name});
}

std::vector<std::string> ordered_cases(const std::vector<std::string>& requested) {
  std::set<std::string> want;
  for (const auto& c : requested) {
    if (c == "all") {
      want.insert({"case1", "case2", "case3"});
      continue;
    }
    require(c == "case1" || c == "case2" || c == "case3", ErrorCode::ConfigError, "unknown case '" + c + "'");
    want.insert(c);
  }
  std::vector<std::string> out;
  for (const char* c : {"case1", "case2", "case3"})
    if (want.count(c)) out.emplace_back(c);
  return out;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    require(b != std::string::npos, ErrorCode::ConfigError, "empty entry in number list '" + text + "'");
    std::string s = item.substr(b, e - b + 1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    require(res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v), ErrorCode::ConfigError,
            "not a number: '" + s + "'");
    out.push_back(v);
  }
  require(!out.empty(), ErrorCode::ConfigError, "number list is empty");
  return out;
}

void RunConfig::validate() const {
  require(!bundles.empty(), ErrorCode::ConfigError, "config lists no bundles");
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& b : bundles) {
    require(!b.model.empty() && !b.concept_name.empty(), ErrorCode::ConfigError, "bundle needs model and concept");
    require(seen.insert({b.model, b.concept_name}).second, ErrorCode::ConfigError,
            "duplicate bundle " + b.model + "/" + b.concept_name);
    require(fs::exists(b.path), ErrorCode::ConfigError, "bundle file not found: " + b.path.string());
  }
  ordered_cases(cases);
  require(!noise_levels.empty(), ErrorCode::ConfigError, "noise_levels is empty");
  for (double l : noise_levels) require(std::isfinite(l) && l >= 0.0, ErrorCode::ConfigError, "noise levels must be >= 0");
  require(noise_top_k >= 1, ErrorCode::ConfigError, "noise.top_k must be positive");
  require(hi_scale >= 0.0 && lo_scale >= 0.0, ErrorCode::ConfigError, "noise scales must be >= 0");
  require(feature_cap >= 1 && max_agd_groups >= 2, ErrorCode::ConfigError, "feature_cap >= 1 and max_agd_groups >= 2");
  require(case2.target_dim >= 1 && case2.min_cluster_size >= 2, ErrorCode::ConfigError,
          "case2 target_dim >= 1 and min_cluster_size >= 2");
  require(case2.tau_dim >= 0.0 && case2.tau_dim < 1.0 && case2.tau_pers >= 0.0, ErrorCode::ConfigError,
          "case2 thresholds out of range");
  require(case2.n_neighbors >= 2 && case2.epochs >= 1 && case2.min_dist >= 0.0, ErrorCode::ConfigError,
          "case2 embedding parameters out of range");
  require(!case3.alphas.empty() && !case3.losses.empty(), ErrorCode::ConfigError, "case3 alphas and losses non-empty");
  for (double a : case3.alphas) require(std::isfinite(a) && a > 0.0, ErrorCode::ConfigError, "alphas must be > 0");
  require(case3.iterations >= 1 && case3.subsample >= 2 && case3.lambda_mse >= 0.0, ErrorCode::ConfigError,
          "case3 iterations >= 1, subsample >= 2, lambda_mse >= 0");
}

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  check_keys(j, {"seed", "output_dir", "cases", "noise_levels", "noise", "feature_cap", "max_agd_groups", "agd_metric",
                 "case2", "case3", "bundles"},
             "config");
  RunConfig cfg;
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir.string());
  if (cfg.output_dir.is_relative()) cfg.output_dir = base_dir / cfg.output_dir;
  cfg.cases = get_or<std::vector<std::string>>(j, "cases", cfg.cases);
  cfg.noise_levels = get_or<std::vector<double>>(j, "noise_levels", cfg.noise_levels);
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    check_keys(n, {"top_k", "hi_scale", "lo_scale"}, "noise");
    cfg.noise_top_k = get_or<std::size_t>(n, "top_k", cfg.noise_top_k);
    cfg.hi_scale = get_or<double>(n, "hi_scale", cfg.hi_scale);
    cfg.lo_scale = get_or<double>(n, "lo_scale", cfg.lo_scale);
  }
  cfg.feature_cap = get_or<std::size_t>(j, "feature_cap", cfg.feature_cap);
  cfg.max_agd_groups = get_or<std::size_t>(j, "max_agd_groups", cfg.max_agd_groups);
  auto metric = get_or<std::string>(j, "agd_metric", "bures");
  require(metric == "bures" || metric == "frobenius", ErrorCode::ConfigError, "agd_metric must be bures or frobenius");
  cfg.agd_metric = metric == "bures" ? AgdMetric::Bures : AgdMetric::Frobenius;
  if (j.contains("case2")) {
    const auto& c = j.at("case2");
    check_keys(c, {"reduce", "target_dim", "min_cluster_size", "tau_dim", "tau_pers", "n_neighbors", "epochs", "min_dist"},
               "case2");
    cfg.case2.reduce = parse_reduce(get_or<std::string>(c, "reduce", "pca"));
    cfg.case2.target_dim = get_or<std::size_t>(c, "target_dim", cfg.case2.target_dim);
    cfg.case2.min_cluster_size = get_or<std::size_t>(c, "min_cluster_size", cfg.case2.min_cluster_size);
    cfg.case2.tau_dim = get_or<double>(c, "tau_dim", cfg.case2.tau_dim);
    cfg.case2.tau_pers = get_or<double>(c, "tau_pers", cfg.case2.tau_pers);
    cfg.case2.n_neighbors = get_or<std::size_t>(c, "n_neighbors", cfg.case2.n_neighbors);
    cfg.case2.epochs = get_or<std::size_t>(c, "epochs", cfg.case2.epochs);
    cfg.case2.min_dist = get_or<double>(c, "min_dist", cfg.case2.min_dist);
  }
  if (j.contains("case3")) {
    const auto& c = j.at("case3");
    check_keys(c, {"alphas", "losses", "iterations", "lambda_mse", "subsample"}, "case3");
    cfg.case3.alphas = get_or<std::vector<double>>(c, "alphas", cfg.case3.alphas);
    if (c.contains("losses")) {
      cfg.case3.losses.clear();
      for (const auto& s : get_or<std::vector<std::string>>(c, "losses", {})) cfg.case3.losses.push_back(parse_loss_kind(s));
    }
    cfg.case3.iterations = get_or<std::size_t>(c, "iterations", cfg.case3.iterations);
    cfg.case3.lambda_mse = get_or<double>(c, "lambda_mse", cfg.case3.lambda_mse);
    cfg.case3.subsample = get_or<std::size_t>(c, "subsample", cfg.case3.subsample);
  }
  require(j.contains("bundles") && j.at("bundles").is_array(), ErrorCode::ConfigError, "config needs a bundles array");
  for (const auto& b : j.at("bundles")) {
    check_keys(b, {"model", "concept", "path", "nonlinearity"}, "bundle");
    require(b.contains("nonlinearity"), ErrorCode::ConfigError, "bundle entry needs a nonlinearity");
    BundleSpec spec;
    spec.model = get_or<std::string>(b, "model", "");
    spec.concept_name = get_or<std::string>(b, "concept", "");
    spec.path = get_or<std::string>(b, "path", "");
    if (spec.path.is_relative()) spec.path = base_dir / spec.path;
    spec.nonlinearity = parse_nonlinearity(b.at("nonlinearity"));
    cfg.bundles.push_back(std::move(spec));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorCode::ConfigError, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f, nullptr, true, false);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

json config_to_json(const RunConfig& cfg) {
  json bundles = json::array();
  for (const auto& b : cfg.bundles)
    bundles.push_back({{"model", b.model},
                       {"concept", b.concept_name},
                       {"path", b.path.generic_string()},
                       {"nonlinearity", nonlinearity_json(b.nonlinearity)}});
  json losses = json::array();
  for (auto l : cfg.case3.losses) losses.push_back(loss_kind_name(l));
  return {{"seed", cfg.seed},
          {"output_dir", cfg.output_dir.generic_string()},
          {"cases", cfg.cases},
          {"noise_levels", cfg.noise_levels},
          {"noise", {{"top_k", cfg.noise_top_k}, {"hi_scale", cfg.hi_scale}, {"lo_scale", cfg.lo_scale}}},
          {"feature_cap", cfg.feature_cap},
          {"max_agd_groups", cfg.max_agd_groups},
          {"agd_metric", cfg.agd_metric == AgdMetric::Bures ? "bures" : "frobenius"},
          {"case2",
           {{"reduce", reduce_name(cfg.case2.reduce)},
            {"target_dim", cfg.case2.target_dim},
            {"min_cluster_size", cfg.case2.min_cluster_size},
            {"tau_dim", cfg.case2.tau_dim},
            {"tau_pers", cfg.case2.tau_pers},
            {"n_neighbors", cfg.case2.n_neighbors},
            {"epochs", cfg.case2.epochs},
            {"min_dist", cfg.case2.min_dist}}},
          {"case3",
           {{"alphas", cfg.case3.alphas},
            {"losses", losses},
            {"iterations", cfg.case3.iterations},
            {"lambda_mse", cfg.case3.lambda_mse},
            {"subsample", cfg.case3.subsample}}},
          {"bundles", bundles}};
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.seed) cfg.seed = *o.seed;
  if (o.noise_levels) cfg.noise_levels = *o.noise_levels;
  if (o.alphas) cfg.case3.alphas = *o.alphas;
  if (o.loss) cfg.case3.losses = {*o.loss};
  if (o.reduce) cfg.case2.reduce = *o.reduce;
  cfg.validate();
}

RunReport run(const RunConfig& cfg, const std::vector<std::string>& requested) {
  cfg.validate();
  const auto cases = ordered_cases(requested);
  std::error_code ec;
  fs::create_directories(cache_dir(cfg), ec);
  require(!ec, ErrorCode::IoError, "cannot create output directory " + cfg.output_dir.string());

  RunReport report;
  json stages = json::array();
  auto timed = [&](const std::string& stage, const BundleSpec& b, auto&& body) {
    auto t0 = std::chrono::steady_clock::now();
    json extra = body();
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json entry = {{"stage", stage}, {"model", b.model}, {"concept", b.concept_name}, {"seconds", secs}};
    entry.update(extra);
    stages.push_back(entry);
  };

  for (const auto& c : cases) {
    if (c == "case1") {
      CsvTable table({"concept", "model", "noise_std", "r1", "r2", "r3", "agd"});
      for (const auto& b : cfg.bundles)
        timed("case1", b, [&] {
          Loaded in = load_inputs(b);
          NoiseSpec spec;
          spec.top_k = cfg.noise_top_k;
          spec.hi_scale = cfg.hi_scale;
          spec.lo_scale = cfg.lo_scale;
          spec.seed = stage_seed(cfg, "case1", b);
          SweepOptions opts;
          opts.feature_cap = cfg.feature_cap;
          opts.agd_metric = cfg.agd_metric;
          opts.max_agd_groups = cfg.max_agd_groups;
          for (const auto& r : case1_sweep(in.x, in.params, cfg.noise_levels, spec, opts))
            table.add({b.concept_name, b.model, format_number(r.noise_std), std::to_string(r.triplet.r[0]),
                       std::to_string(r.triplet.r[1]), std::to_string(r.triplet.r[2]), format_number(r.agd)});
          write_latent_cache(cfg, b, in.bundle, clean_latent(in.x, in.params, cfg.feature_cap));
          return json{{"latent_cache", latent_cache_path(cfg, b).generic_string()}};
        });
      table.write(cfg.output_dir / "case1.csv");
      report.files.push_back(cfg.output_dir / "case1.csv");
    } else if (c == "case2") {
      CsvTable table({"model", "concept", "clusters_resid", "clusters_latent", "avg_id_resid", "avg_id_latent",
                      "avg_pca_id_resid", "avg_pca_id_latent", "betti0_resid", "betti0_latent", "mstw_resid",
                      "mstw_latent", "procrustes"});
      for (const auto& b : cfg.bundles)
        timed("case2", b, [&] {
          Loaded in = load_inputs(b);
          LatentCache lc = latent_for_case2(cfg, b, in);
          Case2Config c2;
          c2.reduce.method = cfg.case2.reduce;
          c2.reduce.target_dim = cfg.case2.target_dim;
          c2.reduce.embedding.n_neighbors = cfg.case2.n_neighbors;
          c2.reduce.embedding.epochs = cfg.case2.epochs;
          c2.reduce.embedding.min_dist = cfg.case2.min_dist;
          c2.reduce.embedding.seed = stage_seed(cfg, "case2", b);
          c2.min_cluster_size = cfg.case2.min_cluster_size;
          c2.tau_dim = cfg.case2.tau_dim;
          c2.tau_pers = cfg.case2.tau_pers;
          Case2Report r = case2_report(in.x, lc.latent, c2);
          table.add({b.model, b.concept_name, std::to_string(r.resid.clusters.K), std::to_string(r.latent.clusters.K),
                     format_number(r.resid.local.avg_twonn_id), format_number(r.latent.local.avg_twonn_id),
                     format_number(r.resid.local.avg_pca_id), format_number(r.latent.local.avg_pca_id),
                     format_number(r.resid.local.avg_betti0), format_number(r.latent.local.avg_betti0),
                     format_number(r.resid.global.mstw), format_number(r.latent.global.mstw),
                     format_number(r.resid.global.procrustes_disparity)});
          TensorBundle labels;
          std::vector<std::int64_t> lat(r.latent.clusters.labels.begin(), r.latent.clusters.labels.end());
          std::vector<std::int64_t> res(r.resid.clusters.labels.begin(), r.resid.clusters.labels.end());
          labels.add_i64("labels", {lat.size()}, lat);
          labels.add_i64("labels_resid", {res.size()}, res);
          labels.metadata() = {{"latent_hash", lc.hash}};
          save_bundle(labels, labels_cache_path(cfg, b));
          return json{{"latent_hash", lc.hash}, {"latent_cache_reused", lc.reused}, {"matched_pairs", r.matched_pairs}};
        });
      table.write(cfg.output_dir / "case2.csv");
      report.files.push_back(cfg.output_dir / "case2.csv");
    } else {
      CsvTable table({"concept", "model", "loss_kind", "alpha", "d_gw", "mse", "aedp_orig", "aedp_best", "inv_aedp"});
      CsvTable corr({"concept", "model", "loss_kind", "pearson_aedp_mse"});
      for (const auto& b : cfg.bundles)
        timed("case3", b, [&] {
          Loaded in = load_inputs(b);
          auto lc = read_latent_cache(cfg, b, in.bundle);
          require(lc.has_value(), ErrorCode::MissingDependency,
                  "case3 for " + b.model + "/" + b.concept_name + " needs the zero-noise latent cache; run case1 or case2 first");
          auto lp = labels_cache_path(cfg, b);
          require(fs::exists(lp), ErrorCode::MissingDependency,
                  "case3 for " + b.model + "/" + b.concept_name + " needs case2 cluster labels; run case2 first");
          TensorBundle lb = load_bundle(lp);
          auto it = lb.metadata().find("latent_hash");
          require(it != lb.metadata().end() && it->second == lc->hash, ErrorCode::MissingDependency,
                  "cached labels were computed from a different latent cache; rerun case2");
          ClusterAssignment labels;
          for (auto v : lb.i64("labels")) labels.labels.push_back(static_cast<int>(v));
          for (int v : labels.labels) labels.K = std::max(labels.K, v + 1);
          if (labels.K < 2) return json{{"status", "skipped: fewer than two latent clusters"}};

          InterventionConfig base;
          base.iterations = cfg.case3.iterations;
          base.lambda_mse = cfg.case3.lambda_mse;
          base.subsample = cfg.case3.subsample;
          base.seed = stage_seed(cfg, "case3", b);
          Case3Result res = case3_sweep(lc->latent, labels, in.params, in.x, cfg.case3.alphas, cfg.case3.losses, base);
          for (const auto& r : res.records)
            table.add({b.concept_name, b.model, loss_kind_name(r.loss_kind), format_number(r.alpha), format_number(r.d_gw),
                       format_number(r.mse), format_number(r.aedp_orig), format_number(r.aedp_best),
                       r.inv_aedp ? format_number(*r.inv_aedp) : std::string()});
          json cj = json::object();
          for (const auto& [kind, p] : res.correlation) {
            corr.add({b.concept_name, b.model, loss_kind_name(kind), format_number(p)});
            cj[loss_kind_name(kind)] = std::isfinite(p) ? json(p) : json(nullptr);
          }
          return json{{"status", "ok"}, {"pearson_aedp_mse", cj}};
        });
      table.write(cfg.output_dir / "case3.csv");
      corr.write(cfg.output_dir / "case3_correlation.csv");
      report.files.push_back(cfg.output_dir / "case3.csv");
      report.files.push_back(cfg.output_dir / "case3_correlation.csv");
    }
  }

  report.summary = {{"schema_version", kReportSchemaVersion},
                    {"git_describe", STRATGEO_GIT_DESCRIBE},
                    {"cases", cases},
                    {"config", config_to_json(cfg)},
                    {"stages", stages}};
  std::ofstream f(cfg.output_dir / "summary.json");
  require(static_cast<bool>(f), ErrorCode::IoError, "cannot write summary.json");
  f << report.summary.dump(2) << '\n';
  report.files.push_back(cfg.output_dir / "summary.json");
  return report;
}

}  // namespace stratgeo
