#include "authaudit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "authaudit/binary_io.hpp"
#include "authaudit/corpus.hpp"
#include "authaudit/csv.hpp"
#include "authaudit/feature_cache.hpp"
#include "authaudit/parallel.hpp"
#include "authaudit/prune.hpp"
#include "authaudit/remote_oracle.hpp"
#include "authaudit/stats.hpp"
#include "authaudit/synthetic_backbone.hpp"
#include "pipeline_internal.hpp"

namespace authaudit::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

Experiment parse_experiment(const std::string& text) {
  if (text == "exp1") return Experiment::Exp1;
  if (text == "exp2") return Experiment::Exp2;
  if (text == "exp3-bag") return Experiment::Exp3Bag;
  if (text == "exp3-stack") return Experiment::Exp3Stack;
  if (text == "all") return Experiment::All;
  throw UsageError("unknown experiment '" + text + "' (expected exp1, exp2, exp3-bag, exp3-stack or all)");
}

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::Exp1: return "exp1";
    case Experiment::Exp2: return "exp2";
    case Experiment::Exp3Bag: return "exp3-bag";
    case Experiment::Exp3Stack: return "exp3-stack";
    case Experiment::All: return "all";
  }
  return "?";
}

PartitionRoles partition_roles(Experiment e) {
  switch (e) {
    case Experiment::Exp1: return {{0.70, 0.20, 0.10}, PruneRole::None, false};
    case Experiment::Exp2: return {{0.70, 0.20, 0.10}, PruneRole::Test, false};
    case Experiment::Exp3Bag: return {{0.70, 0.10, 0.20}, PruneRole::Val, false};
    case Experiment::Exp3Stack: return {{0.70, 0.10, 0.20}, PruneRole::Val, true};
    case Experiment::All: break;
  }
  throw std::invalid_argument("partition_roles: 'all' combines several experiments");
}

bool RunConfig::wants(const std::string& method) const {
  return std::find(methods.begin(), methods.end(), method) != methods.end();
}

json RunConfig::to_json() const {
  return {{"ratings", ratings},
          {"metadata", metadata},
          {"manifest", manifest},
          {"exclusion", exclusion},
          {"target_override", target_override},
          {"synthetic_seeds", synthetic_seeds},
          {"oracle_url", oracle_url},
          {"models", models},
          {"experiment", experiment},
          {"variants", variants},
          {"seed", seed},
          {"train", authaudit::to_json(train)},
          {"head_hidden", head_hidden},
          {"reliability_resamples", reliability_resamples},
          {"gmm_restarts", gmm_restarts},
          {"methods", methods},
          {"explain_images", explain_images},
          {"explain_train_images", explain_train_images},
          {"mpm_scales", mpm_scales},
          {"mpm_stride", mpm_stride},
          {"mpm_images", mpm_images},
          {"ensemble_mpm_images", ensemble_mpm_images},
          {"lime_images", lime_images},
          {"lime_samples", lime_samples},
          {"lime_keep", lime_keep},
          {"lime_kernel_width", lime_kernel_width},
          {"lime_ridge", lime_ridge},
          {"slic_segments", slic_segments},
          {"slic_compactness", slic_compactness},
          {"slic_iterations", slic_iterations},
          {"deltas", deltas},
          {"iou_absolute", iou_absolute},
          {"stack_folds", stack_folds},
          {"stack_ridge", stack_ridge},
          {"output", output},
          {"jobs", jobs}};
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Precompute: return "precompute";
    case Stage::Train: return "train";
    case Stage::Prune: return "prune";
    case Stage::Explain: return "explain";
    case Stage::Consistency: return "consistency";
    case Stage::Ensemble: return "ensemble";
    case Stage::Report: return "report";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  for (const Stage s : kStages)
    if (text == stage_name(s)) return s;
  throw UsageError("unknown stage '" + text + "'");
}

std::vector<Stage> upstream(Stage s) {
  switch (s) {
    case Stage::Ingest: return {};
    case Stage::Precompute: return {Stage::Ingest};
    case Stage::Train: return {Stage::Ingest, Stage::Precompute};
    case Stage::Prune: return {Stage::Train};
    case Stage::Explain: return {Stage::Prune};
    case Stage::Consistency: return {Stage::Explain};
    case Stage::Ensemble: return {Stage::Prune};
    case Stage::Report: return {Stage::Consistency, Stage::Ensemble};
  }
  return {};
}

std::vector<std::shared_ptr<const Oracle>> build_oracles(const RunConfig& config) {
  std::vector<std::shared_ptr<const Oracle>> out;
  if (!config.oracle_url.empty()) {
    if (config.models.empty()) throw UsageError("oracle_url is set but no models are listed");
    for (const auto& m : config.models) out.push_back(std::make_shared<RemoteOracle>(config.oracle_url, m));
  } else {
    if (config.synthetic_seeds.empty()) throw UsageError("no backends: set synthetic_seeds or oracle_url");
    for (const auto s : config.synthetic_seeds) out.push_back(std::make_shared<SyntheticBackbone>(s));
  }
  return out;
}

namespace {

// Configuration keys each stage reads directly; upstream hashes cover the rest.
std::vector<std::string> stage_keys(Stage s) {
  switch (s) {
    case Stage::Ingest:
      return {"ratings", "metadata", "manifest", "exclusion", "target_override", "experiment", "variants", "seed",
              "reliability_resamples", "gmm_restarts"};
    case Stage::Precompute: return {"synthetic_seeds", "oracle_url", "models"};
    case Stage::Train: return {"train", "head_hidden"};
    case Stage::Prune: return {};
    case Stage::Explain:
      return {"methods",      "explain_images", "explain_train_images", "mpm_scales",        "mpm_stride",
              "mpm_images",   "lime_images",    "lime_samples",         "lime_keep",         "lime_kernel_width",
              "lime_ridge",   "slic_segments",  "slic_compactness",     "slic_iterations"};
    case Stage::Consistency: return {"deltas", "iou_absolute"};
    case Stage::Ensemble: return {"stack_folds", "stack_ridge", "ensemble_mpm_images", "mpm_scales", "mpm_stride"};
    case Stage::Report: return {};
  }
  return {};
}

std::string file_digest(const std::string& path) {
  if (path.empty() || !fs::exists(path)) return "";
  return fnv1a_hex(read_text(path));
}

json seeds_json(const RunConfig& config) {
  using detail::Scheme;
  json train_std = json::array(), train_ens = json::array();
  for (std::size_t v = 0; v < config.variants; ++v) {
    train_std.push_back(detail::train_seed(config, Scheme::Standard, v));
    train_ens.push_back(detail::train_seed(config, Scheme::Ensemble, v));
  }
  return {{"base", config.seed},
          {"splits_standard", detail::split_seed(config, Scheme::Standard)},
          {"splits_ensemble", detail::split_seed(config, Scheme::Ensemble)},
          {"train_standard", train_std},
          {"train_ensemble", train_ens},
          {"synthetic_backbones", config.oracle_url.empty() ? json(config.synthetic_seeds) : json::array()}};
}

fs::path provenance_path(const RunConfig& config, Stage s) {
  return detail::stage_dir(config, s) / "provenance.json";
}

std::optional<json> read_provenance(const RunConfig& config, Stage s) {
  const auto p = provenance_path(config, s);
  if (!fs::exists(p)) return std::nullopt;
  try {
    json j = json::parse(read_text(p));
    if (!j.value("completed", false)) return std::nullopt;
    return j;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

json artifact_list(const fs::path& dir) {
  std::vector<std::string> files;
  if (fs::exists(dir))
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() != "provenance.json")
        files.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(files.begin(), files.end());
  return files;
}

void run_body(Stage s, const RunConfig& config, std::ostream& log) {
  switch (s) {
    case Stage::Ingest: return detail::run_ingest(config, log);
    case Stage::Precompute: return detail::run_precompute(config, log);
    case Stage::Train: return detail::run_train(config, log);
    case Stage::Prune: return detail::run_prune(config, log);
    case Stage::Explain: return detail::run_explain(config, log);
    case Stage::Consistency: return detail::run_consistency(config, log);
    case Stage::Ensemble: return detail::run_ensemble(config, log);
    case Stage::Report: return detail::run_report(config, log);
  }
}

}  // namespace

StageResult run_stage(Stage stage, const RunConfig& config, std::ostream& log) {
  parse_experiment(config.experiment);
  if (config.variants < 1) throw UsageError("variants must be >= 1");
  if (config.jobs < 1) throw UsageError("jobs must be >= 1");

  json up = json::object();
  for (const Stage u : upstream(stage)) {
    const auto prov = read_provenance(config, u);
    if (!prov)
      throw MissingArtifact(std::string("stage '") + stage_name(stage) + "' needs the output of stage '" +
                            stage_name(u) + "' (no completed " + provenance_path(config, u).string() +
                            "); run `authaudit run " + stage_name(u) + "` first");
    up[stage_name(u)] = (*prov)["config_hash"];
  }

  const json all = config.to_json();
  json relevant = json::object();
  for (const auto& k : stage_keys(stage)) relevant[k] = all.at(k);
  if (stage == Stage::Ingest)
    relevant["digests"] = {file_digest(config.ratings), file_digest(config.metadata), file_digest(config.manifest),
                           file_digest(config.target_override)};
  const std::string hash =
      fnv1a_hex(std::string(stage_name(stage)) + "|" + kCodeVersion + "|" + relevant.dump() + "|" + up.dump());

  if (const auto prev = read_provenance(config, stage); prev && prev->value("config_hash", "") == hash) {
    log << "[" << stage_name(stage) << "] up to date (" << hash << ")\n";
    return {true, hash};
  }

  const fs::path dir = detail::stage_dir(config, stage);
  fs::create_directories(dir);
  fs::remove(provenance_path(config, stage));
  log << "[" << stage_name(stage) << "] running\n";
  run_body(stage, config, log);

  json prov = {{"stage", stage_name(stage)},
               {"config_hash", hash},
               {"code_version", kCodeVersion},
               {"experiment", config.experiment},
               {"seeds", seeds_json(config)},
               {"config", relevant},
               {"upstream", up},
               {"artifacts", artifact_list(dir)},
               {"completed", true}};
  write_text(provenance_path(config, stage), prov.dump(1));
  log << "[" << stage_name(stage) << "] done (" << hash << ")\n";
  return {false, hash};
}

void run_all(const RunConfig& config, std::ostream& log) {
  for (const Stage s : kStages) run_stage(s, config, log);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  if (dynamic_cast<const MissingArtifact*>(&e)) return 2;
  return 3;
}

// ---------------------------------------------------------------------------

namespace detail {

std::size_t Items::at(const std::string& id) const {
  const auto it = index.find(id);
  if (it == index.end()) throw std::out_of_range("unknown image " + id);
  return it->second;
}

fs::path stage_dir(const RunConfig& config, Stage s) { return fs::path(config.output) / stage_name(s); }

Items load_items(const RunConfig& config) {
  const CsvTable t = read_csv(stage_dir(config, Stage::Ingest) / "mos.csv");
  const auto c_id = t.column("image_id"), c_path = t.column("path"), c_target = t.column("target"),
             c_q = t.column("quality"), c_a = t.column("authenticity");
  Items items;
  for (const auto& row : t.rows) {
    items.index[row[c_id]] = items.ids.size();
    items.ids.push_back(row[c_id]);
    items.paths.push_back(row[c_path]);
    items.target.push_back(std::stod(row[c_target]));
    items.quality.push_back(std::stod(row[c_q]));
    items.authenticity.push_back(std::stod(row[c_a]));
  }
  return items;
}

const char* scheme_name(Scheme s) { return s == Scheme::Standard ? "standard" : "ensemble"; }

bool scheme_enabled(const RunConfig& config, Scheme s) {
  const Experiment e = parse_experiment(config.experiment);
  if (e == Experiment::All) return true;
  const bool ens = e == Experiment::Exp3Bag || e == Experiment::Exp3Stack;
  return (s == Scheme::Ensemble) == ens;
}

PruneRole prune_role(const RunConfig& config, Scheme s) {
  if (!scheme_enabled(config, s)) return PruneRole::None;
  Experiment e = parse_experiment(config.experiment);
  if (e == Experiment::All) e = s == Scheme::Standard ? Experiment::Exp2 : Experiment::Exp3Bag;
  return partition_roles(e).prune;
}

std::uint64_t split_seed(const RunConfig& config, Scheme s) {
  return s == Scheme::Standard ? config.seed : config.seed + 7919;
}

std::uint64_t train_seed(const RunConfig& config, Scheme s, std::size_t variant) {
  return config.seed + (s == Scheme::Standard ? 0 : 1000) + variant;
}

std::string variant_tag(std::size_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "v%02zu", v);
  return buf;
}

fs::path variant_dir(const RunConfig& config, Stage s, Scheme scheme, const std::string& arch, std::size_t v) {
  return stage_dir(config, s) / scheme_name(scheme) / safe_name(arch) / variant_tag(v);
}

std::vector<corpus::SplitPlan> load_plans(const RunConfig& config, Scheme s) {
  const fs::path p = stage_dir(config, Stage::Ingest) / (std::string("splits_") + scheme_name(s) + ".json");
  std::vector<corpus::SplitPlan> plans;
  for (const auto& j : read_json(p)) plans.push_back(corpus::split_from_json(j));
  return plans;
}

std::string role_of(const corpus::SplitPlan& plan, const std::string& id) {
  auto in = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), id) != v.end(); };
  if (in(plan.train)) return "train";
  if (in(plan.val)) return "val";
  if (in(plan.test)) return "test";
  return "none";
}

std::vector<std::string> sorted_ids(std::vector<std::string> ids, std::size_t cap) {
  std::sort(ids.begin(), ids.end());
  if (cap > 0 && ids.size() > cap) ids.resize(cap);
  return ids;
}

std::vector<std::string> arch_names(const std::vector<std::shared_ptr<const Oracle>>& oracles) {
  std::vector<std::string> names;
  for (const auto& o : oracles) names.push_back(o->meta().backbone_name);
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != names.size()) throw UsageError("backends report duplicate names");
  return names;
}

std::string safe_name(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return out;
}

FeatureCache open_featmaps(const RunConfig& config, const std::string& arch) {
  return FeatureCache::open(stage_dir(config, Stage::Precompute) / safe_name(arch) / "featmaps.afc");
}

FeatureCache open_embeddings(const RunConfig& config, const std::string& arch) {
  return FeatureCache::open(stage_dir(config, Stage::Precompute) / safe_name(arch) / "embeddings.afc");
}

Image model_view(const Image& image) { return resize_center_crop(image); }

Tensor3 load_input(const Items& items, std::size_t idx) { return preprocess(read_image(items.paths.at(idx))); }

ChannelMask load_mask(const RunConfig& config, Scheme scheme, const std::string& arch, std::size_t v,
                      std::size_t channels) {
  const fs::path p = variant_dir(config, Stage::Prune, scheme, arch, v) / "trace.json";
  if (!fs::exists(p)) return ChannelMask::all(channels);
  return trace_from_json(read_json(p)).final_mask;
}

void write_predictions(const fs::path& path, const std::vector<PredictionRow>& rows) {
  CsvTable t{{"scheme", "architecture", "variant", "image_id", "role", "prediction"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({r.scheme, r.arch, std::to_string(r.variant), r.image_id, r.role, fmt(r.prediction)});
  write_csv(path, t);
}

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const auto cs = t.column("scheme"), ca = t.column("architecture"), cv = t.column("variant"),
             ci = t.column("image_id"), cr = t.column("role"), cp = t.column("prediction");
  std::vector<PredictionRow> rows;
  rows.reserve(t.rows.size());
  for (const auto& r : t.rows)
    rows.push_back({r[cs], r[ca], static_cast<std::size_t>(std::stoul(r[cv])), r[ci], r[cr], std::stod(r[cp])});
  return rows;
}

PredictionIndex index_predictions(const std::vector<PredictionRow>& rows, Scheme scheme) {
  PredictionIndex idx;
  for (const auto& r : rows) {
    if (r.scheme != scheme_name(scheme)) continue;
    auto& per = idx[r.arch];
    if (per.size() <= r.variant) per.resize(r.variant + 1);
    per[r.variant][r.image_id] = r.prediction;
  }
  return idx;
}

std::vector<std::vector<double>> prediction_vectors(const PredictionIndex& index, const std::string& arch,
                                                    const std::vector<std::string>& ids) {
  std::vector<std::vector<double>> out;
  for (const auto& per : index.at(arch)) {
    std::vector<double> v;
    v.reserve(ids.size());
    for (const auto& id : ids) v.push_back(per.at(id));
    out.push_back(std::move(v));
  }
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact("missing artifact " + path.string());
  return json::parse(read_text(path));
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  write_text(path, j.dump(1));
}

json metric_json(const stats::MetricBundle& m) {
  return {{"rmse", m.rmse},
          {"mae", m.mae},
          {"plcc", m.plcc ? json(*m.plcc) : json(nullptr)},
          {"srcc", m.srcc ? json(*m.srcc) : json(nullptr)}};
}

stats::MetricBundle metrics_on(const std::unordered_map<std::string, double>& pred, const Items& items,
                               const std::vector<std::string>& ids) {
  std::vector<double> p, t;
  for (const auto& id : ids) {
    p.push_back(pred.at(id));
    t.push_back(items.target[items.at(id)]);
  }
  return stats::metrics(p, t);
}

std::vector<ArchInfo> load_architectures(const RunConfig& config) {
  std::vector<ArchInfo> out;
  for (const auto& j : read_json(stage_dir(config, Stage::Precompute) / "architectures.json"))
    out.push_back({j.at("name").get<std::string>(), meta_from_json(j.at("meta"))});
  return out;
}

std::vector<Scheme> enabled_schemes(const RunConfig& config) {
  std::vector<Scheme> out;
  for (const Scheme s : {Scheme::Standard, Scheme::Ensemble})
    if (scheme_enabled(config, s)) out.push_back(s);
  return out;
}

// --- ingest -------------------------------------------------------------------

void run_ingest(const RunConfig& config, std::ostream& log) {
  if (config.ratings.empty() || config.metadata.empty()) throw UsageError("ratings and metadata paths are required");
  for (const auto& p : {config.ratings, config.metadata})
    if (!fs::exists(p)) throw UsageError("input file not found: " + p);
  std::optional<fs::path> manifest;
  if (!config.manifest.empty()) manifest = config.manifest;
  corpus::Dataset ds = corpus::load_dataset(config.ratings, config.metadata, manifest);
  corpus::validate(ds);

  const auto rule = corpus::ExclusionRule::parse(config.exclusion);
  const auto ex = corpus::apply_exclusion(ds.records, rule);
  if (ex.kept.size() < 10) throw std::runtime_error("fewer than 10 images remain after exclusion");
  log << "  " << ex.kept.size() << " images kept, " << ex.removed.size() << " excluded\n";

  const fs::path dir = stage_dir(config, Stage::Ingest);
  const std::size_t P = ds.participants.size();

  // Exclusion validation: per-participant mean ratings, kept vs removed.
  json exclusion = {{"rule", config.exclusion}, {"kept", ex.kept.size()}, {"removed", ex.removed.size()}};
  json tests = json::object();
  if (!ex.removed.empty()) {
    for (const auto m : corpus::kMeasures) {
      std::vector<double> kept_mean(P, 0.0), removed_mean(P, 0.0);
      for (const auto& r : ex.kept)
        for (std::size_t p = 0; p < P; ++p) kept_mean[p] += r.ratings(m)[p];
      for (const auto& r : ex.removed)
        for (std::size_t p = 0; p < P; ++p) removed_mean[p] += r.ratings(m)[p];
      for (std::size_t p = 0; p < P; ++p) {
        kept_mean[p] /= static_cast<double>(ex.kept.size());
        removed_mean[p] /= static_cast<double>(ex.removed.size());
      }
      const auto t = stats::paired_t(kept_mean, removed_mean);
      tests[corpus::measure_name(m)] = {{"mean_kept", stats::mean(kept_mean)},
                                        {"mean_removed", stats::mean(removed_mean)},
                                        {"t", t.t},
                                        {"df", t.df},
                                        {"p", t.p},
                                        {"cohens_d", t.cohens_d}};
    }
  }
  exclusion["paired_t"] = tests;
  write_json(dir / "exclusion.json", exclusion);

  const corpus::MOSTable mos = corpus::compute_mos(ex.kept);
  const auto& A = mos[corpus::Measure::Authenticity].mos;
  const auto& Q = mos[corpus::Measure::Quality].mos;

  std::vector<double> target = A;
  if (!config.target_override.empty()) {
    const CsvTable t = read_csv(config.target_override);
    const auto ci = t.column("image_id"), ct = t.column("target");
    std::unordered_map<std::string, double> over;
    for (const auto& row : t.rows) over[row[ci]] = std::stod(row[ct]);
    for (std::size_t i = 0; i < mos.ids.size(); ++i) {
      const auto it = over.find(mos.ids[i]);
      if (it == over.end()) throw std::invalid_argument("target override lacks image " + mos.ids[i]);
      target[i] = it->second;
    }
    log << "  targets replaced from " << config.target_override << "\n";
  }

  const fs::path manifest_dir = manifest ? manifest->parent_path() : fs::path(config.ratings).parent_path();
  CsvTable out{{"image_id", "generator_id", "category", "challenge", "quality", "authenticity", "correspondence",
                "target", "path"},
               {}};
  for (std::size_t i = 0; i < ex.kept.size(); ++i) {
    const auto& r = ex.kept[i];
    std::string path;
    if (!r.image_path.empty()) path = fs::absolute(manifest_dir / r.image_path).lexically_normal().string();
    out.rows.push_back({r.image_id, r.generator_id, r.category, r.challenge,
                        fmt(mos[corpus::Measure::Quality].mos[i]), fmt(A[i]),
                        fmt(mos[corpus::Measure::Correspondence].mos[i]), fmt(target[i]), path});
  }
  write_csv(dir / "mos.csv", out);

  // Psychometrics.
  json psych = {{"images", mos.ids.size()}, {"participants", P}, {"warnings", mos.warnings}};
  json measures = json::object();
  for (const auto m : corpus::kMeasures) {
    const auto& mt = mos[m];
    const auto rel = stats::split_half_reliability(
        mt.z, {config.reliability_resamples, 0, config.seed + static_cast<std::uint64_t>(m)});
    stats::GmmOptions go;
    go.restarts = config.gmm_restarts;
    go.seed = config.seed;
    const auto bim = stats::gmm_bimodality(mt.mos, go);
    measures[corpus::measure_name(m)] = {{"split_half_r", rel.split_half_r},
                                         {"spearman_brown_r", rel.spearman_brown_r},
                                         {"noise_ceiling", rel.noise_ceiling},
                                         {"resamples", rel.n_resamples},
                                         {"skipped_resamples", rel.n_skipped},
                                         {"warnings", rel.warnings},
                                         {"delta_bic", bim.delta_bic},
                                         {"bic_one", bim.bic_one},
                                         {"bic_two", bim.bic_two},
                                         {"gmm_converged", bim.converged},
                                         {"mos_mean", stats::mean(mt.mos)},
                                         {"mos_sd", std::sqrt(stats::variance(mt.mos))}};
  }
  psych["measures"] = measures;
  const auto rqa = stats::pearson(Q, A);
  psych["r_quality_authenticity"] = rqa ? json(*rqa) : json(nullptr);

  std::vector<double> a_mean, a_sd;
  for (const auto& r : ex.kept) {
    std::vector<double> v(r.ratings(corpus::Measure::Authenticity).begin(),
                          r.ratings(corpus::Measure::Authenticity).end());
    a_mean.push_back(stats::mean(v));
    a_sd.push_back(std::sqrt(stats::variance(v)));
  }
  const auto rms = stats::pearson(a_mean, a_sd);
  psych["r_authenticity_mean_sd"] = rms ? json(*rms) : json(nullptr);
  write_json(dir / "psychometrics.json", psych);

  // Split plans, stratified by target decile.
  const auto strata = std::vector<double>(target.begin(), target.end());
  for (const Scheme s : enabled_schemes(config)) {
    corpus::SplitOptions so;
    so.ratios = partition_roles(s == Scheme::Standard ? Experiment::Exp2 : Experiment::Exp3Bag).ratios;
    const auto plans = corpus::make_splits(mos.ids, strata, config.variants, split_seed(config, s), so);
    json arr = json::array();
    for (const auto& p : plans) arr.push_back(corpus::to_json(p));
    write_json(dir / (std::string("splits_") + scheme_name(s) + ".json"), arr);
  }
}

// --- precompute -----------------------------------------------------------------

void run_precompute(const RunConfig& config, std::ostream& log) {
  const Items items = load_items(config);
  for (const auto& p : items.paths)
    if (p.empty()) throw UsageError("precompute needs image paths; supply a manifest");
  const auto oracles = build_oracles(config);
  const auto names = arch_names(oracles);
  const fs::path dir = stage_dir(config, Stage::Precompute);

  json archs = json::array();
  for (std::size_t a = 0; a < oracles.size(); ++a) {
    const Oracle& oracle = *oracles[a];
    const OracleMeta meta = oracle.meta();
    std::vector<Embedding> emb(items.size());
    std::vector<FeatureMapTensor> fm(items.size());
    parallel_for(items.size(), config.jobs, [&](std::size_t i) {
      const Tensor3 input = load_input(items, i);
      emb[i] = oracle.embed(input);
      fm[i] = oracle.featmaps(input);
      if (emb[i].size() != meta.embed_dim) throw OracleError("embedding size disagrees with backend metadata");
    });
    FeatureCacheWriter ew, fw;
    for (std::size_t i = 0; i < items.size(); ++i) {
      ew.add_embedding(items.ids[i], emb[i]);
      fw.add_featmaps(items.ids[i], fm[i]);
    }
    const fs::path adir = dir / safe_name(names[a]);
    fs::create_directories(adir);
    ew.write(adir / "embeddings.afc");
    fw.write(adir / "featmaps.afc");
    write_json(adir / "meta.json", to_json(meta));
    archs.push_back({{"name", names[a]}, {"meta", to_json(meta)}, {"has_tail", oracle.has_tail()}});
    log << "  " << names[a] << ": " << items.size() << " embeddings (dim " << meta.embed_dim << ")\n";
  }
  write_json(dir / "architectures.json", archs);
}

// --- train ------------------------------------------------------------------------

void run_train(const RunConfig& config, std::ostream& log) {
  const Items items = load_items(config);
  const auto archs = load_architectures(config);
  TargetTable targets;
  for (std::size_t i = 0; i < items.size(); ++i) targets[items.ids[i]] = items.target[i];

  std::vector<EmbeddingTable> tables(archs.size());
  for (std::size_t a = 0; a < archs.size(); ++a) {
    const auto cache = open_embeddings(config, archs[a].name);
    for (const auto& id : items.ids) tables[a][id] = cache.embedding(id);
  }

  struct Task {
    Scheme scheme;
    std::size_t arch;
    std::size_t variant;
  };
  std::vector<Task> tasks;
  std::map<Scheme, std::vector<corpus::SplitPlan>> plans;
  for (const Scheme s : enabled_schemes(config)) {
    plans[s] = load_plans(config, s);
    for (std::size_t a = 0; a < archs.size(); ++a)
      for (std::size_t v = 0; v < plans[s].size(); ++v) tasks.push_back({s, a, v});
  }

  std::vector<std::vector<PredictionRow>> rows(tasks.size());
  std::vector<json> summaries(tasks.size());
  parallel_for(tasks.size(), config.jobs, [&](std::size_t t) {
    const Task& task = tasks[t];
    const auto& arch = archs[task.arch];
    const auto& plan = plans.at(task.scheme)[task.variant];
    std::vector<std::size_t> dims;
    if (config.head_hidden.empty()) {
      dims = head_dims_for(arch.meta.backbone_name, arch.meta.embed_dim);
    } else {
      dims.push_back(arch.meta.embed_dim);
      dims.insert(dims.end(), config.head_hidden.begin(), config.head_hidden.end());
      dims.push_back(1);
    }
    TrainConfig cfg = config.train;
    cfg.seed = train_seed(config, task.scheme, task.variant);
    const TrainedVariant tv = train_head(tables[task.arch], targets, plan, cfg, dims);

    const fs::path vdir = variant_dir(config, Stage::Train, task.scheme, arch.name, task.variant);
    fs::create_directories(vdir);
    save_head(vdir / "head.afc", tv.head,
              {{"architecture", arch.name},
               {"scheme", scheme_name(task.scheme)},
               {"variant", task.variant},
               {"train", authaudit::to_json(cfg)}});

    std::unordered_map<std::string, double> pred;
    for (const auto& id : items.ids) {
      pred[id] = predict(tv.head, tables[task.arch].at(id));
      rows[t].push_back({scheme_name(task.scheme), arch.name, task.variant, id, role_of(plan, id), pred[id]});
    }
    json hist = json::array();
    for (const auto& h : tv.history) hist.push_back({h.train, h.val});
    json summary = {{"architecture", arch.name},
                    {"scheme", scheme_name(task.scheme)},
                    {"variant", task.variant},
                    {"seed", cfg.seed},
                    {"dims", dims},
                    {"best_epoch", tv.best_epoch},
                    {"epochs", tv.history.size()},
                    {"val", metric_json(metrics_on(pred, items, plan.val))},
                    {"test", metric_json(metrics_on(pred, items, plan.test))}};
    json variant = summary;
    variant["split"] = corpus::to_json(plan);
    variant["history"] = hist;
    write_json(vdir / "variant.json", variant);
    summaries[t] = summary;
  });

  std::vector<PredictionRow> all;
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  write_predictions(stage_dir(config, Stage::Train) / "predictions.csv", all);

  json metrics = json::object();
  for (const Scheme s : enabled_schemes(config)) {
    const auto index = index_predictions(all, s);
    const auto& test_ids = plans.at(s).front().test;
    for (const auto& arch : archs) {
      json vs = json::array();
      for (std::size_t t = 0; t < tasks.size(); ++t)
        if (tasks[t].scheme == s && archs[tasks[t].arch].name == arch.name) vs.push_back(summaries[t]);
      const auto rel = stats::model_reliability(prediction_vectors(index, arch.name, test_ids));
      metrics[scheme_name(s)][arch.name] = {{"variants", vs},
                                            {"model_reliability", rel.value},
                                            {"model_reliability_pairs", rel.n_pairs}};
      log << "  " << scheme_name(s) << " " << arch.name << ": model reliability " << fmt(rel.value) << "\n";
    }
  }
  write_json(stage_dir(config, Stage::Train) / "metrics.json", metrics);
}

// --- prune --------------------------------------------------------------------------

void run_prune(const RunConfig& config, std::ostream& log) {
  const Items items = load_items(config);
  const auto archs = load_architectures(config);
  std::vector<std::shared_ptr<const Oracle>> oracles;
  const auto oracle_for = [&](std::size_t a) -> const Oracle& {
    if (oracles.empty()) oracles = build_oracles(config);
    if (a >= oracles.size() || oracles[a]->meta().backbone_name != archs[a].name)
      throw UsageError("configured backends do not match the precomputed architectures");
    return *oracles[a];
  };

  std::vector<PredictionRow> rows;
  json metrics = json::object();
  for (const Scheme s : enabled_schemes(config)) {
    const PruneRole role = prune_role(config, s);
    if (role == PruneRole::None) continue;
    const auto plans = load_plans(config, s);
    for (std::size_t a = 0; a < archs.size(); ++a) {
      const auto& arch = archs[a];
      const Oracle& oracle = oracle_for(a);
      const FeatureCache fm_cache = open_featmaps(config, arch.name);
      json per = json::array();
      for (std::size_t v = 0; v < plans.size(); ++v) {
        const auto& plan = plans[v];
        const auto& eval_ids = role == PruneRole::Test ? plan.test : plan.val;
        const std::string eval_id = std::string(scheme_name(s)) + ":" + (role == PruneRole::Test ? "test" : "val");
        const HeadParams head = load_head(variant_dir(config, Stage::Train, s, arch.name, v) / "head.afc");
        std::vector<double> tgt;
        for (const auto& id : eval_ids) tgt.push_back(items.target[items.at(id)]);

        PruneProblem problem;
        if (oracle.has_tail()) {
          std::vector<FeatureMapTensor> fms;
          for (const auto& id : eval_ids) fms.push_back(fm_cache.featmaps(id));
          problem = prune_problem_from_featmaps(head, oracle, std::move(fms), tgt);
        } else {
          std::vector<Tensor3> inputs;
          for (const auto& id : eval_ids) inputs.push_back(load_input(items, items.at(id)));
          problem = prune_problem_from_oracle(head, oracle, std::move(inputs), tgt);
        }

        const fs::path vdir = variant_dir(config, Stage::Prune, s, arch.name, v);
        fs::create_directories(vdir);
        const fs::path partial = vdir / "trace.partial.json";
        std::optional<PruneTrace> resume;
        if (fs::exists(partial)) {
          resume = trace_from_json(read_json(partial));
          if (resume->eval_set_id != eval_id) resume.reset();
        }
        PruneTrace trace;
        try {
          trace = sbs_prune(problem, eval_id, config.jobs, resume ? &*resume : nullptr);
        } catch (const PruneInterrupted& e) {
          write_json(partial, to_json(e.partial));
          throw;
        }
        write_json(vdir / "trace.json", to_json(trace));
        fs::remove(partial);

        std::unordered_map<std::string, double> pred;
        std::vector<std::string> ids = items.ids;
        std::vector<double> values(ids.size());
        parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
          const Embedding e = oracle.has_tail() ? oracle.tail(fm_cache.featmaps(ids[i]), &trace.final_mask)
                                                : oracle.embed(load_input(items, i), &trace.final_mask);
          values[i] = predict(head, e);
        });
        for (std::size_t i = 0; i < ids.size(); ++i) {
          pred[ids[i]] = values[i];
          rows.push_back({scheme_name(s), arch.name, v, ids[i], role_of(plan, ids[i]), values[i]});
        }
        const double final_rmse = trace.steps.empty() ? trace.initial_rmse : trace.steps.back().rmse_after;
        per.push_back({{"variant", v},
                       {"eval_set", eval_id},
                       {"initial_rmse", trace.initial_rmse},
                       {"final_rmse", final_rmse},
                       {"removed", trace.steps.size()},
                       {"retained", trace.final_mask.count()},
                       {"channels", trace.final_mask.size()},
                       {"val", metric_json(metrics_on(pred, items, plan.val))},
                       {"test", metric_json(metrics_on(pred, items, plan.test))}});
        log << "  " << scheme_name(s) << " " << arch.name << " " << variant_tag(v) << ": removed "
            << trace.steps.size() << " channels, rmse " << fmt(trace.initial_rmse) << " -> " << fmt(final_rmse)
            << "\n";
      }
      metrics[scheme_name(s)][arch.name] = per;
    }
  }
  write_predictions(stage_dir(config, Stage::Prune) / "predictions.csv", rows);
  write_json(stage_dir(config, Stage::Prune) / "metrics.json", metrics);
}

}  // namespace detail
}  // namespace authaudit::pipeline
