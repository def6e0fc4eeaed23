#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "authaudit/corpus.hpp"
#include "authaudit/feature_cache.hpp"
#include "authaudit/pipeline.hpp"
#include "authaudit/stats.hpp"

namespace authaudit::pipeline::detail {

namespace fs = std::filesystem;

// Kept images with their scores, as written by the ingest stage.
struct Items {
  std::vector<std::string> ids;
  std::vector<std::string> paths;
  std::vector<double> target;
  std::vector<double> quality;
  std::vector<double> authenticity;
  std::unordered_map<std::string, std::size_t> index;

  std::size_t at(const std::string& id) const;
  std::size_t size() const { return ids.size(); }
};

Items load_items(const RunConfig& config);

enum class Scheme { Standard, Ensemble };
const char* scheme_name(Scheme s);
bool scheme_enabled(const RunConfig& config, Scheme s);
PruneRole prune_role(const RunConfig& config, Scheme s);
std::uint64_t split_seed(const RunConfig& config, Scheme s);
std::uint64_t train_seed(const RunConfig& config, Scheme s, std::size_t variant);

fs::path stage_dir(const RunConfig& config, Stage s);
fs::path variant_dir(const RunConfig& config, Stage s, Scheme scheme, const std::string& arch, std::size_t v);
std::string variant_tag(std::size_t v);

std::vector<corpus::SplitPlan> load_plans(const RunConfig& config, Scheme s);
std::string role_of(const corpus::SplitPlan& plan, const std::string& id);
std::vector<std::string> sorted_ids(std::vector<std::string> ids, std::size_t cap);

std::vector<std::string> arch_names(const std::vector<std::shared_ptr<const Oracle>>& oracles);
// Directory-safe form of a backbone name.
std::string safe_name(const std::string& name);

FeatureCache open_featmaps(const RunConfig& config, const std::string& arch);
FeatureCache open_embeddings(const RunConfig& config, const std::string& arch);

// Pixel image the backbone sees (224 x 224, post crop) and its preprocessed tensor.
Image model_view(const Image& image);
Tensor3 load_input(const Items& items, std::size_t idx);

ChannelMask load_mask(const RunConfig& config, Scheme scheme, const std::string& arch, std::size_t v,
                      std::size_t channels);

struct PredictionRow {
  std::string scheme;
  std::string arch;
  std::size_t variant = 0;
  std::string image_id;
  std::string role;
  double prediction = 0.0;
};

void write_predictions(const fs::path& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions(const fs::path& path);

// predictions[arch][variant][image_id] for one scheme.
using PredictionIndex = std::map<std::string, std::vector<std::unordered_map<std::string, double>>>;
PredictionIndex index_predictions(const std::vector<PredictionRow>& rows, Scheme scheme);

// Prediction vectors over `ids`, one per variant.
std::vector<std::vector<double>> prediction_vectors(const PredictionIndex& index, const std::string& arch,
                                                    const std::vector<std::string>& ids);

struct ArchInfo {
  std::string name;
  OracleMeta meta;
};
// Architectures recorded by the precompute stage, in configuration order.
std::vector<ArchInfo> load_architectures(const RunConfig& config);
std::vector<Scheme> enabled_schemes(const RunConfig& config);

nlohmann::json metric_json(const stats::MetricBundle& m);
stats::MetricBundle metrics_on(const std::unordered_map<std::string, double>& pred, const Items& items,
                               const std::vector<std::string>& ids);

std::string fmt(double v);
nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& j);

// Stage bodies.
void run_ingest(const RunConfig& config, std::ostream& log);
void run_precompute(const RunConfig& config, std::ostream& log);
void run_train(const RunConfig& config, std::ostream& log);
void run_prune(const RunConfig& config, std::ostream& log);
void run_explain(const RunConfig& config, std::ostream& log);
void run_consistency(const RunConfig& config, std::ostream& log);
void run_ensemble(const RunConfig& config, std::ostream& log);
void run_report(const RunConfig& config, std::ostream& log);

}  // namespace authaudit::pipeline::detail
