#pragma once

// Stage orchestration: ingest -> precompute -> train -> prune -> explain ->
// consistency / ensemble -> report. Every stage writes a provenance.json and
// is skipped when its configuration hash (which folds in the upstream hashes)
// is unchanged.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "authaudit/head.hpp"
#include "authaudit/oracle.hpp"
#include "json.hpp"

namespace authaudit::pipeline {

inline constexpr const char* kCodeVersion = "authaudit 0.1.0";

enum class Experiment { Exp1, Exp2, Exp3Bag, Exp3Stack, All };
Experiment parse_experiment(const std::string& text);
const char* experiment_name(Experiment e);

enum class PruneRole { None, Test, Val };

struct PartitionRoles {
  std::array<double, 3> ratios;  // base fit, model selection, final evaluation
  PruneRole prune;
  bool stacking;
};
// Roles of the train/val/test partitions for a single experiment (not All).
PartitionRoles partition_roles(Experiment e);

struct RunConfig {
  std::string ratings;
  std::string metadata;
  std::string manifest;
  std::string exclusion;
  std::string target_override;  // CSV image_id,target replacing the authenticity MOS

  std::vector<std::uint64_t> synthetic_seeds{101, 202, 303};
  std::string oracle_url;
  std::vector<std::string> models;

  std::string experiment = "all";
  std::size_t variants = 10;
  std::uint64_t seed = 0;
  TrainConfig train;
  std::vector<std::size_t> head_hidden;  // empty: per-backbone default

  std::size_t reliability_resamples = 20;
  int gmm_restarts = 50;

  std::vector<std::string> methods{"gradcam", "mpm", "lime"};
  std::size_t explain_images = 0;        // test images explained; 0 = all
  std::size_t explain_train_images = 0;  // train images explained; 0 = all
  std::vector<int> mpm_scales{3, 17, 65};
  int mpm_stride = 1;
  std::size_t mpm_images = 4;
  std::size_t ensemble_mpm_images = 2;
  std::size_t lime_images = 4;
  int lime_samples = 1200;
  double lime_keep = 0.7;
  double lime_kernel_width = 0.25;
  double lime_ridge = 1.0;
  int slic_segments = 150;
  double slic_compactness = 10.0;
  int slic_iterations = 10;

  std::vector<double> deltas{5.0, 15.0, 25.0};
  bool iou_absolute = false;
  std::size_t stack_folds = 5;
  double stack_ridge = 0.0;

  std::string output = "authaudit-out";
  int jobs = 1;

  bool wants(const std::string& method) const;
  nlohmann::json to_json() const;
};

enum class Stage { Ingest, Precompute, Train, Prune, Explain, Consistency, Ensemble, Report };
inline constexpr std::array<Stage, 8> kStages{Stage::Ingest,  Stage::Precompute,  Stage::Train,    Stage::Prune,
                                              Stage::Explain, Stage::Consistency, Stage::Ensemble, Stage::Report};
const char* stage_name(Stage s);
Stage parse_stage(const std::string& text);
std::vector<Stage> upstream(Stage s);

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageResult {
  bool skipped = false;
  std::string config_hash;
};

// Backends named by the configuration, in architecture order.
std::vector<std::shared_ptr<const Oracle>> build_oracles(const RunConfig& config);

StageResult run_stage(Stage stage, const RunConfig& config, std::ostream& log);
void run_all(const RunConfig& config, std::ostream& log);

// Exit status for an exception escaping a stage: 1 usage, 2 missing artifact, 3 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace authaudit::pipeline
