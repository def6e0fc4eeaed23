#pragma once

// Command-line / configuration-file surface of RunConfig. Long option names
// double as configuration keys ([run] section or top level of an INI file).

#include "CLI11.hpp"

#include "authaudit/pipeline.hpp"

namespace authaudit::cli {

inline void add_run_options(CLI::App& run, pipeline::RunConfig& c) {
  run.option_defaults()->always_capture_default();
  run.add_option("--ratings", c.ratings, "per-participant ratings CSV")->group("Data");
  run.add_option("--metadata", c.metadata, "image metadata CSV")->group("Data");
  run.add_option("--manifest", c.manifest, "image_id,path CSV")->group("Data");
  run.add_option("--exclusion", c.exclusion, "metadata exclusion rule, e.g. category=art;generator_id=g3")
      ->group("Data");
  run.add_option("--target-override", c.target_override, "image_id,target CSV replacing the authenticity MOS")
      ->group("Data");

  run.add_option("--synthetic-seeds", c.synthetic_seeds, "synthetic backbone seeds, one architecture each")
      ->group("Backends")
      ->delimiter(',');
  run.add_option("--oracle-url", c.oracle_url, "feature service base URL (env AUTHAUDIT_ORACLE_URL)")
      ->group("Backends");
  run.add_option("--models", c.models, "model names served at --oracle-url")->group("Backends")->delimiter(',');

  run.add_option("--experiment", c.experiment, "exp1 | exp2 | exp3-bag | exp3-stack | all")
      ->group("Design")
      ->check(CLI::IsMember({"exp1", "exp2", "exp3-bag", "exp3-stack", "all"}));
  run.add_option("--variants", c.variants, "variants (seeds) per architecture")->group("Design");
  run.add_option("--seed", c.seed, "base seed")->group("Design");
  run.add_option("--learning-rate", c.train.learning_rate)->group("Training");
  run.add_option("--batch-size", c.train.batch_size)->group("Training");
  run.add_option("--max-epochs", c.train.max_epochs)->group("Training");
  run.add_option("--patience", c.train.patience)->group("Training");
  run.add_option("--dropout", c.train.dropout_p)->group("Training");
  run.add_option("--head-hidden", c.head_hidden, "hidden layer sizes; empty = per-backbone default")
      ->group("Training")
      ->delimiter(',');

  run.add_option("--reliability-resamples", c.reliability_resamples)->group("Psychometrics");
  run.add_option("--gmm-restarts", c.gmm_restarts)->group("Psychometrics");

  run.add_option("--methods", c.methods, "attribution methods")->group("Explanations")->delimiter(',');
  run.add_option("--explain-images", c.explain_images, "test images explained (0 = all)")->group("Explanations");
  run.add_option("--explain-train-images", c.explain_train_images, "train images explained (0 = all)")
      ->group("Explanations");
  run.add_option("--mpm-scales", c.mpm_scales)->group("Explanations")->delimiter(',');
  run.add_option("--mpm-stride", c.mpm_stride)->group("Explanations");
  run.add_option("--mpm-images", c.mpm_images)->group("Explanations");
  run.add_option("--ensemble-mpm-images", c.ensemble_mpm_images)->group("Explanations");
  run.add_option("--lime-images", c.lime_images)->group("Explanations");
  run.add_option("--lime-samples", c.lime_samples)->group("Explanations");
  run.add_option("--lime-keep", c.lime_keep)->group("Explanations");
  run.add_option("--lime-kernel-width", c.lime_kernel_width)->group("Explanations");
  run.add_option("--lime-ridge", c.lime_ridge)->group("Explanations");
  run.add_option("--slic-segments", c.slic_segments)->group("Explanations");
  run.add_option("--slic-compactness", c.slic_compactness)->group("Explanations");
  run.add_option("--slic-iterations", c.slic_iterations)->group("Explanations");

  run.add_option("--deltas", c.deltas, "top-delta% IoU thresholds")->group("Consistency")->delimiter(',');
  run.add_flag("--iou-absolute", c.iou_absolute, "rank pixels by |value|")->group("Consistency");
  run.add_option("--stack-folds", c.stack_folds)->group("Ensembles");
  run.add_option("--stack-ridge", c.stack_ridge)->group("Ensembles");

  run.add_option("-o,--output", c.output, "output directory")->group("Run");
  run.add_option("-j,--jobs", c.jobs, "worker threads")->group("Run")->check(CLI::PositiveNumber);
}

}  // namespace authaudit::cli
