// explain, consistency and ensemble stages.

#include <algorithm>
#include <cmath>
#include <map>

#include "authaudit/binary_io.hpp"
#include "authaudit/consist.hpp"
#include "authaudit/csv.hpp"
#include "authaudit/ensemble.hpp"
#include "authaudit/explain.hpp"
#include "authaudit/parallel.hpp"
#include "authaudit/prune.hpp"
#include "pipeline_internal.hpp"

namespace authaudit::pipeline::detail {

using nlohmann::json;

namespace {

// Heads, masks and backends of the pruned standard variants.
struct VariantSet {
  std::vector<ArchInfo> archs;
  std::vector<std::shared_ptr<const Oracle>> oracles;
  std::vector<std::vector<HeadParams>> heads;    // [arch][variant]
  std::vector<std::vector<ChannelMask>> masks;  // [arch][variant]
};

VariantSet load_variants(const RunConfig& config, Scheme scheme) {
  VariantSet vs;
  vs.archs = load_architectures(config);
  vs.oracles = build_oracles(config);
  if (vs.oracles.size() != vs.archs.size()) throw UsageError("configured backends do not match precomputed ones");
  const std::size_t n_var = load_plans(config, scheme).size();
  for (std::size_t a = 0; a < vs.archs.size(); ++a) {
    if (vs.oracles[a]->meta().backbone_name != vs.archs[a].name)
      throw UsageError("configured backends do not match precomputed ones");
    vs.heads.emplace_back();
    vs.masks.emplace_back();
    for (std::size_t v = 0; v < n_var; ++v) {
      vs.heads[a].push_back(load_head(variant_dir(config, Stage::Train, scheme, vs.archs[a].name, v) / "head.afc"));
      vs.masks[a].push_back(load_mask(config, scheme, vs.archs[a].name, v,
                                      static_cast<std::size_t>(vs.archs[a].meta.channels())));
    }
  }
  return vs;
}

fs::path map_path(const RunConfig& config, const std::string& method, const std::string& arch,
                  std::optional<std::size_t> v, const std::string& id) {
  fs::path p = stage_dir(config, Stage::Explain) / method / safe_name(arch);
  if (v) p /= variant_tag(*v);
  return p / (id + ".amap");
}

void write_skip(const fs::path& dir, const std::string& reason, std::ostream& log) {
  write_json(dir / "skipped.json", {{"reason", reason}});
  log << "  skipped: " << reason << "\n";
}

json summary_json(const consist::Summary& s) { return {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}}; }

Embedding masked_embedding(const Oracle& oracle, const FeatureCache& cache, const Items& items,
                           const std::string& id, const ChannelMask& mask) {
  if (oracle.has_tail()) return oracle.tail(cache.featmaps(id), &mask);
  return oracle.embed(load_input(items, items.at(id)), &mask);
}

}  // namespace

// --- explain ------------------------------------------------------------------------

void run_explain(const RunConfig& config, std::ostream& log) {
  const fs::path dir = stage_dir(config, Stage::Explain);
  if (prune_role(config, Scheme::Standard) == PruneRole::None) {
    write_skip(dir, "explanations are computed for the pruned variants of exp2", log);
    return;
  }
  const Items items = load_items(config);
  const VariantSet vs = load_variants(config, Scheme::Standard);
  const auto plans = load_plans(config, Scheme::Standard);
  const auto test_ids = sorted_ids(plans.front().test, config.explain_images);
  const auto train_ids = sorted_ids(plans.front().train, config.explain_train_images);
  const std::size_t n_var = plans.size();
  write_json(dir / "sets.json", {{"test", test_ids}, {"train", train_ids}});

  if (config.wants("gradcam")) {
    std::vector<std::string> ids = test_ids;
    ids.insert(ids.end(), train_ids.begin(), train_ids.end());
    std::vector<FeatureCache> caches;
    for (const auto& arch : vs.archs) {
      caches.push_back(open_featmaps(config, arch.name));
      for (std::size_t v = 0; v < n_var; ++v) fs::create_directories(map_path(config, "gradcam", arch.name, v, "x").parent_path());
    }
    parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
      const Tensor3 input = load_input(items, items.at(ids[i]));
      for (std::size_t a = 0; a < vs.archs.size(); ++a) {
        const FeatureMapTensor fm = caches[a].featmaps(ids[i]);
        for (std::size_t v = 0; v < n_var; ++v) {
          const auto r = gradcam(vs.heads[a][v], *vs.oracles[a], input, &vs.masks[a][v], &fm);
          save_map(map_path(config, "gradcam", vs.archs[a].name, v, ids[i]), r.native);
        }
      }
    });
    log << "  grad-cam: " << ids.size() << " images x " << vs.archs.size() << " architectures x " << n_var
        << " variants\n";
  }

  if (config.wants("mpm")) {
    const auto ids = sorted_ids(test_ids, config.mpm_images);
    MpmOptions opts{config.mpm_scales, config.mpm_stride, config.jobs};
    for (std::size_t a = 0; a < vs.archs.size(); ++a) {
      const Predictor pred = head_predictor(vs.heads[a][0], *vs.oracles[a], &vs.masks[a][0]);
      for (const auto& id : ids) {
        const auto r = mpm(pred, load_input(items, items.at(id)), opts);
        const auto p = map_path(config, "mpm", vs.archs[a].name, std::nullopt, id);
        fs::create_directories(p.parent_path());
        save_map(p, r.raw);
      }
    }
    log << "  mpm: " << ids.size() << " images x " << vs.archs.size() << " architectures\n";
  }

  if (config.wants("lime")) {
    const auto ids = sorted_ids(test_ids, config.lime_images);
    CsvTable fidelity{{"architecture", "variant", "image_id", "segments", "fidelity_r2"}, {}};
    for (const auto& id : ids) {
      const Image view = model_view(read_image(items.paths.at(items.at(id))));
      const SegmentLabels seg = slic(view, {config.slic_segments, config.slic_compactness, config.slic_iterations});
      for (std::size_t a = 0; a < vs.archs.size(); ++a) {
        for (std::size_t v = 0; v < n_var; ++v) {
          LimeOptions lo{config.lime_samples, config.lime_keep, config.lime_kernel_width, config.lime_ridge,
                         config.seed + v, config.jobs};
          const auto r = lime_explain(head_predictor(vs.heads[a][v], *vs.oracles[a], &vs.masks[a][v]), view, seg, lo);
          const auto p = map_path(config, "lime", vs.archs[a].name, v, id);
          fs::create_directories(p.parent_path());
          save_map(p, beta_to_map(r, seg));
          fidelity.rows.push_back({vs.archs[a].name, std::to_string(v), id, std::to_string(seg.k),
                                   r.fidelity_r2 ? fmt(*r.fidelity_r2) : "nan"});
        }
      }
    }
    write_csv(dir / "lime_fidelity.csv", fidelity);
    log << "  lime: " << ids.size() << " images x " << vs.archs.size() << " architectures x " << n_var
        << " variants\n";
  }
}

// --- consistency --------------------------------------------------------------------

namespace {

consist::Map load_flat(const fs::path& p) {
  return upsample(load_map(p), kInputSize, kInputSize).values;
}

// Mean/SD matrices of top-delta IoU between prototypes of each architecture pair.
json iou_matrix(const std::vector<std::vector<consist::Map>>& protos, double delta, bool absolute) {
  const std::size_t A = protos.size();
  std::vector<std::vector<double>> mean(A, std::vector<double>(A, 1.0)), sd(A, std::vector<double>(A, 0.0));
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = a + 1; b < A; ++b) {
      std::vector<double> vals;
      for (std::size_t i = 0; i < protos[a].size(); ++i)
        vals.push_back(consist::iou(consist::top_set(protos[a][i], delta, absolute),
                                    consist::top_set(protos[b][i], delta, absolute)));
      const auto s = consist::summarize(vals);
      mean[a][b] = mean[b][a] = s.mean;
      sd[a][b] = sd[b][a] = s.sd;
    }
  return {{"delta", delta}, {"mean", mean}, {"sd", sd}};
}

json across_json(const std::vector<std::vector<consist::Map>>& protos, const RunConfig& config) {
  const auto sp = consist::across_consistency(protos, true);
  const auto pe = consist::across_consistency(protos, false);
  json j = {{"images", protos.empty() ? 0 : protos.front().size()},
            {"spearman", {{"mean", sp.mean}, {"sd", sp.sd}, {"n", sp.n}}},
            {"pearson", {{"mean", pe.mean}, {"sd", pe.sd}, {"n", pe.n}}}};
  json ious = json::array();
  for (const double d : {5.0, 25.0}) ious.push_back(iou_matrix(protos, d, config.iou_absolute));
  j["iou"] = ious;
  return j;
}

}  // namespace

void run_consistency(const RunConfig& config, std::ostream& log) {
  const fs::path dir = stage_dir(config, Stage::Consistency);
  if (fs::exists(stage_dir(config, Stage::Explain) / "skipped.json")) {
    write_skip(dir, "no explanations were computed", log);
    return;
  }
  const Items items = load_items(config);
  const auto archs = load_architectures(config);
  const auto plans = load_plans(config, Scheme::Standard);
  const std::size_t n_var = plans.size();
  const json sets = read_json(stage_dir(config, Stage::Explain) / "sets.json");
  const auto test_ids = sets.at("test").get<std::vector<std::string>>();
  const auto train_ids = sets.at("train").get<std::vector<std::string>>();
  const consist::ConsistOptions opts{config.deltas, config.iou_absolute};
  const auto pruned = index_predictions(read_predictions(stage_dir(config, Stage::Prune) / "predictions.csv"),
                                        Scheme::Standard);

  json summary = {{"architectures", json::array()}, {"deltas", config.deltas}, {"variants", n_var},
                  {"test_images", test_ids.size()}, {"train_images", train_ids.size()}};
  for (const auto& a : archs) summary["architectures"].push_back(a.name);

  CsvTable rows{{"architecture", "set", "image_id", "mean_r", "missing_pairs"}, {}};
  for (const double d : config.deltas) rows.header.push_back("iou_" + fmt(d));

  // Relation tests collected for one FDR family.
  struct RelRow {
    std::string arch, set, metric;
    stats::CorrelationTest test;
  };
  std::vector<RelRow> rel;
  json mae_json = json::object();
  std::vector<std::vector<consist::Map>> gc_protos;

  const bool have_gc = config.wants("gradcam") && fs::exists(stage_dir(config, Stage::Explain) / "gradcam");
  if (have_gc) {
    json gc = json::object();
    for (const auto& arch : archs) {
      json per = json::object();
      std::vector<consist::Map> protos;
      for (const auto& [set, ids] : {std::pair{std::string("test"), test_ids}, std::pair{std::string("train"), train_ids}}) {
        std::vector<double> corr_vals, corr_a, mae_vals;
        std::vector<std::vector<double>> iou_vals(config.deltas.size());
        std::vector<double> a_all;
        std::vector<std::vector<double>> per_image_iou(config.deltas.size());
        std::vector<double> per_image_corr;  // nan for missing
        for (const auto& id : ids) {
          std::vector<consist::Map> maps;
          for (std::size_t v = 0; v < n_var; ++v) maps.push_back(load_flat(map_path(config, "gradcam", arch.name, v, id)));
          const auto rec = consist::within_consistency(maps, opts);
          if (set == "test") protos.push_back(consist::prototype(maps));
          std::vector<std::string> row{arch.name, set, id, rec.mean_r ? fmt(*rec.mean_r) : "nan",
                                       std::to_string(rec.missing_pairs)};
          for (std::size_t k = 0; k < rec.iou.size(); ++k) {
            row.push_back(fmt(rec.iou[k]));
            iou_vals[k].push_back(rec.iou[k]);
          }
          rows.rows.push_back(row);
          const double a = items.authenticity[items.at(id)];
          a_all.push_back(a);
          per_image_corr.push_back(rec.mean_r ? *rec.mean_r : std::nan(""));
          if (rec.mean_r) {
            corr_vals.push_back(*rec.mean_r);
            corr_a.push_back(a);
          }
          for (std::size_t k = 0; k < rec.iou.size(); ++k) per_image_iou[k].push_back(rec.iou[k]);
          if (set == "test") {
            double mae = 0.0;
            for (std::size_t v = 0; v < n_var; ++v)
              mae += std::abs(pruned.at(arch.name).at(v).at(id) - items.target[items.at(id)]);
            mae_vals.push_back(mae / static_cast<double>(n_var));
          }
        }
        json iou_summ = json::array();
        for (const auto& v : iou_vals) iou_summ.push_back(summary_json(consist::summarize(v)));
        per[set] = {{"corr", summary_json(consist::summarize(corr_vals))}, {"iou", iou_summ}};

        if (ids.size() >= 4) {
          if (corr_vals.size() >= 4) rel.push_back({arch.name, set, "corr", consist::relate(corr_vals, corr_a)});
          for (std::size_t k = 0; k < config.deltas.size(); ++k)
            rel.push_back({arch.name, set, "iou_" + fmt(config.deltas[k]), consist::relate(per_image_iou[k], a_all)});
        }
        if (set == "test" && ids.size() >= 4) {
          json m = json::array();
          std::vector<double> corr_m, mae_m;
          for (std::size_t i = 0; i < per_image_corr.size(); ++i)
            if (!std::isnan(per_image_corr[i])) {
              corr_m.push_back(per_image_corr[i]);
              mae_m.push_back(mae_vals[i]);
            }
          if (corr_m.size() >= 4) {
            const auto t = consist::relate(corr_m, mae_m);
            m.push_back({{"metric", "corr"}, {"r", t.r}, {"p", t.p}, {"n", t.n}});
          }
          for (std::size_t k = 0; k < config.deltas.size(); ++k) {
            const auto t = consist::relate(per_image_iou[k], mae_vals);
            m.push_back({{"metric", "iou_" + fmt(config.deltas[k])}, {"r", t.r}, {"p", t.p}, {"n", t.n}});
          }
          mae_json[arch.name] = m;
        }
      }

      // Prediction and representational similarity over the full test partition.
      const auto& full_test = plans.front().test;
      per["prediction_similarity"] = consist::prediction_similarity(prediction_vectors(pruned, arch.name, full_test));
      const FeatureCache cache = open_featmaps(config, arch.name);
      const auto oracles = build_oracles(config);
      std::size_t a_idx = 0;
      while (a_idx < archs.size() && archs[a_idx].name != arch.name) ++a_idx;
      const Oracle& oracle = *oracles.at(a_idx);
      std::vector<std::vector<std::vector<double>>> vecs(n_var);
      for (std::size_t v = 0; v < n_var; ++v) {
        const HeadParams head = load_head(variant_dir(config, Stage::Train, Scheme::Standard, arch.name, v) / "head.afc");
        const ChannelMask mask =
            load_mask(config, Scheme::Standard, arch.name, v, static_cast<std::size_t>(arch.meta.channels()));
        vecs[v].resize(full_test.size());
        parallel_for(full_test.size(), config.jobs, [&](std::size_t i) {
          vecs[v][i] = penultimate(head, masked_embedding(oracle, cache, items, full_test[i], mask));
        });
      }
      const auto rsm = consist::rsm_similarity(vecs);
      per["rsm_similarity"] = rsm.value;
      per["rsm_dropped_images"] = rsm.dropped_images.size();
      gc[arch.name] = per;
      gc_protos.push_back(std::move(protos));
      log << "  grad-cam " << arch.name << ": test r = " << fmt(per["test"]["corr"]["mean"].get<double>()) << "\n";
    }
    summary["gradcam"] = gc;
    write_csv(dir / "within_gradcam.csv", rows);

    std::vector<double> ps;
    for (const auto& r : rel) ps.push_back(r.test.p);
    const auto fdr = stats::fdr_bh(ps, 0.05);
    json relate_json = json::array();
    for (std::size_t i = 0; i < rel.size(); ++i)
      relate_json.push_back({{"architecture", rel[i].arch},
                             {"set", rel[i].set},
                             {"metric", rel[i].metric},
                             {"r", rel[i].test.r},
                             {"p", rel[i].test.p},
                             {"n", rel[i].test.n},
                             {"significant", rel[i].test.p < 0.05},
                             {"fdr_significant", static_cast<bool>(fdr[i])}});
    summary["relate_authenticity"] = relate_json;
    summary["relate_mae"] = mae_json;
    summary["across"]["gradcam"] = across_json(gc_protos, config);
  }

  // LIME within-architecture consistency and fidelity.
  const fs::path lime_dir = stage_dir(config, Stage::Explain) / "lime";
  if (config.wants("lime") && fs::exists(stage_dir(config, Stage::Explain) / "lime_fidelity.csv")) {
    const CsvTable fid = read_csv(stage_dir(config, Stage::Explain) / "lime_fidelity.csv");
    const auto c_arch = fid.column("architecture"), c_id = fid.column("image_id"), c_r2 = fid.column("fidelity_r2");
    std::vector<std::string> lime_ids;
    for (const auto& r : fid.rows)
      if (std::find(lime_ids.begin(), lime_ids.end(), r[c_id]) == lime_ids.end()) lime_ids.push_back(r[c_id]);
    json lj = json::object();
    std::vector<std::vector<consist::Map>> protos;
    for (const auto& arch : archs) {
      std::vector<double> corr;
      std::vector<std::vector<double>> ious(config.deltas.size());
      std::vector<consist::Map> ap;
      for (const auto& id : lime_ids) {
        std::vector<consist::Map> maps;
        for (std::size_t v = 0; v < n_var; ++v) maps.push_back(load_flat(map_path(config, "lime", arch.name, v, id)));
        const auto rec = consist::within_consistency(maps, opts);
        if (rec.mean_r) corr.push_back(*rec.mean_r);
        for (std::size_t k = 0; k < rec.iou.size(); ++k) ious[k].push_back(rec.iou[k]);
        ap.push_back(consist::prototype(maps));
      }
      std::vector<double> r2;
      for (const auto& r : fid.rows)
        if (r[c_arch] == arch.name && r[c_r2] != "nan") r2.push_back(std::stod(r[c_r2]));
      json iou_summ = json::array();
      for (const auto& v : ious) iou_summ.push_back(summary_json(consist::summarize(v)));
      lj[arch.name] = {{"corr", summary_json(consist::summarize(corr))},
                       {"iou", iou_summ},
                       {"fidelity_r2", summary_json(consist::summarize(r2))}};
      protos.push_back(std::move(ap));
    }
    summary["lime"] = lj;
    summary["lime_images"] = lime_ids.size();
    summary["across"]["lime"] = across_json(protos, config);
  }

  // MPM across architectures (one variant per architecture).
  if (config.wants("mpm") && fs::exists(stage_dir(config, Stage::Explain) / "mpm")) {
    std::vector<std::string> mpm_ids;
    for (const auto& e : fs::directory_iterator(stage_dir(config, Stage::Explain) / "mpm" / safe_name(archs.front().name)))
      mpm_ids.push_back(e.path().stem().string());
    std::sort(mpm_ids.begin(), mpm_ids.end());
    std::vector<std::vector<consist::Map>> protos;
    for (const auto& arch : archs) {
      protos.emplace_back();
      for (const auto& id : mpm_ids) protos.back().push_back(load_flat(map_path(config, "mpm", arch.name, std::nullopt, id)));
    }
    summary["across"]["mpm"] = across_json(protos, config);
  }

  write_json(dir / "summary.json", summary);
}

// --- ensemble -----------------------------------------------------------------------

void run_ensemble(const RunConfig& config, std::ostream& log) {
  const fs::path dir = stage_dir(config, Stage::Ensemble);
  const Experiment e = parse_experiment(config.experiment);
  const bool bag = e == Experiment::Exp3Bag || e == Experiment::All;
  const bool stack = e == Experiment::Exp3Stack || e == Experiment::All;
  if (!bag && !stack) {
    write_skip(dir, "ensembles belong to exp3", log);
    return;
  }
  const Items items = load_items(config);
  const auto archs = load_architectures(config);
  const auto plans = load_plans(config, Scheme::Ensemble);
  const std::size_t n_var = plans.size();
  const std::vector<std::string> test_ids = plans.front().test;
  std::vector<double> targets;
  for (const auto& id : test_ids) targets.push_back(items.target[items.at(id)]);

  const auto pruned = index_predictions(read_predictions(stage_dir(config, Stage::Prune) / "predictions.csv"),
                                        Scheme::Ensemble);
  const auto unpruned = index_predictions(read_predictions(stage_dir(config, Stage::Train) / "predictions.csv"),
                                          Scheme::Ensemble);

  std::vector<EnsembleMember> members;
  std::vector<std::vector<double>> pred;  // [member][test item]
  json per_arch = json::array();
  for (const auto& arch : archs) {
    const auto pv = prediction_vectors(pruned, arch.name, test_ids);
    const auto uv = prediction_vectors(unpruned, arch.name, test_ids);
    std::vector<double> rmse, plcc, srcc, pruned_rmse;
    for (std::size_t v = 0; v < n_var; ++v) {
      const auto m = stats::metrics(uv[v], targets);
      rmse.push_back(m.rmse);
      if (m.plcc) plcc.push_back(*m.plcc);
      if (m.srcc) srcc.push_back(*m.srcc);
      pruned_rmse.push_back(stats::metrics(pv[v], targets).rmse);
      const ChannelMask mask =
          load_mask(config, Scheme::Ensemble, arch.name, v, static_cast<std::size_t>(arch.meta.channels()));
      members.push_back({arch.name,
                         (variant_dir(config, Stage::Train, Scheme::Ensemble, arch.name, v) / "head.afc").string(),
                         train_seed(config, Scheme::Ensemble, v), mask});
      pred.push_back(pv[v]);
    }
    per_arch.push_back({{"architecture", arch.name},
                        {"rmse", summary_json(consist::summarize(rmse))},
                        {"plcc", summary_json(consist::summarize(plcc))},
                        {"srcc", summary_json(consist::summarize(srcc))},
                        {"best_pruned_rmse", *std::min_element(pruned_rmse.begin(), pruned_rmse.end())}});
  }

  json metrics = {{"test_images", test_ids.size()}, {"members", members.size()}, {"architectures", per_arch}};
  CsvTable out{{"image_id", "target"}, {}};
  for (std::size_t i = 0; i < test_ids.size(); ++i) out.rows.push_back({test_ids[i], fmt(targets[i])});

  std::optional<EnsembleSpec> mpm_spec;
  if (bag) {
    EnsembleSpec spec{members, EnsembleMode::Bagging, {}, 0.0};
    const auto b = bag_predict(pred);
    metrics["bagging"] = metric_json(stats::metrics(b, targets));
    write_json(dir / "bagging.json", to_json(spec));
    out.header.push_back("bagging");
    for (std::size_t i = 0; i < b.size(); ++i) out.rows[i].push_back(fmt(b[i]));
    mpm_spec = spec;
    log << "  bagging rmse " << fmt(metrics["bagging"]["rmse"].get<double>()) << "\n";
  }
  if (stack) {
    const auto cv = stack_cv(pred, targets, config.stack_folds, config.seed, config.stack_ridge);
    std::vector<std::size_t> all(test_ids.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const LinearStack full = fit_stack(pred, targets, all, config.stack_ridge);
    EnsembleSpec spec{members, EnsembleMode::Stacking, full.weights, full.bias};
    metrics["stacking"] = metric_json(stats::metrics(cv.oof, targets));
    metrics["stacking"]["min_norm"] = cv.any_min_norm || full.min_norm;
    json folds = json::array();
    for (const auto& f : cv.folds) {
      std::vector<std::string> held;
      for (const auto i : f.held_out) held.push_back(test_ids[i]);
      folds.push_back({{"held_out", held}, {"weights", f.model.weights}, {"bias", f.model.bias}});
    }
    json sj = to_json(spec);
    sj["folds"] = folds;
    write_json(dir / "stacking.json", sj);
    out.header.push_back("stacking_oof");
    for (std::size_t i = 0; i < cv.oof.size(); ++i) out.rows[i].push_back(fmt(cv.oof[i]));
    if (!mpm_spec) mpm_spec = spec;
    log << "  stacking rmse " << fmt(metrics["stacking"]["rmse"].get<double>()) << "\n";
  }
  write_csv(dir / "predictions.csv", out);
  write_json(dir / "metrics.json", metrics);

  if (config.ensemble_mpm_images == 0) return;
  const auto oracles = build_oracles(config);
  std::vector<HeadParams> heads;
  heads.reserve(members.size());
  for (const auto& m : members) heads.push_back(load_head(m.head_path));
  bool all_tail = true;
  for (const auto& o : oracles) all_tail = all_tail && o->has_tail();
  const EnsembleSpec& spec = *mpm_spec;
  const MpmOptions opts{config.mpm_scales, config.mpm_stride, config.jobs};
  for (const auto& id : sorted_ids(test_ids, config.ensemble_mpm_images)) {
    const Tensor3 input = load_input(items, items.at(id));
    MpmResult r;
    if (all_tail) {
      // One forward pass per architecture; members differ only past the target layer.
      const Predictor combined = [&](const Tensor3& x) {
        double acc = spec.mode == EnsembleMode::Stacking ? spec.bias : 0.0;
        std::size_t m = 0;
        for (std::size_t a = 0; a < archs.size(); ++a) {
          const FeatureMapTensor fm = oracles[a]->featmaps(x);
          for (std::size_t v = 0; v < n_var; ++v, ++m) {
            const double p = predict(heads[m], oracles[a]->tail(fm, &members[m].mask));
            acc += spec.mode == EnsembleMode::Stacking ? spec.weights[m] * p : p;
          }
        }
        return spec.mode == EnsembleMode::Stacking ? acc : acc / static_cast<double>(members.size());
      };
      r = mpm(combined, input, opts);
    } else {
      std::vector<Predictor> preds;
      std::size_t m = 0;
      for (std::size_t a = 0; a < archs.size(); ++a)
        for (std::size_t v = 0; v < n_var; ++v, ++m) preds.push_back(head_predictor(heads[m], *oracles[a], &members[m].mask));
      r = ensemble_mpm(spec, std::move(preds), input, opts);
    }
    fs::create_directories(dir / "mpm");
    save_map(dir / "mpm" / (id + ".amap"), r.raw);
  }
  log << "  ensemble mpm: " << std::min(test_ids.size(), config.ensemble_mpm_images) << " images\n";
}

}  // namespace authaudit::pipeline::detail
