// report stage: tables (CSV + JSON with per-cell sources) and heatmap figures,
// built only from serialized artifacts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "authaudit/binary_io.hpp"
#include "authaudit/consist.hpp"
#include "authaudit/csv.hpp"
#include "authaudit/explain.hpp"
#include "pipeline_internal.hpp"

namespace authaudit::pipeline::detail {

using nlohmann::json;

namespace {

std::string num(double v, int digits = 3) {
  if (std::isnan(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pm(double mean, double sd, int digits = 3) { return num(mean, digits) + " ± " + num(sd, digits); }

// A report table. Every cell records the artifact it was read from.
class Table {
 public:
  Table(std::string name, std::string title, std::vector<std::string> columns)
      : name_(std::move(name)), title_(std::move(title)), columns_(std::move(columns)) {}

  void row(const std::string& label) {
    rows_.push_back(std::vector<std::string>(columns_.size()));
    rows_.back()[0] = label;
    cells_.push_back(json::array());
  }
  void set(const std::string& column, const std::string& text, json value, const fs::path& source) {
    const auto it = std::find(columns_.begin(), columns_.end(), column);
    if (it == columns_.end()) throw std::logic_error("report: unknown column " + column);
    rows_.back()[static_cast<std::size_t>(it - columns_.begin())] = text;
    cells_.back().push_back({{"column", column}, {"text", text}, {"value", std::move(value)}, {"source", source.string()}});
  }
  void note(const std::string& n) { notes_.push_back(n); }
  bool empty() const { return rows_.empty(); }

  void write(const fs::path& dir, std::vector<std::string>& written) const {
    write_csv(dir / (name_ + ".csv"), CsvTable{columns_, rows_});
    json rows = json::array();
    std::set<std::string> sources;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      rows.push_back({{"label", rows_[r][0]}, {"cells", cells_[r]}});
      for (const auto& c : cells_[r]) sources.insert(c["source"].get<std::string>());
    }
    write_json(dir / (name_ + ".json"),
               {{"title", title_}, {"columns", columns_}, {"rows", rows}, {"notes", notes_}, {"sources", sources}});
    written.push_back(name_);
  }

 private:
  std::string name_, title_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<json> cells_;
  std::vector<std::string> notes_;
};

json summary_value(const json& s) { return {{"mean", s.at("mean")}, {"sd", s.at("sd")}, {"n", s.at("n")}}; }

std::string pm_of(const json& s) { return pm(s.at("mean").get<double>(), s.at("sd").get<double>()); }

double opt_num(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

std::string delta_label(double d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%g", d);
  return buf;
}

}  // namespace

void run_report(const RunConfig& config, std::ostream& log) {
  const fs::path dir = stage_dir(config, Stage::Report);
  const fs::path ingest = stage_dir(config, Stage::Ingest), train = stage_dir(config, Stage::Train),
                 prune = stage_dir(config, Stage::Prune), cons = stage_dir(config, Stage::Consistency),
                 ens = stage_dir(config, Stage::Ensemble);
  std::vector<std::string> written;
  const auto archs = load_architectures(config);
  const Items items = load_items(config);

  // Psychometrics and exclusion validation.
  const fs::path psych_path = ingest / "psychometrics.json";
  const json psych = read_json(psych_path);
  {
    Table t("psychometrics", "Human rating reliability and distribution",
            {"Measure", "Split-half r", "Spearman-Brown r", "Noise ceiling", "Delta BIC (1 vs 2 components)"});
    for (const auto& [name, m] : psych.at("measures").items()) {
      t.row(name);
      t.set("Split-half r", num(m["split_half_r"]), m["split_half_r"], psych_path);
      t.set("Spearman-Brown r", num(m["spearman_brown_r"]), m["spearman_brown_r"], psych_path);
      t.set("Noise ceiling", num(m["noise_ceiling"]), m["noise_ceiling"], psych_path);
      t.set("Delta BIC (1 vs 2 components)", num(m["delta_bic"], 1), m["delta_bic"], psych_path);
    }
    t.note("r(quality, authenticity) = " + num(opt_num(psych["r_quality_authenticity"])));
    t.note("r(authenticity mean, authenticity SD) = " + num(opt_num(psych["r_authenticity_mean_sd"])));
    t.write(dir, written);
  }
  {
    const fs::path p = ingest / "exclusion.json";
    const json ex = read_json(p);
    Table t("exclusion", "Per-participant mean ratings, kept vs removed images (paired t-test)",
            {"Measure", "Mean kept", "Mean removed", "t", "df", "p", "Cohen's d"});
    for (const auto& [name, r] : ex.at("paired_t").items()) {
      t.row(name);
      t.set("Mean kept", num(r["mean_kept"]), r["mean_kept"], p);
      t.set("Mean removed", num(r["mean_removed"]), r["mean_removed"], p);
      t.set("t", num(r["t"], 2), r["t"], p);
      t.set("df", num(r["df"], 0), r["df"], p);
      t.set("p", num(r["p"], 4), r["p"], p);
      t.set("Cohen's d", num(r["cohens_d"], 2), r["cohens_d"], p);
    }
    t.note("kept " + std::to_string(ex.at("kept").get<std::size_t>()) + ", removed " +
           std::to_string(ex.at("removed").get<std::size_t>()));
    t.write(dir, written);
  }

  const fs::path train_metrics_path = train / "metrics.json";
  const json train_metrics = read_json(train_metrics_path);
  const fs::path train_pred_path = train / "predictions.csv";
  const auto train_rows = read_predictions(train_pred_path);

  if (train_metrics.contains("standard")) {
    const auto& std_metrics = train_metrics["standard"];
    const double r_human = psych["measures"]["authenticity"]["spearman_brown_r"].get<double>();

    Table t2("table2_prediction", "Predictive performance and reliability across architectures (held-out test set)",
             {"Architecture", "RMSE", "PLCC", "SRCC", "Model reliability", "PLCC Ceiling"});
    for (const auto& arch : archs) {
      const auto& a = std_metrics.at(arch.name);
      std::vector<double> rmse, plcc, srcc;
      for (const auto& v : a["variants"]) {
        rmse.push_back(v["test"]["rmse"].get<double>());
        plcc.push_back(opt_num(v["test"]["plcc"]));
        srcc.push_back(opt_num(v["test"]["srcc"]));
      }
      const auto s_rmse = consist::summarize(rmse), s_plcc = consist::summarize(plcc), s_srcc = consist::summarize(srcc);
      const double rel = a["model_reliability"].get<double>();
      t2.row(arch.name);
      t2.set("RMSE", pm(s_rmse.mean, s_rmse.sd, 2), {{"mean", s_rmse.mean}, {"sd", s_rmse.sd}}, train_metrics_path);
      t2.set("PLCC", pm(s_plcc.mean, s_plcc.sd, 2), {{"mean", s_plcc.mean}, {"sd", s_plcc.sd}}, train_metrics_path);
      t2.set("SRCC", pm(s_srcc.mean, s_srcc.sd, 2), {{"mean", s_srcc.mean}, {"sd", s_srcc.sd}}, train_metrics_path);
      t2.set("Model reliability", num(rel, 2), rel, train_metrics_path);
      const double ceiling = stats::plcc_ceiling(std::clamp(r_human, 0.0, 1.0), std::clamp(rel, 0.0, 1.0));
      t2.set("PLCC Ceiling", num(ceiling, 2), {{"value", ceiling}, {"r_human", r_human}, {"r_model", rel}},
             psych_path.string() + ";" + train_metrics_path.string());
    }
    t2.note("mean ± SD across variants; ceiling = sqrt(Spearman-Brown human reliability x model reliability)");
    t2.write(dir, written);

    // Prediction vs quality.
    const auto index = index_predictions(train_rows, Scheme::Standard);
    const auto plans = load_plans(config, Scheme::Standard);
    const auto& test_ids = plans.front().test;
    std::vector<double> A, Q;
    for (const auto& id : test_ids) {
      A.push_back(items.authenticity[items.at(id)]);
      Q.push_back(items.quality[items.at(id)]);
    }
    const fs::path mos_path = ingest / "mos.csv";
    Table t3("table3_quality", "Relation between authenticity predictions and quality ratings",
             {"Architecture", "r(A, Â)", "r(Q, Â)", "partial r(A, Â | Q)"});
    for (const auto& arch : archs) {
      std::vector<double> r_a, r_q, partial;
      for (const auto& pred : prediction_vectors(index, arch.name, test_ids)) {
        r_a.push_back(stats::pearson(A, pred).value_or(std::nan("")));
        r_q.push_back(stats::pearson(Q, pred).value_or(std::nan("")));
        partial.push_back(stats::partial_correlation(A, pred, Q));
      }
      const auto sa = consist::summarize(r_a), sq = consist::summarize(r_q), sp = consist::summarize(partial);
      const auto tt = partial.size() >= 2 ? stats::one_sample_t(partial, 0.0) : stats::TTest{};
      const bool star = partial.size() >= 2 && tt.p < 0.05;
      const std::string src = train_pred_path.string() + ";" + mos_path.string();
      t3.row(arch.name);
      t3.set("r(A, Â)", pm(sa.mean, sa.sd, 2), {{"mean", sa.mean}, {"sd", sa.sd}}, src);
      t3.set("r(Q, Â)", pm(sq.mean, sq.sd, 2), {{"mean", sq.mean}, {"sd", sq.sd}}, src);
      t3.set("partial r(A, Â | Q)", pm(sp.mean, sp.sd, 2) + (star ? "*" : ""),
             {{"mean", sp.mean}, {"sd", sp.sd}, {"t", tt.t}, {"p", tt.p}, {"significant", star}}, src);
    }
    t3.note("* one-sample t-test of the partial correlations against 0, p < .05");
    t3.write(dir, written);
  }

  // Pruning, evaluated on the images it was optimized for.
  const fs::path prune_metrics_path = prune / "metrics.json";
  if (fs::exists(prune_metrics_path)) {
    const json pm_json = read_json(prune_metrics_path);
    if (pm_json.contains("standard")) {
      Table t("tableA6_pruning", "Performance before and after pruning on the pruning set (not a generalization estimate)",
              {"Architecture", "RMSE before", "PLCC before", "SRCC before", "RMSE after", "PLCC after", "SRCC after",
               "Red. (%)"});
      for (const auto& arch : archs) {
        std::vector<double> rb, pb, sb, ra, pa, sa, red;
        const auto& before = train_metrics["standard"][arch.name]["variants"];
        const auto& after = pm_json["standard"][arch.name];
        for (std::size_t v = 0; v < after.size(); ++v) {
          rb.push_back(before[v]["test"]["rmse"].get<double>());
          pb.push_back(opt_num(before[v]["test"]["plcc"]));
          sb.push_back(opt_num(before[v]["test"]["srcc"]));
          ra.push_back(after[v]["test"]["rmse"].get<double>());
          pa.push_back(opt_num(after[v]["test"]["plcc"]));
          sa.push_back(opt_num(after[v]["test"]["srcc"]));
          red.push_back(100.0 * after[v]["removed"].get<double>() / after[v]["channels"].get<double>());
        }
        t.row(arch.name);
        const auto put = [&](const std::string& col, const std::vector<double>& v, const fs::path& src) {
          const auto s = consist::summarize(v);
          t.set(col, pm(s.mean, s.sd, 2), {{"mean", s.mean}, {"sd", s.sd}}, src);
        };
        put("RMSE before", rb, train_metrics_path);
        put("PLCC before", pb, train_metrics_path);
        put("SRCC before", sb, train_metrics_path);
        put("RMSE after", ra, prune_metrics_path);
        put("PLCC after", pa, prune_metrics_path);
        put("SRCC after", sa, prune_metrics_path);
        put("Red. (%)", red, prune_metrics_path);
      }
      t.note("pruning selected channels on these same test images; the after columns are not a generalization estimate");
      t.write(dir, written);
    }
  }

  // Explanation consistency.
  const fs::path summary_path = cons / "summary.json";
  if (fs::exists(summary_path)) {
    const json s = read_json(summary_path);
    const auto deltas = s.at("deltas").get<std::vector<double>>();
    if (s.contains("gradcam")) {
      std::vector<std::string> cols{"Architecture", "Consistency (Corr.)"};
      for (const double d : deltas) cols.push_back("IoU@" + delta_label(d));
      cols.push_back("Pred. similarity");
      cols.push_back("RSM similarity");
      Table t4("table4_gradcam_consistency", "Within-architecture explanation consistency (Grad-CAM, test set)", cols);
      for (const auto& arch : archs) {
        const auto& g = s["gradcam"][arch.name];
        t4.row(arch.name);
        t4.set("Consistency (Corr.)", pm_of(g["test"]["corr"]), summary_value(g["test"]["corr"]), summary_path);
        for (std::size_t k = 0; k < deltas.size(); ++k)
          t4.set("IoU@" + delta_label(deltas[k]), pm_of(g["test"]["iou"][k]), summary_value(g["test"]["iou"][k]),
                 summary_path);
        t4.set("Pred. similarity", num(g["prediction_similarity"], 2), g["prediction_similarity"], summary_path);
        t4.set("RSM similarity", num(g["rsm_similarity"], 2), g["rsm_similarity"], summary_path);
      }
      t4.write(dir, written);

      std::vector<std::string> c5{"Architecture"};
      std::vector<std::string> metrics{"corr"};
      for (const double d : deltas) metrics.push_back("iou_" + fmt(d));
      const auto label = [&](const std::string& set, std::size_t k) {
        return set + " " + (k == 0 ? std::string("Corr.-based") : "Top " + delta_label(deltas[k - 1]) + "%");
      };
      for (const std::string set : {"Test", "Train"})
        for (std::size_t k = 0; k < metrics.size(); ++k) c5.push_back(label(set, k));
      Table t5("table5_consistency_authenticity",
               "Correlation between explanation consistency and mean human authenticity ratings", c5);
      for (const auto& arch : archs) {
        t5.row(arch.name);
        for (const auto& r : s["relate_authenticity"]) {
          if (r["architecture"] != arch.name) continue;
          const std::string set = r["set"] == "test" ? "Test" : "Train";
          const auto k = static_cast<std::size_t>(
              std::find(metrics.begin(), metrics.end(), r["metric"].get<std::string>()) - metrics.begin());
          if (k >= metrics.size()) continue;
          std::string text = num(r["r"], 2);
          if (r["significant"].get<bool>()) text += "^";
          if (r["fdr_significant"].get<bool>()) text += "*";
          t5.set(label(set, k), text, r, summary_path);
        }
      }
      t5.note("^ p < .05 uncorrected; * survives Benjamini-Hochberg FDR over all cells");
      t5.write(dir, written);

      std::vector<std::string> ca{"Architecture"};
      for (std::size_t k = 0; k < metrics.size(); ++k)
        ca.push_back(k == 0 ? std::string("Corr.-based") : "IoU@" + delta_label(deltas[k - 1]));
      Table ta4("tableA4_consistency_error", "Correlation between Grad-CAM consistency and per-image MAE", ca);
      for (const auto& arch : archs) {
        if (!s["relate_mae"].contains(arch.name)) continue;
        ta4.row(arch.name);
        for (const auto& r : s["relate_mae"][arch.name]) {
          const auto k = static_cast<std::size_t>(
              std::find(metrics.begin(), metrics.end(), r["metric"].get<std::string>()) - metrics.begin());
          if (k < metrics.size()) ta4.set(ca[k + 1], num(r["r"], 3) + " (p = " + num(r["p"], 3) + ")", r, summary_path);
        }
      }
      if (!ta4.empty()) ta4.write(dir, written);
    }
    if (s.contains("lime")) {
      Table ta2("tableA2_lime_fidelity", "LIME surrogate fidelity by architecture", {"Architecture", "Fidelity R2"});
      std::vector<std::string> c3{"Architecture", "Consistency (Corr.)"};
      for (const double d : deltas) c3.push_back("IoU@" + delta_label(d));
      Table ta3("tableA3_lime_consistency", "Within-architecture explanation consistency (LIME)", c3);
      for (const auto& arch : archs) {
        const auto& l = s["lime"][arch.name];
        ta2.row(arch.name);
        ta2.set("Fidelity R2", pm_of(l["fidelity_r2"]), summary_value(l["fidelity_r2"]), summary_path);
        ta3.row(arch.name);
        ta3.set("Consistency (Corr.)", pm_of(l["corr"]), summary_value(l["corr"]), summary_path);
        for (std::size_t k = 0; k < deltas.size(); ++k)
          ta3.set("IoU@" + delta_label(deltas[k]), pm_of(l["iou"][k]), summary_value(l["iou"][k]), summary_path);
      }
      ta2.write(dir, written);
      ta3.write(dir, written);
    }
    if (s.contains("across")) {
      for (const auto& [method, a] : s["across"].items()) {
        std::vector<std::string> cols{"Architecture"};
        for (const auto& arch : archs) cols.push_back(arch.name);
        const auto matrix = [&](const std::string& name, const std::string& title, const json& mean, const json& sd) {
          Table t(name, title, cols);
          for (std::size_t i = 0; i < archs.size(); ++i) {
            t.row(archs[i].name);
            for (std::size_t j = 0; j < archs.size(); ++j)
              t.set(archs[j].name, num(mean[i][j], 2) + " (" + num(sd[i][j], 2) + ")",
                    {{"mean", mean[i][j]}, {"sd", sd[i][j]}}, summary_path);
          }
          t.note("mean (SD) across " + std::to_string(a["images"].get<std::size_t>()) + " images");
          t.write(dir, written);
        };
        matrix("fig3_across_" + method + "_spearman", "Across-architecture agreement (" + method + ", Spearman)",
               a["spearman"]["mean"], a["spearman"]["sd"]);
        for (const auto& iou : a["iou"]) {
          const std::string d = delta_label(iou["delta"].get<double>());
          matrix("fig3_across_" + method + "_iou" + d, "Across-architecture agreement (" + method + ", IoU top " + d + "%)",
                 iou["mean"], iou["sd"]);
        }
      }
    }
  }

  // Ensembles.
  const fs::path ens_metrics_path = ens / "metrics.json";
  if (fs::exists(ens_metrics_path)) {
    const json m = read_json(ens_metrics_path);
    Table t6("table6_ensembles", "Ensembles and base architectures on the held-out set",
             {"Architecture", "RMSE (mean ± SD) [best pruned variant]", "PLCC", "SRCC"});
    for (const auto& a : m["architectures"]) {
      t6.row(a["architecture"].get<std::string>());
      t6.set("RMSE (mean ± SD) [best pruned variant]",
             pm_of(a["rmse"]) + " [" + num(a["best_pruned_rmse"], 2) + "]",
             {{"mean", a["rmse"]["mean"]}, {"sd", a["rmse"]["sd"]}, {"best_pruned", a["best_pruned_rmse"]}},
             ens_metrics_path);
      t6.set("PLCC", pm_of(a["plcc"]), summary_value(a["plcc"]), ens_metrics_path);
      t6.set("SRCC", pm_of(a["srcc"]), summary_value(a["srcc"]), ens_metrics_path);
    }
    for (const auto& [key, label] : {std::pair{"bagging", "Bagging Ensemble"}, std::pair{"stacking", "Stacking Ensemble"}}) {
      if (!m.contains(key)) continue;
      const auto& e = m[key];
      t6.row(label);
      t6.set("RMSE (mean ± SD) [best pruned variant]", num(e["rmse"], 2), e["rmse"], ens_metrics_path);
      t6.set("PLCC", num(opt_num(e["plcc"]), 2), e["plcc"], ens_metrics_path);
      t6.set("SRCC", num(opt_num(e["srcc"]), 2), e["srcc"], ens_metrics_path);
    }
    t6.note("stacking is evaluated out-of-fold on the same held-out images; bagging averages all pruned members");
    t6.write(dir, written);
  }

  // Figures: prototype Grad-CAM and MPM maps, ensemble MPM maps.
  const fs::path fig = dir / "figures";
  std::vector<std::string> figures;
  const auto save_fig = [&](const fs::path& path, const AttributionMap& map) {
    fs::create_directories(path.parent_path());
    write_png(path, render_map(normalize_minmax(upsample(map, kInputSize, kInputSize))));
    figures.push_back(fs::relative(path, dir).generic_string());
  };
  const fs::path explain = stage_dir(config, Stage::Explain);
  if (fs::exists(explain / "sets.json") && fs::exists(explain / "gradcam")) {
    const auto ids = read_json(explain / "sets.json").at("test").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < std::min<std::size_t>(2, ids.size()); ++i)
      for (const auto& arch : archs) {
        std::vector<consist::Map> maps;
        AttributionMap proto;
        for (const auto& e : fs::directory_iterator(explain / "gradcam" / safe_name(arch.name))) {
          const auto p = e.path() / (ids[i] + ".amap");
          if (!fs::exists(p)) continue;
          proto = upsample(load_map(p), kInputSize, kInputSize);
          maps.push_back(proto.values);
        }
        if (maps.empty()) continue;
        proto.values = consist::prototype(maps);
        save_fig(fig / ("gradcam_" + safe_name(arch.name) + "_" + ids[i] + ".png"), proto);
      }
  }
  if (fs::exists(explain / "mpm"))
    for (const auto& arch : archs) {
      const fs::path adir = explain / "mpm" / safe_name(arch.name);
      if (!fs::exists(adir)) continue;
      for (const auto& e : fs::directory_iterator(adir))
        save_fig(fig / ("mpm_" + safe_name(arch.name) + "_" + e.path().stem().string() + ".png"), load_map(e.path()));
    }
  if (fs::exists(ens / "mpm"))
    for (const auto& e : fs::directory_iterator(ens / "mpm"))
      save_fig(fig / ("ensemble_mpm_" + e.path().stem().string() + ".png"), load_map(e.path()));
  std::sort(figures.begin(), figures.end());

  write_json(dir / "index.json", {{"tables", written}, {"figures", figures}});
  log << "  " << written.size() << " tables, " << figures.size() << " figures\n";
}

}  // namespace authaudit::pipeline::detail
