#include "authaudit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "authaudit/csv.hpp"
#include "authaudit/rng.hpp"

namespace authaudit::corpus {

const char* measure_name(Measure m) {
  switch (m) {
    case Measure::Quality: return "quality";
    case Measure::Authenticity: return "authenticity";
    case Measure::Correspondence: return "correspondence";
  }
  return "?";
}

Dataset load_dataset(const std::filesystem::path& ratings_csv, const std::filesystem::path& metadata_csv,
                     const std::optional<std::filesystem::path>& manifest_csv) {
  const CsvTable meta = read_csv(metadata_csv);
  const auto c_id = meta.column("image_id");
  const auto c_gen = meta.column("generator_id");
  const auto c_cat = meta.column("category");
  const auto c_chal = meta.column("challenge");

  Dataset ds;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& row : meta.rows) {
    RatingRecord r;
    r.image_id = row[c_id];
    r.generator_id = row[c_gen];
    r.category = row[c_cat];
    r.challenge = row[c_chal];
    if (!index.emplace(r.image_id, ds.records.size()).second) {
      throw std::invalid_argument("duplicate image_id in metadata: " + r.image_id);
    }
    ds.records.push_back(std::move(r));
  }

  if (manifest_csv) {
    const CsvTable manifest = read_csv(*manifest_csv);
    const auto m_id = manifest.column("image_id");
    const auto m_path = manifest.column("path");
    for (const auto& row : manifest.rows) {
      const auto it = index.find(row[m_id]);
      if (it == index.end()) throw std::invalid_argument("manifest references unknown image " + row[m_id]);
      ds.records[it->second].image_path = row[m_path];
    }
  }

  const CsvTable ratings = read_csv(ratings_csv);
  const auto r_id = ratings.column("image_id");
  const auto r_part = ratings.column("participant_id");
  const std::array<std::size_t, 3> r_measure{ratings.column("quality"), ratings.column("authenticity"),
                                             ratings.column("correspondence")};
  std::map<std::string, std::size_t> participant_index;
  for (const auto& row : ratings.rows) participant_index.emplace(row[r_part], 0);
  for (auto& [name, idx] : participant_index) {
    idx = ds.participants.size();
    ds.participants.push_back(name);
  }
  const std::size_t p = ds.participants.size();
  for (auto& r : ds.records) {
    for (auto& v : r.raw) v.assign(p, 0);
  }
  for (const auto& row : ratings.rows) {
    const auto it = index.find(row[r_id]);
    if (it == index.end()) throw std::invalid_argument("ratings reference unknown image " + row[r_id]);
    const std::size_t part = participant_index.at(row[r_part]);
    for (int m = 0; m < 3; ++m) {
      auto& slot = ds.records[it->second].raw[m][part];
      if (slot != 0) {
        throw std::invalid_argument("duplicate rating for image " + row[r_id] + ", participant " + row[r_part]);
      }
      slot = std::stoi(row[r_measure[m]]);
    }
  }
  validate(ds);
  return ds;
}

void validate(const Dataset& ds) {
  std::set<std::string> seen;
  for (const auto& r : ds.records) {
    if (!seen.insert(r.image_id).second) throw std::invalid_argument("duplicate image_id " + r.image_id);
    for (const auto& v : r.raw) {
      if (v.size() != ds.participants.size()) {
        throw std::invalid_argument("image " + r.image_id + " does not have the full participant roster");
      }
      for (const int x : v) {
        if (x < 1 || x > 5) {
          throw std::invalid_argument("image " + r.image_id + " has a rating outside [1, 5] or a missing rating");
        }
      }
    }
  }
}

// --- exclusion --------------------------------------------------------------

namespace {

const std::string* field_of(const RatingRecord& r, const std::string& field) {
  if (field == "generator_id") return &r.generator_id;
  if (field == "category") return &r.category;
  if (field == "challenge") return &r.challenge;
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

ExclusionRule::ExclusionRule(std::vector<Term> terms) : terms_(std::move(terms)) {
  RatingRecord probe;
  for (const auto& term : terms_) {
    if (term.empty()) throw RuleError("exclusion rule has an empty term");
    for (const auto& cond : term) {
      if (field_of(probe, cond.field) == nullptr) {
        throw RuleError("exclusion rule field '" + cond.field +
                        "' is not metadata; allowed fields are generator_id, category, challenge");
      }
      if (cond.values.empty()) throw RuleError("exclusion rule condition on '" + cond.field + "' has no values");
    }
  }
}

ExclusionRule ExclusionRule::parse(std::string_view text) {
  std::vector<Term> terms;
  if (trim(text).empty()) return ExclusionRule{};
  for (const auto& term_text : split(text, ';')) {
    if (term_text.empty()) continue;
    Term term;
    for (const auto& cond_text : split(term_text, '&')) {
      const auto eq = cond_text.find('=');
      if (eq == std::string::npos) throw RuleError("exclusion condition '" + cond_text + "' lacks '='");
      Condition cond{trim(std::string_view(cond_text).substr(0, eq)), {}};
      for (auto& v : split(std::string_view(cond_text).substr(eq + 1), ',')) {
        if (!v.empty()) cond.values.push_back(std::move(v));
      }
      term.push_back(std::move(cond));
    }
    terms.push_back(std::move(term));
  }
  return ExclusionRule(std::move(terms));
}

bool ExclusionRule::excludes(const RatingRecord& record) const {
  for (const auto& term : terms_) {
    const bool all = std::all_of(term.begin(), term.end(), [&](const Condition& c) {
      const std::string* v = field_of(record, c.field);
      return std::find(c.values.begin(), c.values.end(), *v) != c.values.end();
    });
    if (all) return true;
  }
  return false;
}

ExclusionResult apply_exclusion(const std::vector<RatingRecord>& records, const ExclusionRule& rule) {
  ExclusionResult out;
  for (const auto& r : records) (rule.excludes(r) ? out.removed : out.kept).push_back(r);
  return out;
}

// --- MOS ----------------------------------------------------------------------

std::size_t MOSTable::index_of(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw std::out_of_range("MOS table has no image " + id);
  return static_cast<std::size_t>(it - ids.begin());
}

MOSTable compute_mos(const std::vector<RatingRecord>& records) {
  if (records.size() < 2) throw std::invalid_argument("compute_mos: need at least 2 images");
  const std::size_t n = records.size();
  const std::size_t p = records.front().raw[0].size();
  if (p == 0) throw std::invalid_argument("compute_mos: no participants");
  MOSTable table;
  for (const auto& r : records) table.ids.push_back(r.image_id);

  for (const Measure m : kMeasures) {
    MeasureTable& mt = table.measures[static_cast<int>(m)];
    mt.z = stats::Matrix(n, p);
    std::vector<double> column(n);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& v = records[i].ratings(m);
        if (v.size() != p) throw std::invalid_argument("compute_mos: inconsistent participant roster");
        column[i] = v[j];
      }
      const double mu = stats::mean(column);
      const double sd = std::sqrt(stats::variance(column, 0));
      if (!(sd > 0.0)) {
        mt.zero_variance.push_back(j);
        table.warnings.push_back(std::string(measure_name(m)) + ": participant " + std::to_string(j) +
                                 " has zero rating variance; z-scores set to 0");
        continue;
      }
      for (std::size_t i = 0; i < n; ++i) mt.z(i, j) = (column[i] - mu) / sd;
    }
    std::vector<double> avg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) avg[i] += mt.z(i, j);
      avg[i] /= static_cast<double>(p);
    }
    const auto [lo, hi] = std::minmax_element(avg.begin(), avg.end());
    if (!(*hi > *lo)) {
      throw std::domain_error(std::string("compute_mos: degenerate ") + measure_name(m) +
                              " range (all images have the same mean z-score)");
    }
    const double min = *lo;
    const double range = *hi - *lo;
    mt.mos.resize(n);
    for (std::size_t i = 0; i < n; ++i) mt.mos[i] = 100.0 * (avg[i] - min) / range;
  }
  return table;
}

// --- splits ---------------------------------------------------------------------

std::array<std::size_t, 3> partition_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
  for (const double r : ratios) {
    if (r < 0.0) throw std::invalid_argument("split ratios must be non-negative");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = ratios[k] * static_cast<double>(n);
    sizes[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[k] = exact - static_cast<double>(sizes[k]);
    assigned += sizes[k];
  }
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (remainder[k] > remainder[best]) best = k;
    }
    ++sizes[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return sizes;
}

std::vector<int> decile_bins(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> bins(values.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    bins[order[rank]] = static_cast<int>(rank * 10 / order.size());
  }
  return bins;
}

namespace {

constexpr std::size_t kMinStratified = 20;

// Walks `order` and gives each position to the partition furthest behind its
// quota, so every contiguous run (a stratum) is split near-proportionally and
// the totals come out exact.
std::vector<int> allocate(std::size_t n, const std::vector<std::size_t>& targets) {
  std::vector<int> assignment(n);
  std::vector<std::size_t> assigned(targets.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    int best = -1;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < targets.size(); ++k) {
      if (assigned[k] >= targets[k]) continue;
      const double deficit = static_cast<double>(targets[k]) * static_cast<double>(i + 1) / static_cast<double>(n) -
                             static_cast<double>(assigned[k]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = static_cast<int>(k);
      }
    }
    assignment[i] = best;
    ++assigned[best];
  }
  return assignment;
}

// Items ordered by stratum, shuffled within each stratum.
std::vector<std::size_t> stratified_order(const std::vector<std::size_t>& items, const std::vector<int>& bins,
                                          Pcg32& rng, bool stratify) {
  std::vector<std::size_t> order = items;
  rng.shuffle(std::span(order));
  if (stratify) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return bins[a] < bins[b]; });
  }
  return order;
}

}  // namespace

std::vector<SplitPlan> make_splits(const std::vector<std::string>& ids, const std::vector<double>& strata,
                                   std::size_t count, std::uint64_t seed, const SplitOptions& options) {
  if (count < 1) throw std::invalid_argument("make_splits: need at least one plan");
  if (ids.size() != strata.size()) throw std::invalid_argument("make_splits: ids and strata differ in length");
  const std::size_t n = ids.size();
  const auto sizes = partition_sizes(n, options.ratios);
  const bool stratify = n >= kMinStratified;
  const auto bins = decile_bins(strata);

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);

  std::vector<std::size_t> fixed_test;
  std::vector<std::size_t> pool = all;
  if (options.fixed_test) {
    Pcg32 rng(seed, 11u);
    const auto order = stratified_order(all, bins, rng, stratify);
    const auto assignment = allocate(n, {n - sizes[2], sizes[2]});
    pool.clear();
    for (std::size_t i = 0; i < n; ++i) (assignment[i] == 1 ? fixed_test : pool).push_back(order[i]);
  }

  std::vector<SplitPlan> plans;
  for (std::size_t s = 0; s < count; ++s) {
    SplitPlan plan;
    plan.seed = seed + s;
    plan.stratified = stratify;
    Pcg32 rng(plan.seed, 7u);
    std::array<std::vector<std::size_t>, 3> parts;
    if (options.fixed_test) {
      const auto order = stratified_order(pool, bins, rng, stratify);
      const auto assignment = allocate(order.size(), {sizes[0], sizes[1]});
      for (std::size_t i = 0; i < order.size(); ++i) parts[assignment[i]].push_back(order[i]);
      parts[2] = fixed_test;
    } else {
      const auto order = stratified_order(all, bins, rng, stratify);
      const auto assignment = allocate(n, {sizes[0], sizes[1], sizes[2]});
      for (std::size_t i = 0; i < n; ++i) parts[assignment[i]].push_back(order[i]);
    }
    for (auto& part : parts) std::sort(part.begin(), part.end());
    for (const auto i : parts[0]) plan.train.push_back(ids[i]);
    for (const auto i : parts[1]) plan.val.push_back(ids[i]);
    for (const auto i : parts[2]) plan.test.push_back(ids[i]);
    plans.push_back(std::move(plan));
  }
  return plans;
}

nlohmann::json to_json(const SplitPlan& plan) {
  return {{"seed", plan.seed}, {"train", plan.train}, {"val", plan.val}, {"test", plan.test},
          {"stratified", plan.stratified}};
}

SplitPlan split_from_json(const nlohmann::json& j) {
  SplitPlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.train = j.at("train").get<std::vector<std::string>>();
  plan.val = j.at("val").get<std::vector<std::string>>();
  plan.test = j.at("test").get<std::vector<std::string>>();
  plan.stratified = j.value("stratified", true);
  return plan;
}

}  // namespace authaudit::corpus
