#pragma once

// Rating-data ingestion: metadata exclusion, MOS targets and Monte-Carlo
// split plans.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "authaudit/stats.hpp"

namespace authaudit::corpus {

enum class Measure : int { Quality = 0, Authenticity = 1, Correspondence = 2 };
inline constexpr std::array<Measure, 3> kMeasures{Measure::Quality, Measure::Authenticity,
                                                  Measure::Correspondence};
const char* measure_name(Measure m);

struct RatingRecord {
  std::string image_id;
  std::string generator_id;
  std::string category;
  std::string challenge;
  std::string image_path;  // relative to the manifest directory; may be empty
  // raw[measure][participant], integers in [1, 5]
  std::array<std::vector<int>, 3> raw;

  const std::vector<int>& ratings(Measure m) const { return raw[static_cast<int>(m)]; }
};

struct Dataset {
  std::vector<std::string> participants;
  std::vector<RatingRecord> records;
};

// Reads the per-participant ratings CSV (image_id, participant_id, quality,
// authenticity, correspondence), the metadata CSV (image_id, generator_id,
// category, challenge) and an optional manifest CSV (image_id, path).
Dataset load_dataset(const std::filesystem::path& ratings_csv, const std::filesystem::path& metadata_csv,
                     const std::optional<std::filesystem::path>& manifest_csv = std::nullopt);

// Checks roster consistency, rating range and id uniqueness; throws on violation.
void validate(const Dataset& dataset);

class RuleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Metadata-only exclusion predicate: a disjunction of conjunctive terms, each
// term testing membership of generator_id, category or challenge in a set.
// Text form: "category=art,illustrations;category=people&challenge=imagination".
class ExclusionRule {
 public:
  struct Condition {
    std::string field;
    std::vector<std::string> values;
  };
  using Term = std::vector<Condition>;

  ExclusionRule() = default;
  explicit ExclusionRule(std::vector<Term> terms);
  static ExclusionRule parse(std::string_view text);

  bool excludes(const RatingRecord& record) const;
  bool empty() const { return terms_.empty(); }
  const std::vector<Term>& terms() const { return terms_; }

 private:
  std::vector<Term> terms_;
};

struct ExclusionResult {
  std::vector<RatingRecord> kept;
  std::vector<RatingRecord> removed;
};

ExclusionResult apply_exclusion(const std::vector<RatingRecord>& records, const ExclusionRule& rule);

struct MeasureTable {
  std::vector<double> mos;                   // per image, in [0, 100]
  stats::Matrix z;                           // images x participants
  std::vector<std::size_t> zero_variance;    // participants whose z-scores were set to 0
};

struct MOSTable {
  std::vector<std::string> ids;
  std::array<MeasureTable, 3> measures;
  std::vector<std::string> warnings;

  const MeasureTable& operator[](Measure m) const { return measures[static_cast<int>(m)]; }
  std::size_t index_of(const std::string& id) const;
};

// Per participant z-score over all images, average z per image, then the
// dataset-wide affine map min -> 0, max -> 100.
MOSTable compute_mos(const std::vector<RatingRecord>& records);

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  bool stratified = true;
};

struct SplitOptions {
  std::array<double, 3> ratios{0.70, 0.20, 0.10};
  // Draw the test partition once and re-draw train/val per plan, so that all
  // variants are evaluated on the same held-out images.
  bool fixed_test = true;
};

// Partition sizes from ratios by largest remainder; they sum to n.
std::array<std::size_t, 3> partition_sizes(std::size_t n, const std::array<double, 3>& ratios);

// Decile bin (0..9) of each value by rank.
std::vector<int> decile_bins(const std::vector<double>& values);

std::vector<SplitPlan> make_splits(const std::vector<std::string>& ids, const std::vector<double>& strata,
                                   std::size_t count, std::uint64_t seed, const SplitOptions& options = {});

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_from_json(const nlohmann::json& j);

}  // namespace authaudit::corpus
