#include <cmath>
#include <map>
#include <set>

#include "authaudit/binary_io.hpp"
#include "authaudit/corpus.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace authaudit;
using namespace authaudit::corpus;

namespace {

RatingRecord record(const std::string& id, const std::string& category, std::vector<int> q, std::vector<int> a,
                    std::vector<int> c, const std::string& generator = "g0", const std::string& challenge = "c0") {
  RatingRecord r;
  r.image_id = id;
  r.generator_id = generator;
  r.category = category;
  r.challenge = challenge;
  r.raw = {std::move(q), std::move(a), std::move(c)};
  return r;
}

std::vector<RatingRecord> five_records() {
  return {record("i1", "art", {1, 2}, {1, 2}, {1, 2}), record("i2", "people", {2, 3}, {2, 3}, {2, 3}),
          record("i3", "art", {3, 4}, {3, 4}, {3, 4}), record("i4", "animals", {4, 5}, {4, 5}, {4, 5}),
          record("i5", "people", {5, 1}, {5, 1}, {5, 1}, "g1", "imagination")};
}

std::vector<std::string> ids_of(const std::vector<RatingRecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.image_id);
  return out;
}

std::vector<std::string> numbered_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("img" + std::to_string(i));
  return ids;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("category rule on five records keeps three") {
    const auto res = apply_exclusion(five_records(), ExclusionRule::parse("category=art"));
    CHECK(ids_of(res.kept) == std::vector<std::string>{"i2", "i4", "i5"});
    CHECK(ids_of(res.removed) == std::vector<std::string>{"i1", "i3"});
  }

  TEST_CASE("empty rule keeps everything") {
    const auto res = apply_exclusion(five_records(), ExclusionRule{});
    CHECK(res.kept.size() == 5);
    CHECK(res.removed.empty());
    CHECK(ExclusionRule::parse("").empty());
  }

  TEST_CASE("rule grammar: disjunction of conjunctions with value lists") {
    const auto rule = ExclusionRule::parse("category=art,animals;category=people&challenge=imagination");
    REQUIRE(rule.terms().size() == 2);
    CHECK(rule.terms()[0][0].values == std::vector<std::string>{"art", "animals"});
    const auto res = apply_exclusion(five_records(), rule);
    CHECK(ids_of(res.kept) == std::vector<std::string>{"i2"});
    CHECK(ExclusionRule::parse("generator_id=g1").excludes(five_records()[4]));
    CHECK_THROWS_AS(ExclusionRule::parse("colour=red"), RuleError);
    CHECK_THROWS_AS(ExclusionRule::parse("category"), RuleError);
    CHECK_THROWS_AS(ExclusionRule::parse("category="), RuleError);
  }

  TEST_CASE("exclusion is idempotent") {
    const auto rule = ExclusionRule::parse("category=art;challenge=imagination");
    const auto once = apply_exclusion(five_records(), rule);
    const auto twice = apply_exclusion(once.kept, rule);
    CHECK(twice.removed.empty());
    CHECK(ids_of(twice.kept) == ids_of(once.kept));
  }

  TEST_CASE("hand-computed MOS for three images and two participants") {
    // Participant ratings [1,3,5] and [2,2,5]; population z-scores are
    // +-sqrt(1.5), 0 and -1/sqrt(2), -1/sqrt(2), sqrt(2).
    std::vector<RatingRecord> rs{record("a", "x", {1, 2}, {1, 2}, {1, 2}), record("b", "x", {3, 2}, {3, 2}, {3, 2}),
                                 record("c", "x", {5, 5}, {5, 5}, {5, 5})};
    const auto table = compute_mos(rs);
    const double s15 = std::sqrt(1.5), s2 = std::sqrt(2.0);
    const double z0 = (-s15 - 1 / s2) / 2, z1 = (0 - 1 / s2) / 2, z2 = (s15 + s2) / 2;
    const std::vector<double> expected{0.0, 100 * (z1 - z0) / (z2 - z0), 100.0};
    for (const Measure m : kMeasures) {
      const auto& mt = table[m];
      for (int i = 0; i < 3; ++i) CHECK(mt.mos[i] == doctest::Approx(expected[i]).epsilon(1e-12));
      CHECK(mt.z(0, 0) == doctest::Approx(-s15));
      CHECK(mt.z(2, 1) == doctest::Approx(s2));
    }
    CHECK(table.index_of("c") == 2);
    CHECK_THROWS(table.index_of("zzz"));
  }

  TEST_CASE("identical raters: MOS order equals raw-mean order") {
    std::vector<RatingRecord> rs;
    const std::vector<int> v{3, 1, 4, 5, 2, 2};
    for (std::size_t i = 0; i < v.size(); ++i) {
      rs.push_back(record("i" + std::to_string(i), "x", {v[i], v[i]}, {v[i], v[i]}, {v[i], v[i]}));
    }
    const auto mos = compute_mos(rs)[Measure::Authenticity].mos;
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = 0; j < v.size(); ++j) {
        CHECK((v[i] < v[j]) == (mos[i] < mos[j]));
      }
    }
  }

  TEST_CASE("degenerate rating range is an error; constant raters are flagged") {
    std::vector<RatingRecord> flat{record("a", "x", {3, 3}, {3, 3}, {3, 3}), record("b", "x", {3, 3}, {3, 3}, {3, 3})};
    CHECK_THROWS_AS(compute_mos(flat), std::domain_error);

    std::vector<RatingRecord> rs{record("a", "x", {1, 3}, {1, 3}, {1, 3}), record("b", "x", {5, 3}, {5, 3}, {5, 3})};
    const auto table = compute_mos(rs);
    CHECK(table[Measure::Quality].zero_variance == std::vector<std::size_t>{1});
    CHECK(!table.warnings.empty());
    CHECK(table[Measure::Quality].mos == std::vector<double>{0.0, 100.0});
  }

  TEST_CASE("loading and validating the rating files") {
    testing::TempDir dir("corpus");
    write_text(dir / "meta.csv", "image_id,generator_id,category,challenge\na,g,art,c\nb,g,people,c\n");
    write_text(dir / "ratings.csv",
               "image_id,participant_id,quality,authenticity,correspondence\n"
               "a,p1,1,2,3\na,p2,2,3,4\nb,p1,5,4,3\nb,p2,4,4,4\n");
    write_text(dir / "manifest.csv", "image_id,path\na,images/a.png\nb,images/b.png\n");
    const auto ds = load_dataset(dir / "ratings.csv", dir / "meta.csv", dir / "manifest.csv");
    REQUIRE(ds.records.size() == 2);
    CHECK(ds.participants.size() == 2);
    CHECK(ds.records[0].ratings(Measure::Correspondence) == std::vector<int>{3, 4});
    CHECK(ds.records[1].image_path == "images/b.png");
    validate(ds);

    write_text(dir / "bad.csv",
               "image_id,participant_id,quality,authenticity,correspondence\n"
               "a,p1,1,2,3\na,p2,2,3,4\nb,p1,5,4,3\nb,p2,4,6,4\n");
    CHECK_THROWS(validate(load_dataset(dir / "bad.csv", dir / "meta.csv")));
    write_text(dir / "short.csv",
               "image_id,participant_id,quality,authenticity,correspondence\n"
               "a,p1,1,2,3\na,p2,2,3,4\nb,p1,5,4,3\n");
    CHECK_THROWS(validate(load_dataset(dir / "short.csv", dir / "meta.csv")));
    write_text(dir / "unknown.csv",
               "image_id,participant_id,quality,authenticity,correspondence\nz,p1,1,2,3\n");
    CHECK_THROWS(load_dataset(dir / "unknown.csv", dir / "meta.csv"));
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("partition sizes by largest remainder") {
    CHECK(partition_sizes(1367, {0.7, 0.2, 0.1}) == std::array<std::size_t, 3>{957, 273, 137});
    CHECK(partition_sizes(10, {0.7, 0.2, 0.1}) == std::array<std::size_t, 3>{7, 2, 1});
    CHECK(partition_sizes(5, {1.0, 0.0, 0.0}) == std::array<std::size_t, 3>{5, 0, 0});
    CHECK_THROWS(partition_sizes(5, {0.5, 0.2, 0.2}));
  }

  TEST_CASE("1367 items split 957/273/137 in every plan") {
    const auto ids = numbered_ids(1367);
    std::vector<double> strata(ids.size());
    Pcg32 rng(2);
    for (auto& s : strata) s = rng.uniform(0, 100);
    const auto plans = make_splits(ids, strata, 10, 0);
    for (const auto& p : plans) {
      CHECK(p.train.size() == 957);
      CHECK(p.val.size() == 273);
      CHECK(p.test.size() == 137);
      CHECK(p.test == plans[0].test);
    }
    CHECK(plans[0].train != plans[1].train);
  }

  TEST_CASE("all-train ratios put every id in train") {
    const auto ids = numbered_ids(30);
    const auto plans = make_splits(ids, std::vector<double>(30, 1.0), 1, 5, {{1.0, 0.0, 0.0}, true});
    // Partitions list ids in input order.
    CHECK(plans[0].train == ids);
    CHECK(plans[0].val.empty());
    CHECK(plans[0].test.empty());
  }

  TEST_CASE("same seed gives byte-identical plans") {
    const auto ids = numbered_ids(100);
    std::vector<double> strata(100);
    for (int i = 0; i < 100; ++i) strata[i] = (i * 37) % 100;
    auto dump = [&] {
      nlohmann::json j = nlohmann::json::array();
      for (const auto& p : make_splits(ids, strata, 5, 17)) j.push_back(to_json(p));
      return j.dump();
    };
    CHECK(dump() == dump());
    const auto p = make_splits(ids, strata, 1, 17)[0];
    const auto back = split_from_json(to_json(p));
    CHECK(back.train == p.train);
    CHECK(back.test == p.test);
    CHECK(back.seed == p.seed);
  }

  TEST_CASE("property: partitions are disjoint and exhaustive, deciles stratified") {
    for (std::size_t n : {20u, 57u, 400u, 1367u}) {
      const auto ids = numbered_ids(n);
      Pcg32 rng(n);
      std::vector<double> strata(n);
      for (auto& s : strata) s = rng.normal(50, 20);
      const auto bins = decile_bins(strata);
      std::map<std::string, int> bin_of;
      for (std::size_t i = 0; i < n; ++i) bin_of[ids[i]] = bins[i];
      for (bool fixed : {true, false}) {
        for (const auto& p : make_splits(ids, strata, 8, 3, {{0.7, 0.2, 0.1}, fixed})) {
          CHECK(p.stratified);
          std::multiset<std::string> seen;
          seen.insert(p.train.begin(), p.train.end());
          seen.insert(p.val.begin(), p.val.end());
          seen.insert(p.test.begin(), p.test.end());
          CHECK(seen.size() == n);
          CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == n);
          if (n < 400) continue;
          std::array<double, 10> in_train{}, total{};
          for (const auto& id : p.train) in_train[bin_of[id]] += 1;
          for (const auto& id : ids) total[bin_of[id]] += 1;
          for (int b = 0; b < 10; ++b) CHECK(std::abs(in_train[b] / total[b] - 0.7) <= 0.05);
        }
      }
    }
  }

  TEST_CASE("decile bins by rank") {
    std::vector<double> v;
    for (int i = 0; i < 20; ++i) v.push_back(19 - i);
    const auto bins = decile_bins(v);
    CHECK(bins[0] == 9);
    CHECK(bins[19] == 0);
    CHECK(bins[10] == 4);
  }

  TEST_CASE("small corpora fall back to unstratified plans") {
    const auto ids = numbered_ids(10);
    const auto plans = make_splits(ids, std::vector<double>(10, 0.0), 2, 1);
    CHECK(!plans[0].stratified);
    CHECK(plans[0].train.size() == 7);
  }
}
