#include <doctest.h>

#include "helpers.hpp"
#include "rqmatch/isets.hpp"

using namespace rqmatch;
using namespace rqmatch::isets;

namespace {

std::vector<FieldRange> make_ranges(std::initializer_list<std::pair<int, int>> spans) {
  std::vector<FieldRange> out;
  for (auto [lo, hi] : spans) {
    out.push_back(FieldRange{static_cast<FieldValue>(lo), static_cast<FieldValue>(hi), 16});
  }
  return out;
}

RuleSet one_field_rules(std::initializer_list<std::pair<int, int>> spans) {
  RuleSet rs;
  rs.field_schema = {16};
  std::int32_t n = static_cast<std::int32_t>(spans.size());
  RuleId id = 0;
  for (auto [lo, hi] : spans) {
    Rule r;
    r.id = id;
    r.priority = n - static_cast<std::int32_t>(id);
    r.fields = {FieldRange{static_cast<FieldValue>(lo), static_cast<FieldValue>(hi), 16}};
    rs.rules.push_back(r);
    ++id;
  }
  return rs;
}

}  // namespace

TEST_CASE("interval scheduling selects all disjoint ranges") {
  auto ranges = make_ranges({{0, 5}, {6, 9}, {10, 20}, {30, 31}});
  CHECK(interval_schedule_max(ranges).size() == 4);
}

TEST_CASE("interval scheduling keeps one of identical ranges") {
  auto ranges = make_ranges({{5, 10}, {5, 10}, {5, 10}});
  CHECK(interval_schedule_max(ranges).size() == 1);
}

TEST_CASE("greedy equals the DP optimum on random instances") {
  Rng rng(77);
  for (int round = 0; round < 300; ++round) {
    std::vector<FieldRange> ranges;
    std::size_t n = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      FieldValue a = rng.below(200);
      FieldValue b = a + rng.below(60);
      ranges.push_back(FieldRange{a, b, 16});
    }
    std::vector<std::size_t> sel = interval_schedule_max(ranges);
    // Selected set is pairwise disjoint.
    for (std::size_t i = 0; i + 1 < sel.size(); ++i) {
      for (std::size_t j = i + 1; j < sel.size(); ++j) {
        CHECK_FALSE(ranges[sel[i]].overlaps(ranges[sel[j]]));
      }
    }
    CHECK(sel.size() == testing::interval_dp_optimum(ranges));
  }
}

TEST_CASE("partition covers disjoint rules with one iSet") {
  RuleSet rs = one_field_rules({{0, 9}, {10, 19}, {20, 29}, {30, 39}});
  PartitionResult pr = partition(rs, 4, 0.25);
  REQUIRE(pr.isets.size() == 1);
  CHECK(pr.coverage_per_iset[0] == 1.0);
  CHECK(pr.remainder.rules.empty());
  // Rules sorted by lo within the iSet.
  for (std::size_t i = 0; i + 1 < pr.isets[0].rules.size(); ++i) {
    CHECK(pr.isets[0].rules[i].fields[0].lo < pr.isets[0].rules[i + 1].fields[0].lo);
  }
}

TEST_CASE("fully overlapping rules collapse into the remainder") {
  RuleSet rs = one_field_rules({{5, 50}, {5, 50}, {5, 50}, {5, 50}, {5, 50}});
  PartitionResult pr = partition(rs, 2, 0.25);
  CHECK(pr.isets.empty());
  CHECK(pr.remainder.rules.size() == 5);
}

TEST_CASE("partition conserves the rule multiset") {
  Rng rng(88);
  for (int round = 0; round < 10; ++round) {
    RuleSet rs = testing::random_ruleset(rng, 300, {32, 32, 16, 16, 8});
    PartitionResult pr = partition(rs, 1 + rng.below(4), 0.05);
    std::vector<RuleId> seen;
    for (const ISet& s : pr.isets) {
      // Disjointness on the chosen field.
      for (std::size_t i = 0; i + 1 < s.rules.size(); ++i) {
        CHECK(s.rules[i].fields[s.field_index].hi < s.rules[i + 1].fields[s.field_index].lo);
      }
      for (const Rule& r : s.rules) seen.push_back(r.id);
    }
    for (const Rule& r : pr.remainder.rules) seen.push_back(r.id);
    std::sort(seen.begin(), seen.end());
    REQUIRE(seen.size() == rs.rules.size());
    for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);
  }
}

TEST_CASE("each greedy iSet is maximal for the then-remaining rules") {
  Rng rng(99);
  for (int round = 0; round < 40; ++round) {
    RuleSet rs = testing::random_ruleset(rng, 5 + rng.below(15), {16, 16});
    PartitionResult pr = partition(rs, 16, 0.0);

    std::vector<Rule> remaining = rs.rules;
    for (const ISet& s : pr.isets) {
      std::size_t best = 0;
      for (std::size_t f = 0; f < rs.field_count(); ++f) {
        std::vector<FieldRange> ranges;
        for (const Rule& r : remaining) ranges.push_back(r.fields[f]);
        best = std::max(best, testing::interval_dp_optimum(ranges));
      }
      CHECK(s.rules.size() == best);
      std::vector<Rule> next;
      for (const Rule& r : remaining) {
        bool in_iset = false;
        for (const Rule& q : s.rules) in_iset |= q.id == r.id;
        if (!in_iset) next.push_back(r);
      }
      remaining = std::move(next);
    }
  }
}

TEST_CASE("diversity of exact-match fields") {
  RuleSet rs;
  rs.field_schema = {16, 16};
  for (int i = 0; i < 8; ++i) {
    Rule r;
    r.id = static_cast<RuleId>(i);
    r.priority = 8 - i;
    r.fields = {FieldRange::exact(7, 16), FieldRange::exact(static_cast<FieldValue>(i), 16)};
    rs.rules.push_back(r);
  }
  auto d = diversity(rs);
  REQUIRE(d.size() == 2);
  CHECK(*d[0] == doctest::Approx(1.0 / 8.0));
  CHECK(*d[1] == doctest::Approx(1.0));

  rs.rules[0].fields[0] = FieldRange{1, 2, 16};  // no longer exact-match
  CHECK_FALSE(diversity(rs)[0].has_value());
}

TEST_CASE("diversity bounds the largest iSet fraction on exact fields") {
  Rng rng(111);
  for (int round = 0; round < 20; ++round) {
    RuleSet rs;
    rs.field_schema = {16};
    std::size_t n = 20 + rng.below(60);
    for (std::size_t i = 0; i < n; ++i) {
      Rule r;
      r.id = static_cast<RuleId>(i);
      r.priority = static_cast<std::int32_t>(n - i);
      r.fields = {FieldRange::exact(rng.below(30), 16)};
      rs.rules.push_back(r);
    }
    auto d = diversity(rs);
    std::vector<FieldRange> ranges;
    for (const Rule& r : rs.rules) ranges.push_back(r.fields[0]);
    double frac = static_cast<double>(interval_schedule_max(ranges).size()) /
                  static_cast<double>(rs.rules.size());
    CHECK(frac <= *d[0] + 1e-12);
  }
}

TEST_CASE("centrality trivial cases") {
  CHECK(centrality(one_field_rules({{0, 1}, {2, 3}, {4, 5}})).value == 1);
  CHECK(centrality(one_field_rules({{5, 9}, {5, 9}, {5, 9}, {5, 9}})).value == 4);
  RuleSet empty;
  empty.field_schema = {16};
  CHECK(centrality(empty).value == 0);
}

TEST_CASE("centrality lower-bounds the iSets needed for full coverage") {
  Rng rng(222);
  for (int round = 0; round < 30; ++round) {
    RuleSet rs = testing::random_ruleset(rng, 4 + rng.below(20), {16, 16});
    CentralityEstimate c = centrality(rs);
    CHECK(c.exact);
    PartitionResult pr = partition(rs, rs.rules.size() + 1, 0.0);
    CHECK(pr.remainder.rules.empty());
    CHECK(pr.isets.size() >= c.value);
  }
}

TEST_CASE("iset pairs scale full-width and partial ranges") {
  ISet full;
  full.field_index = 0;
  Rule r;
  r.id = 0;
  r.fields = {FieldRange{0, 15, 4}};
  full.rules = {r};
  auto pairs = build_iset_pairs(full, 4);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].lo == 0.0);
  CHECK(pairs[0].hi == 1.0);
  CHECK(pairs[0].value == 0);

  ISet two;
  two.field_index = 0;
  Rule a;
  a.id = 0;
  a.fields = {FieldRange{0, 3, 4}};
  Rule b;
  b.id = 1;
  b.fields = {FieldRange{8, 15, 4}};
  two.rules = {a, b};
  auto p2 = build_iset_pairs(two, 4);
  REQUIRE(p2.size() == 2);
  CHECK(p2[0].lo == 0.0);
  CHECK(p2[0].hi == 0.25);
  CHECK(p2[1].lo == 0.5);
  CHECK(p2[1].hi == 1.0);

  ISet overlapping;
  overlapping.field_index = 0;
  Rule c = a;
  c.id = 2;
  c.fields = {FieldRange{2, 9, 4}};
  overlapping.rules = {a, c};
  CHECK_THROWS_AS(build_iset_pairs(overlapping, 4), Error);
}

TEST_CASE("pair lookup inverts rule membership over a small width") {
  Rng rng(333);
  for (int round = 0; round < 20; ++round) {
    RuleSet rs = testing::random_ruleset(rng, 30, {8});
    PartitionResult pr = partition(rs, 1, 0.0);
    REQUIRE(!pr.isets.empty());
    ISet& s = pr.isets[0];
    auto pairs = build_iset_pairs(s, 8);
    for (std::uint32_t x = 0; x < 256; ++x) {
      auto hit = rqrmi::find_pair(pairs, scale_value(x, 8));
      int expect = -1;
      for (std::size_t i = 0; i < s.rules.size(); ++i) {
        if (s.rules[i].fields[0].contains(x)) expect = static_cast<int>(i);
      }
      if (expect < 0) {
        CHECK_FALSE(hit.has_value());
      } else {
        REQUIRE(hit.has_value());
        CHECK(*hit == static_cast<std::uint32_t>(expect));
      }
    }
  }
}

TEST_CASE("partition report lists retained isets") {
  RuleSet rs = one_field_rules({{0, 9}, {10, 19}, {20, 29}});
  PartitionResult pr = partition(rs, 2, 0.1);
  std::string csv = partition_report_csv(pr);
  CHECK(csv.find("iset_index,field,rule_count,coverage") == 0);
  CHECK(csv.find("0,0,3,1") != std::string::npos);
}
