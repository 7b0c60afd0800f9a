#include <doctest.h>

#include "helpers.hpp"
#include "rqmatch/remainder.hpp"

using namespace rqmatch;
using namespace rqmatch::remainder;

namespace {

// Enumerative check that a prefix decomposition exactly tiles [lo, hi].
bool prefixes_tile_range(const std::vector<std::pair<FieldValue, unsigned>>& prefixes,
                         FieldValue lo, FieldValue hi, unsigned width) {
  std::vector<bool> covered(static_cast<std::size_t>(hi - lo + 1), false);
  for (auto [base, plen] : prefixes) {
    FieldValue span = plen == width ? 0 : (FieldValue{1} << (width - plen)) - 1;
    if (base < lo || base + span > hi) return false;
    if ((base & span) != 0) return false;  // must be aligned
    for (FieldValue v = base; v <= base + span; ++v) {
      std::size_t idx = static_cast<std::size_t>(v - lo);
      if (covered[idx]) return false;
      covered[idx] = true;
    }
  }
  for (bool c : covered) {
    if (!c) return false;
  }
  return true;
}

RuleSet five_tuple_rules(Rng& rng, std::size_t n) {
  return testing::random_ruleset(rng, n, {32, 32, 16, 16, 8});
}

}  // namespace

TEST_CASE("range to prefixes: classic splits") {
  // [1, 3] over 16 bits: {1/16, 2-3 as one /15 prefix}.
  auto p = range_to_prefixes(1, 3, 16);
  REQUIRE(p.size() == 2);
  CHECK(p[0].first == 1);
  CHECK(p[0].second == 16);
  CHECK(p[1].first == 2);
  CHECK(p[1].second == 15);

  CHECK(range_to_prefixes(0, 65535, 16) ==
        std::vector<std::pair<FieldValue, unsigned>>{{0, 0}});
  CHECK(range_to_prefixes(7, 7, 16).size() == 1);
}

TEST_CASE("range to prefixes tiles random ranges exactly") {
  Rng rng(404);
  for (int round = 0; round < 200; ++round) {
    FieldValue a = rng.below(1 << 12);
    FieldValue b = a + rng.below(1 << 10);
    auto p = range_to_prefixes(a, b, 12 + 4);
    CHECK(prefixes_tile_range(p, a, b, 16));
    CHECK(p.size() <= 2 * 16);
  }
}

TEST_CASE("exact and wildcard rules land in the expected tuples") {
  TupleSpaceClassifier tss;
  Rule exact;
  exact.id = 1;
  exact.priority = 5;
  exact.fields = {FieldRange::exact(10, 16), FieldRange::exact(20, 16)};
  tss.insert(exact);
  CHECK(tss.table_count() == 1);

  Rule wild;
  wild.id = 2;
  wild.priority = 3;
  wild.fields = {FieldRange::wildcard(16), FieldRange::wildcard(16)};
  tss.insert(wild);
  CHECK(tss.table_count() == 2);
  CHECK(tss.size() == 2);

  MatchResult m = tss.lookup(PacketHeader{{10, 20}});
  CHECK(m.rule_id == 1);
  CHECK(tss.lookup(PacketHeader{{11, 20}}).rule_id == 2);

  CHECK(tss.remove(1));
  CHECK_FALSE(tss.remove(1));
  CHECK(tss.lookup(PacketHeader{{10, 20}}).rule_id == 2);
}

TEST_CASE("empty remainder returns nothing at any floor") {
  TupleSpaceClassifier tss;
  LookupStats stats;
  CHECK_FALSE(tss.lookup(PacketHeader{{1, 2}}, &stats).matched);
  CHECK(stats.tables_probed == 0);
  CHECK_FALSE(tss.lookup_with_floor(PacketHeader{{1, 2}}, MatchFloor{100, 0}, &stats).matched);
}

TEST_CASE("a floor at or above the global best probes nothing") {
  Rng rng(405);
  RuleSet rs = five_tuple_rules(rng, 50);
  TupleSpaceClassifier tss;
  for (const Rule& r : rs.rules) tss.insert(r);

  std::int32_t top = std::numeric_limits<std::int32_t>::min();
  for (const Rule& r : rs.rules) top = std::max(top, r.priority);

  LookupStats stats;
  PacketHeader pkt = testing::random_packet(rng, rs);
  MatchResult m = tss.lookup_with_floor(pkt, MatchFloor{top, 0}, &stats);
  CHECK_FALSE(m.matched);
  CHECK(stats.tables_probed == 0);
}

TEST_CASE("tuple-space lookup equals the linear-scan oracle") {
  Rng rng(406);
  for (int round = 0; round < 6; ++round) {
    RuleSet rs = five_tuple_rules(rng, 120);
    TupleSpaceClassifier tss;
    LinearScanClassifier ref;
    for (const Rule& r : rs.rules) {
      tss.insert(r);
      ref.insert(r);
    }
    for (int i = 0; i < 3000; ++i) {
      PacketHeader pkt = testing::random_packet(rng, rs);
      MatchResult expect = linear_scan_classify(rs, pkt);
      CHECK(tss.lookup(pkt) == expect);
      CHECK(ref.lookup(pkt) == expect);
    }
  }
}

TEST_CASE("floor semantics match a filtered oracle") {
  Rng rng(407);
  RuleSet rs = five_tuple_rules(rng, 150);
  TupleSpaceClassifier tss;
  for (const Rule& r : rs.rules) tss.insert(r);

  for (int i = 0; i < 4000; ++i) {
    PacketHeader pkt = testing::random_packet(rng, rs);
    MatchResult full = tss.lookup(pkt);
    std::int32_t floor_p = static_cast<std::int32_t>(rng.below(160)) - 5;
    RuleId floor_id = static_cast<RuleId>(rng.below(160));
    MatchFloor floor{floor_p, floor_id};

    MatchResult got = tss.lookup_with_floor(pkt, floor);

    // Oracle: best match strictly above the floor.
    MatchResult expect = MatchResult::none();
    for (const Rule& r : rs.rules) {
      if (!beats_floor(r.priority, r.id, floor)) continue;
      if (!rule_matches(r, pkt)) continue;
      MatchResult m = MatchResult::of(r);
      if (better_match(m, expect)) expect = m;
    }
    CHECK(got == expect);

    // Whenever the unfloored result beats the floor, both lookups agree.
    if (full.matched && beats_floor(full.priority, full.rule_id, floor)) {
      CHECK(got == full);
    }
  }
}

TEST_CASE("raising the floor never probes more tables") {
  Rng rng(408);
  RuleSet rs = five_tuple_rules(rng, 200);
  TupleSpaceClassifier tss;
  for (const Rule& r : rs.rules) tss.insert(r);

  for (int i = 0; i < 500; ++i) {
    PacketHeader pkt = testing::random_packet(rng, rs);
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (std::int32_t f : {-1000, 0, 50, 100, 150, 250}) {
      LookupStats stats;
      tss.lookup_with_floor(pkt, MatchFloor{f, std::numeric_limits<RuleId>::max()}, &stats);
      CHECK(stats.tables_probed <= prev);
      prev = stats.tables_probed;
    }
  }
}

TEST_CASE("removal keeps lookups consistent") {
  Rng rng(409);
  RuleSet rs = five_tuple_rules(rng, 80);
  TupleSpaceClassifier tss;
  for (const Rule& r : rs.rules) tss.insert(r);

  // Remove a random half.
  RuleSet kept;
  kept.field_schema = rs.field_schema;
  for (const Rule& r : rs.rules) {
    if (rng.uniform() < 0.5) {
      CHECK(tss.remove(r.id));
    } else {
      kept.rules.push_back(r);
    }
  }
  CHECK(tss.size() == kept.rules.size());
  for (int i = 0; i < 2000; ++i) {
    PacketHeader pkt = testing::random_packet(rng, rs);
    CHECK(tss.lookup(pkt) == linear_scan_classify(kept, pkt));
  }
}

TEST_CASE("duplicate insert is rejected") {
  TupleSpaceClassifier tss;
  Rule r;
  r.id = 7;
  r.priority = 1;
  r.fields = {FieldRange::wildcard(8)};
  tss.insert(r);
  CHECK_THROWS_AS(tss.insert(r), Error);
}
