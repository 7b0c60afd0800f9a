#include <doctest.h>

#include "helpers.hpp"
#include "rqmatch/types.hpp"

using namespace rqmatch;

namespace {

RuleSet two_field_rules() {
  RuleSet rs;
  rs.field_schema = {32, 16};
  // Two overlapping regions: a packet inside both must resolve to the
  // higher-priority rule.
  Rule r3;
  r3.id = 3;
  r3.priority = 10;
  r3.fields = {FieldRange{100, 200, 32}, FieldRange{10, 50, 16}};
  Rule r4;
  r4.id = 4;
  r4.priority = 5;
  r4.fields = {FieldRange{150, 300, 32}, FieldRange{20, 80, 16}};
  rs.rules = {r3, r4};
  return rs;
}

}  // namespace

TEST_CASE("field range basics") {
  FieldRange w = FieldRange::wildcard(16);
  CHECK(w.lo == 0);
  CHECK(w.hi == 65535);
  CHECK(w.is_wildcard());

  FieldRange p = FieldRange::from_prefix((FieldValue{0xC0A8u} << 16) | 0x0100u, 16, 32);
  CHECK(p.lo == 0xC0A80000u);
  CHECK(p.hi == 0xC0A8FFFFu);

  CHECK(to_string(FieldValue{1234567}) == "1234567");
  CHECK(field_value_from_string("1234567") == FieldValue{1234567});
  FieldValue big = (FieldValue{0xFFFFFFFFFFFFFFFFull} << 64) | 0xFFFFFFFFFFFFFFFFull;
  CHECK(field_value_from_string(to_string(big)) == big);
}

TEST_CASE("rule_matches boundaries and wildcards") {
  Rule all;
  all.id = 0;
  all.priority = 1;
  all.fields = {FieldRange::wildcard(8)};

  CHECK(rule_matches(all, PacketHeader{{0}}));
  CHECK(rule_matches(all, PacketHeader{{255}}));

  Rule r;
  r.id = 1;
  r.priority = 2;
  r.fields = {FieldRange{10, 20, 8}};
  CHECK(rule_matches(r, PacketHeader{{10}}));
  CHECK(rule_matches(r, PacketHeader{{20}}));
  CHECK_FALSE(rule_matches(r, PacketHeader{{21}}));
  CHECK_FALSE(rule_matches(r, PacketHeader{{9}}));

  CHECK_THROWS_AS(rule_matches(r, PacketHeader{{1, 2}}), Error);
}

TEST_CASE("overlapping rules resolve to the higher priority") {
  RuleSet rs = two_field_rules();
  PacketHeader pkt{{160, 30}};
  CHECK(rule_matches(rs.rules[0], pkt));
  CHECK(rule_matches(rs.rules[1], pkt));
  MatchResult m = linear_scan_classify(rs, pkt);
  CHECK(m.matched);
  CHECK(m.rule_id == 3);
  CHECK(m.priority == 10);
}

TEST_CASE("linear scan trivial cases") {
  RuleSet empty;
  empty.field_schema = {32};
  CHECK_FALSE(linear_scan_classify(empty, PacketHeader{{7}}).matched);

  RuleSet rs;
  rs.field_schema = {32};
  Rule all;
  all.id = 9;
  all.priority = 0;
  all.fields = {FieldRange::wildcard(32)};
  rs.rules = {all};
  MatchResult m = linear_scan_classify(rs, PacketHeader{{12345}});
  CHECK(m.matched);
  CHECK(m.rule_id == 9);
}

TEST_CASE("linear scan equals an independent oracle on random sets") {
  Rng rng(42);
  for (int round = 0; round < 5; ++round) {
    RuleSet rs = testing::random_ruleset(rng, 1000, {32, 32, 16, 16, 8});
    rs.validate();
    for (int i = 0; i < 2000; ++i) {
      PacketHeader pkt = testing::random_packet(rng, rs);
      CHECK(linear_scan_classify(rs, pkt) == testing::oracle_classify(rs, pkt));
    }
  }
}

TEST_CASE("rule_matches is monotone under range widening") {
  Rng rng(7);
  RuleSet rs = testing::random_ruleset(rng, 200, {16, 16});
  for (int i = 0; i < 500; ++i) {
    PacketHeader pkt = testing::random_packet(rng, rs);
    const Rule& r = rs.rules[rng.below(rs.rules.size())];
    if (!rule_matches(r, pkt)) continue;
    Rule widened = r;
    std::size_t f = rng.below(widened.fields.size());
    FieldRange& fr = widened.fields[f];
    fr.lo = fr.lo / 2;
    FieldValue maxv = field_max(fr.width_bits);
    fr.hi = fr.hi + (maxv - fr.hi) / 2;
    CHECK(rule_matches(widened, pkt));
  }
}

TEST_CASE("ruleset validation rejects malformed input") {
  RuleSet rs;
  rs.field_schema = {8};
  Rule a;
  a.id = 1;
  a.fields = {FieldRange{5, 3, 8}};
  rs.rules = {a};
  CHECK_THROWS_AS(rs.validate(), Error);

  rs.rules[0].fields[0] = FieldRange{3, 5, 8};
  rs.validate();

  Rule b = rs.rules[0];
  rs.rules.push_back(b);  // duplicate id
  CHECK_THROWS_AS(rs.validate(), Error);
}
