#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rqmatch {

// Field values are carried in a 128-bit unsigned integer so that schemas may
// declare fields of 8/16/32/64/128 bits. ClassBench five-tuples use <= 32.
using FieldValue = unsigned __int128;

using RuleId = std::uint32_t;

std::string to_string(FieldValue v);
FieldValue field_value_from_string(const std::string& s);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Largest value representable in `width_bits` bits.
inline FieldValue field_max(unsigned width_bits) {
  if (width_bits >= 128) return ~FieldValue{0};
  return (FieldValue{1} << width_bits) - 1;
}

// Closed interval [lo, hi] on unsigned integers of the given bit width.
struct FieldRange {
  FieldValue lo = 0;
  FieldValue hi = 0;
  std::uint8_t width_bits = 32;

  bool contains(FieldValue v) const { return lo <= v && v <= hi; }
  bool overlaps(const FieldRange& o) const { return lo <= o.hi && o.lo <= hi; }
  bool is_exact() const { return lo == hi; }
  bool is_wildcard() const { return lo == 0 && hi == field_max(width_bits); }
  FieldValue span() const { return hi - lo; }  // inclusive size minus one

  bool operator==(const FieldRange& o) const = default;

  static FieldRange wildcard(unsigned width_bits) {
    return FieldRange{0, field_max(width_bits), static_cast<std::uint8_t>(width_bits)};
  }
  static FieldRange exact(FieldValue v, unsigned width_bits) {
    return FieldRange{v, v, static_cast<std::uint8_t>(width_bits)};
  }
  // Prefix base/len, e.g. 192.168.0.0/16 -> [0xC0A80000, 0xC0A8FFFF].
  static FieldRange from_prefix(FieldValue base, unsigned prefix_len, unsigned width_bits);
};

struct Rule {
  RuleId id = 0;
  std::int32_t priority = 0;
  std::vector<FieldRange> fields;
  std::uint32_t action = 0;

  bool operator==(const Rule& o) const = default;
};

struct RuleSet {
  std::vector<Rule> rules;
  std::vector<std::uint8_t> field_schema;  // width_bits per field

  std::size_t field_count() const { return field_schema.size(); }
  std::size_t size() const { return rules.size(); }
  bool empty() const { return rules.empty(); }

  // Throws Error when a rule violates the schema or ids are not unique.
  void validate() const;
};

struct PacketHeader {
  std::vector<FieldValue> values;

  bool operator==(const PacketHeader& o) const = default;
};

struct MatchResult {
  bool matched = false;
  RuleId rule_id = 0;
  std::int32_t priority = 0;
  std::uint32_t action = 0;

  static MatchResult none() { return MatchResult{}; }
  static MatchResult of(const Rule& r) { return MatchResult{true, r.id, r.priority, r.action}; }

  bool operator==(const MatchResult& o) const = default;
};

// Selector order: higher priority wins, equal priorities break to lower id.
inline bool better_match(std::int32_t pa, RuleId ia, std::int32_t pb, RuleId ib) {
  return pa > pb || (pa == pb && ia < ib);
}

inline bool better_match(const MatchResult& a, const MatchResult& b) {
  if (!a.matched) return false;
  if (!b.matched) return true;
  return better_match(a.priority, a.rule_id, b.priority, b.rule_id);
}

// True iff every field range of `rule` contains the packet value.
// Throws Error when the packet and rule disagree on field count.
bool rule_matches(const Rule& rule, const PacketHeader& pkt);

// Brute-force reference classifier: highest-priority matching rule, ties to
// lower id, or an empty result.
MatchResult linear_scan_classify(const RuleSet& rs, const PacketHeader& pkt);

}  // namespace rqmatch
