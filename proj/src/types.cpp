#include "rqmatch/types.hpp"

#include <algorithm>
#include <unordered_set>

namespace rqmatch {

std::string to_string(FieldValue v) {
  if (v == 0) return "0";
  std::string out;
  while (v > 0) {
    out.push_back(static_cast<char>('0' + static_cast<unsigned>(v % 10)));
    v /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

FieldValue field_value_from_string(const std::string& s) {
  if (s.empty()) throw Error("empty field value");
  FieldValue v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw Error("invalid field value: " + s);
    FieldValue next = v * 10 + static_cast<unsigned>(c - '0');
    if (next < v) throw Error("field value overflow: " + s);
    v = next;
  }
  return v;
}

FieldRange FieldRange::from_prefix(FieldValue base, unsigned prefix_len, unsigned width_bits) {
  if (prefix_len > width_bits) throw Error("prefix length exceeds field width");
  FieldValue span = (prefix_len == width_bits) ? 0 : ((FieldValue{1} << (width_bits - prefix_len)) - 1);
  FieldValue lo = base & ~span;
  return FieldRange{lo, lo + span, static_cast<std::uint8_t>(width_bits)};
}

void RuleSet::validate() const {
  std::unordered_set<RuleId> seen;
  seen.reserve(rules.size());
  for (const Rule& r : rules) {
    if (r.fields.size() != field_schema.size())
      throw Error("rule " + std::to_string(r.id) + ": field count mismatch");
    for (std::size_t f = 0; f < r.fields.size(); ++f) {
      const FieldRange& fr = r.fields[f];
      if (fr.width_bits != field_schema[f])
        throw Error("rule " + std::to_string(r.id) + ": field width mismatch");
      if (fr.lo > fr.hi || fr.hi > field_max(fr.width_bits))
        throw Error("rule " + std::to_string(r.id) + ": malformed range");
    }
    if (!seen.insert(r.id).second)
      throw Error("duplicate rule id " + std::to_string(r.id));
  }
}

bool rule_matches(const Rule& rule, const PacketHeader& pkt) {
  if (rule.fields.size() != pkt.values.size())
    throw Error("packet field count does not match rule schema");
  for (std::size_t f = 0; f < rule.fields.size(); ++f) {
    if (!rule.fields[f].contains(pkt.values[f])) return false;
  }
  return true;
}

MatchResult linear_scan_classify(const RuleSet& rs, const PacketHeader& pkt) {
  MatchResult best = MatchResult::none();
  for (const Rule& r : rs.rules) {
    if (!rule_matches(r, pkt)) continue;
    if (!best.matched || better_match(r.priority, r.id, best.priority, best.rule_id)) {
      best = MatchResult::of(r);
    }
  }
  return best;
}

}  // namespace rqmatch
