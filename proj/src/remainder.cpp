#include "rqmatch/remainder.hpp"

#include <algorithm>

namespace rqmatch::remainder {

namespace {

std::uint64_t hash_masked(const std::vector<FieldValue>& vals) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (FieldValue v : vals) {
    for (int half = 0; half < 2; ++half) {
      h ^= static_cast<std::uint64_t>(v >> (64 * half));
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

FieldValue mask_keep(FieldValue v, unsigned width, unsigned plen) {
  if (plen == 0) return 0;
  unsigned shift = width - plen;
  return (v >> shift) << shift;
}

unsigned trailing_zeros(FieldValue v, unsigned cap) {
  if (v == 0) return cap;
  unsigned n = 0;
  while ((v & 1) == 0 && n < cap) {
    v >>= 1;
    ++n;
  }
  return n;
}

}  // namespace

void LinearScanClassifier::insert(const Rule& rule) {
  for (const Rule& r : rules_) {
    if (r.id == rule.id) throw Error("remainder: duplicate rule id");
  }
  rules_.push_back(rule);
}

bool LinearScanClassifier::remove(RuleId id) {
  auto it = std::find_if(rules_.begin(), rules_.end(), [&](const Rule& r) { return r.id == id; });
  if (it == rules_.end()) return false;
  rules_.erase(it);
  return true;
}

MatchResult LinearScanClassifier::lookup(const PacketHeader& pkt, LookupStats* stats) const {
  return lookup_with_floor(pkt, MatchFloor::none(), stats);
}

MatchResult LinearScanClassifier::lookup_with_floor(const PacketHeader& pkt,
                                                    const MatchFloor& floor,
                                                    LookupStats* stats) const {
  if (stats && !rules_.empty()) stats->tables_probed += 1;
  MatchFloor threshold = floor;
  MatchResult best = MatchResult::none();
  for (const Rule& r : rules_) {
    if (!beats_floor(r.priority, r.id, threshold)) continue;
    if (!rule_matches(r, pkt)) continue;
    best = MatchResult::of(r);
    threshold = MatchFloor::of(best);
  }
  return best;
}

std::vector<std::pair<FieldValue, unsigned>> range_to_prefixes(FieldValue lo, FieldValue hi,
                                                               unsigned width_bits) {
  if (lo > hi || hi > field_max(width_bits)) throw Error("range_to_prefixes: malformed range");
  std::vector<std::pair<FieldValue, unsigned>> out;
  FieldValue cur = lo;
  while (true) {
    unsigned align = trailing_zeros(cur, width_bits);
    FieldValue room = hi - cur;
    unsigned k = align;
    while (k > 0) {
      FieldValue span = (k < 128) ? ((FieldValue{1} << k) - 1) : ~FieldValue{0};
      if (span <= room) break;
      --k;
    }
    FieldValue span = (k < 128) ? ((FieldValue{1} << k) - 1) : ~FieldValue{0};
    out.emplace_back(cur, width_bits - k);
    if (room == span) break;
    cur += span;
    cur += 1;
  }
  return out;
}

void TupleSpaceClassifier::Table::refresh_best() {
  best_priority = std::numeric_limits<std::int32_t>::min();
  best_id = std::numeric_limits<RuleId>::max();
  for (const auto& [h, bucket] : buckets) {
    for (const Entry& e : bucket) {
      if (better_match(e.priority, e.id, best_priority, best_id)) {
        best_priority = e.priority;
        best_id = e.id;
      }
    }
  }
}

TupleSpaceClassifier::Table& TupleSpaceClassifier::table_for(
    const std::vector<std::uint8_t>& tuple) {
  for (Table& t : tables_) {
    if (t.tuple == tuple) return t;
  }
  Table t;
  t.tuple = tuple;
  tables_.push_back(std::move(t));
  return tables_.back();
}

void TupleSpaceClassifier::sort_tables() {
  order_.resize(tables_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    const Table& ta = tables_[a];
    const Table& tb = tables_[b];
    if (ta.best_priority != tb.best_priority) return ta.best_priority > tb.best_priority;
    if (ta.best_id != tb.best_id) return ta.best_id < tb.best_id;
    return a < b;
  });
}

void TupleSpaceClassifier::insert(const Rule& rule) {
  if (contained_.count(rule.id)) throw Error("remainder: duplicate rule id");

  if (widths_.empty()) {
    for (const FieldRange& f : rule.fields) widths_.push_back(f.width_bits);
  } else if (widths_.size() != rule.fields.size()) {
    throw Error("remainder: field count mismatch");
  }

  std::vector<std::vector<std::pair<FieldValue, unsigned>>> per_field;
  per_field.reserve(rule.fields.size());
  std::size_t product = 1;
  for (const FieldRange& f : rule.fields) {
    per_field.push_back(range_to_prefixes(f.lo, f.hi, f.width_bits));
    product *= per_field.back().size();
    if (product > kMaxSubRulesPerRule)
      throw Error("remainder: rule expands to too many tuple-space entries");
  }

  std::vector<std::size_t> idx(per_field.size(), 0);
  std::vector<std::uint8_t> tuple(per_field.size());
  std::vector<FieldValue> masked(per_field.size());
  while (true) {
    for (std::size_t f = 0; f < per_field.size(); ++f) {
      tuple[f] = static_cast<std::uint8_t>(per_field[f][idx[f]].second);
      masked[f] = per_field[f][idx[f]].first;
    }
    Table& t = table_for(tuple);
    t.buckets[hash_masked(masked)].push_back(Entry{masked, rule.id, rule.priority, rule.action});
    t.entries += 1;
    if (better_match(rule.priority, rule.id, t.best_priority, t.best_id)) {
      t.best_priority = rule.priority;
      t.best_id = rule.id;
    }

    std::size_t f = 0;
    for (; f < per_field.size(); ++f) {
      if (++idx[f] < per_field[f].size()) break;
      idx[f] = 0;
    }
    if (f == per_field.size()) break;
  }

  contained_.emplace(rule.id, rule);
  sort_tables();
}

bool TupleSpaceClassifier::remove(RuleId id) {
  auto it = contained_.find(id);
  if (it == contained_.end()) return false;

  for (Table& t : tables_) {
    for (auto bit = t.buckets.begin(); bit != t.buckets.end();) {
      auto& bucket = bit->second;
      std::size_t before = bucket.size();
      bucket.erase(std::remove_if(bucket.begin(), bucket.end(),
                                  [&](const Entry& e) { return e.id == id; }),
                   bucket.end());
      t.entries -= before - bucket.size();
      bit = bucket.empty() ? t.buckets.erase(bit) : std::next(bit);
    }
  }
  std::erase_if(tables_, [](const Table& t) { return t.entries == 0; });
  for (Table& t : tables_) t.refresh_best();
  contained_.erase(it);
  sort_tables();
  return true;
}

MatchResult TupleSpaceClassifier::scan(const PacketHeader& pkt, MatchFloor floor,
                                       LookupStats* stats) const {
  if (pkt.values.size() != widths_.size() && !tables_.empty())
    throw Error("remainder: packet field count mismatch");

  MatchResult best = MatchResult::none();
  std::vector<FieldValue> masked(widths_.size());
  for (std::size_t oi : order_) {
    const Table& t = tables_[oi];
    if (!better_match(t.best_priority, t.best_id, floor.priority, floor.id)) break;
    if (stats) stats->tables_probed += 1;

    for (std::size_t f = 0; f < widths_.size(); ++f) {
      masked[f] = mask_keep(pkt.values[f], widths_[f], t.tuple[f]);
    }
    auto bit = t.buckets.find(hash_masked(masked));
    if (bit == t.buckets.end()) continue;
    for (const Entry& e : bit->second) {
      if (e.masked != masked) continue;
      if (beats_floor(e.priority, e.id, floor)) {
        best = MatchResult{true, e.id, e.priority, e.action};
        floor = MatchFloor::of(best);
      }
    }
  }
  return best;
}

MatchResult TupleSpaceClassifier::lookup(const PacketHeader& pkt, LookupStats* stats) const {
  return scan(pkt, MatchFloor::none(), stats);
}

MatchResult TupleSpaceClassifier::lookup_with_floor(const PacketHeader& pkt,
                                                    const MatchFloor& floor,
                                                    LookupStats* stats) const {
  return scan(pkt, floor, stats);
}

std::vector<Rule> TupleSpaceClassifier::rules() const {
  std::vector<Rule> out;
  out.reserve(contained_.size());
  for (const auto& [id, r] : contained_) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const Rule& a, const Rule& b) { return a.id < b.id; });
  return out;
}

std::unique_ptr<RemainderClassifier> make_remainder(RemainderKind kind) {
  switch (kind) {
    case RemainderKind::LinearScan:
      return std::make_unique<LinearScanClassifier>();
    case RemainderKind::TupleSpace:
    default:
      return std::make_unique<TupleSpaceClassifier>();
  }
}

}  // namespace rqmatch::remainder
