#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "rqmatch/types.hpp"

namespace rqmatch::remainder {

// Early-termination floor: a point in the selector order (priority desc,
// id asc). Lookups return only results that strictly beat it.
struct MatchFloor {
  std::int32_t priority = std::numeric_limits<std::int32_t>::min();
  RuleId id = std::numeric_limits<RuleId>::max();

  static MatchFloor none() { return MatchFloor{}; }
  static MatchFloor of(const MatchResult& r) { return MatchFloor{r.priority, r.rule_id}; }
};

inline bool beats_floor(std::int32_t priority, RuleId id, const MatchFloor& f) {
  return better_match(priority, id, f.priority, f.id);
}

struct LookupStats {
  std::size_t tables_probed = 0;
};

// Contract: lookup equals linear_scan_classify over the contained rules;
// lookup_with_floor returns the best match strictly above the floor or none.
// Lookups are thread-safe after construction; insert/remove require
// exclusive access.
class RemainderClassifier {
 public:
  virtual ~RemainderClassifier() = default;

  virtual void insert(const Rule& rule) = 0;
  virtual bool remove(RuleId id) = 0;  // false when id is not contained
  virtual MatchResult lookup(const PacketHeader& pkt, LookupStats* stats = nullptr) const = 0;
  virtual MatchResult lookup_with_floor(const PacketHeader& pkt, const MatchFloor& floor,
                                        LookupStats* stats = nullptr) const = 0;
  virtual std::size_t size() const = 0;
  virtual std::vector<Rule> rules() const = 0;
};

// Reference implementation: a plain rule list.
class LinearScanClassifier final : public RemainderClassifier {
 public:
  void insert(const Rule& rule) override;
  bool remove(RuleId id) override;
  MatchResult lookup(const PacketHeader& pkt, LookupStats* stats = nullptr) const override;
  MatchResult lookup_with_floor(const PacketHeader& pkt, const MatchFloor& floor,
                                LookupStats* stats = nullptr) const override;
  std::size_t size() const override { return rules_.size(); }
  std::vector<Rule> rules() const override { return rules_; }

 private:
  std::vector<Rule> rules_;
};

// Splits a closed range into the minimal set of maximal prefix blocks,
// returned as (base, prefix_len) pairs in ascending order.
std::vector<std::pair<FieldValue, unsigned>> range_to_prefixes(FieldValue lo, FieldValue hi,
                                                               unsigned width_bits);

// Tuple-space search: rules are decomposed into prefix sub-rules, grouped by
// their per-field prefix-length tuple, and each group is a hash table keyed
// by the masked field values. Tables are scanned in descending order of the
// best (priority, id) they hold, so a floor can cut the scan short.
class TupleSpaceClassifier final : public RemainderClassifier {
 public:
  void insert(const Rule& rule) override;
  bool remove(RuleId id) override;
  MatchResult lookup(const PacketHeader& pkt, LookupStats* stats = nullptr) const override;
  MatchResult lookup_with_floor(const PacketHeader& pkt, const MatchFloor& floor,
                                LookupStats* stats = nullptr) const override;
  std::size_t size() const override { return contained_.size(); }
  std::vector<Rule> rules() const override;

  std::size_t table_count() const { return tables_.size(); }

  // Guard against pathological cross-products of range decompositions.
  static constexpr std::size_t kMaxSubRulesPerRule = 1u << 20;

 private:
  struct Entry {
    std::vector<FieldValue> masked;
    RuleId id;
    std::int32_t priority;
    std::uint32_t action;
  };

  struct Table {
    std::vector<std::uint8_t> tuple;  // prefix length per field
    std::unordered_map<std::uint64_t, std::vector<Entry>> buckets;
    std::int32_t best_priority = std::numeric_limits<std::int32_t>::min();
    RuleId best_id = std::numeric_limits<RuleId>::max();
    std::size_t entries = 0;

    void refresh_best();
  };

  MatchResult scan(const PacketHeader& pkt, MatchFloor floor, LookupStats* stats) const;
  Table& table_for(const std::vector<std::uint8_t>& tuple);
  void sort_tables();

  std::vector<Table> tables_;
  std::vector<std::size_t> order_;  // table indices, best (priority, id) desc
  std::vector<std::uint8_t> widths_;  // field widths, fixed by the first insert
  std::unordered_map<RuleId, Rule> contained_;
};

enum class RemainderKind { TupleSpace, LinearScan };

std::unique_ptr<RemainderClassifier> make_remainder(RemainderKind kind);

}  // namespace rqmatch::remainder
