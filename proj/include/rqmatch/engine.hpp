#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>

#include "rqmatch/isets.hpp"
#include "rqmatch/remainder.hpp"
#include "rqmatch/training.hpp"

namespace rqmatch::engine {

enum class ExecutionMode {
  SerialEarlyTermination,  // remainder queried after the iSets, floored
  Parallel                 // remainder queried unconditionally, merged
};

struct EngineConfig {
  std::size_t max_isets = 2;
  double min_coverage = 0.25;
  rqrmi::TrainingConfig training;  // carries the error threshold (64)
  ExecutionMode mode = ExecutionMode::SerialEarlyTermination;
  std::size_t batch_size = 128;
  std::size_t threads = 1;
  remainder::RemainderKind remainder_kind = remainder::RemainderKind::TupleSpace;
  std::uint64_t seed = 1;
};

struct UpdatePolicy {
  double growth_factor = 2.0;      // retrain when remainder fraction doubles
  double absolute_threshold = 0.5;  // or reaches half the rule-set
};

enum class UpdateKind : std::uint8_t { ActionChange, Delete, MatchingSetChange, Add };

struct Update {
  UpdateKind kind = UpdateKind::ActionChange;
  RuleId id = 0;
  std::uint32_t action = 0;  // ActionChange
  Rule rule;                 // MatchingSetChange (same id) or Add

  static Update action_change(RuleId id, std::uint32_t action) {
    Update u;
    u.kind = UpdateKind::ActionChange;
    u.id = id;
    u.action = action;
    return u;
  }
  static Update erase(RuleId id) {
    Update u;
    u.kind = UpdateKind::Delete;
    u.id = id;
    return u;
  }
  static Update matching_set_change(Rule updated) {
    Update u;
    u.kind = UpdateKind::MatchingSetChange;
    u.id = updated.id;
    u.rule = std::move(updated);
    return u;
  }
  static Update add(Rule fresh) {
    Update u;
    u.kind = UpdateKind::Add;
    u.id = fresh.id;
    u.rule = std::move(fresh);
    return u;
  }
};

// One 32-bit-or-narrower slice of a source field. Fields wider than 32 bits
// are split into parts, most significant first; only the slice whose upper
// bits agree between the range endpoints keeps an exact range, lower slices
// widen to wildcard. Validation always runs on the source fields.
struct SubField {
  std::size_t source_field = 0;
  unsigned shift = 0;
  std::uint8_t width_bits = 32;
};

std::vector<SubField> split_schema(const std::vector<std::uint8_t>& schema);
FieldValue sub_value(const PacketHeader& pkt, const SubField& sf);
FieldRange sub_range(const FieldRange& src, const SubField& sf);

struct PhaseBreakdown {
  double inference_ns = 0.0;
  double search_ns = 0.0;
  double validation_ns = 0.0;
  double remainder_ns = 0.0;
  double sum() const { return inference_ns + search_ns + validation_ns + remainder_ns; }
};

struct BatchStats {
  PhaseBreakdown phases;
  double busy_ns = 0.0;  // per-thread wall time, summed; phases.sum() <= busy_ns
  std::size_t remainder_tables_probed = 0;
  std::size_t remainder_lookups = 0;

  void merge(const BatchStats& o);
};

// One trained iSet inside the pipeline: the model plus the value arrays, with
// the search field's bounds packed contiguously.
struct BuiltISet {
  std::size_t sub_field = 0;
  rqrmi::RQRMIModel model;
  std::vector<std::size_t> members;   // master-table indices, by search-field lo
  std::vector<std::uint32_t> lo;      // packed search-field bounds
  std::vector<std::uint32_t> hi;
  std::vector<std::uint8_t> tombstone;  // deletion bitmap, checked at validation
  double coverage = 0.0;

  std::size_t live_count() const;
};

// Binary search for the member whose search-field range contains `key`,
// within [predicted - eps, predicted + eps]. eps = 0 degenerates to a direct
// probe of the predicted slot.
std::optional<std::size_t> secondary_search(const BuiltISet& iset, std::uint32_t predicted,
                                            std::uint32_t eps, std::uint32_t key);

// Expected number of rules untouched after u uniform updates over r rules.
double expected_unmodified(double rules, double updates);

// The queryable classifier. Classification answers always equal
// linear_scan_classify over the live rule-set. A built pipeline is immutable
// under classification and safe to share across threads; apply_update
// requires exclusive access (single writer, no concurrent readers).
class ClassifierPipeline {
 public:
  struct StoredRule {
    Rule rule;
    bool deleted = false;
    bool in_remainder = false;
    std::int32_t iset = -1;  // index of owning iSet, -1 when none
    std::size_t pos = 0;     // slot within the owning iSet
  };

  // Partitions, trains one model per retained iSet and indexes the rest in
  // the remainder classifier. iSets whose training fails are dissolved into
  // the remainder with a warning.
  static ClassifierPipeline build(const RuleSet& rs, const EngineConfig& cfg);

  MatchResult classify(const PacketHeader& pkt) const;
  void classify_batch(std::span<const PacketHeader> pkts, std::span<MatchResult> out,
                      BatchStats* stats = nullptr) const;
  std::vector<MatchResult> classify_batch(const std::vector<PacketHeader>& pkts,
                                          BatchStats* stats = nullptr) const;

  void apply_update(const Update& u);
  bool should_retrain(const UpdatePolicy& policy) const;

  const EngineConfig& config() const { return cfg_; }
  EngineConfig& mutable_config() { return cfg_; }
  const std::vector<std::uint8_t>& schema() const { return schema_; }
  const std::vector<SubField>& sub_schema() const { return sub_schema_; }
  const std::vector<BuiltISet>& isets() const { return isets_; }
  const std::vector<StoredRule>& master() const { return master_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::size_t live_rule_count() const;
  std::size_t remainder_size() const { return remainder_->size(); }
  double remainder_fraction() const;
  double post_build_remainder_fraction() const { return post_build_remainder_fraction_; }
  std::uint64_t update_counter() const { return update_counter_; }
  std::size_t model_bytes() const;

  // Current live rule-set, e.g. for retraining or oracle comparison.
  RuleSet live_rules() const;

  // Serialization support: full pipeline state.
  struct Snapshot {
    EngineConfig cfg;
    std::vector<std::uint8_t> schema;
    std::vector<StoredRule> master;
    std::vector<BuiltISet> isets;
    double post_build_remainder_fraction = 0.0;
    std::uint64_t update_counter = 0;
  };
  Snapshot snapshot() const;
  static ClassifierPipeline from_snapshot(Snapshot s);

 private:
  ClassifierPipeline() = default;

  void classify_chunk(std::span<const PacketHeader> pkts, std::span<MatchResult> out,
                      BatchStats* stats) const;
  MatchResult resolve(RuleId id) const;
  std::size_t find_live(RuleId id) const;
  void rebuild_remainder_from_master();

  EngineConfig cfg_;
  std::vector<std::uint8_t> schema_;
  std::vector<SubField> sub_schema_;
  std::vector<StoredRule> master_;
  std::unordered_map<RuleId, std::size_t> id_index_;
  std::vector<BuiltISet> isets_;
  std::unique_ptr<remainder::RemainderClassifier> remainder_;
  double post_build_remainder_fraction_ = 0.0;
  std::uint64_t update_counter_ = 0;
  std::vector<std::string> warnings_;
};

}  // namespace rqmatch::engine
