#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rqmatch/rqrmi.hpp"
#include "rqmatch/types.hpp"

namespace rqmatch::isets {

// Scales a field value of the given width into [0, 1). Exact for widths up
// to 32 bits; wider fields must be split before indexing.
double scale_value(FieldValue v, unsigned width_bits);

// Rules whose ranges on one chosen field are pairwise disjoint.
struct ISet {
  std::size_t field_index = 0;
  std::vector<Rule> rules;  // ascending by fields[field_index].lo
  std::vector<rqrmi::RangeValuePair> pairs;
  std::optional<rqrmi::RQRMIModel> model;

  double coverage(std::size_t total_rules) const {
    return total_rules ? static_cast<double>(rules.size()) / static_cast<double>(total_rules) : 0.0;
  }
};

struct PartitionResult {
  std::vector<ISet> isets;
  RuleSet remainder;
  std::vector<double> coverage_per_iset;
};

// Maximum-cardinality pairwise-disjoint subset of closed ranges: sort by
// upper bound, greedily take each range starting after the last selected end.
// Returns indices into `ranges`.
std::vector<std::size_t> interval_schedule_max(const std::vector<FieldRange>& ranges);

// Greedy partition: repeatedly runs interval scheduling over every field on
// the remaining rules and keeps the globally largest result (ties to the
// lowest field index), until max_isets or exhaustion. iSets covering less
// than min_coverage of the input are dissolved into the remainder.
PartitionResult partition(const RuleSet& rs, std::size_t max_isets, double min_coverage);

// Per-field unique-value fraction; only defined for fields that are
// exact-match across the whole rule-set.
std::vector<std::optional<double>> diversity(const RuleSet& rs);

struct CentralityEstimate {
  std::size_t value = 0;
  bool exact = true;
};

// Largest set of rules that pairwise overlap in every field (equivalently,
// share a common point). Exact up to 1000 rules; a greedy corner-stabbing
// lower bound above that.
CentralityEstimate centrality(const RuleSet& rs);

// One scaled half-open pair per rule, in field order. Throws when rules
// overlap on the chosen field or the field is wider than 32 bits.
std::vector<rqrmi::RangeValuePair> build_iset_pairs(const ISet& iset, unsigned width_bits);

// CSV: iset_index,field,rule_count,coverage
std::string partition_report_csv(const PartitionResult& pr);

}  // namespace rqmatch::isets
