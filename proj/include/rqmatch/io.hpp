#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rqmatch/engine.hpp"
#include "rqmatch/types.hpp"

namespace rqmatch::io {

// ClassBench filter lines:
//   @sip/plen dip/plen sportlo : sporthi dportlo : dporthi proto/mask [flags]
// Five-field schema (32,32,16,16,8). Priority descends with file order; the
// id is the zero-based line index. Unknown trailing columns are skipped.
RuleSet parse_classbench(std::istream& in);
RuleSet parse_classbench_file(const std::string& path);

// Emits rules back in the same format; requires address and protocol ranges
// to be prefix-representable (always true for parsed rule-sets).
std::string serialize_classbench(const RuleSet& rs);

// A trace with ground-truth labels: expected[i] is the linear-scan winner
// for packets[i].
struct LabeledTrace {
  std::vector<std::uint8_t> schema;
  std::vector<PacketHeader> packets;
  std::vector<RuleId> expected;

  std::size_t size() const { return packets.size(); }
};

// Packets that access the matching rules uniformly: each emission draws a
// reachable rule uniformly, synthesizes a header inside its ranges and
// verifies the rule wins the linear scan, falling back to a precomputed
// witness header after a few shadowed draws. Rules with no reachable point
// are skipped.
LabeledTrace gen_uniform_trace(const RuleSet& rs, std::size_t n, std::uint64_t seed);

// Zipf-skewed traffic over one flow per reachable rule. The exponent is
// solved so the top 3% of flows carry `top3_share` of the traffic.
LabeledTrace gen_zipf_trace(const RuleSet& rs, std::size_t n, double top3_share,
                            std::uint64_t seed);

// Exponent s with sum_{i<=ceil(0.03k)} i^-s / sum_{i<=k} i^-s = top3_share,
// by bisection; 0 when the target does not exceed the uniform share.
double solve_zipf_exponent(std::size_t flows, double top3_share);

// Binary trace file: header (magic, version, schema), then per packet the
// sub-field values (uint32 each, fields split to 32-bit parts) and the
// expected rule id.
void write_trace(std::ostream& out, const LabeledTrace& trace);
LabeledTrace read_trace(std::istream& in);
void write_trace_file(const std::string& path, const LabeledTrace& trace);
LabeledTrace read_trace_file(const std::string& path);

// CSV mirror: one column per original field plus expected_rule_id.
std::string trace_to_csv(const LabeledTrace& trace);

}  // namespace rqmatch::io
