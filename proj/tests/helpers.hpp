#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rqmatch/rng.hpp"
#include "rqmatch/rqrmi.hpp"
#include "rqmatch/types.hpp"

namespace rqmatch::testing {

// ---------------------------------------------------------------------------
// Random model and rule-set generators shared by unit and acceptance tests.
// ---------------------------------------------------------------------------

inline rqrmi::Submodel random_submodel(Rng& rng) {
  rqrmi::Submodel m;
  for (int k = 0; k < rqrmi::kHiddenWidth; ++k) {
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    m.w1[k] = static_cast<float>(sign * rng.uniform(0.5, 8.0));
    // Kinks spread over and slightly beyond [0, 1].
    m.b1[k] = static_cast<float>(-static_cast<double>(m.w1[k]) * rng.uniform(-0.2, 1.2));
    double s2 = rng.uniform() < 0.5 ? -1.0 : 1.0;
    m.w2[k] = static_cast<float>(s2 * rng.uniform(0.3, 2.0) / 4.0);
  }
  m.b2 = static_cast<float>(rng.uniform(-0.5, 0.5));
  return m;
}

// Mixed prefix / exact / range / wildcard rules shaped like real five-tuple
// sets: prefix lengths come from a short pool and port-style ranges mostly
// reuse a few service-port shapes, which keeps tuple-space decompositions
// realistic.
inline FieldRange random_field_range(Rng& rng, std::uint8_t w) {
  double style = rng.uniform();
  FieldValue maxv = field_max(w);
  if (style < 0.15) return FieldRange::wildcard(w);
  if (style < 0.45) return FieldRange::exact(rng.next_u64() & static_cast<std::uint64_t>(maxv), w);
  if (style < 0.75 || w > 16) {
    // Prefix with a length from a small pool, like deployed rule-sets.
    unsigned pool[4] = {w / 4u, w / 2u, (3u * w) / 4u, w >= 4u ? w - 4u : w};
    unsigned plen = pool[rng.below(4)];
    FieldValue base = rng.next_u64() & static_cast<std::uint64_t>(maxv);
    return FieldRange::from_prefix(base, plen, w);
  }
  if (style < 0.92) {
    // Service-port shapes.
    const std::uint32_t lo[] = {0, 1024, 49152, 0};
    const std::uint32_t hi[] = {1023, 65535, 65535, 65535};
    std::size_t pick = rng.below(4);
    return FieldRange{std::min<FieldValue>(lo[pick], maxv), std::min<FieldValue>(hi[pick], maxv),
                      w};
  }
  FieldValue a = rng.next_u64() & static_cast<std::uint64_t>(maxv);
  FieldValue b = rng.next_u64() & static_cast<std::uint64_t>(maxv);
  if (a > b) std::swap(a, b);
  return FieldRange{a, b, w};
}

inline RuleSet random_ruleset(Rng& rng, std::size_t count,
                              std::vector<std::uint8_t> widths) {
  RuleSet rs;
  rs.field_schema = std::move(widths);
  rs.rules.reserve(count);
  std::int32_t priority = static_cast<std::int32_t>(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rule r;
    r.id = static_cast<RuleId>(i);
    r.action = static_cast<std::uint32_t>(rng.below(1 << 16));
    if (i > 0 && rng.uniform() < 0.08) {
      priority = rs.rules.back().priority;  // occasional ties, broken by id
    } else {
      priority = static_cast<std::int32_t>(count - i);
    }
    r.priority = priority;
    for (std::uint8_t w : rs.field_schema) r.fields.push_back(random_field_range(rng, w));
    rs.rules.push_back(std::move(r));
  }
  return rs;
}

// Half of the packets land inside a random rule, half are uniform noise.
inline PacketHeader random_packet(Rng& rng, const RuleSet& rs) {
  PacketHeader pkt;
  pkt.values.reserve(rs.field_schema.size());
  if (!rs.rules.empty() && rng.uniform() < 0.5) {
    const Rule& r = rs.rules[rng.below(rs.rules.size())];
    for (const FieldRange& f : r.fields) {
      FieldValue span = f.hi - f.lo;
      FieldValue off = span == 0 ? 0 : FieldValue{rng.next_u64()} % (span + 1);
      pkt.values.push_back(f.lo + off);
    }
  } else {
    for (std::uint8_t w : rs.field_schema) {
      pkt.values.push_back(FieldValue{rng.next_u64()} & static_cast<std::uint64_t>(field_max(w)));
    }
  }
  return pkt;
}

// ---------------------------------------------------------------------------
// Independent oracles.
// ---------------------------------------------------------------------------

// Reference classifier written independently of linear_scan_classify: gathers
// every matching rule, then reduces.
inline MatchResult oracle_classify(const RuleSet& rs, const PacketHeader& pkt) {
  std::vector<const Rule*> matching;
  for (const Rule& r : rs.rules) {
    bool all = true;
    for (std::size_t f = 0; f < r.fields.size() && all; ++f) {
      all = r.fields[f].lo <= pkt.values[f] && pkt.values[f] <= r.fields[f].hi;
    }
    if (all) matching.push_back(&r);
  }
  if (matching.empty()) return MatchResult::none();
  const Rule* best = matching.front();
  for (const Rule* r : matching) {
    if (r->priority > best->priority || (r->priority == best->priority && r->id < best->id)) {
      best = r;
    }
  }
  return MatchResult::of(*best);
}

// Dynamic-programming optimum for interval scheduling (unit weights).
inline std::size_t interval_dp_optimum(const std::vector<FieldRange>& ranges) {
  if (ranges.empty()) return 0;
  std::vector<std::size_t> order(ranges.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ranges[a].hi < ranges[b].hi; });
  std::vector<std::size_t> dp(ranges.size() + 1, 0);
  for (std::size_t i = 1; i <= ranges.size(); ++i) {
    const FieldRange& cur = ranges[order[i - 1]];
    // Last interval (in hi order) ending strictly before cur.lo.
    std::size_t p = 0;
    for (std::size_t j = i - 1; j > 0; --j) {
      if (ranges[order[j - 1]].hi < cur.lo) {
        p = j;
        break;
      }
    }
    dp[i] = std::max(dp[i - 1], dp[p] + 1);
  }
  return dp[ranges.size()];
}

// Sorted disjoint pair array with random widths; gap_prob controls how often
// space is left between adjacent ranges.
inline std::vector<rqrmi::RangeValuePair> random_pairs(Rng& rng, std::size_t count,
                                                       double gap_prob) {
  std::vector<double> cuts;
  cuts.reserve(2 * count + 1);
  for (std::size_t i = 0; i < 2 * count + 1; ++i) cuts.push_back(rng.uniform());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  while (cuts.size() < 2 * count + 1) {
    cuts.push_back(rng.uniform());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  }

  std::vector<rqrmi::RangeValuePair> pairs;
  pairs.reserve(count);
  std::size_t c = 0;
  for (std::size_t i = 0; i < count; ++i) {
    double lo = cuts[c];
    double hi = cuts[c + 1];
    pairs.push_back(rqrmi::RangeValuePair{lo, hi, static_cast<std::uint32_t>(i)});
    c += (rng.uniform() < gap_prob && c + 3 < cuts.size()) ? 2 : 1;
    if (c + 1 >= cuts.size()) c = cuts.size() - 2;
  }
  // Re-walk to guarantee disjointness after the cursor clamp.
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].lo < pairs[i - 1].hi) {
      pairs[i].lo = pairs[i - 1].hi;
      if (pairs[i].hi <= pairs[i].lo) {
        pairs[i].hi = std::nextafter(pairs[i].lo, 2.0);
      }
    }
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].value = static_cast<std::uint32_t>(i);
  return pairs;
}

// Evenly spaced, gap-free pair array over [0, 1).
inline std::vector<rqrmi::RangeValuePair> uniform_pairs(std::size_t count) {
  std::vector<rqrmi::RangeValuePair> pairs;
  pairs.reserve(count);
  double w = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    double lo = static_cast<double>(i) * w;
    double hi = (i + 1 == count) ? 1.0 : static_cast<double>(i + 1) * w;
    pairs.push_back(rqrmi::RangeValuePair{lo, hi, static_cast<std::uint32_t>(i)});
  }
  return pairs;
}

// Worst |predicted - true| over grid keys inside pair ranges plus each pair's
// boundary keys; a lower bound on the exact maximum error.
inline std::uint32_t dense_model_error(const rqrmi::RQRMIModel& m, int log2_steps) {
  std::int64_t worst = 0;
  auto probe = [&](double x) {
    auto v = rqrmi::find_pair(m.pairs, x);
    if (!v) return;
    std::int64_t err = std::llabs(static_cast<std::int64_t>(rqrmi::infer_model(m, x)) -
                                  static_cast<std::int64_t>(*v));
    worst = std::max(worst, err);
  };
  std::size_t steps = std::size_t{1} << log2_steps;
  double h = std::ldexp(1.0, -log2_steps);
  for (std::size_t i = 0; i < steps; ++i) probe(static_cast<double>(i) * h);
  for (const rqrmi::RangeValuePair& p : m.pairs) {
    probe(p.lo);
    probe(std::nextafter(p.lo, 2.0));
    probe(std::nextafter(p.hi, 0.0));
  }
  return static_cast<std::uint32_t>(worst);
}

// Quantized-output changes of floor(M(x) * w) located by a uniform grid scan;
// returns the left edge of each cell whose endpoints quantize differently.
inline std::vector<double> grid_quant_changes(const rqrmi::Submodel& m, std::uint32_t w,
                                              int log2_steps) {
  std::vector<double> out;
  std::size_t steps = std::size_t{1} << log2_steps;
  double h = std::ldexp(1.0, -log2_steps);
  double prev = std::floor(infer_submodel(m, 0.0) * w);
  for (std::size_t i = 1; i <= steps; ++i) {
    double x = static_cast<double>(i) * h;
    double q = std::floor(infer_submodel(m, x) * w);
    if (q != prev) out.push_back(x - h);
    prev = q;
  }
  return out;
}

// True when every element of `points` lies within `tol` of some element of
// `anchors` (both sorted ascending).
inline bool all_within(const std::vector<double>& points, const std::vector<double>& anchors,
                       double tol) {
  for (double p : points) {
    auto it = std::lower_bound(anchors.begin(), anchors.end(), p);
    double best = std::numeric_limits<double>::infinity();
    if (it != anchors.end()) best = std::min(best, std::abs(*it - p));
    if (it != anchors.begin()) best = std::min(best, std::abs(*(it - 1) - p));
    if (best > tol) return false;
  }
  return true;
}

}  // namespace rqmatch::testing
