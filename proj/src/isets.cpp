#include "rqmatch/isets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace rqmatch::isets {

double scale_value(FieldValue v, unsigned width_bits) {
  if (width_bits > 32) throw Error("scale_value: field wider than 32 bits");
  return std::ldexp(static_cast<double>(static_cast<std::uint64_t>(v)), -static_cast<int>(width_bits));
}

std::vector<std::size_t> interval_schedule_max(const std::vector<FieldRange>& ranges) {
  std::vector<std::size_t> order(ranges.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (ranges[a].hi != ranges[b].hi) return ranges[a].hi < ranges[b].hi;
    if (ranges[a].lo != ranges[b].lo) return ranges[a].lo < ranges[b].lo;
    return a < b;
  });

  std::vector<std::size_t> selected;
  bool have_last = false;
  FieldValue last_hi = 0;
  for (std::size_t i : order) {
    if (!have_last || ranges[i].lo > last_hi) {
      selected.push_back(i);
      last_hi = ranges[i].hi;
      have_last = true;
    }
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

PartitionResult partition(const RuleSet& rs, std::size_t max_isets, double min_coverage) {
  PartitionResult out;
  out.remainder.field_schema = rs.field_schema;

  std::vector<std::size_t> remaining(rs.rules.size());
  std::iota(remaining.begin(), remaining.end(), 0);

  std::size_t total = rs.rules.size();
  std::vector<ISet> built;

  while (built.size() < max_isets && !remaining.empty()) {
    std::vector<std::size_t> best;
    std::size_t best_field = 0;
    for (std::size_t f = 0; f < rs.field_count(); ++f) {
      std::vector<FieldRange> ranges;
      ranges.reserve(remaining.size());
      for (std::size_t i : remaining) ranges.push_back(rs.rules[i].fields[f]);
      std::vector<std::size_t> sel = interval_schedule_max(ranges);
      if (sel.size() > best.size()) {
        best = std::move(sel);
        best_field = f;
      }
    }
    if (best.empty()) break;

    ISet iset;
    iset.field_index = best_field;
    iset.rules.reserve(best.size());
    std::vector<bool> taken(remaining.size(), false);
    for (std::size_t k : best) {
      iset.rules.push_back(rs.rules[remaining[k]]);
      taken[k] = true;
    }
    std::sort(iset.rules.begin(), iset.rules.end(), [&](const Rule& a, const Rule& b) {
      return a.fields[best_field].lo < b.fields[best_field].lo;
    });
    built.push_back(std::move(iset));

    std::vector<std::size_t> next;
    next.reserve(remaining.size() - best.size());
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      if (!taken[k]) next.push_back(remaining[k]);
    }
    remaining = std::move(next);
  }

  for (std::size_t i : remaining) out.remainder.rules.push_back(rs.rules[i]);

  for (ISet& iset : built) {
    double cov = total ? static_cast<double>(iset.rules.size()) / static_cast<double>(total) : 0.0;
    if (cov < min_coverage) {
      for (const Rule& r : iset.rules) out.remainder.rules.push_back(r);
    } else {
      out.coverage_per_iset.push_back(cov);
      out.isets.push_back(std::move(iset));
    }
  }
  return out;
}

std::vector<std::optional<double>> diversity(const RuleSet& rs) {
  std::vector<std::optional<double>> out(rs.field_count());
  if (rs.rules.empty()) return out;
  for (std::size_t f = 0; f < rs.field_count(); ++f) {
    bool exact = true;
    std::set<FieldValue> unique;
    for (const Rule& r : rs.rules) {
      if (!r.fields[f].is_exact()) {
        exact = false;
        break;
      }
      unique.insert(r.fields[f].lo);
    }
    if (exact) {
      out[f] = static_cast<double>(unique.size()) / static_cast<double>(rs.rules.size());
    }
  }
  return out;
}

namespace {

// Max number of boxes sharing a point. A maximal stabbing point can be pushed
// to some box's lower corner in each dimension, so candidates per dimension
// are the active boxes' lower bounds.
void max_stab(const std::vector<const Rule*>& boxes, std::size_t dim, std::size_t field_count,
              std::size_t& best) {
  if (boxes.size() <= best) return;
  if (dim == field_count) {
    best = boxes.size();
    return;
  }
  std::vector<FieldValue> candidates;
  candidates.reserve(boxes.size());
  for (const Rule* r : boxes) candidates.push_back(r->fields[dim].lo);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  for (FieldValue c : candidates) {
    std::vector<const Rule*> active;
    for (const Rule* r : boxes) {
      if (r->fields[dim].contains(c)) active.push_back(r);
    }
    max_stab(active, dim + 1, field_count, best);
  }
}

}  // namespace

CentralityEstimate centrality(const RuleSet& rs) {
  if (rs.rules.empty()) return {0, true};

  if (rs.rules.size() <= 1000) {
    std::vector<const Rule*> boxes;
    boxes.reserve(rs.rules.size());
    for (const Rule& r : rs.rules) boxes.push_back(&r);
    std::size_t best = 0;
    max_stab(boxes, 0, rs.field_count(), best);
    return {best, true};
  }

  // Greedy lower bound: stab at each rule's lower corner.
  std::size_t best = 0;
  for (const Rule& a : rs.rules) {
    std::size_t count = 0;
    for (const Rule& b : rs.rules) {
      bool inside = true;
      for (std::size_t f = 0; f < rs.field_count(); ++f) {
        if (!b.fields[f].contains(a.fields[f].lo)) {
          inside = false;
          break;
        }
      }
      if (inside) ++count;
    }
    best = std::max(best, count);
  }
  return {best, false};
}

std::vector<rqrmi::RangeValuePair> build_iset_pairs(const ISet& iset, unsigned width_bits) {
  if (width_bits > 32) throw Error("build_iset_pairs: field wider than 32 bits");
  std::vector<rqrmi::RangeValuePair> pairs;
  pairs.reserve(iset.rules.size());
  for (std::size_t i = 0; i < iset.rules.size(); ++i) {
    const FieldRange& fr = iset.rules[i].fields[iset.field_index];
    if (i > 0) {
      const FieldRange& prev = iset.rules[i - 1].fields[iset.field_index];
      if (prev.hi >= fr.lo) throw Error("build_iset_pairs: rules overlap on chosen field");
    }
    double lo = scale_value(fr.lo, width_bits);
    double hi = scale_value(fr.hi, width_bits) + scale_value(1, width_bits);
    pairs.push_back(rqrmi::RangeValuePair{lo, hi, static_cast<std::uint32_t>(i)});
  }
  return pairs;
}

std::string partition_report_csv(const PartitionResult& pr) {
  std::ostringstream os;
  os << "iset_index,field,rule_count,coverage\n";
  for (std::size_t i = 0; i < pr.isets.size(); ++i) {
    os << i << ',' << pr.isets[i].field_index << ',' << pr.isets[i].rules.size() << ','
       << pr.coverage_per_iset[i] << '\n';
  }
  return os.str();
}

}  // namespace rqmatch::isets
