#include "rqmatch/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "binary_io.hpp"
#include "rqmatch/rng.hpp"

namespace rqmatch::io {

namespace {

constexpr std::uint8_t kFiveTuple[5] = {32, 32, 16, 16, 8};

FieldRange parse_ip_prefix(const std::string& tok, std::size_t line) {
  unsigned a, b, c, d, plen;
  if (std::sscanf(tok.c_str(), "%u.%u.%u.%u/%u", &a, &b, &c, &d, &plen) != 5 || a > 255 ||
      b > 255 || c > 255 || d > 255 || plen > 32) {
    throw Error("line " + std::to_string(line) + ": bad address prefix '" + tok + "'");
  }
  FieldValue base = (FieldValue{a} << 24) | (b << 16) | (c << 8) | d;
  return FieldRange::from_prefix(base, plen, 32);
}

std::uint32_t parse_port(const std::string& tok, std::size_t line) {
  for (char ch : tok) {
    if (ch < '0' || ch > '9')
      throw Error("line " + std::to_string(line) + ": bad port '" + tok + "'");
  }
  unsigned long v = std::stoul(tok);
  if (v > 65535) throw Error("line " + std::to_string(line) + ": port out of range");
  return static_cast<std::uint32_t>(v);
}

FieldRange parse_proto(const std::string& tok, std::size_t line) {
  unsigned value, mask;
  if (std::sscanf(tok.c_str(), "0x%x/0x%x", &value, &mask) != 2 || value > 255 || mask > 255) {
    throw Error("line " + std::to_string(line) + ": bad protocol '" + tok + "'");
  }
  if (mask == 0) return FieldRange::wildcard(8);
  if ((mask | (mask - 1)) != 0xFF)
    throw Error("line " + std::to_string(line) + ": non-prefix protocol mask");
  unsigned plen = static_cast<unsigned>(std::popcount(mask));
  return FieldRange::from_prefix(value, plen, 8);
}

// Prefix length for an aligned power-of-two range; throws otherwise.
unsigned prefix_len_of(const FieldRange& r, unsigned width) {
  FieldValue size = r.hi - r.lo + 1;
  if ((size & (size - 1)) != 0 || (r.lo & (size - 1)) != 0)
    throw Error("range is not prefix-representable");
  unsigned bits = 0;
  while ((FieldValue{1} << bits) < size) ++bits;
  return width - bits;
}

FieldValue uniform_in_range(Rng& rng, FieldValue lo, FieldValue hi) {
  FieldValue span = hi - lo;
  if (span == 0) return lo;
  FieldValue r = (FieldValue{rng.next_u64()} << 64) | rng.next_u64();
  if (span == ~FieldValue{0}) return r;
  return lo + (r % (span + 1));
}

PacketHeader random_packet_in(Rng& rng, const Rule& rule) {
  PacketHeader pkt;
  pkt.values.reserve(rule.fields.size());
  for (const FieldRange& f : rule.fields) pkt.values.push_back(uniform_in_range(rng, f.lo, f.hi));
  return pkt;
}

struct FlowSet {
  std::vector<PacketHeader> witnesses;
  std::vector<RuleId> ids;
  std::vector<std::size_t> rule_index;
};

// One verified header per reachable rule; rules whose random probes never win
// the linear scan are skipped.
FlowSet reachable_flows(const RuleSet& rs, Rng& rng) {
  FlowSet out;
  for (std::size_t i = 0; i < rs.rules.size(); ++i) {
    const Rule& r = rs.rules[i];
    for (int attempt = 0; attempt < 256; ++attempt) {
      PacketHeader pkt = random_packet_in(rng, r);
      if (linear_scan_classify(rs, pkt).rule_id == r.id) {
        out.witnesses.push_back(std::move(pkt));
        out.ids.push_back(r.id);
        out.rule_index.push_back(i);
        break;
      }
    }
  }
  return out;
}

}  // namespace

RuleSet parse_classbench(std::istream& in) {
  RuleSet rs;
  rs.field_schema.assign(std::begin(kFiveTuple), std::end(kFiveTuple));

  bool warned_extra = false;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    // Separate ':' so both "lo : hi" and "lo:hi" tokenize the same way.
    std::string line;
    line.reserve(raw.size() + 8);
    for (char ch : raw) {
      if (ch == ':') {
        line += " : ";
      } else {
        line += ch;
      }
    }
    std::istringstream ss(line);
    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    if (tok.empty()) continue;

    if (tok[0].empty() || tok[0][0] != '@')
      throw Error("line " + std::to_string(line_no) + ": expected '@' rule prefix");
    if (tok.size() < 9) throw Error("line " + std::to_string(line_no) + ": truncated rule");
    if (tok[3] != ":" || tok[6] != ":")
      throw Error("line " + std::to_string(line_no) + ": malformed port range");

    Rule r;
    r.id = static_cast<RuleId>(rs.rules.size());
    r.fields.resize(5);
    r.fields[0] = parse_ip_prefix(tok[0].substr(1), line_no);
    r.fields[1] = parse_ip_prefix(tok[1], line_no);
    std::uint32_t splo = parse_port(tok[2], line_no), sphi = parse_port(tok[4], line_no);
    std::uint32_t dplo = parse_port(tok[5], line_no), dphi = parse_port(tok[7], line_no);
    if (splo > sphi || dplo > dphi)
      throw Error("line " + std::to_string(line_no) + ": inverted port range");
    r.fields[2] = FieldRange{splo, sphi, 16};
    r.fields[3] = FieldRange{dplo, dphi, 16};
    r.fields[4] = parse_proto(tok[8], line_no);
    r.action = static_cast<std::uint32_t>(rs.rules.size());

    if (tok.size() > 9 && !warned_extra) {
      std::cerr << "warning: ignoring trailing columns from line " << line_no << " onward\n";
      warned_extra = true;
    }
    rs.rules.push_back(std::move(r));
  }

  // First line carries the highest priority.
  std::int32_t n = static_cast<std::int32_t>(rs.rules.size());
  for (std::int32_t i = 0; i < n; ++i) rs.rules[static_cast<std::size_t>(i)].priority = n - i;
  return rs;
}

RuleSet parse_classbench_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open rule file: " + path);
  return parse_classbench(in);
}

std::string serialize_classbench(const RuleSet& rs) {
  if (rs.field_schema.size() != 5) throw Error("serialize_classbench: five-field schema required");
  std::ostringstream os;
  for (const Rule& r : rs.rules) {
    const FieldRange& sip = r.fields[0];
    const FieldRange& dip = r.fields[1];
    unsigned sp = prefix_len_of(sip, 32), dp = prefix_len_of(dip, 32);
    unsigned pp = prefix_len_of(r.fields[4], 8);
    auto ip_str = [](FieldValue v) {
      std::uint32_t x = static_cast<std::uint32_t>(v);
      std::ostringstream s;
      s << (x >> 24) << '.' << ((x >> 16) & 0xFF) << '.' << ((x >> 8) & 0xFF) << '.' << (x & 0xFF);
      return s.str();
    };
    os << '@' << ip_str(sip.lo) << '/' << sp << '\t' << ip_str(dip.lo) << '/' << dp << '\t'
       << to_string(r.fields[2].lo) << " : " << to_string(r.fields[2].hi) << '\t'
       << to_string(r.fields[3].lo) << " : " << to_string(r.fields[3].hi) << '\t';
    unsigned mask = pp == 0 ? 0 : (0xFFu << (8 - pp)) & 0xFFu;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%02X/0x%02X",
                  static_cast<unsigned>(static_cast<std::uint64_t>(r.fields[4].lo)), mask);
    os << buf << '\n';
  }
  return os.str();
}

LabeledTrace gen_uniform_trace(const RuleSet& rs, std::size_t n, std::uint64_t seed) {
  LabeledTrace out;
  out.schema = rs.field_schema;
  if (n == 0) return out;
  if (rs.empty()) throw Error("gen_uniform_trace: empty rule-set");

  Rng rng(seed);
  FlowSet flows = reachable_flows(rs, rng);
  if (flows.ids.empty()) throw Error("gen_uniform_trace: no reachable rules");

  out.packets.reserve(n);
  out.expected.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pick = static_cast<std::size_t>(rng.below(flows.ids.size()));
    const Rule& rule = rs.rules[flows.rule_index[pick]];
    PacketHeader pkt;
    bool found = false;
    for (int attempt = 0; attempt < 16 && !found; ++attempt) {
      pkt = random_packet_in(rng, rule);
      found = linear_scan_classify(rs, pkt).rule_id == rule.id;
    }
    if (!found) pkt = flows.witnesses[pick];
    out.packets.push_back(std::move(pkt));
    out.expected.push_back(rule.id);
  }
  return out;
}

double solve_zipf_exponent(std::size_t flows, double top3_share) {
  if (flows <= 1) return 0.0;
  std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.03 * static_cast<double>(flows))));
  auto share = [&](double s) {
    double top = 0.0, total = 0.0;
    for (std::size_t i = 1; i <= flows; ++i) {
      double w = std::pow(static_cast<double>(i), -s);
      total += w;
      if (i <= m) top += w;
    }
    return top / total;
  };
  if (top3_share <= share(0.0) + 1e-12) return 0.0;
  double lo = 0.0, hi = 64.0;
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    if (share(mid) < top3_share) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

LabeledTrace gen_zipf_trace(const RuleSet& rs, std::size_t n, double top3_share,
                            std::uint64_t seed) {
  LabeledTrace out;
  out.schema = rs.field_schema;
  if (n == 0) return out;
  if (rs.empty()) throw Error("gen_zipf_trace: empty rule-set");
  if (top3_share <= 0.0 || top3_share > 1.0) throw Error("gen_zipf_trace: bad top-3% share");

  Rng rng(seed);
  FlowSet flows = reachable_flows(rs, rng);
  std::size_t k = flows.ids.size();
  if (k == 0) throw Error("gen_zipf_trace: no reachable rules");

  double s = solve_zipf_exponent(k, top3_share);
  std::vector<double> cum(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    total += std::pow(static_cast<double>(i + 1), -s);
    cum[i] = total;
  }

  out.packets.reserve(n);
  out.expected.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform() * total;
    std::size_t pick =
        static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (pick >= k) pick = k - 1;
    out.packets.push_back(flows.witnesses[pick]);
    out.expected.push_back(flows.ids[pick]);
  }
  return out;
}

void write_trace(std::ostream& out, const LabeledTrace& trace) {
  using namespace detail;
  put_magic(out, "RQTR");
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(trace.schema.size()));
  for (std::uint8_t w : trace.schema) put_u8(out, w);
  put_u64(out, trace.packets.size());

  std::vector<engine::SubField> subs = engine::split_schema(trace.schema);
  for (std::size_t i = 0; i < trace.packets.size(); ++i) {
    for (const engine::SubField& sf : subs) {
      put_u32(out, static_cast<std::uint32_t>(engine::sub_value(trace.packets[i], sf)));
    }
    put_u32(out, trace.expected[i]);
  }
}

LabeledTrace read_trace(std::istream& in) {
  using namespace detail;
  expect_magic(in, "RQTR", "trace");
  if (get_u32(in) != 1) throw Error("trace: unsupported version");
  std::uint32_t nfields = get_u32(in);
  LabeledTrace out;
  out.schema.resize(nfields);
  for (std::uint32_t f = 0; f < nfields; ++f) out.schema[f] = get_u8(in);
  std::uint64_t count = get_u64(in);

  std::vector<engine::SubField> subs = engine::split_schema(out.schema);
  out.packets.reserve(count);
  out.expected.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    PacketHeader pkt;
    pkt.values.assign(nfields, 0);
    for (const engine::SubField& sf : subs) {
      FieldValue part = get_u32(in);
      pkt.values[sf.source_field] |= part << sf.shift;
    }
    out.packets.push_back(std::move(pkt));
    out.expected.push_back(get_u32(in));
  }
  return out;
}

void write_trace_file(const std::string& path, const LabeledTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open trace file for writing: " + path);
  write_trace(out, trace);
}

LabeledTrace read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open trace file: " + path);
  return read_trace(in);
}

std::string trace_to_csv(const LabeledTrace& trace) {
  std::ostringstream os;
  for (std::size_t f = 0; f < trace.schema.size(); ++f) os << "field_" << f << ',';
  os << "expected_rule_id\n";
  for (std::size_t i = 0; i < trace.packets.size(); ++i) {
    for (FieldValue v : trace.packets[i].values) os << to_string(v) << ',';
    os << trace.expected[i] << '\n';
  }
  return os.str();
}

}  // namespace rqmatch::io
