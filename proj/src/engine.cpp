#include "rqmatch/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "rqmatch/rng.hpp"

namespace rqmatch::engine {

namespace {

double now_ns() {
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                 std::chrono::steady_clock::now().time_since_epoch())
                                 .count());
}

void check_rule_schema(const Rule& r, const std::vector<std::uint8_t>& schema) {
  if (r.fields.size() != schema.size()) throw Error("rule field count does not match schema");
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const FieldRange& fr = r.fields[f];
    if (fr.width_bits != schema[f] || fr.lo > fr.hi || fr.hi > field_max(schema[f]))
      throw Error("rule range violates schema");
  }
}

}  // namespace

std::vector<SubField> split_schema(const std::vector<std::uint8_t>& schema) {
  std::vector<SubField> out;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    unsigned w = schema[f];
    if (w <= 32) {
      out.push_back(SubField{f, 0, static_cast<std::uint8_t>(w)});
      continue;
    }
    unsigned first = ((w - 1) % 32) + 1;
    unsigned shift = w - first;
    out.push_back(SubField{f, shift, static_cast<std::uint8_t>(first)});
    while (shift > 0) {
      shift -= 32;
      out.push_back(SubField{f, shift, 32});
    }
  }
  return out;
}

FieldValue sub_value(const PacketHeader& pkt, const SubField& sf) {
  return (pkt.values[sf.source_field] >> sf.shift) & field_max(sf.width_bits);
}

FieldRange sub_range(const FieldRange& src, const SubField& sf) {
  unsigned upper = sf.shift + sf.width_bits;
  bool exact = upper >= src.width_bits || (src.lo >> upper) == (src.hi >> upper);
  if (!exact) return FieldRange::wildcard(sf.width_bits);
  FieldValue m = field_max(sf.width_bits);
  return FieldRange{(src.lo >> sf.shift) & m, (src.hi >> sf.shift) & m, sf.width_bits};
}

double expected_unmodified(double rules, double updates) {
  if (rules <= 0.0) return 0.0;
  return rules * std::exp(-updates / rules);
}

std::size_t BuiltISet::live_count() const {
  std::size_t n = 0;
  for (std::uint8_t t : tombstone) n += t == 0;
  return n;
}

void BatchStats::merge(const BatchStats& o) {
  phases.inference_ns += o.phases.inference_ns;
  phases.search_ns += o.phases.search_ns;
  phases.validation_ns += o.phases.validation_ns;
  phases.remainder_ns += o.phases.remainder_ns;
  busy_ns += o.busy_ns;
  remainder_tables_probed += o.remainder_tables_probed;
  remainder_lookups += o.remainder_lookups;
}

std::optional<std::size_t> secondary_search(const BuiltISet& iset, std::uint32_t predicted,
                                            std::uint32_t eps, std::uint32_t key) {
  std::size_t n = iset.lo.size();
  if (n == 0) return std::nullopt;
  std::size_t a = predicted > eps ? predicted - eps : 0;
  if (a >= n) a = n - 1;
  std::size_t b = std::min(static_cast<std::size_t>(predicted) + eps, n - 1);

  auto first = iset.lo.begin() + static_cast<std::ptrdiff_t>(a);
  auto last = iset.lo.begin() + static_cast<std::ptrdiff_t>(b + 1);
  auto it = std::upper_bound(first, last, key);
  if (it == first) return std::nullopt;
  std::size_t pos = static_cast<std::size_t>(std::distance(iset.lo.begin(), it)) - 1;
  if (iset.hi[pos] < key) return std::nullopt;
  return pos;
}

ClassifierPipeline ClassifierPipeline::build(const RuleSet& rs, const EngineConfig& cfg) {
  rs.validate();
  if (rs.empty()) throw Error("build: empty rule-set");

  ClassifierPipeline p;
  p.cfg_ = cfg;
  p.schema_ = rs.field_schema;
  p.sub_schema_ = split_schema(rs.field_schema);

  p.master_.reserve(rs.rules.size());
  for (const Rule& r : rs.rules) {
    p.id_index_.emplace(r.id, p.master_.size());
    p.master_.push_back(StoredRule{r, false, false, -1, 0});
  }

  RuleSet view;
  for (const SubField& sf : p.sub_schema_) view.field_schema.push_back(sf.width_bits);
  view.rules.reserve(rs.rules.size());
  for (const Rule& r : rs.rules) {
    Rule v;
    v.id = r.id;
    v.priority = r.priority;
    v.action = r.action;
    v.fields.reserve(p.sub_schema_.size());
    for (const SubField& sf : p.sub_schema_) v.fields.push_back(sub_range(r.fields[sf.source_field], sf));
    view.rules.push_back(std::move(v));
  }

  isets::PartitionResult part = isets::partition(view, cfg.max_isets, cfg.min_coverage);

  Rng root(cfg.seed);
  std::vector<RuleId> spill;
  for (std::size_t k = 0; k < part.isets.size(); ++k) {
    isets::ISet& iset = part.isets[k];
    try {
      std::vector<rqrmi::RangeValuePair> pairs =
          isets::build_iset_pairs(iset, view.field_schema[iset.field_index]);
      rqrmi::StageSpec spec = rqrmi::StageSpec::for_size(pairs.size());
      std::uint64_t seed = root.fork(0x49534554ull + k).next_u64();
      rqrmi::RQRMIModel model = rqrmi::train_model(pairs, spec, cfg.training, seed);

      BuiltISet b;
      b.sub_field = iset.field_index;
      b.model = std::move(model);
      b.coverage = part.coverage_per_iset[k];
      b.members.reserve(iset.rules.size());
      for (std::size_t i = 0; i < iset.rules.size(); ++i) {
        const Rule& r = iset.rules[i];
        std::size_t idx = p.id_index_.at(r.id);
        p.master_[idx].iset = static_cast<std::int32_t>(p.isets_.size());
        p.master_[idx].pos = i;
        b.members.push_back(idx);
        b.lo.push_back(static_cast<std::uint32_t>(r.fields[iset.field_index].lo));
        b.hi.push_back(static_cast<std::uint32_t>(r.fields[iset.field_index].hi));
      }
      b.tombstone.assign(iset.rules.size(), 0);
      p.isets_.push_back(std::move(b));
    } catch (const Error& e) {
      p.warnings_.push_back("iset " + std::to_string(k) + " dissolved into remainder: " + e.what());
      for (const Rule& r : iset.rules) spill.push_back(r.id);
    }
  }
  for (const Rule& r : part.remainder.rules) spill.push_back(r.id);

  p.remainder_ = remainder::make_remainder(cfg.remainder_kind);
  std::vector<std::size_t> spill_idx;
  spill_idx.reserve(spill.size());
  for (RuleId id : spill) spill_idx.push_back(p.id_index_.at(id));
  std::sort(spill_idx.begin(), spill_idx.end());
  for (std::size_t idx : spill_idx) {
    p.master_[idx].in_remainder = true;
    p.remainder_->insert(p.master_[idx].rule);
  }

  p.post_build_remainder_fraction_ =
      static_cast<double>(p.remainder_->size()) / static_cast<double>(p.master_.size());
  return p;
}

MatchResult ClassifierPipeline::resolve(RuleId id) const {
  const StoredRule& sr = master_[id_index_.at(id)];
  return MatchResult{true, sr.rule.id, sr.rule.priority, sr.rule.action};
}

void ClassifierPipeline::classify_chunk(std::span<const PacketHeader> pkts,
                                        std::span<MatchResult> out, BatchStats* stats) const {
  const std::size_t m = isets_.size();
  const std::size_t n = pkts.size();
  for (const PacketHeader& pkt : pkts) {
    if (pkt.values.size() != schema_.size()) throw Error("classify: packet field count mismatch");
  }

  double t0 = now_ns();

  std::vector<std::uint32_t> keys(n * m);
  std::vector<std::uint32_t> preds(n * m);
  for (std::size_t k = 0; k < m; ++k) {
    const BuiltISet& s = isets_[k];
    const SubField& sf = sub_schema_[s.sub_field];
    for (std::size_t i = 0; i < n; ++i) {
      FieldValue v = sub_value(pkts[i], sf);
      keys[i * m + k] = static_cast<std::uint32_t>(v);
      preds[i * m + k] = rqrmi::infer_model(s.model, isets::scale_value(v, sf.width_bits));
    }
  }

  double t1 = now_ns();

  std::vector<std::int64_t> cand(n * m, -1);
  for (std::size_t k = 0; k < m; ++k) {
    const BuiltISet& s = isets_[k];
    for (std::size_t i = 0; i < n; ++i) {
      auto pos = secondary_search(s, preds[i * m + k], s.model.epsilon, keys[i * m + k]);
      if (pos) cand[i * m + k] = static_cast<std::int64_t>(*pos);
    }
  }

  double t2 = now_ns();

  std::vector<MatchResult> best(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      std::int64_t pos = cand[i * m + k];
      if (pos < 0) continue;
      const BuiltISet& s = isets_[k];
      if (s.tombstone[static_cast<std::size_t>(pos)]) continue;
      const StoredRule& sr = master_[s.members[static_cast<std::size_t>(pos)]];
      if (!rule_matches(sr.rule, pkts[i])) continue;
      MatchResult r = MatchResult::of(sr.rule);
      if (better_match(r, best[i])) best[i] = r;
    }
  }

  double t3 = now_ns();

  BatchStats local;
  for (std::size_t i = 0; i < n; ++i) {
    remainder::LookupStats ls;
    MatchResult rem;
    if (cfg_.mode == ExecutionMode::SerialEarlyTermination) {
      remainder::MatchFloor floor = best[i].matched ? remainder::MatchFloor::of(best[i])
                                                    : remainder::MatchFloor::none();
      rem = remainder_->lookup_with_floor(pkts[i], floor, &ls);
    } else {
      rem = remainder_->lookup(pkts[i], &ls);
    }
    local.remainder_lookups += 1;
    local.remainder_tables_probed += ls.tables_probed;

    MatchResult winner = better_match(rem, best[i]) ? rem : best[i];
    out[i] = winner.matched ? resolve(winner.rule_id) : MatchResult::none();
  }

  double t4 = now_ns();

  if (stats) {
    local.phases.inference_ns = t1 - t0;
    local.phases.search_ns = t2 - t1;
    local.phases.validation_ns = t3 - t2;
    local.phases.remainder_ns = t4 - t3;
    local.busy_ns = t4 - t0;
    stats->merge(local);
  }
}

void ClassifierPipeline::classify_batch(std::span<const PacketHeader> pkts,
                                        std::span<MatchResult> out, BatchStats* stats) const {
  if (pkts.size() != out.size()) throw Error("classify_batch: output size mismatch");
  if (pkts.empty()) return;

  std::size_t nthreads = std::max<std::size_t>(1, cfg_.threads);
  nthreads = std::min(nthreads, (pkts.size() + 63) / 64);
  if (nthreads <= 1) {
    classify_chunk(pkts, out, stats);
    return;
  }

  std::vector<BatchStats> per(nthreads);
  std::vector<std::exception_ptr> errors(nthreads);
  std::vector<std::thread> workers;
  std::size_t chunk = (pkts.size() + nthreads - 1) / nthreads;
  for (std::size_t t = 0; t < nthreads; ++t) {
    std::size_t a = t * chunk;
    std::size_t b = std::min(pkts.size(), a + chunk);
    if (a >= b) break;
    workers.emplace_back([&, t, a, b] {
      try {
        classify_chunk(pkts.subspan(a, b - a), out.subspan(a, b - a), &per[t]);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (std::thread& w : workers) w.join();
  for (std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (stats) {
    for (const BatchStats& s : per) stats->merge(s);
  }
}

std::vector<MatchResult> ClassifierPipeline::classify_batch(const std::vector<PacketHeader>& pkts,
                                                            BatchStats* stats) const {
  std::vector<MatchResult> out(pkts.size());
  classify_batch(std::span<const PacketHeader>(pkts), std::span<MatchResult>(out), stats);
  return out;
}

MatchResult ClassifierPipeline::classify(const PacketHeader& pkt) const {
  MatchResult r;
  classify_batch(std::span<const PacketHeader>(&pkt, 1), std::span<MatchResult>(&r, 1), nullptr);
  return r;
}

std::size_t ClassifierPipeline::find_live(RuleId id) const {
  auto it = id_index_.find(id);
  if (it == id_index_.end() || master_[it->second].deleted)
    throw Error("update: rule id " + std::to_string(id) + " not found");
  return it->second;
}

void ClassifierPipeline::apply_update(const Update& u) {
  switch (u.kind) {
    case UpdateKind::ActionChange: {
      master_[find_live(u.id)].rule.action = u.action;
      return;
    }
    case UpdateKind::Delete: {
      StoredRule& sr = master_[find_live(u.id)];
      if (sr.iset >= 0) isets_[static_cast<std::size_t>(sr.iset)].tombstone[sr.pos] = 1;
      if (sr.in_remainder) remainder_->remove(u.id);
      sr.deleted = true;
      sr.in_remainder = false;
      sr.iset = -1;
      return;
    }
    case UpdateKind::MatchingSetChange: {
      if (u.rule.id != u.id) throw Error("update: matching-set change must keep the rule id");
      check_rule_schema(u.rule, schema_);
      StoredRule& sr = master_[find_live(u.id)];
      if (sr.iset >= 0) {
        isets_[static_cast<std::size_t>(sr.iset)].tombstone[sr.pos] = 1;
        sr.iset = -1;
      }
      if (sr.in_remainder) remainder_->remove(u.id);
      sr.rule = u.rule;
      sr.in_remainder = true;
      remainder_->insert(sr.rule);
      ++update_counter_;
      return;
    }
    case UpdateKind::Add: {
      check_rule_schema(u.rule, schema_);
      auto it = id_index_.find(u.id);
      if (it != id_index_.end()) {
        StoredRule& sr = master_[it->second];
        if (!sr.deleted) throw Error("update: rule id already exists");
        sr.rule = u.rule;
        sr.deleted = false;
        sr.in_remainder = true;
        sr.iset = -1;
        remainder_->insert(sr.rule);
      } else {
        id_index_.emplace(u.id, master_.size());
        master_.push_back(StoredRule{u.rule, false, true, -1, 0});
        remainder_->insert(u.rule);
      }
      ++update_counter_;
      return;
    }
  }
  throw Error("update: unknown kind");
}

std::size_t ClassifierPipeline::live_rule_count() const {
  std::size_t n = 0;
  for (const StoredRule& sr : master_) n += !sr.deleted;
  return n;
}

double ClassifierPipeline::remainder_fraction() const {
  std::size_t live = live_rule_count();
  if (live == 0) return 0.0;
  return static_cast<double>(remainder_->size()) / static_cast<double>(live);
}

bool ClassifierPipeline::should_retrain(const UpdatePolicy& policy) const {
  double frac = remainder_fraction();
  if (frac >= policy.absolute_threshold) return true;
  double base = post_build_remainder_fraction_;
  return base > 0.0 && frac >= policy.growth_factor * base;
}

std::size_t ClassifierPipeline::model_bytes() const {
  std::size_t n = 0;
  for (const BuiltISet& s : isets_) n += s.model.weight_bytes();
  return n;
}

RuleSet ClassifierPipeline::live_rules() const {
  RuleSet rs;
  rs.field_schema = schema_;
  for (const StoredRule& sr : master_) {
    if (!sr.deleted) rs.rules.push_back(sr.rule);
  }
  return rs;
}

ClassifierPipeline::Snapshot ClassifierPipeline::snapshot() const {
  Snapshot s;
  s.cfg = cfg_;
  s.schema = schema_;
  s.master = master_;
  s.isets = isets_;
  s.post_build_remainder_fraction = post_build_remainder_fraction_;
  s.update_counter = update_counter_;
  return s;
}

void ClassifierPipeline::rebuild_remainder_from_master() {
  remainder_ = remainder::make_remainder(cfg_.remainder_kind);
  for (const StoredRule& sr : master_) {
    if (!sr.deleted && sr.in_remainder) remainder_->insert(sr.rule);
  }
}

ClassifierPipeline ClassifierPipeline::from_snapshot(Snapshot s) {
  ClassifierPipeline p;
  p.cfg_ = s.cfg;
  p.schema_ = std::move(s.schema);
  p.sub_schema_ = split_schema(p.schema_);
  p.master_ = std::move(s.master);
  p.isets_ = std::move(s.isets);
  p.post_build_remainder_fraction_ = s.post_build_remainder_fraction;
  p.update_counter_ = s.update_counter;
  for (std::size_t i = 0; i < p.master_.size(); ++i) p.id_index_.emplace(p.master_[i].rule.id, i);
  p.rebuild_remainder_from_master();
  return p;
}

}  // namespace rqmatch::engine
