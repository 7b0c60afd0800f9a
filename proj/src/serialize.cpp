#include "rqmatch/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"

namespace rqmatch::serialize {

using namespace detail;

void write_model(std::ostream& out, const rqrmi::RQRMIModel& model) {
  put_magic(out, "RQMI");
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(model.spec.stages()));
  for (std::uint32_t w : model.spec.widths) put_u32(out, w);
  put_u32(out, model.pair_count());
  put_u32(out, model.epsilon);
  for (const auto& stage : model.stages) {
    for (const rqrmi::Submodel& m : stage) {
      for (int k = 0; k < rqrmi::kHiddenWidth; ++k) put_f32(out, m.w1[k]);
      for (int k = 0; k < rqrmi::kHiddenWidth; ++k) put_f32(out, m.b1[k]);
      for (int k = 0; k < rqrmi::kHiddenWidth; ++k) put_f32(out, m.w2[k]);
      put_f32(out, m.b2);
    }
  }
  for (const rqrmi::RangeValuePair& p : model.pairs) {
    put_f32(out, static_cast<float>(p.lo));
    put_f32(out, static_cast<float>(p.hi));
    put_u32(out, p.value);
  }
}

rqrmi::RQRMIModel read_model(std::istream& in) {
  expect_magic(in, "RQMI", "model");
  if (get_u32(in) != 1) throw Error("model: unsupported version");
  rqrmi::RQRMIModel model;
  std::uint32_t nstages = get_u32(in);
  model.spec.widths.resize(nstages);
  for (std::uint32_t i = 0; i < nstages; ++i) model.spec.widths[i] = get_u32(in);
  std::uint32_t npairs = get_u32(in);
  model.epsilon = get_u32(in);
  model.stages.resize(nstages);
  for (std::uint32_t i = 0; i < nstages; ++i) {
    model.stages[i].resize(model.spec.widths[i]);
    for (rqrmi::Submodel& m : model.stages[i]) {
      for (int k = 0; k < rqrmi::kHiddenWidth; ++k) m.w1[k] = get_f32(in);
      for (int k = 0; k < rqrmi::kHiddenWidth; ++k) m.b1[k] = get_f32(in);
      for (int k = 0; k < rqrmi::kHiddenWidth; ++k) m.w2[k] = get_f32(in);
      m.b2 = get_f32(in);
    }
  }
  model.pairs.resize(npairs);
  for (std::uint32_t i = 0; i < npairs; ++i) {
    model.pairs[i].lo = get_f32(in);
    model.pairs[i].hi = get_f32(in);
    model.pairs[i].value = get_u32(in);
  }
  return model;
}

std::string model_json(const rqrmi::RQRMIModel& model) {
  nlohmann::json j;
  j["stage_widths"] = model.spec.widths;
  j["pair_count"] = model.pair_count();
  j["epsilon"] = model.epsilon;
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& stage : model.stages) {
    nlohmann::json s = nlohmann::json::array();
    for (const rqrmi::Submodel& m : stage) {
      nlohmann::json sub;
      for (int k = 0; k < rqrmi::kHiddenWidth; ++k) {
        sub["w1"].push_back(m.w1[k]);
        sub["b1"].push_back(m.b1[k]);
        sub["w2"].push_back(m.w2[k]);
      }
      sub["b2"] = m.b2;
      s.push_back(std::move(sub));
    }
    stages.push_back(std::move(s));
  }
  j["stages"] = std::move(stages);
  nlohmann::json pairs = nlohmann::json::array();
  for (const rqrmi::RangeValuePair& p : model.pairs) {
    pairs.push_back({p.lo, p.hi, p.value});
  }
  j["pairs"] = std::move(pairs);
  return j.dump(2);
}

namespace {

void write_rule(std::ostream& out, const Rule& r) {
  put_u32(out, r.id);
  put_i32(out, r.priority);
  put_u32(out, r.action);
  put_u32(out, static_cast<std::uint32_t>(r.fields.size()));
  for (const FieldRange& f : r.fields) {
    put_u8(out, f.width_bits);
    put_u128(out, f.lo);
    put_u128(out, f.hi);
  }
}

Rule read_rule(std::istream& in) {
  Rule r;
  r.id = get_u32(in);
  r.priority = get_i32(in);
  r.action = get_u32(in);
  std::uint32_t n = get_u32(in);
  r.fields.resize(n);
  for (FieldRange& f : r.fields) {
    f.width_bits = get_u8(in);
    f.lo = get_u128(in);
    f.hi = get_u128(in);
  }
  return r;
}

}  // namespace

void write_pipeline(std::ostream& out, const engine::ClassifierPipeline& pipeline) {
  engine::ClassifierPipeline::Snapshot s = pipeline.snapshot();

  put_magic(out, "RQPB");
  put_u32(out, 1);

  put_u64(out, s.cfg.seed);
  put_u64(out, s.cfg.max_isets);
  put_f64(out, s.cfg.min_coverage);
  put_u32(out, s.cfg.training.error_threshold);
  put_u32(out, s.cfg.training.initial_samples_per_submodel);
  put_u32(out, s.cfg.training.max_retrain_attempts);
  put_f64(out, s.cfg.training.learning_rate);
  put_u32(out, s.cfg.training.batch_size);
  put_u32(out, s.cfg.training.epochs);
  put_u8(out, s.cfg.remainder_kind == remainder::RemainderKind::TupleSpace ? 0 : 1);
  put_u8(out, s.cfg.mode == engine::ExecutionMode::SerialEarlyTermination ? 0 : 1);
  put_u64(out, s.cfg.batch_size);
  put_u64(out, s.cfg.threads);

  put_u32(out, static_cast<std::uint32_t>(s.schema.size()));
  for (std::uint8_t w : s.schema) put_u8(out, w);

  put_u64(out, s.master.size());
  for (const auto& sr : s.master) {
    write_rule(out, sr.rule);
    put_u8(out, static_cast<std::uint8_t>((sr.deleted ? 1 : 0) | (sr.in_remainder ? 2 : 0)));
    put_i32(out, sr.iset);
    put_u64(out, sr.pos);
  }

  put_u32(out, static_cast<std::uint32_t>(s.isets.size()));
  for (const engine::BuiltISet& b : s.isets) {
    put_u64(out, b.sub_field);
    put_f64(out, b.coverage);
    write_model(out, b.model);
    put_u64(out, b.members.size());
    for (std::size_t i = 0; i < b.members.size(); ++i) {
      put_u64(out, b.members[i]);
      put_u32(out, b.lo[i]);
      put_u32(out, b.hi[i]);
      put_u8(out, b.tombstone[i]);
    }
  }

  put_f64(out, s.post_build_remainder_fraction);
  put_u64(out, s.update_counter);
}

engine::ClassifierPipeline read_pipeline(std::istream& in) {
  expect_magic(in, "RQPB", "pipeline bundle");
  if (get_u32(in) != 1) throw Error("pipeline bundle: unsupported version");

  engine::ClassifierPipeline::Snapshot s;
  s.cfg.seed = get_u64(in);
  s.cfg.max_isets = get_u64(in);
  s.cfg.min_coverage = get_f64(in);
  s.cfg.training.error_threshold = get_u32(in);
  s.cfg.training.initial_samples_per_submodel = get_u32(in);
  s.cfg.training.max_retrain_attempts = get_u32(in);
  s.cfg.training.learning_rate = get_f64(in);
  s.cfg.training.batch_size = get_u32(in);
  s.cfg.training.epochs = get_u32(in);
  s.cfg.remainder_kind =
      get_u8(in) == 0 ? remainder::RemainderKind::TupleSpace : remainder::RemainderKind::LinearScan;
  s.cfg.mode = get_u8(in) == 0 ? engine::ExecutionMode::SerialEarlyTermination
                               : engine::ExecutionMode::Parallel;
  s.cfg.batch_size = get_u64(in);
  s.cfg.threads = get_u64(in);

  std::uint32_t nfields = get_u32(in);
  s.schema.resize(nfields);
  for (std::uint32_t f = 0; f < nfields; ++f) s.schema[f] = get_u8(in);

  std::uint64_t nrules = get_u64(in);
  s.master.reserve(nrules);
  for (std::uint64_t i = 0; i < nrules; ++i) {
    engine::ClassifierPipeline::StoredRule sr;
    sr.rule = read_rule(in);
    std::uint8_t flags = get_u8(in);
    sr.deleted = flags & 1;
    sr.in_remainder = flags & 2;
    sr.iset = get_i32(in);
    sr.pos = get_u64(in);
    s.master.push_back(std::move(sr));
  }

  std::uint32_t nisets = get_u32(in);
  s.isets.reserve(nisets);
  for (std::uint32_t k = 0; k < nisets; ++k) {
    engine::BuiltISet b;
    b.sub_field = get_u64(in);
    b.coverage = get_f64(in);
    b.model = read_model(in);
    std::uint64_t nmembers = get_u64(in);
    if (b.model.pairs.size() != nmembers) throw Error("pipeline bundle: model/member mismatch");
    b.members.resize(nmembers);
    b.lo.resize(nmembers);
    b.hi.resize(nmembers);
    b.tombstone.resize(nmembers);
    for (std::uint64_t i = 0; i < nmembers; ++i) {
      b.members[i] = get_u64(in);
      b.lo[i] = get_u32(in);
      b.hi[i] = get_u32(in);
      b.tombstone[i] = get_u8(in);
    }
    // The model file keeps pair bounds in float32; rebuild them exactly from
    // the packed integer bounds so the error bound keeps its meaning.
    std::vector<engine::SubField> subs = engine::split_schema(s.schema);
    unsigned width = subs[b.sub_field].width_bits;
    for (std::uint64_t i = 0; i < nmembers; ++i) {
      b.model.pairs[i].lo = isets::scale_value(b.lo[i], width);
      b.model.pairs[i].hi = isets::scale_value(b.hi[i], width) + isets::scale_value(1, width);
      b.model.pairs[i].value = static_cast<std::uint32_t>(i);
    }
    s.isets.push_back(std::move(b));
  }

  s.post_build_remainder_fraction = get_f64(in);
  s.update_counter = get_u64(in);

  return engine::ClassifierPipeline::from_snapshot(std::move(s));
}

void save_pipeline(const std::string& path, const engine::ClassifierPipeline& pipeline) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open bundle for writing: " + path);
  write_pipeline(out, pipeline);
}

engine::ClassifierPipeline load_pipeline(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open bundle: " + path);
  return read_pipeline(in);
}

}  // namespace rqmatch::serialize
