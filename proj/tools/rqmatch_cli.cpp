#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include "rqmatch/engine.hpp"
#include "rqmatch/io.hpp"
#include "rqmatch/isets.hpp"
#include "rqmatch/serialize.hpp"

using namespace rqmatch;

namespace {

std::size_t default_threads() {
  if (const char* env = std::getenv("RQMATCH_THREADS")) {
    long v = std::atol(env);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

engine::ExecutionMode parse_mode(const std::string& mode) {
  if (mode == "serial") return engine::ExecutionMode::SerialEarlyTermination;
  if (mode == "parallel") return engine::ExecutionMode::Parallel;
  throw Error("unknown mode: " + mode);
}

double now_ns() {
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                 std::chrono::steady_clock::now().time_since_epoch())
                                 .count());
}

void warn_duplicate_priorities(const RuleSet& rs) {
  std::map<std::int32_t, std::size_t> seen;
  std::size_t dupes = 0;
  for (const Rule& r : rs.rules) dupes += seen[r.priority]++ > 0;
  if (dupes > 0) {
    std::cout << "note: " << dupes
              << " rules share a priority with another rule; ties break to the lower id\n";
  }
}

int cmd_build(const std::string& ruleset_path, const std::string& out_path,
              engine::EngineConfig cfg) {
  RuleSet rs = io::parse_classbench_file(ruleset_path);
  std::cout << "rules: " << rs.rules.size() << "\n";

  engine::ClassifierPipeline p = engine::ClassifierPipeline::build(rs, cfg);
  for (const std::string& w : p.warnings()) std::cout << "warning: " << w << "\n";

  std::cout << "iset,field,rules,coverage,epsilon,weight_bytes\n";
  for (std::size_t k = 0; k < p.isets().size(); ++k) {
    const engine::BuiltISet& s = p.isets()[k];
    std::cout << k << ',' << p.sub_schema()[s.sub_field].source_field << ',' << s.members.size()
              << ',' << s.coverage << ',' << s.model.epsilon << ',' << s.model.weight_bytes()
              << "\n";
  }
  std::cout << "remainder_rules: " << p.remainder_size() << "\n";
  std::cout << "model_bytes_total: " << p.model_bytes() << "\n";

  serialize::save_pipeline(out_path, p);
  std::cout << "bundle: " << out_path << "\n";
  return 0;
}

int cmd_classify(const std::string& bundle, const std::string& trace_path,
                 const std::string& mode, std::size_t batch, std::size_t threads,
                 const std::string& out_csv) {
  engine::ClassifierPipeline p = serialize::load_pipeline(bundle);
  p.mutable_config().mode = parse_mode(mode);
  p.mutable_config().threads = threads;

  io::LabeledTrace trace = io::read_trace_file(trace_path);
  std::vector<MatchResult> results(trace.size());

  std::size_t mismatches = 0;
  engine::BatchStats stats;
  for (std::size_t start = 0; start < trace.size(); start += batch) {
    std::size_t len = std::min(batch, trace.size() - start);
    p.classify_batch(std::span<const PacketHeader>(trace.packets.data() + start, len),
                     std::span<MatchResult>(results.data() + start, len), &stats);
  }
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!results[i].matched || results[i].rule_id != trace.expected[i]) ++mismatches;
  }

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_csv.empty()) {
    file.open(out_csv);
    if (!file) throw Error("cannot open output file: " + out_csv);
    out = &file;
  }
  *out << "packet,expected,got,priority,action\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    *out << i << ',' << trace.expected[i] << ',';
    if (results[i].matched) {
      *out << results[i].rule_id << ',' << results[i].priority << ',' << results[i].action;
    } else {
      *out << "none,,";
    }
    *out << '\n';
  }

  std::cout << "packets: " << trace.size() << "\n";
  std::cout << "mismatches: " << mismatches << "\n";
  return mismatches == 0 ? 0 : 1;
}

int cmd_bench(const std::string& bundle, const std::string& trace_path, int repeat, int warmup,
              const std::string& mode, std::size_t batch, std::size_t threads,
              const std::string& out_csv) {
  engine::ClassifierPipeline p = serialize::load_pipeline(bundle);
  p.mutable_config().mode = parse_mode(mode);
  p.mutable_config().threads = threads;

  io::LabeledTrace trace = io::read_trace_file(trace_path);
  if (trace.size() == 0) throw Error("bench: empty trace");
  std::vector<MatchResult> results(trace.size());

  auto run_once = [&](engine::BatchStats* stats) {
    for (std::size_t start = 0; start < trace.size(); start += batch) {
      std::size_t len = std::min(batch, trace.size() - start);
      p.classify_batch(std::span<const PacketHeader>(trace.packets.data() + start, len),
                       std::span<MatchResult>(results.data() + start, len), stats);
    }
  };

  for (int w = 0; w < warmup; ++w) run_once(nullptr);

  std::ostringstream csv;
  csv << "run,packets,wall_ns,throughput_pps,mean_latency_ns,inference_ns,search_ns,"
         "validation_ns,remainder_ns,busy_ns,remainder_tables_probed\n";
  for (int r = 0; r < repeat; ++r) {
    engine::BatchStats stats;
    double t0 = now_ns();
    run_once(&stats);
    double wall = now_ns() - t0;
    double pps = static_cast<double>(trace.size()) / (wall * 1e-9);
    csv << r << ',' << trace.size() << ',' << wall << ',' << pps << ','
        << wall / static_cast<double>(trace.size()) << ',' << stats.phases.inference_ns << ','
        << stats.phases.search_ns << ',' << stats.phases.validation_ns << ','
        << stats.phases.remainder_ns << ',' << stats.busy_ns << ','
        << stats.remainder_tables_probed << '\n';
  }

  if (!out_csv.empty()) {
    std::ofstream file(out_csv);
    if (!file) throw Error("cannot open output file: " + out_csv);
    file << csv.str();
  }
  std::cout << csv.str();
  return 0;
}

int cmd_partition_report(const std::string& ruleset_path, std::size_t max_isets,
                         double min_coverage) {
  RuleSet rs = io::parse_classbench_file(ruleset_path);
  warn_duplicate_priorities(rs);

  std::cout << "isets,cumulative_coverage\n";
  double last = 0.0;
  for (std::size_t k = 1; k <= max_isets; ++k) {
    isets::PartitionResult pr = isets::partition(rs, k, min_coverage);
    double cum = 0.0;
    for (double c : pr.coverage_per_iset) cum += c;
    std::cout << k << ',' << cum << '\n';
    last = cum;
  }
  (void)last;

  std::cout << "field,diversity\n";
  auto div = isets::diversity(rs);
  for (std::size_t f = 0; f < div.size(); ++f) {
    std::cout << f << ',';
    if (div[f]) {
      std::cout << *div[f];
    } else {
      std::cout << "n/a";
    }
    std::cout << '\n';
  }

  isets::CentralityEstimate c = isets::centrality(rs);
  std::cout << "centrality," << c.value << (c.exact ? ",exact" : ",lower_bound") << "\n";
  return 0;
}

int cmd_inspect(const std::string& bundle, const std::string& trace_path, bool json) {
  engine::ClassifierPipeline p = serialize::load_pipeline(bundle);
  if (json) {
    std::cout << "[\n";
    for (std::size_t k = 0; k < p.isets().size(); ++k) {
      std::cout << serialize::model_json(p.isets()[k].model);
      std::cout << (k + 1 < p.isets().size() ? ",\n" : "\n");
    }
    std::cout << "]\n";
    return 0;
  }
  warn_duplicate_priorities(p.live_rules());

  std::cout << "iset,field,stage_widths,pairs,epsilon,weight_bytes,live_rules\n";
  for (std::size_t k = 0; k < p.isets().size(); ++k) {
    const engine::BuiltISet& s = p.isets()[k];
    std::cout << k << ',' << p.sub_schema()[s.sub_field].source_field << ',';
    for (std::size_t i = 0; i < s.model.spec.widths.size(); ++i) {
      std::cout << (i ? "|" : "") << s.model.spec.widths[i];
    }
    std::cout << ',' << s.model.pair_count() << ',' << s.model.epsilon << ','
              << s.model.weight_bytes() << ',' << s.live_count() << '\n';
  }
  std::cout << "remainder_rules," << p.remainder_size() << '\n';

  if (!trace_path.empty()) {
    io::LabeledTrace trace = io::read_trace_file(trace_path);
    // Secondary-search distance histogram: |predicted - found| per iSet hit.
    std::map<std::uint32_t, std::size_t> hist;
    for (const PacketHeader& pkt : trace.packets) {
      for (const engine::BuiltISet& s : p.isets()) {
        const engine::SubField& sf = p.sub_schema()[s.sub_field];
        FieldValue v = engine::sub_value(pkt, sf);
        std::uint32_t key = static_cast<std::uint32_t>(v);
        std::uint32_t pred =
            rqrmi::infer_model(s.model, isets::scale_value(v, sf.width_bits));
        auto pos = engine::secondary_search(s, pred, s.model.epsilon, key);
        if (pos) {
          std::uint32_t d = static_cast<std::uint32_t>(
              *pos > pred ? *pos - pred : pred - static_cast<std::uint32_t>(*pos));
          hist[d] += 1;
        }
      }
    }
    std::cout << "search_distance,count\n";
    for (const auto& [d, c] : hist) std::cout << d << ',' << c << '\n';
  }
  return 0;
}

int cmd_gen_trace(const std::string& ruleset_path, const std::string& out_path, std::size_t count,
                  const std::string& kind, double top3, std::uint64_t seed,
                  const std::string& csv_mirror) {
  RuleSet rs = io::parse_classbench_file(ruleset_path);
  io::LabeledTrace trace;
  if (kind == "uniform") {
    trace = io::gen_uniform_trace(rs, count, seed);
  } else if (kind == "zipf") {
    trace = io::gen_zipf_trace(rs, count, top3, seed);
  } else {
    throw Error("unknown trace kind: " + kind);
  }
  io::write_trace_file(out_path, trace);
  if (!csv_mirror.empty()) {
    std::ofstream file(csv_mirror);
    if (!file) throw Error("cannot open csv mirror: " + csv_mirror);
    file << io::trace_to_csv(trace);
  }
  std::cout << "packets: " << trace.size() << "\n";
  std::cout << "trace: " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned range-match packet classifier"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "Seed for every stochastic step")->capture_default_str();

  // build
  auto* build = app.add_subcommand("build", "Train a classifier bundle from a rule-set");
  std::string build_rules, build_out;
  engine::EngineConfig cfg;
  std::string remainder_kind = "tuplespace";
  build->add_option("ruleset", build_rules, "ClassBench rule file")->required();
  build->add_option("out", build_out, "Output bundle path")->required();
  build->add_option("--isets", cfg.max_isets, "Maximum number of iSets")->capture_default_str();
  build->add_option("--error-threshold", cfg.training.error_threshold, "Target error bound")
      ->capture_default_str();
  build->add_option("--min-coverage", cfg.min_coverage, "Dissolve iSets below this coverage")
      ->capture_default_str();
  build->add_option("--epochs", cfg.training.epochs, "Adam epochs per submodel")
      ->capture_default_str();
  build->add_option("--samples", cfg.training.initial_samples_per_submodel,
                    "Initial samples per submodel")
      ->capture_default_str();
  build->add_option("--remainder", remainder_kind, "Remainder classifier: tuplespace|linear")
      ->capture_default_str();

  // classify
  auto* classify = app.add_subcommand("classify", "Run a labeled trace through a bundle");
  std::string cl_bundle, cl_trace, cl_mode = "serial", cl_out;
  std::size_t cl_batch = 128, cl_threads = default_threads();
  classify->add_option("bundle", cl_bundle)->required();
  classify->add_option("trace", cl_trace)->required();
  classify->add_option("--mode", cl_mode, "serial|parallel")->capture_default_str();
  classify->add_option("--batch", cl_batch)->capture_default_str();
  classify->add_option("--threads", cl_threads)->capture_default_str();
  classify->add_option("--out", cl_out, "Write per-packet results CSV here");

  // bench
  auto* bench = app.add_subcommand("bench", "Measure throughput and phase breakdown");
  std::string be_bundle, be_trace, be_mode = "serial", be_out;
  int be_repeat = 6, be_warmup = 5;
  std::size_t be_batch = 128, be_threads = default_threads();
  bench->add_option("bundle", be_bundle)->required();
  bench->add_option("trace", be_trace)->required();
  bench->add_option("--repeat", be_repeat)->capture_default_str();
  bench->add_option("--warmup", be_warmup)->capture_default_str();
  bench->add_option("--mode", be_mode, "serial|parallel")->capture_default_str();
  bench->add_option("--batch", be_batch)->capture_default_str();
  bench->add_option("--threads", be_threads)->capture_default_str();
  bench->add_option("--csv", be_out, "Write the CSV here as well");

  // partition-report
  auto* report = app.add_subcommand("partition-report", "Coverage, diversity and centrality");
  std::string rp_rules;
  std::size_t rp_isets = 4;
  double rp_min_cov = 0.0;
  report->add_option("ruleset", rp_rules)->required();
  report->add_option("--max-isets", rp_isets)->capture_default_str();
  report->add_option("--min-coverage", rp_min_cov)->capture_default_str();

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Describe a bundle; optional search-distance histogram");
  std::string in_bundle, in_trace;
  bool in_json = false;
  inspect->add_option("bundle", in_bundle)->required();
  inspect->add_option("--trace", in_trace, "Labeled trace for the distance histogram");
  inspect->add_flag("--json", in_json, "Dump the models as JSON instead");

  // gen-trace
  auto* gen = app.add_subcommand("gen-trace", "Generate a labeled packet trace");
  std::string gt_rules, gt_out, gt_kind = "uniform", gt_csv;
  std::size_t gt_count = 100000;
  double gt_top3 = 0.8;
  gen->add_option("ruleset", gt_rules)->required();
  gen->add_option("out", gt_out)->required();
  gen->add_option("--count", gt_count)->capture_default_str();
  gen->add_option("--kind", gt_kind, "uniform|zipf")->capture_default_str();
  gen->add_option("--top3", gt_top3, "Zipf: share of traffic in the top 3% flows")
      ->capture_default_str();
  gen->add_option("--csv", gt_csv, "Also write a CSV mirror here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      cfg.seed = seed;
      cfg.remainder_kind = remainder_kind == "linear" ? remainder::RemainderKind::LinearScan
                                                      : remainder::RemainderKind::TupleSpace;
      return cmd_build(build_rules, build_out, cfg);
    }
    if (classify->parsed()) {
      return cmd_classify(cl_bundle, cl_trace, cl_mode, cl_batch, cl_threads, cl_out);
    }
    if (bench->parsed()) {
      return cmd_bench(be_bundle, be_trace, be_repeat, be_warmup, be_mode, be_batch, be_threads,
                       be_out);
    }
    if (report->parsed()) {
      return cmd_partition_report(rp_rules, rp_isets, rp_min_cov);
    }
    if (inspect->parsed()) {
      return cmd_inspect(in_bundle, in_trace, in_json);
    }
    if (gen->parsed()) {
      return cmd_gen_trace(gt_rules, gt_out, gt_count, gt_kind, gt_top3, seed, gt_csv);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
