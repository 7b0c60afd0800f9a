#pragma once

#include <iosfwd>
#include <string>

#include "rqmatch/engine.hpp"
#include "rqmatch/rqrmi.hpp"

namespace rqmatch::serialize {

// Model file, little-endian: magic "RQMI", u32 version, u32 stage count,
// stage widths, u32 pair count, u32 epsilon; per submodel 25 float32 in
// w1|b1|w2|b2 order; then (float32 lo, float32 hi, u32 value) per pair.
// Pair bounds are stored in single precision, so a reloaded model is for
// inspection; the pipeline bundle reconstructs exact pairs from the rules.
void write_model(std::ostream& out, const rqrmi::RQRMIModel& model);
rqrmi::RQRMIModel read_model(std::istream& in);

// JSON mirror of the model file.
std::string model_json(const rqrmi::RQRMIModel& model);

// Pipeline bundle: config, schema, master rule table, per-iSet value arrays,
// tombstones and embedded model, remainder membership. Byte-stable for a
// fixed seed and input.
void write_pipeline(std::ostream& out, const engine::ClassifierPipeline& pipeline);
engine::ClassifierPipeline read_pipeline(std::istream& in);

void save_pipeline(const std::string& path, const engine::ClassifierPipeline& pipeline);
engine::ClassifierPipeline load_pipeline(const std::string& path);

}  // namespace rqmatch::serialize
