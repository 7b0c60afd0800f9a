#include "rqmatch/rqrmi.hpp"

#include <algorithm>
#include <cmath>

namespace rqmatch::rqrmi {

namespace {

// Slope of the pre-clamp network at x, summed in neuron order so that equal
// active sets produce bit-identical slopes.
double raw_slope_at(const SubmodelT<double>& m, double x) {
  double s = 0.0;
  for (int k = 0; k < kHiddenWidth; ++k) {
    if (m.w1[k] * x + m.b1[k] > 0.0) s += m.w1[k] * m.w2[k];
  }
  return s;
}

double eval_raw_d(const SubmodelT<double>& m, double x) {
  double s = static_cast<double>(m.b2);
  for (int k = 0; k < kHiddenWidth; ++k) {
    double z = m.w1[k] * x + m.b1[k];
    if (z > 0.0) s += m.w2[k] * z;
  }
  return s;
}

void sort_unique(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// One-sided limit of floor(M(x) * w) as x approaches `at` from inside a
// segment on which M is affine; `other` is the segment's far endpoint.
double one_sided_quantized_limit(double m_at, double m_other, std::uint32_t w) {
  double y = m_at * static_cast<double>(w);
  double fy = std::floor(y);
  if (m_other < m_at && y == fy) return fy - 1.0;  // approached from below
  return fy;
}

}  // namespace

std::vector<double> trigger_inputs(const Submodel& mf) {
  SubmodelT<double> m = mf.cast<double>();

  std::vector<double> cand{0.0, 1.0};
  for (int k = 0; k < kHiddenWidth; ++k) {
    if (m.w1[k] != 0.0) {
      double x = -m.b1[k] / m.w1[k];
      if (x > 0.0 && x < 1.0) cand.push_back(x);
    }
  }
  sort_unique(cand);

  // Crossings of the clamp thresholds inside each affine piece of N.
  std::vector<double> crossings;
  for (std::size_t i = 0; i + 1 < cand.size(); ++i) {
    double a = cand[i], b = cand[i + 1];
    double ya = eval_raw_d(m, a), yb = eval_raw_d(m, b);
    for (double th : {0.0, kOutputCap}) {
      if ((ya < th && yb > th) || (ya > th && yb < th)) {
        double x = a + (th - ya) * (b - a) / (yb - ya);
        if (x > a && x < b) crossings.push_back(x);
      }
    }
  }
  cand.insert(cand.end(), crossings.begin(), crossings.end());
  sort_unique(cand);

  // Per-segment slope of M: zero where the clamp is active.
  std::vector<double> slope(cand.size() - 1);
  for (std::size_t i = 0; i + 1 < cand.size(); ++i) {
    double mid = 0.5 * (cand[i] + cand[i + 1]);
    double y = eval_raw_d(m, mid);
    slope[i] = (y <= 0.0 || y >= kOutputCap) ? 0.0 : raw_slope_at(m, mid);
  }

  std::vector<double> out;
  out.push_back(0.0);
  for (std::size_t i = 1; i + 1 < cand.size(); ++i) {
    if (slope[i - 1] != slope[i]) out.push_back(cand[i]);
  }
  out.push_back(1.0);
  return out;
}

std::vector<double> transition_inputs_between(const Submodel& m, double a, double b,
                                              std::uint32_t w_next) {
  double w = static_cast<double>(w_next);
  double ma = infer_submodel(m, a);
  double mb = infer_submodel(m, b);
  double qa = std::floor(ma * w);
  double qb = std::floor(mb * w);
  if (ma == mb) {
    if (qa != qb)
      throw Error("transition_inputs_between: constant segment with differing quantized levels");
    return {};
  }
  if (qa == qb) return {};

  std::vector<double> out;
  double lo = std::min(qa, qb), hi = std::max(qa, qb);
  for (double y = lo + 1.0; y <= hi; y += 1.0) {
    double d = (y / w - ma) * (b - a) / (mb - ma) + a;
    if (d > a && d < b) out.push_back(d);
  }
  sort_unique(out);
  return out;
}

std::vector<double> transition_inputs(const Submodel& m, std::uint32_t w_next) {
  std::vector<double> trig = trigger_inputs(m);
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < trig.size(); ++i) {
    std::vector<double> seg = transition_inputs_between(m, trig[i], trig[i + 1], w_next);
    out.insert(out.end(), seg.begin(), seg.end());
  }
  // Interior trigger points where the two-sided quantized limits differ.
  for (std::size_t i = 1; i + 1 < trig.size(); ++i) {
    double g = trig[i];
    double mg = infer_submodel(m, g);
    double ql = one_sided_quantized_limit(mg, infer_submodel(m, trig[i - 1]), w_next);
    double qr = one_sided_quantized_limit(mg, infer_submodel(m, trig[i + 1]), w_next);
    if (ql != qr) out.push_back(g);
  }
  sort_unique(out);
  return out;
}

bool Responsibility::contains(double x) const {
  auto it = std::upper_bound(intervals.begin(), intervals.end(), x,
                             [](double v, const Interval& iv) { return v < iv.hi; });
  return it != intervals.end() && it->lo <= x;
}

double Responsibility::total_length() const {
  double s = 0.0;
  for (const Interval& iv : intervals) s += iv.length();
  return s;
}

void StageSpec::validate() const {
  if (widths.empty()) throw Error("stage spec: no stages");
  if (widths.front() != 1) throw Error("stage spec: first stage width must be 1");
  for (std::uint32_t w : widths) {
    if (w < 1) throw Error("stage spec: zero-width stage");
    if (w > (1u << 23)) throw Error("stage spec: stage width exceeds 2^23");
  }
}

StageSpec StageSpec::for_size(std::size_t pair_count) {
  if (pair_count < 1000) return StageSpec{{1, 4}};
  if (pair_count < 10000) return StageSpec{{1, 4, 16}};
  if (pair_count < 100000) return StageSpec{{1, 4, 128}};
  if (pair_count < 300000) return StageSpec{{1, 8, 256}};
  return StageSpec{{1, 8, 512}};
}

std::optional<std::uint32_t> find_pair(const std::vector<RangeValuePair>& pairs, double x) {
  auto it = std::lower_bound(pairs.begin(), pairs.end(), x,
                             [](const RangeValuePair& p, double v) { return p.hi <= v; });
  if (it == pairs.end() || it->lo > x) return std::nullopt;
  return it->value;
}

void validate_pairs(const std::vector<RangeValuePair>& pairs) {
  if (pairs.empty()) throw Error("empty range-value pair array");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const RangeValuePair& p = pairs[i];
    if (!(p.lo < p.hi)) throw Error("range-value pair with empty range");
    if (p.lo < 0.0 || p.hi > 1.0) throw Error("range-value pair outside [0, 1]");
    if (p.value != i) throw Error("range-value pair values must equal array order");
    if (i > 0 && pairs[i - 1].hi > p.lo) throw Error("range-value pairs overlap");
  }
}

std::size_t RQRMIModel::submodel_count() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.size();
  return n;
}

std::size_t RQRMIModel::weight_bytes() const {
  return submodel_count() * (3 * kHiddenWidth + 1) * sizeof(float);
}

void RQRMIModel::validate() const {
  spec.validate();
  if (stages.size() != spec.stages()) throw Error("model: stage count mismatch");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].size() != spec.widths[i]) throw Error("model: stage width mismatch");
    for (const Submodel& m : stages[i]) {
      if (!m.all_finite()) throw Error("model: non-finite submodel weights");
    }
  }
  validate_pairs(pairs);
}

double stage_output(const RQRMIModel& m, std::size_t stage, double x) {
  std::size_t j = 0;
  double y = 0.0;
  for (std::size_t i = 0; i <= stage; ++i) {
    y = infer_submodel(m.stages[i][j], x);
    if (i < stage) {
      double w = static_cast<double>(m.spec.widths[i + 1]);
      double idx = std::floor(y * w);
      if (idx < 0.0) idx = 0.0;
      if (idx > w - 1.0) idx = w - 1.0;
      j = static_cast<std::size_t>(idx);
    }
  }
  return y;
}

std::uint32_t route_to_last_stage(const RQRMIModel& m, double x) {
  std::size_t j = 0;
  for (std::size_t i = 0; i + 1 < m.stages.size(); ++i) {
    double y = infer_submodel(m.stages[i][j], x);
    double w = static_cast<double>(m.spec.widths[i + 1]);
    double idx = std::floor(y * w);
    if (idx < 0.0) idx = 0.0;
    if (idx > w - 1.0) idx = w - 1.0;
    j = static_cast<std::size_t>(idx);
  }
  return static_cast<std::uint32_t>(j);
}

std::uint32_t infer_model(const RQRMIModel& m, double x) {
  double y = stage_output(m, m.stages.size() - 1, x);
  double w = static_cast<double>(m.pair_count());
  double idx = std::floor(y * w);
  if (idx < 0.0) idx = 0.0;
  if (idx > w - 1.0) idx = w - 1.0;
  return static_cast<std::uint32_t>(idx);
}

TransitionSet transition_set(const std::vector<Submodel>& submodels,
                             const std::vector<Responsibility>& responsibilities,
                             std::uint32_t w_next) {
  if (submodels.size() != responsibilities.size())
    throw Error("transition_set: submodel/responsibility count mismatch");

  // Responsibilities of one stage must tile [0, 1) exactly.
  std::vector<Interval> all;
  for (const Responsibility& r : responsibilities)
    all.insert(all.end(), r.intervals.begin(), r.intervals.end());
  std::sort(all.begin(), all.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  if (all.empty() || all.front().lo != 0.0 || all.back().hi != 1.0)
    throw Error("transition_set: responsibilities do not cover [0, 1)");
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    if (all[i].hi != all[i + 1].lo)
      throw Error("transition_set: responsibilities do not cover [0, 1)");
  }

  std::vector<double> u{0.0, 1.0};
  for (std::size_t j = 0; j < submodels.size(); ++j) {
    for (double t : transition_inputs(submodels[j], w_next)) {
      if (responsibilities[j].contains(t)) u.push_back(t);
    }
    // The stage output may jump where responsibility passes between
    // submodels, so the next-stage routing can change there too.
    for (const Interval& iv : responsibilities[j].intervals) {
      u.push_back(iv.lo);
      u.push_back(iv.hi);
    }
  }
  sort_unique(u);
  TransitionSet out;
  out.inputs = std::move(u);
  return out;
}

std::vector<Responsibility> compute_responsibilities(const TransitionSet& u,
                                                     const std::function<double(double)>& stage_eval,
                                                     std::uint32_t w_next) {
  std::vector<Responsibility> resp(w_next);
  double w = static_cast<double>(w_next);
  for (std::size_t i = 0; i + 1 < u.inputs.size(); ++i) {
    double u0 = u.inputs[i], u1 = u.inputs[i + 1];
    double mid = 0.5 * (u0 + u1);
    double idx = std::floor(stage_eval(mid) * w);
    if (idx < 0.0) idx = 0.0;
    if (idx > w - 1.0) idx = w - 1.0;
    auto& ivs = resp[static_cast<std::size_t>(idx)].intervals;
    if (!ivs.empty() && ivs.back().hi == u0) {
      ivs.back().hi = u1;
    } else {
      ivs.push_back(Interval{u0, u1});
    }
  }
  return resp;
}

std::vector<Responsibility> last_stage_responsibilities(const RQRMIModel& m) {
  std::vector<Responsibility> resp(1);
  resp[0].intervals.push_back(Interval{0.0, 1.0});
  for (std::size_t i = 0; i + 1 < m.stages.size(); ++i) {
    TransitionSet u = transition_set(m.stages[i], resp, m.spec.widths[i + 1]);
    resp = compute_responsibilities(
        u, [&](double x) { return stage_output(m, i, x); }, m.spec.widths[i + 1]);
  }
  return resp;
}

}  // namespace rqmatch::rqrmi
