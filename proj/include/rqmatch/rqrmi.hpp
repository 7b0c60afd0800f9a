#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rqmatch/types.hpp"

namespace rqmatch::rqrmi {

inline constexpr int kHiddenWidth = 8;

// Output clamp ceiling: submodel outputs live in [0, 1 - 2^-23] so that
// floor(output * W) never reaches W for any stage width below 2^23.
inline constexpr double kOutputCap = 1.0 - 0x1p-23;

// One 3-layer network: scalar in, kHiddenWidth ReLU neurons, scalar out.
// Stored weights are float32; analysis instantiates the double variant.
template <typename Scalar>
struct SubmodelT {
  Eigen::Array<Scalar, kHiddenWidth, 1> w1 = Eigen::Array<Scalar, kHiddenWidth, 1>::Zero();
  Eigen::Array<Scalar, kHiddenWidth, 1> b1 = Eigen::Array<Scalar, kHiddenWidth, 1>::Zero();
  Eigen::Array<Scalar, kHiddenWidth, 1> w2 = Eigen::Array<Scalar, kHiddenWidth, 1>::Zero();
  Scalar b2 = Scalar(0);

  template <typename T>
  SubmodelT<T> cast() const {
    SubmodelT<T> out;
    out.w1 = w1.template cast<T>();
    out.b1 = b1.template cast<T>();
    out.w2 = w2.template cast<T>();
    out.b2 = static_cast<T>(b2);
    return out;
  }

  // Passes x through unchanged on [0, kOutputCap]; stands in for submodels
  // whose responsibility received no training samples.
  static SubmodelT identity() {
    SubmodelT m;
    m.w1[0] = Scalar(1);
    m.w2[0] = Scalar(1);
    return m;
  }

  bool all_finite() const {
    return w1.isFinite().all() && b1.isFinite().all() && w2.isFinite().all() &&
           std::isfinite(static_cast<double>(b2));
  }
};

using Submodel = SubmodelT<float>;

// Pre-clamp network output N(x). All arithmetic in double so that inference
// and the analytic transition machinery walk the same value path.
template <typename Scalar>
inline double eval_raw(const SubmodelT<Scalar>& m, double x) {
  Eigen::Array<double, kHiddenWidth, 1> z =
      x * m.w1.template cast<double>() + m.b1.template cast<double>();
  return (z.max(0.0) * m.w2.template cast<double>()).sum() + static_cast<double>(m.b2);
}

// Submodel output M(x) = H(N(x)), clamped to [0, 1 - 2^-23].
template <typename Scalar>
inline double infer_submodel(const SubmodelT<Scalar>& m, double x) {
  double y = eval_raw(m, x);
  if (y < 0.0) return 0.0;
  if (y > kOutputCap) return kOutputCap;
  return y;
}

// Domain boundaries plus every interior input where M changes slope: ReLU
// kinks -b1[k]/w1[k] and crossings of the clamp thresholds, filtered to
// genuine slope changes. Sorted ascending, always starts at 0 and ends at 1.
std::vector<double> trigger_inputs(const SubmodelT<float>& m);

// Interior inputs in (a, b) where floor(M(x) * w_next) changes, for a < b
// with M affine on [a, b] (adjacent trigger inputs). Closed-form crossings of
// the quantization levels strictly between the endpoint values.
std::vector<double> transition_inputs_between(const SubmodelT<float>& m, double a, double b,
                                              std::uint32_t w_next);

// Full transition-input set of one submodel over [0, 1]: per-segment interior
// crossings plus interior trigger points whose two-sided quantized limits
// differ.
std::vector<double> transition_inputs(const SubmodelT<float>& m, std::uint32_t w_next);

// Half-open [lo, hi) on the scaled domain.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x < hi; }
  double length() const { return hi - lo; }
  bool operator==(const Interval& o) const = default;
};

// Inputs routed to one submodel by the preceding stages; may be a union of
// disjoint intervals.
struct Responsibility {
  std::vector<Interval> intervals;  // sorted, disjoint

  bool contains(double x) const;
  double total_length() const;
  bool empty() const { return intervals.empty(); }
};

// Reachable transition inputs of a stage plus the domain endpoints; between
// two adjacent entries the next-stage routing is constant.
struct TransitionSet {
  std::vector<double> inputs;  // sorted, first = 0.0, last = 1.0
};

struct StageSpec {
  std::vector<std::uint32_t> widths;  // widths[0] must be 1

  std::size_t stages() const { return widths.size(); }
  void validate() const;

  // Stage layout used for a given indexed-range count, by rule-set size:
  // <1e3 -> [1,4]; [1e3,1e4) -> [1,4,16]; [1e4,1e5) -> [1,4,128];
  // >=1e5 -> [1,8,256]; >=3e5 -> [1,8,512].
  static StageSpec for_size(std::size_t pair_count);
};

// Sorted non-overlapping scaled range with its slot in the value array.
struct RangeValuePair {
  double lo = 0.0;  // inclusive
  double hi = 0.0;  // exclusive
  std::uint32_t value = 0;
};

// Index of the pair whose range contains x, if any.
std::optional<std::uint32_t> find_pair(const std::vector<RangeValuePair>& pairs, double x);

// Throws when pairs are empty, unsorted, overlapping, or misnumbered.
void validate_pairs(const std::vector<RangeValuePair>& pairs);

struct RQRMIModel {
  StageSpec spec;
  std::vector<std::vector<Submodel>> stages;  // stages[i].size() == spec.widths[i]
  std::vector<RangeValuePair> pairs;
  std::uint32_t epsilon = 0;  // worst-case |predicted - true| in array slots

  std::uint32_t pair_count() const { return static_cast<std::uint32_t>(pairs.size()); }
  std::size_t submodel_count() const;
  std::size_t weight_bytes() const;  // serialized weight footprint

  // Structural soundness: spec/stage agreement, finite weights, valid pairs.
  void validate() const;
};

// Output of stage `stage` (0-based) for key x: routes through stages
// 0..stage-1 and evaluates the selected submodel.
double stage_output(const RQRMIModel& m, std::size_t stage, double x);

// Index of the last-stage submodel that handles x.
std::uint32_t route_to_last_stage(const RQRMIModel& m, double x);

// Predicted slot in the pair array, clamped to [0, pair_count - 1].
std::uint32_t infer_model(const RQRMIModel& m, double x);

// Union of per-submodel transition inputs restricted to each submodel's
// responsibility, plus {0, 1}. Throws when responsibilities do not cover
// [0, 1).
TransitionSet transition_set(const std::vector<Submodel>& submodels,
                             const std::vector<Responsibility>& responsibilities,
                             std::uint32_t w_next);

// Assigns every [u0, u1) between adjacent transition-set entries to the
// next-stage submodel selected at the interval midpoint. Returns w_next
// responsibilities that are disjoint and cover [0, 1).
std::vector<Responsibility> compute_responsibilities(const TransitionSet& u,
                                                     const std::function<double(double)>& stage_eval,
                                                     std::uint32_t w_next);

// Responsibilities of the last stage, derived from the trained stages.
std::vector<Responsibility> last_stage_responsibilities(const RQRMIModel& m);

}  // namespace rqmatch::rqrmi
