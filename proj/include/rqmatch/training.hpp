#pragma once

#include <cstdint>
#include <vector>

#include "rqmatch/rng.hpp"
#include "rqmatch/rqrmi.hpp"

namespace rqmatch::rqrmi {

struct TrainingConfig {
  std::uint32_t error_threshold = 64;          // target worst-case slot error
  std::uint32_t initial_samples_per_submodel = 128;
  std::uint32_t max_retrain_attempts = 6;      // sample count doubles per attempt
  double learning_rate = 0.001;                // Adam step size
  std::uint32_t batch_size = 64;
  std::uint32_t epochs = 300;
};

struct TrainingSample {
  double key = 0.0;
  double label = 0.0;  // pair value scaled by 1 / pair_count
};
using Dataset = std::vector<TrainingSample>;

// Draws `count` keys uniformly from the responsibility and keeps those that
// fall inside some pair's range, labelled value / pair_count. Keys in gaps
// between pair ranges are dropped, so the result may be smaller than `count`
// or empty.
Dataset sample_dataset(const std::vector<RangeValuePair>& pairs, const Responsibility& resp,
                       std::uint32_t count, Rng& rng);

// Adam on mean squared error against the pre-clamp network output. An empty
// dataset yields the identity submodel. Non-finite parameters restart the fit
// with fresh weights; persistent failures throw.
Submodel train_submodel(const Dataset& dataset, const TrainingConfig& cfg, Rng& rng);

struct ErrorBounds {
  std::vector<std::uint32_t> per_submodel;  // one per last-stage submodel
  std::uint32_t global = 0;
};

// Analytic worst-case slot error of one last-stage submodel over its
// responsibility, per segment between trigger inputs, intersected with the
// pair ranges.
std::uint32_t analytic_submodel_error(const RQRMIModel& m, const Responsibility& resp,
                                      std::uint32_t submodel);

// Worst-case |predicted - true| over all keys inside any pair range. The
// analytic sweep is followed by direct model probes at pair boundaries, which
// widen the bound if the evaluated path disagrees.
ErrorBounds compute_error_bounds(const RQRMIModel& m);
ErrorBounds compute_error_bounds(const RQRMIModel& m,
                                 const std::vector<Responsibility>& last_resp);

// Stage-by-stage training: fit, derive transition set and responsibilities,
// continue; then retrain last-stage submodels whose error bound exceeds the
// threshold, doubling their sample count per attempt. The achieved bound is
// stored in the model and may exceed the threshold.
RQRMIModel train_model(std::vector<RangeValuePair> pairs, const StageSpec& spec,
                       const TrainingConfig& cfg, std::uint64_t seed);

}  // namespace rqmatch::rqrmi
