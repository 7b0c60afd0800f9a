#include "rqmatch/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rqmatch::rqrmi {

namespace {

using Vec8 = Eigen::Array<double, kHiddenWidth, 1>;

struct Params {
  Vec8 w1 = Vec8::Zero(), b1 = Vec8::Zero(), w2 = Vec8::Zero();
  double b2 = 0.0;

  bool all_finite() const {
    return w1.isFinite().all() && b1.isFinite().all() && w2.isFinite().all() && std::isfinite(b2);
  }

  Submodel to_submodel() const {
    Submodel m;
    m.w1 = w1.cast<float>();
    m.b1 = b1.cast<float>();
    m.w2 = w2.cast<float>();
    m.b2 = static_cast<float>(b2);
    return m;
  }
};

double predict_raw(const Params& p, double x) {
  return ((x * p.w1 + p.b1).max(0.0) * p.w2).sum() + p.b2;
}

double mse(const Params& p, const Dataset& ds) {
  double s = 0.0;
  for (const TrainingSample& t : ds) {
    double e = predict_raw(p, t.key) - t.label;
    s += e * e;
  }
  return s / static_cast<double>(ds.size());
}

// Start from the least-squares line through the dataset: neuron 0 carries the
// line, the rest provide hinges spread over the key range.
Params initial_params(const Dataset& ds, Rng& rng) {
  double n = static_cast<double>(ds.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  double kmin = std::numeric_limits<double>::infinity(), kmax = -kmin;
  for (const TrainingSample& t : ds) {
    sx += t.key;
    sy += t.label;
    sxx += t.key * t.key;
    sxy += t.key * t.label;
    kmin = std::min(kmin, t.key);
    kmax = std::max(kmax, t.key);
  }
  double denom = n * sxx - sx * sx;
  double slope = 0.0, intercept = sy / n;
  if (denom > 1e-18) {
    slope = (n * sxy - sx * sy) / denom;
    intercept = (sy - slope * sx) / n;
  }

  Params p;
  p.w1[0] = 1.0;
  p.b1[0] = 0.125;  // keeps neuron 0 active on [0, 1]
  p.w2[0] = slope;
  p.b2 = intercept - 0.125 * slope;
  double span = std::max(kmax - kmin, 1e-6);
  for (int k = 1; k < kHiddenWidth; ++k) {
    double kink = kmin + span * static_cast<double>(k) / static_cast<double>(kHiddenWidth);
    double sign = (k % 2 == 0) ? 1.0 : -1.0;
    p.w1[k] = sign * 2.0;
    p.b1[k] = -p.w1[k] * kink;
    p.w2[k] = rng.uniform(-0.01, 0.01);
  }
  return p;
}

Params adam_fit(const Dataset& ds, const TrainingConfig& cfg, Rng& rng, bool& ok) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  Params p = initial_params(ds, rng);
  Params m{}, v{};  // first and second moment estimates
  Params best = p;
  double best_loss = mse(p, ds);

  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t step = 0;
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      double inv = 1.0 / static_cast<double>(end - start);

      Params g{};
      for (std::size_t i = start; i < end; ++i) {
        const TrainingSample& t = ds[order[i]];
        Vec8 z = t.key * p.w1 + p.b1;
        Vec8 a = z.max(0.0);
        double pred = (a * p.w2).sum() + p.b2;
        double dy = 2.0 * (pred - t.label) * inv;
        Vec8 act = (z > 0.0).cast<double>();
        g.w2 += dy * a;
        g.b2 += dy;
        g.w1 += dy * p.w2 * act * t.key;
        g.b1 += dy * p.w2 * act;
      }

      ++step;
      double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      auto update = [&](Vec8& param, Vec8& m1, Vec8& m2, const Vec8& grad) {
        m1 = kBeta1 * m1 + (1.0 - kBeta1) * grad;
        m2 = kBeta2 * m2 + (1.0 - kBeta2) * grad.square();
        param -= cfg.learning_rate * (m1 / c1) / ((m2 / c2).sqrt() + kEps);
      };
      update(p.w1, m.w1, v.w1, g.w1);
      update(p.b1, m.b1, v.b1, g.b1);
      update(p.w2, m.w2, v.w2, g.w2);
      m.b2 = kBeta1 * m.b2 + (1.0 - kBeta1) * g.b2;
      v.b2 = kBeta2 * v.b2 + (1.0 - kBeta2) * g.b2 * g.b2;
      p.b2 -= cfg.learning_rate * (m.b2 / c1) / (std::sqrt(v.b2 / c2) + kEps);
    }

    if (!p.all_finite()) {
      ok = false;
      return best;
    }
    double loss = mse(p, ds);
    if (!std::isfinite(loss)) {
      ok = false;
      return best;
    }
    if (loss < best_loss) {
      best_loss = loss;
      best = p;
    }
  }
  ok = true;
  return best;
}

}  // namespace

Dataset sample_dataset(const std::vector<RangeValuePair>& pairs, const Responsibility& resp,
                       std::uint32_t count, Rng& rng) {
  Dataset out;
  if (resp.empty()) return out;

  std::vector<double> cum;
  cum.reserve(resp.intervals.size());
  double total = 0.0;
  for (const Interval& iv : resp.intervals) {
    total += iv.length();
    cum.push_back(total);
  }
  if (total <= 0.0) return out;

  double label_scale = 1.0 / static_cast<double>(pairs.size());
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    double u = rng.uniform() * total;
    std::size_t k = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (k >= resp.intervals.size()) k = resp.intervals.size() - 1;
    const Interval& iv = resp.intervals[k];
    double prev = (k == 0) ? 0.0 : cum[k - 1];
    double key = iv.lo + (u - prev);
    if (key >= iv.hi) key = std::nextafter(iv.hi, iv.lo);
    if (auto v = find_pair(pairs, key)) {
      out.push_back(TrainingSample{key, static_cast<double>(*v) * label_scale});
    }
  }
  return out;
}

Submodel train_submodel(const Dataset& dataset, const TrainingConfig& cfg, Rng& rng) {
  if (dataset.empty()) return Submodel::identity();

  for (std::uint32_t attempt = 0; attempt < std::max(cfg.max_retrain_attempts, 1u); ++attempt) {
    bool ok = false;
    Rng local = rng.fork(0x7261696e + attempt);
    Params fit = adam_fit(dataset, cfg, local, ok);
    if (ok && fit.all_finite()) return fit.to_submodel();
  }
  throw Error("submodel training failed: non-finite loss after restarts");
}

std::uint32_t analytic_submodel_error(const RQRMIModel& m, const Responsibility& resp,
                                      std::uint32_t submodel) {
  const Submodel& sm = m.stages.back()[submodel];
  const std::vector<RangeValuePair>& pairs = m.pairs;
  double w = static_cast<double>(m.pair_count());
  double wmax = w - 1.0;

  std::vector<double> trig = trigger_inputs(sm);
  std::int64_t worst = 0;

  for (const Interval& iv : resp.intervals) {
    // Segment boundaries: responsibility edges plus interior trigger inputs.
    std::vector<double> q;
    q.push_back(iv.lo);
    for (double t : trig) {
      if (t > iv.lo && t < iv.hi) q.push_back(t);
    }
    q.push_back(iv.hi);

    for (std::size_t s = 0; s + 1 < q.size(); ++s) {
      double q0 = q[s], q1 = q[s + 1];
      // Pairs overlapping [q0, q1).
      auto it = std::lower_bound(pairs.begin(), pairs.end(), q0,
                                 [](const RangeValuePair& p, double v) { return p.hi <= v; });
      for (; it != pairs.end() && it->lo < q1; ++it) {
        double c = std::max(it->lo, q0);
        double d = std::min(it->hi, q1);
        if (!(c < d)) continue;
        double yc = infer_submodel(sm, c) * w;
        double yd = infer_submodel(sm, d) * w;
        double fmin = std::clamp(std::floor(std::min(yc, yd)), 0.0, wmax);
        double fmax = std::clamp(std::floor(std::max(yc, yd)), 0.0, wmax);
        std::int64_t v = static_cast<std::int64_t>(it->value);
        std::int64_t err = std::max(std::llabs(static_cast<std::int64_t>(fmin) - v),
                                    std::llabs(static_cast<std::int64_t>(fmax) - v));
        worst = std::max(worst, err);
      }
    }
  }
  return static_cast<std::uint32_t>(worst);
}

ErrorBounds compute_error_bounds(const RQRMIModel& m,
                                 const std::vector<Responsibility>& last_resp) {
  ErrorBounds out;
  out.per_submodel.resize(m.stages.back().size(), 0);
  for (std::uint32_t j = 0; j < out.per_submodel.size(); ++j) {
    out.per_submodel[j] = analytic_submodel_error(m, last_resp[j], j);
    out.global = std::max(out.global, out.per_submodel[j]);
  }

  // Re-probe the evaluated inference path at pair boundaries; any excess over
  // the analytic bound widens it.
  for (const RangeValuePair& p : m.pairs) {
    for (double x : {p.lo, std::nextafter(p.hi, p.lo)}) {
      if (!(x >= p.lo && x < p.hi)) continue;
      std::int64_t predicted = infer_model(m, x);
      std::int64_t err = std::llabs(predicted - static_cast<std::int64_t>(p.value));
      if (err > 0) {
        std::uint32_t j = route_to_last_stage(m, x);
        std::uint32_t e = static_cast<std::uint32_t>(err);
        out.per_submodel[j] = std::max(out.per_submodel[j], e);
        out.global = std::max(out.global, e);
      }
    }
  }
  return out;
}

ErrorBounds compute_error_bounds(const RQRMIModel& m) {
  return compute_error_bounds(m, last_stage_responsibilities(m));
}

RQRMIModel train_model(std::vector<RangeValuePair> pairs, const StageSpec& spec,
                       const TrainingConfig& cfg, std::uint64_t seed) {
  validate_pairs(pairs);
  spec.validate();

  RQRMIModel model;
  model.spec = spec;
  model.pairs = std::move(pairs);

  Rng root(seed);
  std::size_t n = spec.stages();
  model.stages.resize(n);

  std::vector<Responsibility> resp(1);
  resp[0].intervals.push_back(Interval{0.0, 1.0});

  for (std::size_t i = 0; i < n; ++i) {
    model.stages[i].resize(spec.widths[i]);
    for (std::uint32_t j = 0; j < spec.widths[i]; ++j) {
      Rng r = root.fork((i << 20) | j);
      Dataset ds = sample_dataset(model.pairs, resp[j], cfg.initial_samples_per_submodel, r);
      model.stages[i][j] = train_submodel(ds, cfg, r);
    }
    if (i + 1 < n) {
      TransitionSet u = transition_set(model.stages[i], resp, spec.widths[i + 1]);
      resp = compute_responsibilities(
          u, [&](double x) { return stage_output(model, i, x); }, spec.widths[i + 1]);
    }
  }

  // Retrain last-stage submodels that miss the error threshold, doubling
  // their sample budget each attempt and keeping the better fit.
  std::vector<std::uint32_t> eps(spec.widths[n - 1], 0);
  std::vector<std::uint32_t> samples(spec.widths[n - 1], cfg.initial_samples_per_submodel);
  for (std::uint32_t j = 0; j < spec.widths[n - 1]; ++j) {
    eps[j] = analytic_submodel_error(model, resp[j], j);
  }
  for (std::uint32_t attempt = 1; attempt <= cfg.max_retrain_attempts; ++attempt) {
    bool any = false;
    for (std::uint32_t j = 0; j < spec.widths[n - 1]; ++j) {
      if (eps[j] <= cfg.error_threshold) continue;
      any = true;
      samples[j] *= 2;
      Rng r = root.fork(0x52455452ull + (static_cast<std::uint64_t>(attempt) << 24) + j);
      Dataset ds = sample_dataset(model.pairs, resp[j], samples[j], r);
      Submodel previous = model.stages[n - 1][j];
      model.stages[n - 1][j] = train_submodel(ds, cfg, r);
      std::uint32_t e = analytic_submodel_error(model, resp[j], j);
      if (e < eps[j]) {
        eps[j] = e;
      } else {
        model.stages[n - 1][j] = previous;
      }
    }
    if (!any) break;
  }

  model.epsilon = compute_error_bounds(model, resp).global;
  return model;
}

}  // namespace rqmatch::rqrmi
