#pragma once

// Glimpse-location strategies and strategy evaluation with a fixed model:
// four baselines (uniform, gaussian via tanh, center, bottom-left), the
// teacher's locations as an approximate upper bound, and the model's own
// policy. Baseline evaluation ignores T_l and injects locations; the model
// is never mutated. Early-exit inference halts at the first step whose
// confidence clears the threshold.

#include <string>
#include <vector>

#include "glitr/parallel.hpp"
#include "glitr/student.hpp"
#include "glitr/teacher.hpp"

namespace glitr {

enum class StrategyKind {
  uniform_random,
  gaussian_random,
  center,
  bottom_left,
  teacher_locations,
  glitr_policy,
};

inline std::string strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::uniform_random: return "uniform";
    case StrategyKind::gaussian_random: return "gaussian";
    case StrategyKind::center: return "center";
    case StrategyKind::bottom_left: return "bottomleft";
    case StrategyKind::teacher_locations: return "teacher";
    default: return "glitr";
  }
}

inline StrategyKind strategy_from_name(const std::string& s) {
  if (s == "uniform") return StrategyKind::uniform_random;
  if (s == "gaussian") return StrategyKind::gaussian_random;
  if (s == "center") return StrategyKind::center;
  if (s == "bottomleft") return StrategyKind::bottom_left;
  if (s == "teacher") return StrategyKind::teacher_locations;
  if (s == "glitr") return StrategyKind::glitr_policy;
  throw std::invalid_argument("unknown strategy: " + s);
}

inline bool strategy_is_stochastic(StrategyKind k) {
  return k == StrategyKind::uniform_random || k == StrategyKind::gaussian_random;
}

struct StrategyContext {
  int t = 1;  // 1-based timestep
  Pcg32* rng = nullptr;
  const std::vector<GlimpseLocation>* teacher_locs = nullptr;
  const GlimpseLocation* policy_loc = nullptr;
  const GlimpseGeometry* geom = nullptr;
};

inline GlimpseLocation next_location(StrategyKind kind, const StrategyContext& ctx) {
  switch (kind) {
    case StrategyKind::uniform_random:
      return {ctx.rng->uniform(-1.0, 1.0), ctx.rng->uniform(-1.0, 1.0)};
    case StrategyKind::gaussian_random:
      return {std::tanh(ctx.rng->gauss_bm()), std::tanh(ctx.rng->gauss_bm())};
    case StrategyKind::center:
      return {0.0, 0.0};
    case StrategyKind::bottom_left:
      // largest displacement toward the bottom-left corner that keeps the
      // crop flush with the frame
      return {1.0 - double(ctx.geom->glimpse_g) / ctx.geom->frame_h,
              -(1.0 - double(ctx.geom->glimpse_g) / ctx.geom->frame_w)};
    case StrategyKind::teacher_locations:
      if (!ctx.teacher_locs)
        throw std::invalid_argument("teacher strategy requires a trained teacher");
      return (*ctx.teacher_locs)[size_t(ctx.t - 1)];
    default:
      return *ctx.policy_loc;
  }
}

// argmax predictions per timestep under the given strategy; the model's own
// locator runs only for the policy strategy
template <typename T>
std::vector<int> strategy_predictions(const GlitrModel<T>& model, const VideoClip& clip,
                                      StrategyKind kind, Pcg32* rng,
                                      const std::vector<GlimpseLocation>* teacher_locs) {
  NoGradGuard ng;
  const auto& geom = model.stack.geom;
  int t_len = clip.frames.dim(0);
  GlitrState<T> state;
  std::vector<int> preds;
  GlimpseLocation policy_cur = model.l_hat_1;
  for (int t = 0; t < t_len; ++t) {
    StrategyContext ctx;
    ctx.t = t + 1;
    ctx.rng = rng;
    ctx.teacher_locs = teacher_locs;
    ctx.policy_loc = &policy_cur;
    ctx.geom = &geom;
    GlimpseLocation loc = next_location(kind, ctx);
    auto frame = detail_student::clip_frame<T>(clip, t);
    Var<T> loc_var = Var<T>::constant(location_tensor<T>(loc));
    int k = model.stack.cfg.num_classes;
    const TensorT<T>* logits = nullptr;
    GlitrStepOut<T> step;
    if (kind == StrategyKind::glitr_policy) {
      step = glitr_step(model, state, frame, loc_var);
      policy_cur = {double(step.next_loc.value()[0]), double(step.next_loc.value()[1])};
    } else {
      step = glitr_encode_step(model, state, frame, loc_var);
    }
    logits = &step.logits.value();
    int best = 0;
    for (int j = 1; j < k; ++j)
      if ((*logits)[size_t(j)] > (*logits)[size_t(best)]) best = j;
    preds.push_back(best);
  }
  return preds;
}

// accuracy after each timestep for one seeded run over a dataset
struct StrategyCurve {
  StrategyKind kind = StrategyKind::center;
  uint64_t seed = 0;
  std::vector<double> accuracy;  // index t-1
};

template <typename T>
StrategyCurve run_strategy_once(const GlitrModel<T>& model, const Dataset& ds, StrategyKind kind,
                                uint64_t seed, const TeacherModel<T>* teacher, int threads) {
  int t_len = ds.manifest().t;
  int n = ds.size();
  for (int i = 0; i < n; ++i) ds.clip(i);  // materialize before sharing across workers

  threads = resolve_threads(threads);
  std::vector<std::vector<int>> correct(size_t(threads), std::vector<int>(size_t(t_len), 0));
  parallel_chunks(n, threads, [&](int w, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const VideoClip& clip = ds.clip(i);
      // each stochastic run owns an isolated per-clip stream
      Pcg32 rng(derive_seed(seed, uint64_t(i), 0xa11ce));
      std::vector<GlimpseLocation> tl;
      if (kind == StrategyKind::teacher_locations) {
        if (!teacher) throw std::invalid_argument("teacher strategy requires a trained teacher");
        tl = teacher_locations(*teacher, clip);
      }
      auto preds = strategy_predictions(model, clip, kind, &rng,
                                        kind == StrategyKind::teacher_locations ? &tl : nullptr);
      for (int t = 0; t < t_len; ++t)
        if (preds[size_t(t)] == clip.label) correct[size_t(w)][size_t(t)]++;
    }
  });

  StrategyCurve curve;
  curve.kind = kind;
  curve.seed = seed;
  curve.accuracy.assign(size_t(t_len), 0.0);
  for (int t = 0; t < t_len; ++t) {
    int c = 0;
    for (int w = 0; w < threads; ++w) c += correct[size_t(w)][size_t(t)];
    curve.accuracy[size_t(t)] = double(c) / n;
  }
  return curve;
}

// Per-seed accuracy curves; deterministic strategies are evaluated once and
// replicated per seed (their std across seeds is exactly zero).
template <typename T>
std::vector<StrategyCurve> evaluate_strategy(const GlitrModel<T>& model, const Dataset& ds,
                                             StrategyKind kind,
                                             const std::vector<uint64_t>& seeds,
                                             const TeacherModel<T>* teacher = nullptr,
                                             int threads = 0) {
  std::vector<StrategyCurve> out;
  if (!strategy_is_stochastic(kind)) {
    StrategyCurve base = run_strategy_once(model, ds, kind, seeds.empty() ? 0 : seeds[0], teacher,
                                           threads);
    for (uint64_t s : seeds) {
      base.seed = s;
      out.push_back(base);
    }
    return out;
  }
  for (uint64_t s : seeds) out.push_back(run_strategy_once(model, ds, kind, s, teacher, threads));
  return out;
}

// locations the policy actually selected, for the glimpse-region histograms
struct LocationRecord {
  int clip = 0;
  int t = 1;  // 1-based
  GlimpseLocation loc;
};

template <typename T>
std::vector<LocationRecord> collect_policy_locations(const GlitrModel<T>& model,
                                                     const Dataset& ds, int threads = 0) {
  int n = ds.size();
  for (int i = 0; i < n; ++i) ds.clip(i);
  threads = resolve_threads(threads);
  std::vector<std::vector<LocationRecord>> per;
  per.resize(size_t(threads));
  parallel_chunks(n, threads, [&](int w, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      auto trace = glitr_rollout(model, ds.clip(i));
      for (size_t t = 0; t < trace.locations.size(); ++t)
        per[size_t(w)].push_back({i, int(t) + 1, trace.locations[t]});
    }
  });
  std::vector<LocationRecord> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

// ----------------------------------------------------------------- early exit

struct EarlyExitResult {
  int t_stop = 1;            // 1-based
  int prediction = 0;
  double confidence = 0.0;   // max softmax probability at t_stop
};

// Stop sensing at the first t whose confidence max(p(y_t)) exceeds gamma;
// frames after t_stop are never read.
template <typename T>
EarlyExitResult early_exit_run(const GlitrModel<T>& model, const VideoClip& clip, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("early exit: gamma must be in [0,1]");
  NoGradGuard ng;
  int t_len = clip.frames.dim(0);
  int k = model.stack.cfg.num_classes;
  GlitrState<T> state;
  GlimpseLocation cur = model.l_hat_1;
  EarlyExitResult res;
  for (int t = 0; t < t_len; ++t) {
    auto frame = detail_student::clip_frame<T>(clip, t);
    Var<T> loc = Var<T>::constant(location_tensor<T>(cur));
    auto step = glitr_step(model, state, frame, loc);
    TensorT<T> probs = step.logits.value();
    softmax_rows_inplace(probs);
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (probs[size_t(j)] > probs[size_t(best)]) best = j;
    res.t_stop = t + 1;
    res.prediction = best;
    res.confidence = double(probs[size_t(best)]);
    if (res.confidence > gamma) break;
    cur = {double(step.next_loc.value()[0]), double(step.next_loc.value()[1])};
  }
  return res;
}

struct EarlyExitPoint {
  double gamma = 0.0;
  double avg_t_stop = 0.0;
  double accuracy = 0.0;
};

template <typename T>
std::vector<EarlyExitPoint> evaluate_early_exit(const GlitrModel<T>& model, const Dataset& ds,
                                                const std::vector<double>& gammas,
                                                int threads = 0) {
  int n = ds.size();
  for (int i = 0; i < n; ++i) ds.clip(i);
  threads = resolve_threads(threads);
  std::vector<EarlyExitPoint> out;
  for (double g : gammas) {
    std::vector<long long> tsum(size_t(threads), 0);
    std::vector<int> csum(size_t(threads), 0);
    parallel_chunks(n, threads, [&](int w, int begin, int end) {
      for (int i = begin; i < end; ++i) {
        auto res = early_exit_run(model, ds.clip(i), g);
        tsum[size_t(w)] += res.t_stop;
        if (res.prediction == ds.label(i)) csum[size_t(w)]++;
      }
    });
    long long ts = 0;
    int cs = 0;
    for (int w = 0; w < threads; ++w) {
      ts += tsum[size_t(w)];
      cs += csum[size_t(w)];
    }
    out.push_back({g, double(ts) / n, double(cs) / n});
  }
  return out;
}

}  // namespace glitr
