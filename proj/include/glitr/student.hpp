#pragma once

// The glimpse transformer itself: iterative rollout that only ever reads
// g x g crops, predicting the ongoing action and the next glimpse location
// after every glimpse. Training runs the same rollout differentiably and
// matches the frozen teacher's features and per-step class distributions.
//
// The feature sequence fed to T_l is detached (stop-gradient from T_l to
// T_f); all loss terms reach T_l only through the differentiable sampler's
// dependence on the predicted locations.

#include <vector>

#include "glitr/data.hpp"
#include "glitr/encoders.hpp"
#include "glitr/losses.hpp"
#include "glitr/teacher.hpp"

namespace glitr {

template <typename T>
struct GlitrModel {
  EncoderStack<T> stack;
  GlimpseLocation l_hat_1{0.0, 0.0};  // predefined first location: frame center

  GlitrModel(const EncoderConfig& cfg, const GlimpseGeometry& geom, uint64_t seed)
      : stack(cfg, geom, seed) {}

  GlitrModel clone(bool trainable = true) const {
    GlitrModel out(stack.cfg, stack.geom, 0);
    out.stack.params.copy_values_from(stack.params);
    out.stack.params.set_trainable(trainable);
    out.l_hat_1 = l_hat_1;
    return out;
  }

  void copy_values_from(const GlitrModel& o) { stack.params.copy_values_from(o.stack.params); }

  // the paper initializes the student from the trained teacher
  void init_from_teacher(const TeacherModel<T>& teacher) {
    for (auto& [name, var] : stack.params.items) {
      auto* src = const_cast<TeacherModel<T>&>(teacher).stack.params.find(name);
      if (!src) throw std::invalid_argument("teacher is missing student parameter: " + name);
      if (!var.value().same_shape(src->value()))
        throw std::invalid_argument("teacher/student shape mismatch for: " + name);
      var.value_mut() = src->value();
    }
  }
};

// running state of a rollout: the saved feature sequence, with a detached
// twin for the locator. detach_locator_input=false exists for the
// finite-difference suite only: central differences measure the true
// derivative, which a stop-gradient edge intentionally does not equal.
template <typename T>
struct GlitrState {
  std::vector<Var<T>> feats;
  std::vector<Var<T>> feats_detached;
  bool detach_locator_input = true;
  int t() const { return int(feats.size()); }
};

template <typename T>
struct GlitrStepOut {
  Var<T> glimpse;   // [C, g, g]
  Var<T> feature;   // [1, d]
  Var<T> logits;    // [1, K]
  Var<T> next_loc;  // [1, 2]
};

// Sensing + classification half of a step: crop g_t at l_t from x_t, encode,
// predict y_t from f_{1:t}. Used directly when locations are injected by an
// external strategy and the locator pass would be wasted.
template <typename T>
GlitrStepOut<T> glitr_encode_step(const GlitrModel<T>& model, GlitrState<T>& state,
                                  const TensorT<T>& frame, const Var<T>& loc,
                                  PixelAudit* audit = nullptr) {
  const auto& geom = model.stack.geom;
  if (state.t() >= model.stack.cfg.max_t)
    throw std::invalid_argument("glitr_step: rollout longer than max_t");
  if (frame.ndim() != 3 || frame.dim(0) != geom.channels || frame.dim(1) != geom.frame_h ||
      frame.dim(2) != geom.frame_w)
    throw std::invalid_argument("glitr_step: frame does not match geometry");

  GlitrStepOut<T> out;
  out.glimpse = crop_glimpse(Var<T>::constant(frame), loc, geom, audit);
  Var<T> pe = glimpse_pos_embed(loc, geom, model.stack.cfg.embed_dim);
  out.feature = model.stack.t_f.encode(extract_patches(out.glimpse, geom.patch_p), pe);
  state.feats.push_back(out.feature);
  state.feats_detached.push_back(state.detach_locator_input ? out.feature.detach()
                                                            : out.feature);

  int t = state.t();
  Var<T> seq = concat_rows(state.feats);
  out.logits = slice_rows(model.stack.t_c.logits_all(seq), t - 1, t);
  return out;
}

// One pass of the inference loop: crop g_t at l_t from x_t, encode, predict
// y_t from f_{1:t} and l_{t+1} from the detached f_{1:t}.
template <typename T>
GlitrStepOut<T> glitr_step(const GlitrModel<T>& model, GlitrState<T>& state,
                           const TensorT<T>& frame, const Var<T>& loc,
                           PixelAudit* audit = nullptr) {
  GlitrStepOut<T> out = glitr_encode_step(model, state, frame, loc, audit);
  int t = state.t();
  Var<T> seq_det = concat_rows(state.feats_detached);
  out.next_loc = slice_rows(model.stack.t_l.locations_all(seq_det), t - 1, t);
  return out;
}

// A full student episode: everything the model saw and produced.
struct RolloutTrace {
  std::vector<Tensor> glimpses;             // T of [C, g, g]
  std::vector<GlimpseLocation> locations;   // l_{1:T}
  Tensor features;                          // [T, d]
  Tensor logits;                            // [T, K]
  size_t pixels_read = 0;                   // distinct frame pixels, when audited
};

template <typename T>
TensorT<T> location_tensor(const GlimpseLocation& loc) {
  return TensorT<T>({2}, {T(loc.y), T(loc.x)});
}

namespace detail_student {

template <typename T>
Tensor to_float(const TensorT<T>& t) {
  Tensor out(t.shape());
  for (size_t i = 0; i < t.numel(); ++i) out[i] = float(t[i]);
  return out;
}

template <typename T>
TensorT<T> clip_frame(const VideoClip& clip, int t) {
  TensorT<T> frame({clip.frames.dim(1), clip.frames.dim(2), clip.frames.dim(3)});
  const float* src = clip.frame_ptr(t);
  for (size_t i = 0; i < frame.numel(); ++i) frame[i] = T(src[i]);
  return frame;
}

}  // namespace detail_student

// Inference rollout (no gradients). Only the sampler ever touches frame
// pixels; pass audit=true to count the distinct pixels read.
template <typename T>
RolloutTrace glitr_rollout(const GlitrModel<T>& model, const VideoClip& clip, bool audit = false) {
  NoGradGuard ng;
  const auto& geom = model.stack.geom;
  int t_len = clip.frames.dim(0);
  GlitrState<T> state;
  RolloutTrace trace;
  std::vector<Var<T>> logit_rows;
  GlimpseLocation cur = model.l_hat_1;
  PixelAudit pa;
  for (int t = 0; t < t_len; ++t) {
    if (audit) pa.reset(geom.frame_h, geom.frame_w);
    Var<T> loc = Var<T>::constant(location_tensor<T>(cur));
    auto frame = detail_student::clip_frame<T>(clip, t);
    auto step = glitr_step(model, state, frame, loc, audit ? &pa : nullptr);
    if (audit) trace.pixels_read += pa.distinct_pixels();
    trace.glimpses.push_back(detail_student::to_float(step.glimpse.value()));
    trace.locations.push_back(cur);
    logit_rows.push_back(step.logits);
    cur = {double(step.next_loc.value()[0]), double(step.next_loc.value()[1])};
  }
  trace.features = detail_student::to_float(concat_rows(state.feats).value());
  trace.logits = detail_student::to_float(concat_rows(logit_rows).value());
  return trace;
}

// Differentiable rollout + Eq.-style objective against precomputed teacher
// targets. Loss parts accumulate into `parts` unscaled by batch size.
template <typename T>
Var<T> student_clip_objective(const GlitrModel<T>& model, const VideoClip& clip,
                              const TeacherTargets& targets, const LossWeights& w,
                              LossBreakdown& parts, bool detach_locator_input = true,
                              const GlimpseLocation* loc_override = nullptr) {
  int t_len = clip.frames.dim(0);
  bool need_targets = w.spatial > 0 || w.temporal > 0;
  if (need_targets && (targets.features.rows() != t_len || targets.logits.rows() != t_len))
    throw std::invalid_argument("student objective: teacher targets missing or wrong length");

  GlitrState<T> state;
  state.detach_locator_input = detach_locator_input;
  std::vector<Var<T>> logit_rows;
  Var<T> loc = Var<T>::constant(
      location_tensor<T>(loc_override ? *loc_override : model.l_hat_1));
  for (int t = 0; t < t_len; ++t) {
    auto frame = detail_student::clip_frame<T>(clip, t);
    if (loc_override) {
      // forced-location training: the locator plays no part
      auto step = glitr_encode_step(model, state, frame, loc, nullptr);
      logit_rows.push_back(step.logits);
      loc = Var<T>::constant(location_tensor<T>(*loc_override));
    } else {
      auto step = glitr_step(model, state, frame, loc, nullptr);
      logit_rows.push_back(step.logits);
      loc = step.next_loc;  // keep the graph: losses reach T_l through the sampler
    }
  }
  Var<T> logits = concat_rows(logit_rows);
  Var<T> feats = concat_rows(state.feats);

  TensorT<T> tf, tl;
  if (need_targets) {
    tf = TensorT<T>(targets.features.shape());
    for (size_t i = 0; i < tf.numel(); ++i) tf[i] = T(targets.features[i]);
    tl = TensorT<T>(targets.logits.shape());
    for (size_t i = 0; i < tl.numel(); ++i) tl[i] = T(targets.logits[i]);
  }

  Var<T> total;
  auto add_term = [&](Var<T> term, double weight, double& slot) {
    slot += term.value()[0] * weight;
    Var<T> scaled = scale(term, T(weight));
    total = total.defined() ? add(total, scaled) : scaled;
  };
  if (w.cls > 0) add_term(cls_loss(logits, clip.label), w.cls, parts.cls);
  if (w.spatial > 0) add_term(spatial_consistency(feats, tf), w.spatial, parts.spatial);
  if (w.temporal > 0) add_term(temporal_consistency(logits, tl), w.temporal, parts.temporal);
  if (!total.defined()) throw std::invalid_argument("student objective: all loss weights are zero");
  return total;
}

}  // namespace glitr
