#pragma once

// Full-frame online teacher and the offline oracle stand-in.
//
// Teacher training alternates two phases inside one step. Step 1: T_f
// encodes complete frames, T_c predicts per-step labels (cross entropy,
// plus KL to the offline oracle at the final step), and T_l predicts the
// glimpse track l_{2:T+1} from detached features (the last location is
// discarded). Step 2: glimpses are cropped at [l_1 (a learnable parameter),
// l_{2:T}] and pushed through frozen copies of T_f and T_c; feature MSE and
// per-step KL against the detached step-1 targets flow through the
// differentiable sampler into the locations, so they update only T_l and
// l_1. One optimizer update covers the summed objective.

#include <optional>
#include <vector>

#include "glitr/data.hpp"
#include "glitr/encoders.hpp"
#include "glitr/losses.hpp"

namespace glitr {

template <typename T>
struct TeacherModel {
  EncoderStack<T> stack;
  ParamSet<T> extra;        // holds l1.pre, kept apart so stack clones stay layout-compatible
  Var<T> l1_pre;            // pre-tanh 2-vector; tanh keeps the location in (-1,1)^2
  TensorT<T> frame_pos;     // constant full-frame position embeddings

  TeacherModel(const EncoderConfig& cfg, const GlimpseGeometry& geom, uint64_t seed)
      : stack(cfg, geom, seed) {
    geom.validate_full_frame();
    l1_pre = extra.add("l1.pre", TensorT<T>({2}));
    frame_pos = full_frame_position_embeddings<T>(geom, cfg.embed_dim);
  }

  TeacherModel clone(bool trainable = true) const {
    TeacherModel out(stack.cfg, stack.geom, 0);
    out.copy_values_from(*this);
    out.stack.params.set_trainable(trainable);
    out.extra.set_trainable(trainable);
    return out;
  }

  void copy_values_from(const TeacherModel& o) {
    stack.params.copy_values_from(o.stack.params);
    extra.copy_values_from(o.extra);
  }

  // one view over every parameter (nodes are shared, not copied)
  ParamSet<T> all_params() const {
    ParamSet<T> ps;
    ps.items = stack.params.items;
    ps.items.insert(ps.items.end(), extra.items.begin(), extra.items.end());
    return ps;
  }

  void zero_grad() {
    stack.params.zero_grad();
    extra.zero_grad();
  }

  GlimpseLocation first_location() const {
    return {std::tanh(double(l1_pre.value()[0])), std::tanh(double(l1_pre.value()[1]))};
  }
};

template <typename T>
struct TeacherForward {
  Var<T> features;   // [T, d]
  Var<T> logits;     // [T, K]
  Var<T> locations;  // [T, 2]; row t-1 is l_{t+1}, the final row is discarded downstream
};

// Step-1 pass over complete frames. Features fed to T_l are detached
// (stop-gradient from T_l to T_f).
template <typename T>
TeacherForward<T> teacher_forward(const TeacherModel<T>& model, const VideoClip& clip) {
  const auto& geom = model.stack.geom;
  int t_len = clip.frames.dim(0);
  if (clip.frames.dim(2) != geom.frame_h || clip.frames.dim(3) != geom.frame_w ||
      clip.frames.dim(1) != geom.channels)
    throw std::invalid_argument("teacher_forward: clip does not match geometry");

  Var<T> pos = Var<T>::constant(model.frame_pos);
  std::vector<Var<T>> feats, feats_det;
  feats.reserve(t_len);
  for (int t = 0; t < t_len; ++t) {
    TensorT<T> frame({geom.channels, geom.frame_h, geom.frame_w});
    const float* src = clip.frame_ptr(t);
    for (size_t i = 0; i < frame.numel(); ++i) frame[i] = T(src[i]);
    Var<T> f = model.stack.t_f.encode(extract_patches(Var<T>::constant(frame), geom.patch_p), pos);
    feats.push_back(f);
    feats_det.push_back(f.detach());
  }
  TeacherForward<T> out;
  out.features = concat_rows(feats);
  out.logits = model.stack.t_c.logits_all(out.features);
  out.locations = model.stack.t_l.locations_all(concat_rows(feats_det));
  return out;
}

// Detached consistency targets for student training.
struct TeacherTargets {
  Tensor features;  // [T, d]
  Tensor logits;    // [T, K]
};

template <typename T>
TeacherTargets teacher_targets(const TeacherModel<T>& model, const VideoClip& clip) {
  NoGradGuard ng;
  auto fwd = teacher_forward(model, clip);
  TeacherTargets out;
  out.features = Tensor(fwd.features.value().shape());
  for (size_t i = 0; i < out.features.numel(); ++i) out.features[i] = float(fwd.features.value()[i]);
  out.logits = Tensor(fwd.logits.value().shape());
  for (size_t i = 0; i < out.logits.numel(); ++i) out.logits[i] = float(fwd.logits.value()[i]);
  return out;
}

// The glimpse track the teacher would use: [l_1, l_{2:T}]; l_{T+1} discarded.
template <typename T>
std::vector<GlimpseLocation> teacher_locations(const TeacherModel<T>& model,
                                               const VideoClip& clip) {
  NoGradGuard ng;
  auto fwd = teacher_forward(model, clip);
  std::vector<GlimpseLocation> locs;
  locs.push_back(model.first_location());
  int t_len = clip.frames.dim(0);
  for (int t = 0; t + 1 < t_len; ++t)
    locs.push_back({double(fwd.locations.value().at(t, 0)), double(fwd.locations.value().at(t, 1))});
  return locs;
}

// Per-clip teacher objective; the frozen stack must be a value snapshot of
// the model taken before this step's update. Loss parts accumulate into
// `parts` unscaled.
template <typename T>
Var<T> teacher_clip_objective(const TeacherModel<T>& model, const EncoderStack<T>& frozen,
                              const VideoClip& clip, const TensorT<T>* oracle_logits,
                              const LossWeights& w, LossBreakdown& parts,
                              TeacherForward<T>* fwd_out = nullptr) {
  const auto& geom = model.stack.geom;
  int t_len = clip.frames.dim(0);
  auto fwd = teacher_forward(model, clip);
  if (fwd_out) *fwd_out = fwd;

  // zero-weight terms stay out of the graph entirely
  Var<T> total;
  auto add_term = [&](Var<T> term, double weight, double& slot) {
    slot += term.value()[0] * weight;
    Var<T> scaled = scale(term, T(weight));
    total = total.defined() ? add(total, scaled) : scaled;
  };

  // step 1 losses on the (T_f, T_c) path
  if (w.cls > 0) add_term(cls_loss(fwd.logits, clip.label), w.cls, parts.cls);
  if (w.dist > 0) {
    if (!oracle_logits)
      throw std::invalid_argument("teacher objective: distillation enabled but no oracle logits");
    add_term(distillation_loss(slice_rows(fwd.logits, t_len - 1, t_len), *oracle_logits), w.dist,
             parts.dist);
  }

  // step 2: glimpses at [l_1, l_{2:T}] through frozen copies
  if (w.spatial > 0 || w.temporal > 0) {
    std::vector<Var<T>> glimpse_feats;
    glimpse_feats.reserve(t_len);
    for (int t = 0; t < t_len; ++t) {
      Var<T> loc = t == 0 ? tanh_op(model.l1_pre)
                          : slice_rows(fwd.locations, t - 1, t);
      TensorT<T> frame({geom.channels, geom.frame_h, geom.frame_w});
      const float* src = clip.frame_ptr(t);
      for (size_t i = 0; i < frame.numel(); ++i) frame[i] = T(src[i]);
      Var<T> g = crop_glimpse(Var<T>::constant(frame), loc, geom);
      Var<T> pe = glimpse_pos_embed(loc, geom, model.stack.cfg.embed_dim);
      glimpse_feats.push_back(frozen.t_f.encode(extract_patches(g, geom.patch_p), pe));
    }
    Var<T> f_hat = concat_rows(glimpse_feats);
    Var<T> y_hat = frozen.t_c.logits_all(f_hat);
    // step-1 targets enter as plain tensors: detached by construction
    if (w.spatial > 0)
      add_term(spatial_consistency(f_hat, fwd.features.value()), w.spatial, parts.spatial);
    if (w.temporal > 0)
      add_term(temporal_consistency(y_hat, fwd.logits.value()), w.temporal, parts.temporal);
  }
  if (!total.defined()) throw std::invalid_argument("teacher objective: all loss weights are zero");
  return total;
}

// per-step validation accuracy of the full-frame teacher
template <typename T>
std::vector<double> teacher_accuracy(const TeacherModel<T>& model, const Dataset& ds,
                                     int threads_hint = 1) {
  (void)threads_hint;
  NoGradGuard ng;
  int t_len = ds.manifest().t;
  std::vector<int> correct(size_t(t_len), 0);
  for (int i = 0; i < ds.size(); ++i) {
    auto fwd = teacher_forward(model, ds.clip(i));
    for (int t = 0; t < t_len; ++t) {
      int best = 0;
      for (int k = 1; k < model.stack.cfg.num_classes; ++k)
        if (fwd.logits.value().at(t, k) > fwd.logits.value().at(t, best)) best = k;
      if (best == ds.label(i)) correct[size_t(t)]++;
    }
  }
  std::vector<double> acc;
  for (int t = 0; t < t_len; ++t) acc.push_back(double(correct[size_t(t)]) / ds.size());
  return acc;
}

// ------------------------------------------------------------ offline oracle

// Stand-in for a large offline recognizer: same spatial encoder, but a
// non-causal temporal transformer and a single clip-level head over the
// mean-pooled sequence. Trained separately on full frames.
template <typename T>
struct OracleModel {
  EncoderConfig cfg;
  GlimpseGeometry geom;
  ParamSet<T> params;
  SpatialEncoder<T> t_f;
  TemporalEncoder<T> temporal;
  LinearLayer<T> head;
  TensorT<T> frame_pos;

  OracleModel(const EncoderConfig& cfg_, const GlimpseGeometry& geom_, uint64_t seed)
      : cfg(cfg_), geom(geom_) {
    cfg.validate();
    geom.validate_full_frame();
    Pcg32 rng(seed);
    t_f = SpatialEncoder<T>(params, "o_f", cfg, geom.patch_dim(), rng);
    temporal = TemporalEncoder<T>(params, "o_t", cfg, /*causal=*/false, rng);
    head = LinearLayer<T>(params, "o_head", cfg.embed_dim, cfg.num_classes, rng);
    frame_pos = full_frame_position_embeddings<T>(geom, cfg.embed_dim);
  }

  OracleModel clone(bool trainable = true) const {
    OracleModel out(cfg, geom, 0);
    out.params.copy_values_from(params);
    out.params.set_trainable(trainable);
    return out;
  }

  void copy_values_from(const OracleModel& o) { params.copy_values_from(o.params); }

  // one clip-level logit row [1, K] from a bidirectional pass
  Var<T> forward_logits(const VideoClip& clip) const {
    int t_len = clip.frames.dim(0);
    Var<T> pos = Var<T>::constant(frame_pos);
    std::vector<Var<T>> feats;
    for (int t = 0; t < t_len; ++t) {
      TensorT<T> frame({geom.channels, geom.frame_h, geom.frame_w});
      const float* src = clip.frame_ptr(t);
      for (size_t i = 0; i < frame.numel(); ++i) frame[i] = T(src[i]);
      feats.push_back(t_f.encode(extract_patches(Var<T>::constant(frame), geom.patch_p), pos));
    }
    Var<T> hidden = temporal.encode(concat_rows(feats));
    TensorT<T> ones({1, t_len});
    ones.fill(T(1) / T(t_len));
    Var<T> pooled = matmul(Var<T>::constant(ones), hidden);
    return head.forward(pooled);
  }
};

// Detached clip-level oracle logits, consumed by the distillation loss.
template <typename T>
TensorT<T> offline_oracle_logits(const OracleModel<T>& oracle, const VideoClip& clip) {
  NoGradGuard ng;
  auto logits = oracle.forward_logits(clip);
  return TensorT<T>({oracle.cfg.num_classes},
                    std::vector<T>(logits.value().data(),
                                   logits.value().data() + logits.value().numel()));
}

template <typename T>
Var<T> oracle_clip_objective(const OracleModel<T>& oracle, const VideoClip& clip,
                             LossBreakdown& parts) {
  Var<T> loss = cls_loss(oracle.forward_logits(clip), clip.label);
  parts.cls += loss.value()[0];
  return loss;
}

}  // namespace glitr
