#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "glitr/optimizer.hpp"
#include "glitr/teacher.hpp"

using namespace glitr;

namespace {

EncoderConfig tiny_cfg() {
  EncoderConfig c;
  c.embed_dim = 32;
  c.spatial_depth = 2;
  c.spatial_heads = 2;
  c.temporal_depth = 1;
  c.temporal_heads = 2;
  c.mlp_ratio = 2;
  c.num_classes = 8;
  c.max_t = 4;
  return c;
}

GlimpseGeometry tiny_geom() { return GlimpseGeometry{32, 32, 16, 8, 1}; }

VideoClip tiny_clip(uint64_t seed, int label) {
  return generate_clip(seed, label, tiny_geom(), 4, DataVariant::centered);
}

constexpr const DTensor* kNoOracle = nullptr;

bool all_zero(const DTensor& t) {
  for (size_t i = 0; i < t.numel(); ++i)
    if (t[i] != 0.0) return false;
  return true;
}
bool any_nonzero(const DTensor& t) { return !all_zero(t); }

}  // namespace

TEST_CASE("teacher forward: shapes, causality, location range, discard rule") {
  TeacherModel<double> model(tiny_cfg(), tiny_geom(), 3);
  auto clip = tiny_clip(11, 3);

  NoGradGuard ng;
  auto fwd = teacher_forward(model, clip);
  CHECK(fwd.features.value().rows() == 4);
  CHECK(fwd.features.value().cols() == 32);
  CHECK(fwd.logits.value().rows() == 4);
  CHECK(fwd.logits.value().cols() == 8);
  CHECK(fwd.locations.value().rows() == 4);  // l_{2:T+1} exists in the forward output
  for (size_t i = 0; i < fwd.locations.value().numel(); ++i) {
    CHECK(fwd.locations.value()[i] > -1.0);
    CHECK(fwd.locations.value()[i] < 1.0);
  }

  // the downstream track is [l_1, l_{2:T}]: length T, the last row discarded
  auto locs = teacher_locations(model, clip);
  CHECK(locs.size() == 4);

  // perturbing the final frame leaves earlier logits bit-identical
  VideoClip pert = clip;
  size_t per = pert.frames.numel() / 4;
  for (size_t i = 0; i < per; ++i) pert.frames[3 * per + i] = 0.123f;
  auto fwd2 = teacher_forward(model, pert);
  CHECK(std::memcmp(fwd.logits.value().data(), fwd2.logits.value().data(),
                    3 * 8 * sizeof(double)) == 0);

  // wrong geometry is rejected
  auto bad = generate_clip(1, 0, GlimpseGeometry{64, 64, 16, 8, 1}, 4, DataVariant::centered);
  CHECK_THROWS(teacher_forward(model, bad));
}

TEST_CASE("gradient routing: consistency updates only T_l and l_1, cls only T_f/T_c") {
  TeacherModel<double> model(tiny_cfg(), tiny_geom(), 5);
  auto frozen = model.stack.clone(false);
  std::vector<VideoClip> batch = {tiny_clip(21, 0), tiny_clip(22, 5)};

  // consistency-only objective
  model.zero_grad();
  {
    LossWeights w{0.0, 1.0, 1.0, 0.0};
    LossBreakdown parts;
    for (const auto& clip : batch)
      backward(teacher_clip_objective(model, frozen, clip, kNoOracle, w, parts));
  }
  bool tl_any = false;
  for (auto& [name, v] : model.stack.params.items) {
    if (name.rfind("t_f.", 0) == 0 || name.rfind("t_c.", 0) == 0) {
      INFO("param ", name);
      CHECK(all_zero(v.grad()));
    } else if (name.rfind("t_l.", 0) == 0) {
      tl_any = tl_any || any_nonzero(v.grad());
    }
  }
  CHECK(tl_any);
  CHECK(any_nonzero(model.l1_pre.grad()));  // l_1 learns whenever spatial loss is active

  // frozen copies accumulate nothing
  for (auto& [name, v] : frozen.params.items) CHECK(all_zero(v.grad()));

  // cls-only objective: zero everywhere on T_l
  model.zero_grad();
  {
    LossWeights w{1.0, 0.0, 0.0, 0.0};
    LossBreakdown parts;
    for (const auto& clip : batch)
      backward(teacher_clip_objective(model, frozen, clip, kNoOracle, w, parts));
  }
  bool tf_any = false;
  for (auto& [name, v] : model.stack.params.items) {
    if (name.rfind("t_l.", 0) == 0) {
      INFO("param ", name);
      CHECK(all_zero(v.grad()));
    } else if (name.rfind("t_f.", 0) == 0) {
      tf_any = tf_any || any_nonzero(v.grad());
    }
  }
  CHECK(tf_any);
  CHECK(all_zero(model.l1_pre.grad()));
}

TEST_CASE("discarded location receives no gradient") {
  TeacherModel<double> model(tiny_cfg(), tiny_geom(), 6);
  auto frozen = model.stack.clone(false);
  auto clip = tiny_clip(31, 2);

  model.zero_grad();
  LossWeights w{1.0, 1.0, 1.0, 0.0};
  LossBreakdown parts;
  TeacherForward<double> fwd;
  backward(teacher_clip_objective(model, frozen, clip, kNoOracle, w, parts, &fwd));

  DTensor lg = fwd.locations.grad();
  REQUIRE(lg.rows() == 4);
  // rows 0..T-2 drive glimpses; the final row (l_{T+1}) is discarded
  bool used_any = false;
  for (int t = 0; t < 3; ++t)
    used_any = used_any || lg.at(t, 0) != 0.0 || lg.at(t, 1) != 0.0;
  CHECK(used_any);
  CHECK(lg.at(3, 0) == 0.0);
  CHECK(lg.at(3, 1) == 0.0);
}

TEST_CASE("frozen copy fidelity inside a step") {
  TeacherModel<double> model(tiny_cfg(), tiny_geom(), 7);
  auto frozen = model.stack.clone(false);
  auto clip = tiny_clip(41, 4);

  NoGradGuard ng;
  DTensor frame({1, 32, 32});
  const float* src = clip.frame_ptr(0);
  for (size_t i = 0; i < frame.numel(); ++i) frame[i] = src[i];
  auto patches = extract_patches(Var<double>::constant(frame), 8);
  auto pos = Var<double>::constant(full_frame_position_embeddings<double>(tiny_geom(), 32));
  auto a = model.stack.t_f.encode(patches, pos);
  auto b = frozen.t_f.encode(patches, pos);
  CHECK(std::memcmp(a.value().data(), b.value().data(), 32 * sizeof(double)) == 0);
}

TEST_CASE("distillation: disabled contributes nothing, enabled requires an oracle") {
  TeacherModel<double> model(tiny_cfg(), tiny_geom(), 8);
  auto frozen = model.stack.clone(false);
  auto clip = tiny_clip(51, 1);

  LossWeights off{1.0, 1.0, 1.0, 0.0};
  LossBreakdown parts;
  auto total = teacher_clip_objective(model, frozen, clip, kNoOracle, off, parts);
  CHECK(parts.dist == 0.0);
  CHECK(total.value()[0] == doctest::Approx(parts.cls + parts.spatial + parts.temporal));

  LossWeights on{1.0, 1.0, 1.0, 1.0};
  LossBreakdown p2;
  CHECK_THROWS(teacher_clip_objective(model, frozen, clip, kNoOracle, on, p2));

  OracleModel<double> oracle(tiny_cfg(), tiny_geom(), 9);
  auto ol = offline_oracle_logits(oracle, clip);
  CHECK(ol.numel() == 8);
  LossBreakdown p3;
  auto t2 = teacher_clip_objective(model, frozen, clip, &ol, on, p3);
  CHECK(p3.dist > 0.0);
  CHECK(t2.value().all_finite());
}

TEST_CASE("determinism: identical batch gives identical loss breakdown") {
  TeacherModel<double> model(tiny_cfg(), tiny_geom(), 10);
  auto frozen = model.stack.clone(false);
  auto clip = tiny_clip(61, 6);
  LossWeights w{1.0, 1.0, 1.0, 0.0};

  LossBreakdown a, b;
  auto va = teacher_clip_objective(model, frozen, clip, kNoOracle, w, a);
  auto vb = teacher_clip_objective(model, frozen, clip, kNoOracle, w, b);
  CHECK(va.value()[0] == vb.value()[0]);
  CHECK(a.cls == b.cls);
  CHECK(a.spatial == b.spatial);
  CHECK(a.temporal == b.temporal);
}

TEST_CASE("teacher overfits a fixed batch: total loss halves in 200 steps") {
  EncoderConfig cfg = tiny_cfg();
  GlimpseGeometry geom = tiny_geom();
  TeacherModel<float> model(cfg, geom, 12);
  std::vector<VideoClip> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(tiny_clip(100 + uint64_t(i), i % 8));

  // cosine horizon past the run keeps late steps adapting to settled features
  AdamW<float> opt(0.05, 400);
  opt.add_group({"t_f.", 3e-3, 0});
  opt.add_group({"t_c.", 3e-3, 0});
  opt.add_group({"t_l.", 3e-3, 0});
  opt.add_group({"l1.", 3e-3, 0});
  opt.register_params(model.stack.params);
  opt.register_params(model.extra);

  LossWeights w{1.0, 1.0, 1.0, 0.0};
  double first = 0, last = 0;
  for (int step = 0; step < 200; ++step) {
    opt.zero_grad();
    auto frozen = model.stack.clone(false);
    LossBreakdown parts;
    for (const auto& clip : batch) {
      auto total = teacher_clip_objective(model, frozen, clip, static_cast<const Tensor*>(nullptr), w, parts);
      backward(scale(total, 1.0f / 8));
    }
    double loss = total_objective(parts, Role::teacher) / 8;
    if (!std::isfinite(loss)) FAIL("non-finite teacher loss at step ", step);
    if (step == 0) first = loss;
    last = loss;
    opt.step();
  }
  INFO("teacher overfit: first ", first, " last ", last);
  CHECK(last <= 0.5 * first);
}
