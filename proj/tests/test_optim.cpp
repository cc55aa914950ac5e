#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "glitr/checkpoint.hpp"
#include "glitr/config.hpp"
#include "glitr/optimizer.hpp"
#include "glitr/rng.hpp"

using namespace glitr;
namespace fs = std::filesystem;

TEST_CASE("adamw minimizes a quadratic") {
  ParamSet<float> ps;
  Pcg32 rng(1);
  auto w = ps.add("m.w", Tensor::randn({4, 4}, rng));
  AdamW<float> opt(0.0, 200);
  opt.add_group({"m.", 0.05, 0});
  opt.register_params(ps);

  double first = 0;
  for (int it = 0; it < 200; ++it) {
    opt.zero_grad();
    auto loss = mse_loss(w, Var<float>::constant(Tensor::full({4, 4}, 0.5f)));
    if (it == 0) first = loss.value()[0];
    backward(loss);
    opt.step();
  }
  auto last = mse_loss(w, Var<float>::constant(Tensor::full({4, 4}, 0.5f)));
  CHECK(last.value()[0] < 0.01 * first);
}

TEST_CASE("cosine schedule decays and warmup ramps") {
  ParamSet<float> ps;
  auto w = ps.add("a.w", Tensor({2}));
  auto v = ps.add("b.w", Tensor({2}));
  (void)w;
  (void)v;
  AdamW<float> opt(0.0, 100);
  opt.add_group({"a.", 1.0, 0});
  opt.add_group({"b.", 1.0, 50});
  opt.register_params(ps);

  // group lr at step s uses cosine(s / total); warmup multiplies group b
  for (int s = 1; s <= 100; ++s) {
    opt.step();
    double cosine = 0.5 * (1 + std::cos(3.14159265358979323846 * s / 100.0));
    CHECK(opt.group_lr(0) == doctest::Approx(cosine));
    CHECK(opt.group_lr(1) == doctest::Approx(cosine * std::min(1.0, s / 50.0)));
  }
  CHECK(opt.group_lr(0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("weight decay applies to .w matrices only") {
  ParamSet<float> ps;
  auto w = ps.add("m.w", Tensor::full({3, 3}, 1.0f));
  auto b = ps.add("m.b", Tensor::full({3}, 1.0f));
  AdamW<float> opt(0.1, 10);
  opt.add_group({"m.", 0.5, 0});
  opt.register_params(ps);
  opt.zero_grad();  // zero grads: pure decay
  opt.step();
  CHECK(w.value()[0] < 1.0f);
  CHECK(b.value()[0] == 1.0f);
}

TEST_CASE("checkpoint round trip and validation") {
  auto dir = fs::temp_directory_path() / "glitr_ckpt_test";
  fs::create_directories(dir);
  auto path = dir / "model.ckpt";

  ParamSet<float> ps;
  Pcg32 rng(7);
  ps.add("x.w", Tensor::randn({3, 5}, rng));
  ps.add("x.b", Tensor::randn({5}, rng));
  save_checkpoint(ps, path);

  ParamSet<float> qs;
  qs.add("x.w", Tensor({3, 5}));
  qs.add("x.b", Tensor({5}));
  load_checkpoint(qs, path);
  for (size_t i = 0; i < 2; ++i) {
    const auto& a = ps.items[i].second.value();
    const auto& b = qs.items[i].second.value();
    for (size_t j = 0; j < a.numel(); ++j) CHECK(a[j] == b[j]);
  }

  ParamSet<float> wrong_shape;
  wrong_shape.add("x.w", Tensor({5, 3}));
  wrong_shape.add("x.b", Tensor({5}));
  CHECK_THROWS(load_checkpoint(wrong_shape, path));

  ParamSet<float> missing;
  missing.add("x.w", Tensor({3, 5}));
  CHECK_THROWS(load_checkpoint(missing, path));

  CHECK_THROWS(load_checkpoint(qs, dir / "nope.ckpt"));
}

TEST_CASE("config parsing, overrides, snapshot, key validation") {
  auto dir = fs::temp_directory_path() / "glitr_cfg_test";
  fs::create_directories(dir);
  auto path = dir / "a.cfg";
  std::ofstream(path) << "# comment\nepochs = 12\nlr_tc=1e-3\nname = run one  # trailing\n";

  Config c = Config::from_file(path);
  CHECK(c.get_int("epochs", 0) == 12);
  CHECK(c.get_double("lr_tc", 0) == doctest::Approx(1e-3));
  CHECK(c.get_string("name", "") == "run one");
  CHECK(c.get_int("missing", 7) == 7);

  c.set_pair("epochs=20");
  CHECK(c.get_int("epochs", 0) == 20);

  CHECK(c.snapshot() == "epochs=20\nlr_tc=1e-3\nname=run one\n");

  CHECK_THROWS(c.validate_keys({"epochs", "lr_tc"}));  // "name" unknown
  c.validate_keys({"epochs", "lr_tc", "name"});

  CHECK_THROWS(c.get_int("name", 0));
  std::ofstream(dir / "bad.cfg") << "keyonly\n";
  CHECK_THROWS(Config::from_file(dir / "bad.cfg"));
}
