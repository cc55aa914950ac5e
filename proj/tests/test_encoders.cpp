#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "glitr/encoders.hpp"
#include "glitr/rng.hpp"

using namespace glitr;

namespace {

EncoderConfig small_cfg() {
  EncoderConfig c;
  c.embed_dim = 16;
  c.spatial_depth = 2;
  c.spatial_heads = 2;
  c.temporal_depth = 2;
  c.temporal_heads = 2;
  c.mlp_ratio = 2;
  c.num_classes = 5;
  c.max_t = 6;
  return c;
}

DTensor randt(std::vector<int> shape, uint64_t seed, double sd = 1.0) {
  Pcg32 rng(seed);
  return DTensor::randn(std::move(shape), rng, sd);
}

}  // namespace

TEST_CASE("spatial_encode output is a length-d class token feature") {
  EncoderConfig cfg = small_cfg();
  ParamSet<double> ps;
  Pcg32 rng(1);
  SpatialEncoder<double> enc(ps, "t", cfg, 12, rng);
  for (int n : {4, 9, 16}) {
    auto out = enc.encode(Var<double>::constant(randt({n, 12}, 100 + n)),
                          Var<double>::constant(randt({n, 16}, 200 + n)));
    CHECK(out.value().rows() == 1);
    CHECK(out.value().cols() == 16);
    CHECK(out.value().all_finite());
  }
}

TEST_CASE("spatial_encode is invariant to patch permutation") {
  EncoderConfig cfg = small_cfg();
  ParamSet<double> ps;
  Pcg32 rng(2);
  SpatialEncoder<double> enc(ps, "t", cfg, 12, rng);
  int n = 6;
  DTensor patches = randt({n, 12}, 3);
  DTensor pos = randt({n, 16}, 4);
  auto base = enc.encode(Var<double>::constant(patches), Var<double>::constant(pos));

  int perm[6] = {3, 0, 5, 1, 4, 2};
  DTensor pp({n, 12}), posp({n, 16});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 12; ++j) pp.at(i, j) = patches.at(perm[i], j);
    for (int j = 0; j < 16; ++j) posp.at(i, j) = pos.at(perm[i], j);
  }
  auto permuted = enc.encode(Var<double>::constant(pp), Var<double>::constant(posp));
  for (int j = 0; j < 16; ++j)
    CHECK(std::abs(base.value()[j] - permuted.value()[j]) < 1e-5);
}

TEST_CASE("spatial_encode matches a hand-computed forward pass") {
  // 1 block, 1 head, d=4, 2 patches, handcrafted weights
  EncoderConfig cfg;
  cfg.embed_dim = 4;
  cfg.spatial_depth = 1;
  cfg.spatial_heads = 1;
  cfg.mlp_ratio = 2;
  cfg.num_classes = 2;
  cfg.max_t = 1;
  ParamSet<double> ps;
  Pcg32 rng(5);
  SpatialEncoder<double> enc(ps, "t", cfg, 3, rng);

  // deterministic handcrafted fill for every parameter
  auto craft = [](Var<double>& v, double phase) {
    auto& t = v.value_mut();
    for (size_t i = 0; i < t.numel(); ++i)
      t[i] = 0.1 * (double((i * 7 + size_t(phase * 10)) % 9) - 4.0);
  };
  int idx = 0;
  for (auto& [name, v] : ps.items) {
    if (name.find(".gain") != std::string::npos)
      v.value_mut().fill(1.0);
    else if (name.find(".bias") != std::string::npos && name.find("ln") != std::string::npos)
      v.value_mut().fill(0.0);
    else
      craft(v, 0.3 * (++idx));
  }

  DTensor patches({2, 3}, {0.5, -0.2, 0.8, -0.4, 0.1, 0.9});
  DTensor pos({2, 4}, {0.1, 0.2, -0.1, 0.0, -0.3, 0.1, 0.4, 0.2});
  auto got = enc.encode(Var<double>::constant(patches), Var<double>::constant(pos));

  // ---- independent plain-loop oracle ----
  auto get = [&](const std::string& n) { return ps.find(n)->value(); };
  auto lin = [](const DTensor& x, const DTensor& w, const DTensor& b) {
    int m = x.rows(), in = x.cols(), out = w.cols();
    DTensor y({m, out});
    for (int i = 0; i < m; ++i)
      for (int o = 0; o < out; ++o) {
        double s = b[o];
        for (int k = 0; k < in; ++k) s += x.at(i, k) * w.at(k, o);
        y.at(i, o) = s;
      }
    return y;
  };
  auto ln_rows = [](const DTensor& x) {
    DTensor y(x.shape());
    int m = x.rows(), n = x.cols();
    for (int i = 0; i < m; ++i) {
      double mu = 0, var = 0;
      for (int j = 0; j < n; ++j) mu += x.at(i, j);
      mu /= n;
      for (int j = 0; j < n; ++j) var += (x.at(i, j) - mu) * (x.at(i, j) - mu);
      var /= n;
      for (int j = 0; j < n; ++j) y.at(i, j) = (x.at(i, j) - mu) / std::sqrt(var + 1e-5);
    }
    return y;
  };
  auto gelu_s = [](double v) {
    return 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / 3.14159265358979323846) *
                                      (v + 0.044715 * v * v * v)));
  };

  DTensor tok = lin(patches, get("t.patch_proj.w"), get("t.patch_proj.b"));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) tok.at(i, j) += pos.at(i, j);
  DTensor x({3, 4});
  for (int j = 0; j < 4; ++j) x.at(0, j) = get("t.cls").at(0, j);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) x.at(i + 1, j) = tok.at(i, j);

  DTensor h = ln_rows(x);
  DTensor qkv = lin(h, get("t.blk0.qkv.w"), get("t.blk0.qkv.b"));
  DTensor att({3, 4});
  for (int i = 0; i < 3; ++i) {
    double sc[3], mx = -1e300;
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int c = 0; c < 4; ++c) s += qkv.at(i, c) * qkv.at(j, 4 + c);
      sc[j] = s / 2.0;  // 1/sqrt(4)
      mx = std::max(mx, sc[j]);
    }
    double den = 0;
    for (int j = 0; j < 3; ++j) {
      sc[j] = std::exp(sc[j] - mx);
      den += sc[j];
    }
    for (int c = 0; c < 4; ++c) {
      double o = 0;
      for (int j = 0; j < 3; ++j) o += sc[j] / den * qkv.at(j, 8 + c);
      att.at(i, c) = o;
    }
  }
  DTensor proj = lin(att, get("t.blk0.proj.w"), get("t.blk0.proj.b"));
  for (size_t i = 0; i < x.numel(); ++i) x[i] += proj[i];
  DTensor m2 = ln_rows(x);
  DTensor f1 = lin(m2, get("t.blk0.fc1.w"), get("t.blk0.fc1.b"));
  for (size_t i = 0; i < f1.numel(); ++i) f1[i] = gelu_s(f1[i]);
  DTensor f2 = lin(f1, get("t.blk0.fc2.w"), get("t.blk0.fc2.b"));
  for (size_t i = 0; i < x.numel(); ++i) x[i] += f2[i];
  DTensor fin = ln_rows(x);

  for (int j = 0; j < 4; ++j)
    CHECK(std::abs(got.value()[j] - fin.at(0, j)) < 1e-6);
}

TEST_CASE("temporal_encode: causality and prefix independence") {
  EncoderConfig cfg = small_cfg();
  ParamSet<double> ps;
  Pcg32 rng(7);
  TemporalEncoder<double> enc(ps, "t", cfg, true, rng);

  DTensor feats = randt({4, 16}, 8);
  auto base = enc.encode(Var<double>::constant(feats));

  // t=1: function of the first feature alone
  auto one = enc.encode(Var<double>::constant(
      DTensor({1, 16}, std::vector<double>(feats.data(), feats.data() + 16))));
  for (int j = 0; j < 16; ++j) CHECK(one.value()[j] == base.value().at(0, j));

  // noise in the last step leaves earlier rows bit-identical
  DTensor noisy = feats;
  Pcg32 nz(9);
  for (int j = 0; j < 16; ++j) noisy.at(3, j) = nz.gauss_bm() * 10;
  auto pert = enc.encode(Var<double>::constant(noisy));
  CHECK(std::memcmp(base.value().data(), pert.value().data(), 3 * 16 * sizeof(double)) == 0);
}

TEST_CASE("temporal_encode: incremental equals single pass (32-bit)") {
  EncoderConfig cfg = small_cfg();
  ParamSet<float> ps;
  Pcg32 rng(10);
  TemporalEncoder<float> enc(ps, "t", cfg, true, rng);
  Tensor feats = Tensor::randn({6, 16}, rng);

  auto full = enc.encode(Var<float>::constant(feats));
  for (int t = 1; t <= 6; ++t) {
    Tensor prefix({t, 16});
    for (size_t i = 0; i < prefix.numel(); ++i) prefix[i] = feats[i];
    auto h = enc.encode(Var<float>::constant(prefix));
    for (int s = 0; s < t; ++s)
      for (int j = 0; j < 16; ++j)
        CHECK(std::abs(h.value().at(s, j) - full.value().at(s, j)) <= 1e-6f);
  }
}

TEST_CASE("temporal_encode rejects sequences longer than max_t") {
  EncoderConfig cfg = small_cfg();
  ParamSet<double> ps;
  Pcg32 rng(11);
  TemporalEncoder<double> enc(ps, "t", cfg, true, rng);
  CHECK_THROWS(enc.encode(Var<double>::constant(randt({cfg.max_t + 1, 16}, 12))));
}

TEST_CASE("classify: zero weights, identity weights, matmul oracle") {
  ParamSet<double> ps;
  Pcg32 rng(13);
  LinearLayer<double> head(ps, "h", 4, 4, rng);

  head.w.value_mut().fill(0.0);
  head.b.value_mut().fill(0.0);
  auto z = classify(head, Var<double>::constant(randt({1, 4}, 14)));
  for (int j = 0; j < 4; ++j) CHECK(z.value()[j] == 0.0);

  for (int i = 0; i < 4; ++i) head.w.value_mut().at(i, i) = 1.0;
  DTensor hid = randt({1, 4}, 15);
  auto id = classify(head, Var<double>::constant(hid));
  for (int j = 0; j < 4; ++j) CHECK(id.value()[j] == doctest::Approx(hid[j]));

  ParamSet<double> ps2;
  LinearLayer<double> head2(ps2, "h", 5, 3, rng);
  DTensor hrow = randt({2, 5}, 16);
  auto got = classify(head2, Var<double>::constant(hrow));
  for (int i = 0; i < 2; ++i)
    for (int o = 0; o < 3; ++o) {
      double s = head2.b.value()[o];
      for (int k = 0; k < 5; ++k) s += hrow.at(i, k) * head2.w.value().at(k, o);
      CHECK(std::abs(got.value().at(i, o) - s) < 1e-6);
    }
}

TEST_CASE("locate: zero preactivation, saturation, affine+tanh oracle, range") {
  ParamSet<double> ps;
  Pcg32 rng(17);
  LinearLayer<double> head(ps, "h", 4, 2, rng);

  head.w.value_mut().fill(0.0);
  head.b.value_mut().fill(0.0);
  auto c = locate(head, Var<double>::constant(randt({1, 4}, 18)));
  CHECK(c.value()[0] == 0.0);
  CHECK(c.value()[1] == 0.0);

  head.b.value_mut()[0] = 20.0;
  head.b.value_mut()[1] = 20.0;
  auto sat = locate(head, Var<double>::constant(DTensor({1, 4})));
  CHECK(std::abs(sat.value()[0] - 1.0) < 1e-8);
  CHECK(std::abs(sat.value()[1] - 1.0) < 1e-8);

  ParamSet<double> ps2;
  LinearLayer<double> head2(ps2, "h", 6, 2, rng);
  DTensor hid = randt({3, 6}, 19, 3.0);
  auto got = locate(head2, Var<double>::constant(hid));
  for (int i = 0; i < 3; ++i)
    for (int o = 0; o < 2; ++o) {
      double s = head2.b.value()[o];
      for (int k = 0; k < 6; ++k) s += hid.at(i, k) * head2.w.value().at(k, o);
      CHECK(std::abs(got.value().at(i, o) - std::tanh(s)) < 1e-6);
      CHECK(got.value().at(i, o) > -1.0);
      CHECK(got.value().at(i, o) < 1.0);
    }
}

TEST_CASE("encoder stack clone: identical outputs, frozen copies take no grads") {
  EncoderConfig cfg = small_cfg();
  GlimpseGeometry geom{16, 16, 8, 4, 1};
  EncoderStack<double> stack(cfg, geom, 21);
  auto frozen = stack.clone(/*trainable=*/false);

  DTensor patches = randt({4, geom.patch_dim()}, 22);
  DTensor pos = randt({4, 16}, 23);
  auto a = stack.t_f.encode(Var<double>::constant(patches), Var<double>::constant(pos));
  auto b = frozen.t_f.encode(Var<double>::constant(patches), Var<double>::constant(pos));
  CHECK(std::memcmp(a.value().data(), b.value().data(), 16 * sizeof(double)) == 0);

  for (auto& [n, v] : frozen.params.items) CHECK_FALSE(v.requires_grad());

  // grads flow through a frozen encoder to its inputs but not its weights
  Var<double> leaf = Var<double>::leaf(patches, true);
  auto out = frozen.t_f.encode(leaf, Var<double>::constant(pos));
  backward(sum_all(out));
  bool any = false;
  for (size_t i = 0; i < leaf.grad().numel(); ++i) any = any || leaf.grad()[i] != 0;
  CHECK(any);
  for (auto& [n, v] : frozen.params.items) {
    auto g = v.grad();
    for (size_t i = 0; i < g.numel(); ++i) REQUIRE(g[i] == 0.0);
  }
}
