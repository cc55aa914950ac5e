#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glitr/gradcheck.hpp"
#include "glitr/losses.hpp"
#include "glitr/rng.hpp"

using namespace glitr;

namespace {

DTensor randt(std::vector<int> shape, uint64_t seed, double sd = 1.0) {
  Pcg32 rng(seed);
  return DTensor::randn(std::move(shape), rng, sd);
}

}  // namespace

TEST_CASE("cls_loss: uniform logits give ln K") {
  for (int t : {1, 3, 7}) {
    auto l = cls_loss(Var<double>::constant(DTensor({t, 4})), 2);
    CHECK(l.value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
  }
}

TEST_CASE("cls_loss: saturated true class, per-step oracle, label check") {
  DTensor sat({2, 4});
  sat.at(0, 1) = 30.0;
  sat.at(1, 1) = 30.0;
  CHECK(cls_loss(Var<double>::constant(sat), 1).value()[0] < 1e-9);

  DTensor logits = randt({2, 5}, 3);
  int y = 3;
  double want = 0;
  for (int i = 0; i < 2; ++i) {
    double mx = -1e300, den = 0;
    for (int j = 0; j < 5; ++j) mx = std::max(mx, logits.at(i, j));
    for (int j = 0; j < 5; ++j) den += std::exp(logits.at(i, j) - mx);
    want -= logits.at(i, y) - mx - std::log(den);
  }
  want /= 2;
  CHECK(std::abs(cls_loss(Var<double>::constant(logits), y).value()[0] - want) < 1e-6);

  CHECK_THROWS(cls_loss(Var<double>::constant(logits), 5));
  CHECK_THROWS(cls_loss(Var<double>::constant(logits), -1));
}

TEST_CASE("cls_loss is nonnegative, equals ln K only for constant rows") {
  Pcg32 rng(4);
  for (int it = 0; it < 20; ++it) {
    DTensor logits = DTensor::randn({3, 6}, rng, 2.0);
    double v = cls_loss(Var<double>::constant(logits), it % 6).value()[0];
    CHECK(v >= 0.0);
  }
  // constant but nonzero rows still give ln K (shift invariance)
  DTensor c = DTensor::full({2, 6}, 3.7);
  CHECK(cls_loss(Var<double>::constant(c), 0).value()[0] ==
        doctest::Approx(std::log(6.0)).epsilon(1e-9));
}

TEST_CASE("spatial_consistency: zero, unit offset, brute-force oracle") {
  DTensor f = randt({4, 8}, 5);
  CHECK(spatial_consistency(Var<double>::constant(f), f).value()[0] == 0.0);

  DTensor g = f;
  for (size_t i = 0; i < g.numel(); ++i) g[i] += 1.0;
  CHECK(spatial_consistency(Var<double>::constant(g), f).value()[0] ==
        doctest::Approx(1.0).epsilon(1e-12));

  DTensor a = randt({3, 5}, 6), b = randt({3, 5}, 7);
  double want = 0;
  for (size_t i = 0; i < a.numel(); ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
  want /= double(a.numel());
  CHECK(std::abs(spatial_consistency(Var<double>::constant(a), b).value()[0] - want) < 1e-6);

  CHECK_THROWS(spatial_consistency(Var<double>::constant(a), randt({3, 4}, 8)));
}

TEST_CASE("temporal_consistency: identity, closed form, nonnegativity") {
  DTensor l = randt({3, 4}, 9);
  CHECK(temporal_consistency(Var<double>::constant(l), l).value()[0] ==
        doctest::Approx(0.0).epsilon(1e-12));

  // teacher [ln 2, ln 1] vs uniform student, K=2
  DTensor teacher({1, 2}, {std::log(2.0), 0.0});
  DTensor student({1, 2});
  double got = temporal_consistency(Var<double>::constant(student), teacher).value()[0];
  double want = (2.0 / 3) * std::log((2.0 / 3) / 0.5) + (1.0 / 3) * std::log((1.0 / 3) / 0.5);
  CHECK(std::abs(got - want) < 1e-9);
  CHECK(got == doctest::Approx(0.0566).epsilon(1e-2));

  Pcg32 rng(10);
  for (int it = 0; it < 100; ++it) {
    DTensor a = DTensor::randn({2, 5}, rng, 1.5);
    DTensor b = DTensor::randn({2, 5}, rng, 1.5);
    CHECK(temporal_consistency(Var<double>::constant(a), b).value()[0] >= 0.0);
  }

  CHECK_THROWS(temporal_consistency(Var<double>::constant(l), randt({2, 4}, 11)));
}

TEST_CASE("distillation_loss: identity and closed form") {
  DTensor l = randt({5}, 12);
  CHECK(distillation_loss(Var<double>::constant(l), l).value()[0] ==
        doctest::Approx(0.0).epsilon(1e-12));

  DTensor oracle({2}, {std::log(2.0), 0.0});
  DTensor final_logits({2});
  double got = distillation_loss(Var<double>::constant(final_logits), oracle).value()[0];
  double want = (2.0 / 3) * std::log((2.0 / 3) / 0.5) + (1.0 / 3) * std::log((1.0 / 3) / 0.5);
  CHECK(std::abs(got - want) < 1e-9);

  CHECK_THROWS(distillation_loss(Var<double>::constant(l), randt({4}, 13)));
}

TEST_CASE("total_objective: role sums, exact bit-level addition") {
  LossBreakdown zero;
  CHECK(total_objective(zero, Role::student) == 0.0);
  CHECK(total_objective(zero, Role::teacher) == 0.0);

  LossBreakdown p;
  p.cls = 1.0;
  p.spatial = 2.0;
  p.temporal = 3.0;
  p.dist = 4.0;
  CHECK(total_objective(p, Role::student) == 6.0);  // dist ignored
  CHECK(total_objective(p, Role::teacher) == 10.0);

  // bit-level: total is literally cls + spatial + temporal (+ dist)
  LossBreakdown q;
  q.cls = 0.1;
  q.spatial = 0.2;
  q.temporal = 0.3;
  q.dist = 0.4;
  CHECK(total_objective(q, Role::student) == q.cls + q.spatial + q.temporal);
  CHECK(total_objective(q, Role::teacher) == q.cls + q.spatial + q.temporal + q.dist);
}

TEST_CASE("loss gradients match finite differences") {
  const double tol = 1e-4;
  DTensor logits = randt({3, 5}, 14);
  CHECK(grad_check([&](const Var<double>& v) { return cls_loss(v, 2); }, logits) < tol);

  DTensor target = randt({3, 5}, 15);
  CHECK(grad_check([&](const Var<double>& v) { return spatial_consistency(v, target); },
                   logits) < tol);
  CHECK(grad_check([&](const Var<double>& v) { return temporal_consistency(v, target); },
                   logits) < tol);

  DTensor fin = randt({4}, 16);
  DTensor oracle = randt({4}, 17);
  CHECK(grad_check([&](const Var<double>& v) { return distillation_loss(v, oracle); }, fin) < tol);
}
