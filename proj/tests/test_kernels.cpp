#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "glitr/kernels.hpp"
#include "glitr/rng.hpp"

using namespace glitr;
namespace k = glitr::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(size_t n, Pcg32& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-2.0, 2.0));
  return v;
}

template <typename T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    double d = std::abs(double(a[i]) - double(b[i]));
    double s = std::max({std::abs(double(a[i])), std::abs(double(b[i])), 1.0});
    CHECK(d / s <= tol);
  }
}

// run f under both backends, return (scalar_result, simd_result)
template <typename Fn>
auto both_backends(Fn&& f) {
  k::set_backend(k::Backend::scalar);
  auto a = f();
  if (k::avx2_supported()) k::set_backend(k::Backend::avx2);
  auto b = f();
  k::set_backend(k::avx2_supported() ? k::Backend::avx2 : k::Backend::scalar);
  return std::make_pair(a, b);
}

}  // namespace

TEST_CASE("backend selection") {
  if (k::avx2_supported()) {
    k::set_backend(k::Backend::avx2);
    CHECK(k::active_backend() == k::Backend::avx2);
  }
  k::set_backend(k::Backend::scalar);
  CHECK(k::active_backend() == k::Backend::scalar);
  k::set_backend(k::avx2_supported() ? k::Backend::avx2 : k::Backend::scalar);
}

TEST_CASE_TEMPLATE("vector kernels scalar vs simd", T, float, double) {
  if (!k::avx2_supported()) return;
  Pcg32 rng(7);
  // sizes straddling lane width, including remainders
  for (size_t n : {size_t(1), size_t(3), size_t(8), size_t(13), size_t(64), size_t(257)}) {
    auto x = random_vec<T>(n, rng);
    auto y = random_vec<T>(n, rng);

    auto [d0, d1] = both_backends([&] { return k::dot(n, x.data(), y.data()); });
    CHECK(std::abs(double(d0) - double(d1)) <=
          1e-5 * std::max(1.0, std::abs(double(d0))));

    auto [s0, s1] = both_backends([&] { return k::reduce_sum(n, x.data()); });
    CHECK(std::abs(double(s0) - double(s1)) <= 1e-5 * std::max(1.0, std::abs(double(s0))));

    auto [m0, m1] = both_backends([&] { return k::reduce_max(n, x.data()); });
    CHECK(double(m0) == double(m1));  // max is order-independent, must be exact

    auto [a0, a1] = both_backends([&] {
      auto o = std::vector<T>(n);
      k::vadd(n, x.data(), y.data(), o.data());
      return o;
    });
    expect_close(a0, a1, 0.0);  // lanewise ops are bit-equal

    auto [ax0, ax1] = both_backends([&] {
      auto o = y;
      k::axpy(n, T(1.5), x.data(), o.data());
      return o;
    });
    expect_close(ax0, ax1, 1e-6);  // fma vs mul+add rounding
  }
}

TEST_CASE_TEMPLATE("gemm kernels scalar vs simd", T, float, double) {
  if (!k::avx2_supported()) return;
  Pcg32 rng(11);
  for (auto [m, kk, n] : std::vector<std::array<size_t, 3>>{
           {1, 1, 1}, {2, 3, 5}, {7, 9, 11}, {16, 64, 16}, {33, 17, 65}}) {
    auto A = random_vec<T>(m * kk, rng);
    auto B = random_vec<T>(kk * n, rng);
    auto Bt = random_vec<T>(n * kk, rng);
    auto At = random_vec<T>(kk * m, rng);

    auto [c0, c1] = both_backends([&] {
      std::vector<T> C(m * n);
      k::gemm_nn(m, kk, n, A.data(), B.data(), C.data(), false);
      return C;
    });
    expect_close(c0, c1, 1e-5);

    auto [d0, d1] = both_backends([&] {
      std::vector<T> C(m * n);
      k::gemm_nt(m, kk, n, A.data(), Bt.data(), C.data(), false);
      return C;
    });
    expect_close(d0, d1, 1e-5);

    auto [e0, e1] = both_backends([&] {
      std::vector<T> C(m * n);
      k::gemm_tn(m, kk, n, At.data(), B.data(), C.data(), false);
      return C;
    });
    expect_close(e0, e1, 1e-5);
  }
}

TEST_CASE("vexp and gelu: simd matches the scalar reference") {
  if (!k::avx2_supported()) return;
  Pcg32 rng(31);
  for (size_t n : {size_t(1), size_t(7), size_t(64), size_t(255)}) {
    std::vector<float> x(n);
    for (auto& v : x) v = float(rng.uniform(-30.0, 30.0));
    x[0] = -200.0f;  // below the flush knee: must be exactly zero
    auto [e0, e1] = both_backends([&] {
      std::vector<float> o(n);
      k::vexp(n, x.data(), o.data());
      return o;
    });
    CHECK(e0[0] == 0.0f);
    CHECK(e1[0] == 0.0f);
    for (size_t i = 0; i < n; ++i) {
      double d = std::abs(double(e0[i]) - double(e1[i]));
      CHECK(d <= 2e-6 * std::max(1.0, double(e0[i])));
    }

    std::vector<float> g(n);
    for (auto& v : g) v = float(rng.uniform(-1.0, 1.0));
    auto [y0, y1] = both_backends([&] {
      std::vector<float> o(n);
      k::gelu_fwd(n, x.data(), o.data());
      return o;
    });
    expect_close(y0, y1, 1e-5);
    auto [d0, d1] = both_backends([&] {
      std::vector<float> o(n, 0.0f);
      k::gelu_bwd(n, x.data(), g.data(), o.data());
      return o;
    });
    expect_close(d0, d1, 1e-5);
  }
}

TEST_CASE("gemm correctness against naive triple loop") {
  Pcg32 rng(23);
  size_t m = 5, kk = 7, n = 6;
  auto A = random_vec<double>(m * kk, rng);
  auto B = random_vec<double>(kk * n, rng);
  std::vector<double> want(m * n, 0.0);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j)
      for (size_t p = 0; p < kk; ++p) want[i * n + j] += A[i * kk + p] * B[p * n + j];

  std::vector<double> got(m * n);
  k::gemm_nn(m, kk, n, A.data(), B.data(), got.data(), false);
  expect_close(got, want, 1e-12);

  // nt route: B stored transposed
  std::vector<double> Bt(n * kk);
  for (size_t p = 0; p < kk; ++p)
    for (size_t j = 0; j < n; ++j) Bt[j * kk + p] = B[p * n + j];
  k::gemm_nt(m, kk, n, A.data(), Bt.data(), got.data(), false);
  expect_close(got, want, 1e-12);

  // tn route: A stored transposed
  std::vector<double> At(kk * m);
  for (size_t i = 0; i < m; ++i)
    for (size_t p = 0; p < kk; ++p) At[p * m + i] = A[i * kk + p];
  k::gemm_tn(m, kk, n, At.data(), B.data(), got.data(), false);
  expect_close(got, want, 1e-12);

  // accumulate flag
  std::vector<double> acc(m * n, 1.0);
  k::gemm_nn(m, kk, n, A.data(), B.data(), acc.data(), true);
  for (size_t i = 0; i < m * n; ++i) CHECK(acc[i] == doctest::Approx(want[i] + 1.0).epsilon(1e-12));
}
