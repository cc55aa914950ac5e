#include "glitr/kernels.hpp"

#include <stdexcept>

namespace glitr::kernels {

namespace {

Table<float> g_f;
Table<double> g_d;
Backend g_backend = Backend::scalar;

bool cpu_has_avx2() {
#if defined(GLITR_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

void apply(Backend b) {
  if (b == Backend::avx2) {
    g_f = detail::avx2_table<float>();
    g_d = detail::avx2_table<double>();
  } else {
    g_f = detail::scalar_table<float>();
    g_d = detail::scalar_table<double>();
  }
  g_backend = b;
}

struct Init {
  Init() { apply(cpu_has_avx2() ? Backend::avx2 : Backend::scalar); }
};
Init g_init;

}  // namespace

bool avx2_supported() { return cpu_has_avx2(); }

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::avx2 && !cpu_has_avx2())
    throw std::runtime_error("kernels: avx2 backend requested but cpu lacks avx2/fma");
  apply(b);
}

template <>
const Table<float>& table<float>() { return g_f; }
template <>
const Table<double>& table<double>() { return g_d; }

}  // namespace glitr::kernels
