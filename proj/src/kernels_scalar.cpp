// Scalar reference kernels. Plain loops, fixed evaluation order; these are
// the ground truth the SIMD variants are tested against.

#include "glitr/kernels.hpp"

#include <cmath>

namespace glitr::kernels::detail {

namespace {

template <typename T>
T dot_s(size_t n, const T* x, const T* y) {
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy_s(size_t n, T a, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale_s(size_t n, T a, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

template <typename T>
void vadd_s(size_t n, const T* a, const T* b, T* o) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

template <typename T>
void vsub_s(size_t n, const T* a, const T* b, T* o) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

template <typename T>
void vmul_s(size_t n, const T* a, const T* b, T* o) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

template <typename T>
T reduce_sum_s(size_t n, const T* x) {
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T reduce_max_s(size_t n, const T* x) {
  T m = x[0];
  for (size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

template <typename T>
void gemm_nn_s(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum) {
  for (size_t i = 0; i < m; ++i) {
    T* c = C + i * n;
    if (!accum)
      for (size_t j = 0; j < n; ++j) c[j] = T(0);
    const T* a = A + i * k;
    for (size_t p = 0; p < k; ++p) {
      T av = a[p];
      const T* b = B + p * n;
      for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

template <typename T>
void gemm_nt_s(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum) {
  for (size_t i = 0; i < m; ++i) {
    const T* a = A + i * k;
    T* c = C + i * n;
    for (size_t j = 0; j < n; ++j) {
      T acc = dot_s(k, a, B + j * k);
      c[j] = accum ? c[j] + acc : acc;
    }
  }
}

template <typename T>
void vexp_s(size_t n, const T* x, T* o) {
  for (size_t i = 0; i < n; ++i) o[i] = x[i] < T(kExpFlush) ? T(0) : std::exp(x[i]);
}

template <typename T>
void gelu_fwd_s(size_t n, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) {
    T v = x[i];
    y[i] = T(0.5) * v * (T(1) + std::tanh(T(kGeluC) * (v + T(kGeluA) * v * v * v)));
  }
}

template <typename T>
void gelu_bwd_s(size_t n, const T* x, const T* gy, T* dx) {
  for (size_t i = 0; i < n; ++i) {
    T v = x[i];
    T u = T(kGeluC) * (v + T(kGeluA) * v * v * v);
    T th = std::tanh(u);
    T du = T(kGeluC) * (T(1) + T(3) * T(kGeluA) * v * v);
    dx[i] += gy[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du);
  }
}

template <typename T>
void gemm_tn_s(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum) {
  if (!accum)
    for (size_t i = 0; i < m * n; ++i) C[i] = T(0);
  for (size_t p = 0; p < k; ++p) {
    const T* a = A + p * m;
    const T* b = B + p * n;
    for (size_t i = 0; i < m; ++i) {
      T av = a[i];
      T* c = C + i * n;
      for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace

template <typename T>
Table<T> scalar_table() {
  Table<T> t;
  t.dot = dot_s<T>;
  t.axpy = axpy_s<T>;
  t.scale = scale_s<T>;
  t.vadd = vadd_s<T>;
  t.vsub = vsub_s<T>;
  t.vmul = vmul_s<T>;
  t.reduce_sum = reduce_sum_s<T>;
  t.reduce_max = reduce_max_s<T>;
  t.gemm_nn = gemm_nn_s<T>;
  t.gemm_nt = gemm_nt_s<T>;
  t.gemm_tn = gemm_tn_s<T>;
  t.vexp = vexp_s<T>;
  t.gelu_fwd = gelu_fwd_s<T>;
  t.gelu_bwd = gelu_bwd_s<T>;
  return t;
}

template Table<float> scalar_table<float>();
template Table<double> scalar_table<double>();

}  // namespace glitr::kernels::detail
