#pragma once

// Arithmetic inner loops behind the tensor ops. Every kernel has a scalar
// reference implementation and an AVX2 variant; the backend is picked at
// startup from cpuid and can be forced (tests compare the two for
// equivalence). All kernels use a fixed evaluation order, so repeated runs
// on one machine are bit-identical.

#include <cstddef>

namespace glitr::kernels {

enum class Backend { scalar, avx2 };

bool avx2_supported();
Backend active_backend();
// Throws if the requested backend is not supported on this CPU.
void set_backend(Backend b);

template <typename T>
struct Table {
  T (*dot)(size_t n, const T* x, const T* y);
  void (*axpy)(size_t n, T a, const T* x, T* y);          // y += a*x
  void (*scale)(size_t n, T a, const T* x, T* y);         // y = a*x
  void (*vadd)(size_t n, const T* a, const T* b, T* o);   // o = a+b
  void (*vsub)(size_t n, const T* a, const T* b, T* o);   // o = a-b
  void (*vmul)(size_t n, const T* a, const T* b, T* o);   // o = a*b
  T (*reduce_sum)(size_t n, const T* x);
  T (*reduce_max)(size_t n, const T* x);
  // C[m,n] = A[m,k] * B[k,n]        (+= when accum)
  void (*gemm_nn)(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum);
  // C[m,n] = A[m,k] * B[n,k]^T
  void (*gemm_nt)(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum);
  // C[m,n] = A[k,m]^T * B[k,n]
  void (*gemm_tn)(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum);
  // o = exp(x); flushes to 0 below the float underflow knee so masked
  // attention scores contribute exactly nothing
  void (*vexp)(size_t n, const T* x, T* o);
  // tanh-form gelu and its derivative: y = 0.5 x (1 + tanh(c (x + a x^3)))
  void (*gelu_fwd)(size_t n, const T* x, T* y);
  void (*gelu_bwd)(size_t n, const T* x, const T* gy, T* dx);  // dx += gy * gelu'(x)
};

template <typename T>
const Table<T>& table();

template <typename T>
inline T dot(size_t n, const T* x, const T* y) { return table<T>().dot(n, x, y); }
template <typename T>
inline void axpy(size_t n, T a, const T* x, T* y) { table<T>().axpy(n, a, x, y); }
template <typename T>
inline void scale(size_t n, T a, const T* x, T* y) { table<T>().scale(n, a, x, y); }
template <typename T>
inline void vadd(size_t n, const T* a, const T* b, T* o) { table<T>().vadd(n, a, b, o); }
template <typename T>
inline void vsub(size_t n, const T* a, const T* b, T* o) { table<T>().vsub(n, a, b, o); }
template <typename T>
inline void vmul(size_t n, const T* a, const T* b, T* o) { table<T>().vmul(n, a, b, o); }
template <typename T>
inline T reduce_sum(size_t n, const T* x) { return table<T>().reduce_sum(n, x); }
template <typename T>
inline T reduce_max(size_t n, const T* x) { return table<T>().reduce_max(n, x); }
template <typename T>
inline void gemm_nn(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum = false) {
  table<T>().gemm_nn(m, k, n, A, B, C, accum);
}
template <typename T>
inline void gemm_nt(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum = false) {
  table<T>().gemm_nt(m, k, n, A, B, C, accum);
}
template <typename T>
inline void gemm_tn(size_t m, size_t k, size_t n, const T* A, const T* B, T* C, bool accum = false) {
  table<T>().gemm_tn(m, k, n, A, B, C, accum);
}
template <typename T>
inline void vexp(size_t n, const T* x, T* o) { table<T>().vexp(n, x, o); }
template <typename T>
inline void gelu_fwd(size_t n, const T* x, T* y) { table<T>().gelu_fwd(n, x, y); }
template <typename T>
inline void gelu_bwd(size_t n, const T* x, const T* gy, T* dx) { table<T>().gelu_bwd(n, x, gy, dx); }

// gelu constants shared by every backend
inline constexpr double kGeluC = 0.7978845608028653558799;   // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;
// below this, float exp underflows; we flush to exactly zero
inline constexpr double kExpFlush = -87.0;

namespace detail {
template <typename T> Table<T> scalar_table();
template <typename T> Table<T> avx2_table();  // valid only when avx2_supported()
}  // namespace detail

}  // namespace glitr::kernels
