#pragma once

// Deterministic random number generation. Dataset generation must be
// bit-exact across machines, so clip synthesis only uses draws that round
// identically everywhere: dyadic uniforms and an Irwin-Hall gaussian
// (sum of 12 uniforms), no libm. Model init and evaluation strategies use
// the Box-Muller gaussian, which only needs per-machine determinism.

#include <cmath>
#include <cstdint>

namespace glitr {

// pcg32 (Melissa O'Neill, minimal variant)
class Pcg32 {
 public:
  explicit Pcg32(uint64_t seed, uint64_t stream = 0x14057b7ef767814full) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
  }

  // uniform in [0,1), dyadic rational, exact on every IEEE platform
  double next_double() { return next_u32() * (1.0 / 4294967296.0); }

  // uniform in [lo,hi] inclusive
  int next_int(int lo, int hi) {
    uint32_t span = static_cast<uint32_t>(hi - lo + 1);
    return lo + static_cast<int>(next_u32() % span);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Irwin-Hall: sum of 12 U(0,1) minus 6 has mean 0, variance 1.
  // Uses only adds of dyadic rationals, so it is bit-exact everywhere.
  double gauss_ih() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += next_double();
    return s - 6.0;
  }

  // Box-Muller N(0,1); exact gaussian, determinism per machine only (libm).
  double gauss_bm() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// splitmix64, used to derive independent seeds from (root, tags)
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t root, uint64_t a, uint64_t b = 0) {
  return mix_seed(root ^ mix_seed(a ^ mix_seed(b)));
}

}  // namespace glitr
