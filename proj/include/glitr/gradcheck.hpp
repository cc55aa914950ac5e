#pragma once

// Central finite-difference verification of reverse-mode gradients.
// Only meaningful at 64-bit precision, so everything here runs on double.

#include <cmath>
#include <functional>
#include <vector>

#include "glitr/autodiff.hpp"

namespace glitr {

// f rebuilds the scalar objective from the leaf each call. Returns the max
// relative error between the analytic gradient and (f(x+h e_i) - f(x-h e_i))/2h
// over the requested coordinates (all when empty). The denominator is floored
// at 1e-6 so exactly-zero gradients compare by absolute error.
inline double grad_check_coords(const std::function<Var<double>(const Var<double>&)>& f,
                                const DTensor& x0, double h,
                                std::vector<size_t> coords = {}) {
  Var<double> leaf = Var<double>::leaf(x0, true);
  Var<double> y = f(leaf);
  backward(y);
  DTensor analytic = leaf.grad();

  if (coords.empty())
    for (size_t i = 0; i < x0.numel(); ++i) coords.push_back(i);

  double worst = 0.0;
  for (size_t i : coords) {
    DTensor xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    double fp, fm;
    {
      NoGradGuard ng;
      fp = f(Var<double>::leaf(xp, false)).value()[0];
      fm = f(Var<double>::leaf(xm, false)).value()[0];
    }
    double fd = (fp - fm) / (2.0 * h);
    double a = analytic[i];
    double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
    if (err > worst) worst = err;
  }
  return worst;
}

inline double grad_check(const std::function<Var<double>(const Var<double>&)>& f,
                         const DTensor& x0, double h = 1e-4) {
  return grad_check_coords(f, x0, h);
}

// Same comparison for a parameter living inside a model: f rebuilds the
// objective from current parameter values. The caller must zero all
// parameter grads beforehand; finite differences perturb the chosen
// coordinates in place.
inline double grad_check_param(const std::function<Var<double>()>& f, Var<double> param,
                               const std::vector<size_t>& coords, double h = 1e-4) {
  Var<double> y = f();
  backward(y);
  DTensor analytic = param.grad();

  double worst = 0.0;
  for (size_t i : coords) {
    double orig = param.value()[i];
    double fp, fm;
    param.value_mut()[i] = orig + h;
    {
      NoGradGuard ng;
      fp = f().value()[0];
    }
    param.value_mut()[i] = orig - h;
    {
      NoGradGuard ng;
      fm = f().value()[0];
    }
    param.value_mut()[i] = orig;
    double fd = (fp - fm) / (2.0 * h);
    double a = analytic[i];
    double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace glitr
