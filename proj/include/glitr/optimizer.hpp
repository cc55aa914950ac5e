#pragma once

// AdamW with decoupled weight decay, per-module parameter groups, cosine
// learning-rate schedule and optional per-group linear warmup (used for the
// teacher's locator). Decay applies only to weight matrices (names ending
// in ".w"), not to biases, norms, tokens or position embeddings.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "glitr/autodiff.hpp"

namespace glitr {

template <typename T>
class AdamW {
 public:
  struct GroupSpec {
    std::string prefix;  // parameter-name prefix, e.g. "t_l."
    double base_lr = 1e-3;
    int64_t warmup_steps = 0;
  };

  AdamW(double weight_decay, int64_t total_steps)
      : weight_decay_(weight_decay), total_steps_(std::max<int64_t>(total_steps, 1)) {}

  // earlier groups win on prefix conflicts; "" catches the rest
  void add_group(const GroupSpec& g) { groups_.push_back(g); }

  void register_params(ParamSet<T>& ps) {
    for (auto& [name, var] : ps.items) {
      if (!var.requires_grad()) continue;
      int gi = -1;
      for (size_t i = 0; i < groups_.size(); ++i)
        if (name.rfind(groups_[i].prefix, 0) == 0) {
          gi = int(i);
          break;
        }
      if (gi < 0) throw std::invalid_argument("optimizer: no group matches param " + name);
      Entry e;
      e.var = var;
      e.m = TensorT<T>(var.value().shape());
      e.v = TensorT<T>(var.value().shape());
      e.group = gi;
      e.decay = name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0;
      entries_.push_back(std::move(e));
    }
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  double group_lr(int gi) const {
    const auto& g = groups_[gi];
    double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 *
                                          double(step_) / double(total_steps_)));
    double warm = g.warmup_steps > 0
                      ? std::min(1.0, double(step_) / double(g.warmup_steps))
                      : 1.0;
    return g.base_lr * cosine * warm;
  }

  void step() {
    ++step_;
    double bc1 = 1.0 - std::pow(beta1_, double(step_));
    double bc2 = 1.0 - std::pow(beta2_, double(step_));
    for (auto& e : entries_) {
      double lr = group_lr(e.group);
      TensorT<T> g = e.var.grad();
      TensorT<T>& p = e.var.value_mut();
      for (size_t i = 0; i < p.numel(); ++i) {
        double gi = g[i];
        double m = beta1_ * e.m[i] + (1.0 - beta1_) * gi;
        double v = beta2_ * e.v[i] + (1.0 - beta2_) * gi * gi;
        e.m[i] = T(m);
        e.v[i] = T(v);
        double update = (m / bc1) / (std::sqrt(v / bc2) + eps_);
        if (e.decay) update += weight_decay_ * double(p[i]);
        p[i] = T(double(p[i]) - lr * update);
      }
    }
  }

  int64_t step_count() const { return step_; }

 private:
  struct Entry {
    Var<T> var;
    TensorT<T> m, v;
    bool decay = false;
    int group = 0;
  };

  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  double weight_decay_ = 0.05;
  int64_t total_steps_ = 1;
  int64_t step_ = 0;
  std::vector<GroupSpec> groups_;
  std::vector<Entry> entries_;
};

}  // namespace glitr
