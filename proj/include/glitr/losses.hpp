#pragma once

// Training objectives. Student: per-step cross entropy, feature MSE against
// the teacher, per-step KL(teacher || student) on the class distributions.
// Teacher adds the offline-oracle distillation KL at the final step.
// Teacher-side targets enter as plain tensors, so no gradient can reach them.

#include "glitr/autodiff.hpp"

namespace glitr {

enum class Role { student, teacher };

struct LossBreakdown {
  double cls = 0.0;
  double spatial = 0.0;
  double temporal = 0.0;
  double dist = 0.0;  // 0 when disabled
  double total = 0.0;
};

// unweighted sum per role; teacher includes the distillation term
inline double total_objective(const LossBreakdown& parts, Role role) {
  double t = parts.cls + parts.spatial + parts.temporal;
  if (role == Role::teacher) t += parts.dist;
  return t;
}

// loss-term toggles; the consistency ablations are pure weight choices
struct LossWeights {
  double cls = 1.0;
  double spatial = 1.0;
  double temporal = 1.0;
  double dist = 1.0;
};

// mean over steps of -log softmax(logits_t)[label]
template <typename T>
Var<T> cls_loss(const Var<T>& logits, int label) {
  detail::require(label >= 0 && label < logits.value().cols(), "cls_loss: label out of range");
  return nll_mean(log_softmax_rows(logits), label);
}

// elementwise MSE over all T*d coordinates; the teacher features are targets
template <typename T>
Var<T> spatial_consistency(const Var<T>& f_student, const TensorT<T>& f_teacher) {
  detail::require(f_student.value().same_shape(f_teacher), "spatial_consistency: shape mismatch");
  return mse_loss(f_student, Var<T>::constant(f_teacher));
}

// mean over steps of KL(softmax(teacher_t) || softmax(student_t))
template <typename T>
Var<T> temporal_consistency(const Var<T>& logits_student, const TensorT<T>& logits_teacher) {
  detail::require(logits_student.value().same_shape(logits_teacher),
                  "temporal_consistency: shape mismatch");
  TensorT<T> p = logits_teacher;
  softmax_rows_inplace(p);
  return kl_from_probs(p, log_softmax_rows(logits_student));
}

// KL(softmax(oracle) || softmax(final teacher logits)), applied at t=T only
template <typename T>
Var<T> distillation_loss(const Var<T>& logits_final, const TensorT<T>& oracle_logits) {
  detail::require(logits_final.value().numel() == oracle_logits.numel(),
                  "distillation_loss: shape mismatch");
  TensorT<T> p({1, int(oracle_logits.numel())},
               std::vector<T>(oracle_logits.data(), oracle_logits.data() + oracle_logits.numel()));
  softmax_rows_inplace(p);
  Var<T> row =
      logits_final.value().ndim() == 1 ? concat_rows<T>({logits_final}) : logits_final;
  return kl_from_probs(p, log_softmax_rows(row));
}

}  // namespace glitr
