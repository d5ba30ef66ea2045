#pragma once

#include "sstap/data.hpp"
#include "sstap/outputs.hpp"

namespace sstap {

// Individual terms of the supervised proposal loss.
struct SupervisedTerms {
  double tem_start = 0.0;
  double tem_end = 0.0;
  double pem_cls = 0.0;
  double pem_reg = 0.0;
  // Set when a balanced logistic term had no positive (or no negative)
  // entries and that side's weight fell back to zero.
  bool missing_positives = false;

  double total() const noexcept { return tem_start + tem_end + pem_cls + pem_reg; }
};

// Probabilities are clamped to [kProbEps, 1 - kProbEps] inside logarithms.
inline constexpr double kProbEps = 1e-7;

// Class-balanced logistic loss. Entries with target > pos_above are
// positives, target < neg_below negatives, others ignored. Each class carries
// half of the total weight:
//   L = -(1/n) * sum[w_pos * log p | pos] - (1/n) * sum[w_neg * log(1 - p) | neg]
// with n = n_pos + n_neg, w_pos = n / (2 n_pos), w_neg = n / (2 n_neg); a
// class with no members gets weight 0. `use` may be null (all entries).
template <typename R>
double balanced_logistic(const R* p, const double* target, const std::uint8_t* use, std::size_t n,
                         double pos_above, double neg_below, R* grad, double scale,
                         bool* missing_class = nullptr);

// L_TEM(p_s; g_start) + L_TEM(p_e; g_end) + L_cls(m_cc; g_iou) + L_reg(m_cr; g_iou).
// When `grad` is non-null, scale * dL/dout is added to it.
template <typename R>
double supervised_loss(const ModelOutputs<R>& out, const LabelMaps& labels, OutputGrads<R>* grad = nullptr,
                       double scale = 1.0, SupervisedTerms* terms = nullptr);

// Sum over p_s, p_e, m_cc, m_cr of the mean squared student-teacher
// difference; maps are averaged over the intersection of both valid masks.
// The teacher side is a constant: only student gradients are produced.
template <typename R>
double consistency_loss(const ModelOutputs<R>& student, const ModelOutputs<R>& teacher_aligned,
                        OutputGrads<R>* grad = nullptr, double scale = 1.0);

}  // namespace sstap
