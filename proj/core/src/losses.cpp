#include "sstap/losses.hpp"

#include <algorithm>
#include <cmath>

#include "sstap/error.hpp"

namespace sstap {

template <typename R>
double balanced_logistic(const R* p, const double* target, const std::uint8_t* use, std::size_t n,
                         double pos_above, double neg_below, R* grad, double scale, bool* missing_class) {
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (use && !use[k]) continue;
    if (target[k] > pos_above) ++n_pos;
    else if (target[k] < neg_below) ++n_neg;
  }
  const std::size_t n_used = n_pos + n_neg;
  if (n_used == 0) return 0.0;
  if (missing_class && (n_pos == 0 || n_neg == 0)) *missing_class = true;
  const double total = static_cast<double>(n_used);
  const double w_pos = n_pos ? 0.5 * total / static_cast<double>(n_pos) : 0.0;
  const double w_neg = n_neg ? 0.5 * total / static_cast<double>(n_neg) : 0.0;

  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (use && !use[k]) continue;
    const double pk = static_cast<double>(p[k]);
    if (target[k] > pos_above) {
      const double q = std::max(pk, kProbEps);
      sum -= w_pos * std::log(q);
      if (grad && pk > kProbEps) grad[k] += static_cast<R>(-scale * w_pos / (total * pk));
    } else if (target[k] < neg_below) {
      const double q = std::max(1.0 - pk, kProbEps);
      sum -= w_neg * std::log(q);
      if (grad && 1.0 - pk > kProbEps) grad[k] += static_cast<R>(scale * w_neg / (total * (1.0 - pk)));
    }
  }
  return sum / total;
}

namespace {

// MSE to g_iou over positive candidates (g > 0) plus negatives (g == 0)
// reweighted to the positive count, i.e. the expectation of a 1:1 random
// negative subsample. Zero when there are no positives.
template <typename R>
double regression_loss(const Matrix<R>& m, const LabelMaps& labels, Matrix<R>* grad, double scale) {
  const std::size_t n = m.size();
  const double* g = labels.g_iou.data();
  const std::uint8_t* valid = labels.valid_mask.data();
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!valid[k]) continue;
    if (g[k] > 0.0) ++n_pos;
    else ++n_neg;
  }
  if (n_pos == 0) return 0.0;
  const double w_pos = 1.0;
  const double w_neg = n_neg ? static_cast<double>(n_pos) / static_cast<double>(n_neg) : 0.0;
  const double denom = n_neg ? 2.0 * static_cast<double>(n_pos) : static_cast<double>(n_pos);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!valid[k]) continue;
    const double w = g[k] > 0.0 ? w_pos : w_neg;
    const double diff = static_cast<double>(m.data()[k]) - g[k];
    sum += w * diff * diff;
    if (grad) grad->data()[k] += static_cast<R>(scale * 2.0 * w * diff / denom);
  }
  return sum / denom;
}

}  // namespace

template <typename R>
double supervised_loss(const ModelOutputs<R>& out, const LabelMaps& labels, OutputGrads<R>* grad, double scale,
                       SupervisedTerms* terms) {
  const std::size_t T = out.p_s.size();
  if (!out.has_proposals()) throw ArgumentError("supervised_loss: outputs carry no proposal head");
  if (labels.g_start.size() != T || labels.g_end.size() != T || !labels.g_iou.same_shape(labels.valid_mask) ||
      labels.g_iou.rows() != out.m_cc.rows() || labels.g_iou.cols() != out.m_cc.cols() ||
      !out.m_cr.same_shape(out.m_cc)) {
    throw ArgumentError("supervised_loss: output and label shapes differ");
  }
  if (grad) grad->ensure_proposal(out);

  SupervisedTerms st;
  bool missing = false;
  st.tem_start = balanced_logistic(out.p_s.data(), labels.g_start.data(), nullptr, T, 0.5, std::nextafter(0.5, 1.0),
                                   grad ? grad->p_s.data() : nullptr, scale, &missing);
  st.tem_end = balanced_logistic(out.p_e.data(), labels.g_end.data(), nullptr, T, 0.5, std::nextafter(0.5, 1.0),
                                 grad ? grad->p_e.data() : nullptr, scale, &missing);
  st.pem_cls = balanced_logistic(out.m_cc.data(), labels.g_iou.data(), labels.valid_mask.data(), out.m_cc.size(),
                                 0.9, 0.3, grad ? grad->m_cc.data() : nullptr, scale, &missing);
  st.pem_reg = regression_loss(out.m_cr, labels, grad ? &grad->m_cr : nullptr, scale);
  st.missing_positives = missing;
  if (terms) *terms = st;
  return st.total();
}

template <typename R>
double consistency_loss(const ModelOutputs<R>& s, const ModelOutputs<R>& t, OutputGrads<R>* grad, double scale) {
  if (!s.has_proposals() || !t.has_proposals()) throw ContractError("consistency_loss: proposal outputs required");
  const std::size_t T = s.p_s.size();
  if (t.p_s.size() != T || s.p_e.size() != T || t.p_e.size() != T || !s.m_cc.same_shape(t.m_cc) ||
      !s.m_cr.same_shape(t.m_cr) || !s.valid_mask.same_shape(t.valid_mask) || !s.m_cc.same_shape(s.valid_mask)) {
    throw ContractError("consistency_loss: student and teacher shapes differ");
  }
  if (grad) grad->ensure_proposal(s);

  auto seq_term = [&](const std::vector<R>& a, const std::vector<R>& b, std::vector<R>* g) {
    double sum = 0.0;
    const double inv = 1.0 / static_cast<double>(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
      sum += diff * diff;
      if (g) (*g)[k] += static_cast<R>(scale * 2.0 * diff * inv);
    }
    return sum * inv;
  };
  std::size_t n_valid = 0;
  for (std::size_t k = 0; k < s.valid_mask.size(); ++k) {
    n_valid += (s.valid_mask.data()[k] && t.valid_mask.data()[k]) ? 1 : 0;
  }
  auto map_term = [&](const Matrix<R>& a, const Matrix<R>& b, Matrix<R>* g) {
    if (n_valid == 0) return 0.0;
    double sum = 0.0;
    const double inv = 1.0 / static_cast<double>(n_valid);
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!(s.valid_mask.data()[k] && t.valid_mask.data()[k])) continue;
      const double diff = static_cast<double>(a.data()[k]) - static_cast<double>(b.data()[k]);
      sum += diff * diff;
      if (g) g->data()[k] += static_cast<R>(scale * 2.0 * diff * inv);
    }
    return sum * inv;
  };
  return seq_term(s.p_s, t.p_s, grad ? &grad->p_s : nullptr) + seq_term(s.p_e, t.p_e, grad ? &grad->p_e : nullptr) +
         map_term(s.m_cc, t.m_cc, grad ? &grad->m_cc : nullptr) + map_term(s.m_cr, t.m_cr, grad ? &grad->m_cr : nullptr);
}

#define SSTAP_INSTANTIATE(R)                                                                                  \
  template double balanced_logistic(const R*, const double*, const std::uint8_t*, std::size_t, double, double, \
                                    R*, double, bool*);                                                        \
  template double supervised_loss(const ModelOutputs<R>&, const LabelMaps&, OutputGrads<R>*, double,          \
                                  SupervisedTerms*);                                                           \
  template double consistency_loss(const ModelOutputs<R>&, const ModelOutputs<R>&, OutputGrads<R>*, double);
SSTAP_INSTANTIATE(float)
SSTAP_INSTANTIATE(double)
#undef SSTAP_INSTANTIATE

}  // namespace sstap
