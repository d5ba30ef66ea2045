#include "sstap/perturb.hpp"

#include <cmath>

#include "sstap/error.hpp"

namespace sstap {

std::size_t shifted_channel_count(std::size_t C, double mu) {
  const double half = std::floor(static_cast<double>(C) * mu / 2.0);
  return 2 * static_cast<std::size_t>(half);
}

ShiftPlan draw_shift_plan(std::size_t C, double mu, Rng& rng) {
  if (!(mu > 0.0 && mu <= 1.0)) throw ArgumentError("temporal_shift: mu must lie in (0, 1]");
  const std::size_t k = shifted_channel_count(C, mu);
  if (k == 0) throw ArgumentError("temporal_shift: mu too small, no channel would be shifted");

  std::vector<std::size_t> channels(C);
  for (std::size_t c = 0; c < C; ++c) channels[c] = c;
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (std::size_t j = 0; j < k; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, C - 1);
    std::swap(channels[j], channels[pick(rng)]);
  }
  ShiftPlan plan;
  plan.forward.assign(channels.begin(), channels.begin() + static_cast<std::ptrdiff_t>(k / 2));
  plan.backward.assign(channels.begin() + static_cast<std::ptrdiff_t>(k / 2),
                       channels.begin() + static_cast<std::ptrdiff_t>(k));
  return plan;
}

template <typename R>
Matrix<R> apply_shift_plan(const Matrix<R>& f, const ShiftPlan& plan) {
  const std::size_t T = f.rows();
  Matrix<R> out = f;
  for (std::size_t c : plan.forward) {
    if (c >= f.cols()) throw ArgumentError("shift plan channel out of range");
    for (std::size_t t = T; t-- > 1;) out(t, c) = f(t - 1, c);
    out(0, c) = R{0};
  }
  for (std::size_t c : plan.backward) {
    if (c >= f.cols()) throw ArgumentError("shift plan channel out of range");
    for (std::size_t t = 0; t + 1 < T; ++t) out(t, c) = f(t + 1, c);
    if (T > 0) out(T - 1, c) = R{0};
  }
  return out;
}

template <typename R>
Matrix<R> temporal_flip(const Matrix<R>& f) {
  const std::size_t T = f.rows();
  Matrix<R> out(T, f.cols());
  for (std::size_t t = 0; t < T; ++t) {
    auto src = f.row(T - 1 - t);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

template <typename R>
ModelOutputs<R> align_flip_outputs(const ModelOutputs<R>& out) {
  ModelOutputs<R> res;
  const std::size_t T = out.p_s.size();
  res.p_s.resize(T);
  res.p_e.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    res.p_s[t] = out.p_e[T - 1 - t];
    res.p_e[t] = out.p_s[T - 1 - t];
  }
  res.m_cc = reflect_candidate_map(out.m_cc);
  res.m_cr = reflect_candidate_map(out.m_cr);
  res.valid_mask = reflect_candidate_map(out.valid_mask);
  if (!out.base_feat.empty()) res.base_feat = temporal_flip(out.base_feat);
  return res;
}

template Matrix<float> apply_shift_plan(const Matrix<float>&, const ShiftPlan&);
template Matrix<double> apply_shift_plan(const Matrix<double>&, const ShiftPlan&);
template Matrix<float> temporal_flip(const Matrix<float>&);
template Matrix<double> temporal_flip(const Matrix<double>&);
template ModelOutputs<float> align_flip_outputs(const ModelOutputs<float>&);
template ModelOutputs<double> align_flip_outputs(const ModelOutputs<double>&);

}  // namespace sstap
