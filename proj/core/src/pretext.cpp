#include "sstap/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sstap/error.hpp"

namespace sstap {

std::size_t factorial(std::size_t k) {
  std::size_t f = 1;
  for (std::size_t j = 2; j <= k; ++j) f *= j;
  return f;
}

std::size_t permutation_index(std::span<const std::size_t> perm) {
  const std::size_t K = perm.size();
  std::size_t index = 0;
  for (std::size_t j = 0; j < K; ++j) {
    std::size_t smaller_later = 0;
    for (std::size_t l = j + 1; l < K; ++l) smaller_later += perm[l] < perm[j] ? 1 : 0;
    index += smaller_later * factorial(K - 1 - j);
  }
  return index;
}

std::vector<std::size_t> permutation_from_index(std::size_t index, std::size_t K) {
  if (index >= factorial(K)) throw ArgumentError("permutation index out of range");
  std::vector<std::size_t> pool(K);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> perm;
  perm.reserve(K);
  for (std::size_t j = 0; j < K; ++j) {
    const std::size_t f = factorial(K - 1 - j);
    const std::size_t pick = index / f;
    index %= f;
    perm.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return perm;
}

template <typename R>
MaskedSequence<R> mask_features(const Matrix<R>& f1, double omega, Rng& rng) {
  if (!(omega >= 0.0 && omega < 1.0)) throw ArgumentError("mask_features: omega must lie in [0, 1)");
  const std::size_t T = f1.rows();
  const auto n_mask = static_cast<std::size_t>(std::llround(omega * static_cast<double>(T)));

  std::vector<std::size_t> rows(T);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  for (std::size_t j = 0; j < n_mask; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, T - 1);
    std::swap(rows[j], rows[pick(rng)]);
  }
  MaskedSequence<R> res{f1, std::vector<std::uint8_t>(T, 0)};
  for (std::size_t j = 0; j < n_mask; ++j) {
    res.mask[rows[j]] = 1;
    auto row = res.masked.row(rows[j]);
    std::fill(row.begin(), row.end(), R{0});
  }
  return res;
}

template <typename R>
double recon_loss(const Matrix<R>& pred, const Matrix<R>& target, Matrix<R>* grad, double scale,
                  const std::vector<std::uint8_t>* rows) {
  if (!pred.same_shape(target)) throw ArgumentError("recon_loss: shape mismatch");
  if (rows && rows->size() != pred.rows()) throw ArgumentError("recon_loss: row mask length mismatch");
  if (grad && !grad->same_shape(pred)) throw ArgumentError("recon_loss: gradient shape mismatch");

  const std::size_t C = pred.cols();
  std::size_t n_rows = pred.rows();
  if (rows) n_rows = static_cast<std::size_t>(std::count(rows->begin(), rows->end(), std::uint8_t{1}));
  if (n_rows == 0 || C == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n_rows * C);

  double sum = 0.0;
  for (std::size_t t = 0; t < pred.rows(); ++t) {
    if (rows && (*rows)[t] == 0) continue;
    for (std::size_t c = 0; c < C; ++c) {
      const double diff = static_cast<double>(pred(t, c)) - static_cast<double>(target(t, c));
      sum += diff * diff;
      if (grad) (*grad)(t, c) += static_cast<R>(scale * 2.0 * diff * inv_n);
    }
  }
  return sum * inv_n;
}

template <typename R>
OrderSample<R> make_order_sample(const Matrix<R>& f1, std::size_t K, Rng& rng) {
  if (K < 2) throw ArgumentError("make_order_sample: need K >= 2");
  if (K > f1.rows()) throw ArgumentError("make_order_sample: more clips than snippets");
  const std::size_t clip = f1.rows() / K;

  std::uniform_int_distribution<std::size_t> draw(0, factorial(K) - 1);
  OrderSample<R> s;
  s.K = K;
  s.label = draw(rng);
  s.permutation = permutation_from_index(s.label, K);
  s.shuffled = Matrix<R>(clip * K, f1.cols());
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t r = 0; r < clip; ++r) {
      auto src = f1.row(s.permutation[j] * clip + r);
      std::copy(src.begin(), src.end(), s.shuffled.row(j * clip + r).begin());
    }
  }
  return s;
}

template <typename R>
double order_loss(std::span<const R> logits, std::size_t label, std::span<R> grad, double scale) {
  if (label >= logits.size()) throw ArgumentError("order_loss: label out of range");
  if (!grad.empty() && grad.size() != logits.size()) throw ArgumentError("order_loss: gradient size mismatch");
  double mx = -INFINITY;
  for (R z : logits) mx = std::max(mx, static_cast<double>(z));
  double denom = 0.0;
  for (R z : logits) denom += std::exp(static_cast<double>(z) - mx);
  const double log_z = mx + std::log(denom);
  if (!grad.empty()) {
    for (std::size_t k = 0; k < logits.size(); ++k) {
      const double p = std::exp(static_cast<double>(logits[k]) - log_z);
      grad[k] += static_cast<R>(scale * (p - (k == label ? 1.0 : 0.0)));
    }
  }
  return log_z - static_cast<double>(logits[label]);
}

#define SSTAP_INSTANTIATE(R)                                                                       \
  template MaskedSequence<R> mask_features(const Matrix<R>&, double, Rng&);                        \
  template double recon_loss(const Matrix<R>&, const Matrix<R>&, Matrix<R>*, double,              \
                             const std::vector<std::uint8_t>*);                                    \
  template OrderSample<R> make_order_sample(const Matrix<R>&, std::size_t, Rng&);                  \
  template double order_loss(std::span<const R>, std::size_t, std::span<R>, double);
SSTAP_INSTANTIATE(float)
SSTAP_INSTANTIATE(double)
#undef SSTAP_INSTANTIATE

}  // namespace sstap
