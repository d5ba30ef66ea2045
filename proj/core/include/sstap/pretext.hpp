#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sstap/random.hpp"
#include "sstap/tensor.hpp"

namespace sstap {

std::size_t factorial(std::size_t k);

// Lexicographic rank of a permutation of {0..K-1}, in [0, K!).
std::size_t permutation_index(std::span<const std::size_t> perm);
// Inverse of permutation_index.
std::vector<std::size_t> permutation_from_index(std::size_t index, std::size_t K);

template <typename R>
struct MaskedSequence {
  Matrix<R> masked;
  std::vector<std::uint8_t> mask;  // 1 for zeroed rows
};

// Zeroes round(omega * T) distinct rows chosen uniformly without replacement.
// Throws ArgumentError unless 0 <= omega < 1.
template <typename R>
MaskedSequence<R> mask_features(const Matrix<R>& f1, double omega, Rng& rng);

enum class ReconSupport { all, masked_only };

// Mean squared error between `pred` and `target`. With `rows` set, only the
// flagged rows count (masked-only variant); the mean is taken over those
// rows' entries. When `grad` is non-null, scale * dL/dpred is added to it.
template <typename R>
double recon_loss(const Matrix<R>& pred, const Matrix<R>& target, Matrix<R>* grad = nullptr,
                  double scale = 1.0, const std::vector<std::uint8_t>* rows = nullptr);

template <typename R>
struct OrderSample {
  Matrix<R> shuffled;
  std::size_t label = 0;
  std::size_t K = 0;
  std::vector<std::size_t> permutation;  // clip perm[j] is placed j-th
};

// Splits the first floor(T / K) * K rows into K equal clips and concatenates
// them in a uniformly drawn order. Throws ArgumentError for K < 2 or K > T.
template <typename R>
OrderSample<R> make_order_sample(const Matrix<R>& f1, std::size_t K, Rng& rng);

// Cross entropy -log softmax(logits)[label]. When `grad` is non-null,
// scale * (softmax - onehot) is added to it.
template <typename R>
double order_loss(std::span<const R> logits, std::size_t label, std::span<R> grad = {},
                  double scale = 1.0);

}  // namespace sstap
