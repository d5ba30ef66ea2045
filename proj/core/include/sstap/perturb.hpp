#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sstap/outputs.hpp"
#include "sstap/random.hpp"
#include "sstap/tensor.hpp"

namespace sstap {

// Channels moved by one temporal-shift draw. Forward channels take their
// value from the previous snippet, backward channels from the next one.
struct ShiftPlan {
  std::vector<std::size_t> forward;
  std::vector<std::size_t> backward;

  ShiftPlan inverted() const { return {backward, forward}; }
  friend bool operator==(const ShiftPlan&, const ShiftPlan&) = default;
};

// Number of shifted channels for a given ratio: 2 * floor(C * mu / 2).
std::size_t shifted_channel_count(std::size_t C, double mu);

// Draws k = shifted_channel_count(C, mu) distinct channels; the first half
// moves forward one step, the second half backward. Vacated rows are zero.
// Throws ArgumentError when k == 0 or mu is outside (0, 1].
ShiftPlan draw_shift_plan(std::size_t C, double mu, Rng& rng);

template <typename R>
Matrix<R> apply_shift_plan(const Matrix<R>& f, const ShiftPlan& plan);

template <typename R>
std::pair<Matrix<R>, ShiftPlan> temporal_shift(const Matrix<R>& f, double mu, Rng& rng) {
  ShiftPlan plan = draw_shift_plan(f.cols(), mu, rng);
  Matrix<R> shifted = apply_shift_plan(f, plan);
  return {std::move(shifted), std::move(plan)};
}

// Row t of the result is row T-1-t of the input.
template <typename R>
Matrix<R> temporal_flip(const Matrix<R>& f);

// Re-expresses outputs computed on a sequence in the time-reversed frame:
// starts become ends and candidate [i, i+d+1] moves to start T-(d+1)-i.
// Recon and order outputs are dropped; base features are flipped.
template <typename R>
ModelOutputs<R> align_flip_outputs(const ModelOutputs<R>& out);

// Same reflection applied to a D x T grid: M'(d, i) = M(d, T-(d+1)-i),
// zero where the source index falls outside the grid.
template <typename V>
Matrix<V> reflect_candidate_map(const Matrix<V>& map) {
  const std::size_t D = map.rows();
  const std::size_t T = map.cols();
  Matrix<V> out(D, T, V{0});
  for (std::size_t d = 0; d < D; ++d) {
    if (d + 1 > T) continue;
    for (std::size_t i = 0; i + d + 1 <= T; ++i) out(d, i) = map(d, T - (d + 1) - i);
  }
  return out;
}

}  // namespace sstap
