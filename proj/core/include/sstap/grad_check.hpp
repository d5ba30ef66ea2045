#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sstap/model.hpp"

namespace sstap {

enum class GradCheckMode {
  // Composite loss over every head with dropout noise replayed from the tape.
  full,
  // As `full`, but every evaluation draws fresh dropout noise. Expected to fail.
  unfrozen_dropout,
  // A loss linear in the order logits; only the final linear layer is checked.
  linear_probe,
};

struct GradCheckOptions {
  HyperShape shape{12, 3, 4, 4, 6, 4, 2};
  std::uint64_t seed = 7;
  double h = 1e-3;
  double tolerance = 1e-4;
  double p_drop = 0.1;
  GradCheckMode mode = GradCheckMode::full;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  // Evaluations whose +h and -h points sat on different sides of a ReLU
  // kink; the step is then divided by 10 (up to four times). Coordinates
  // that never clear the kink are skipped.
  std::size_t kink_refined = 0;
  std::size_t kink_skipped = 0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
  double max_abs_diff = 0.0;
  // max |a - n| / max(max |a|, max |n|, 1e-12) over the tensor
  double rel_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  std::size_t kink_refined = 0;
  std::size_t kink_skipped = 0;
  double loss = 0.0;
  double seconds = 0.0;
  bool pass = false;

  std::string to_json() const;
};

// Central finite differences against backward() in 64-bit arithmetic.
// Failures are reported, not thrown; invalid shapes still raise ArgumentError.
GradCheckReport grad_check(const GradCheckOptions& opts = {});

}  // namespace sstap
