#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sstap/tensor.hpp"

namespace sstap {

// Which output heads a forward pass evaluates. The base module always runs.
struct Heads {
  bool proposal = true;
  bool recon = false;
  bool order = false;

  static constexpr Heads proposal_only() { return {true, false, false}; }
  static constexpr Heads recon_only() { return {false, true, false}; }
  static constexpr Heads order_only() { return {false, false, true}; }
  static constexpr Heads all() { return {true, true, true}; }
};

template <typename R>
struct ModelOutputs {
  // Boundary probabilities, length T; empty when the proposal head is off.
  std::vector<R> p_s;
  std::vector<R> p_e;
  // Boundary-matching confidence maps, D x T, zero outside valid_mask.
  Matrix<R> m_cc;
  Matrix<R> m_cr;
  Matrix<std::uint8_t> valid_mask;
  Matrix<R> base_feat;  // T x H
  std::optional<Matrix<R>> recon;
  std::optional<std::vector<R>> order_logits;

  bool has_proposals() const noexcept { return !p_s.empty(); }
  std::size_t T() const noexcept { return p_s.size(); }
};

// Gradients of a scalar loss with respect to model outputs. Empty members are
// treated as zero.
template <typename R>
struct OutputGrads {
  std::vector<R> p_s;
  std::vector<R> p_e;
  Matrix<R> m_cc;
  Matrix<R> m_cr;
  Matrix<R> recon;
  std::vector<R> order_logits;

  // Sizes the proposal members to match `out`, zero filled, if not already.
  void ensure_proposal(const ModelOutputs<R>& out) {
    if (p_s.empty()) {
      p_s.assign(out.p_s.size(), R{0});
      p_e.assign(out.p_e.size(), R{0});
      m_cc = Matrix<R>(out.m_cc.rows(), out.m_cc.cols());
      m_cr = Matrix<R>(out.m_cr.rows(), out.m_cr.cols());
    }
  }
};

}  // namespace sstap
