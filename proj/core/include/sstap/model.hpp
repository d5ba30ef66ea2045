#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sstap/outputs.hpp"
#include "sstap/random.hpp"
#include "sstap/tensor.hpp"

namespace sstap {

// Sizes that fix every parameter tensor of the proposal network.
struct HyperShape {
  std::size_t T = 100;  // snippets per video
  std::size_t C = 16;   // input channels
  std::size_t H = 32;   // base / TEM width
  std::size_t H2 = 16;  // PEM width
  std::size_t D = 100;  // max candidate duration (rows of the BM map)
  std::size_t N = 8;    // sample points per candidate
  std::size_t K = 2;    // clips for order prediction

  std::size_t order_classes() const;
  // Throws ArgumentError on inconsistent sizes.
  void validate() const;
  friend bool operator==(const HyperShape&, const HyperShape&) = default;
};

enum class ParamId : std::size_t {
  base1_w, base1_b, base2_w, base2_b,
  tem1_w, tem1_b, tem2_w, tem2_b,
  pem1_w, pem1_b, bm_reduce_w, bm_reduce_b,
  pem2d1_w, pem2d1_b, pem2d2_w, pem2d2_b,
  recon_w, recon_b,
  order1_w, order1_b, order_fc_w, order_fc_b,
  count
};

inline constexpr std::size_t kParamCount = static_cast<std::size_t>(ParamId::count);

std::string_view param_name(ParamId id);
std::vector<std::size_t> param_shape(ParamId id, const HyperShape& hs);
// Input fan of a weight tensor; 0 for biases.
std::size_t param_fan_in(ParamId id, const HyperShape& hs);
bool is_bias(ParamId id);

// All trainable tensors of one model, in declaration order. Value type: a
// copy is a deep copy (used to initialize the teacher).
template <typename R>
class ParamStore {
 public:
  ParamStore() = default;
  // Zero-filled tensors shaped for `hs`.
  explicit ParamStore(const HyperShape& hs);

  const HyperShape& shape() const noexcept { return shape_; }
  std::size_t tensor_count() const noexcept { return tensors_.size(); }
  std::size_t scalar_count() const noexcept;

  Tensor<R>& operator[](ParamId id) noexcept { return tensors_[static_cast<std::size_t>(id)]; }
  const Tensor<R>& operator[](ParamId id) const noexcept {
    return tensors_[static_cast<std::size_t>(id)];
  }
  Tensor<R>& at(std::size_t k) { return tensors_.at(k); }
  const Tensor<R>& at(std::size_t k) const { return tensors_.at(k); }

  void zero();
  // this <- a * this + b * other
  void axpby(R a, R b, const ParamStore& other);
  bool all_finite() const;
  bool same_layout(const ParamStore& other) const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out(shape_);
    for (std::size_t k = 0; k < tensors_.size(); ++k) {
      for (std::size_t j = 0; j < tensors_[k].size(); ++j) out.at(k)[j] = static_cast<U>(tensors_[k][j]);
    }
    return out;
  }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  HyperShape shape_;
  std::vector<Tensor<R>> tensors_;
};

// Kernels ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)), biases zero. Values are
// drawn in double, so float and double stores agree up to rounding.
template <typename R>
ParamStore<R> init_params(const HyperShape& hs, std::uint64_t seed);

// Linear-interpolation sampling weights of the boundary-matching layer.
// Column (d, i, n) holds at most two taps into the T snippet positions.
class BMSamplingMask {
 public:
  BMSamplingMask() = default;
  BMSamplingMask(std::size_t T, std::size_t D, std::size_t N);

  std::size_t T() const noexcept { return T_; }
  std::size_t D() const noexcept { return D_; }
  std::size_t N() const noexcept { return N_; }
  const Matrix<std::uint8_t>& valid_mask() const noexcept { return valid_; }

  struct Taps {
    std::uint32_t lo = 0;
    std::uint32_t hi = 0;
    double w_lo = 0.0;
    double w_hi = 0.0;
  };
  const Taps& taps(std::size_t d, std::size_t i, std::size_t n) const noexcept {
    return taps_[(d * T_ + i) * N_ + n];
  }
  // Dense view: weight of snippet t in column (d, i, n).
  double weight(std::size_t t, std::size_t d, std::size_t i, std::size_t n) const noexcept;

 private:
  std::size_t T_ = 0;
  std::size_t D_ = 0;
  std::size_t N_ = 0;
  Matrix<std::uint8_t> valid_;
  std::vector<Taps> taps_;
};

BMSamplingMask build_bm_mask(std::size_t T, std::size_t D, std::size_t N);

// Everything backward needs from one forward pass, including the dropout
// noise so the pass can be replayed exactly.
template <typename R>
struct Tape {
  Heads heads;
  bool train_mode = false;
  Matrix<R> input;          // T x C
  Matrix<R> a1;             // T x H
  Matrix<R> a2;             // T x H, pre-dropout
  Matrix<R> dropout_scale;  // T x H (0 or 1/(1-p)); empty when not training
  Matrix<R> base;           // T x H
  // TEM
  Matrix<R> t1;     // T x H
  Matrix<R> probs;  // T x 2 sigmoid outputs
  // PEM, maps stored planar [channel][d * T + i]
  Matrix<R> x;        // T x H2
  Matrix<R> samples;  // (N * H2) x (D * T)
  Matrix<R> y;        // H2 x (D * T)
  Matrix<R> z1;       // H2 x (D * T)
  Matrix<R> maps;     // 2 x (D * T), masked sigmoid
  // order head
  Matrix<R> o1;  // T x H
  std::vector<R> pooled;
};

template <typename R>
struct ForwardOptions {
  bool train_mode = false;
  double p_drop = 0.1;
  // Dropout noise source; required in train mode unless `dropout_scale`
  // supplies a recorded mask.
  Rng* rng = nullptr;
  const Matrix<R>* dropout_scale = nullptr;
};

template <typename R>
struct ForwardResult {
  ModelOutputs<R> out;
  Tape<R> tape;
};

// The proposal network: base module, TEM, PEM with the BM layer, plus the
// reconstruction and clip-order heads.
class ProposalModel {
 public:
  explicit ProposalModel(const HyperShape& hs);

  const HyperShape& shape() const noexcept { return shape_; }
  const BMSamplingMask& bm_mask() const noexcept { return mask_; }

  // Throws ArgumentError on a shape mismatch and NumericError (naming the
  // layer) when an activation turns non-finite.
  template <typename R>
  ForwardResult<R> forward(const ParamStore<R>& params, const Matrix<R>& f, Heads heads,
                           const ForwardOptions<R>& opts = {}) const;

  // Adds dL/dtheta to `grad`. Throws ContractError when `grads` carries a
  // head the tape did not run or has mismatched shapes.
  template <typename R>
  void backward(const ParamStore<R>& params, const Tape<R>& tape, const OutputGrads<R>& grads,
                ParamStore<R>& grad) const;

  template <typename R>
  ParamStore<R> backward(const ParamStore<R>& params, const Tape<R>& tape,
                         const OutputGrads<R>& grads) const {
    ParamStore<R> g(shape_);
    backward(params, tape, grads, g);
    return g;
  }

  // BM sampling in isolation: x is T x H2, result is (N * H2) x (D * T).
  template <typename R>
  Matrix<R> bm_sample(const Matrix<R>& x) const;

 private:
  HyperShape shape_;
  BMSamplingMask mask_;
};

}  // namespace sstap
