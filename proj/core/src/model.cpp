#include "sstap/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sstap/error.hpp"
#include "sstap/data.hpp"
#include "sstap/pretext.hpp"

namespace sstap {

// ---------------------------------------------------------------------------
// Shapes and parameter bookkeeping

std::size_t HyperShape::order_classes() const { return factorial(K); }

void HyperShape::validate() const {
  std::ostringstream why;
  if (T < 4) why << "T must be >= 4; ";
  if (C < 1 || H < 1 || H2 < 1) why << "C, H and H2 must be >= 1; ";
  if (D < 1 || D > T) why << "D must lie in [1, T]; ";
  if (N < 2) why << "N must be >= 2; ";
  if (K < 2 || K > T || K > 6) why << "K must lie in [2, min(T, 6)]; ";
  if (!why.str().empty()) throw ArgumentError("invalid hyper shape: " + why.str());
}

std::string_view param_name(ParamId id) {
  static constexpr std::array<std::string_view, kParamCount> names = {
      "base1.w",  "base1.b",  "base2.w",     "base2.b",     "tem1.w",    "tem1.b",
      "tem2.w",   "tem2.b",   "pem1.w",      "pem1.b",      "bm_reduce.w", "bm_reduce.b",
      "pem2d1.w", "pem2d1.b", "pem2d2.w",    "pem2d2.b",    "recon.w",   "recon.b",
      "order1.w", "order1.b", "order_fc.w",  "order_fc.b"};
  return names.at(static_cast<std::size_t>(id));
}

bool is_bias(ParamId id) { return static_cast<std::size_t>(id) % 2 == 1; }

std::vector<std::size_t> param_shape(ParamId id, const HyperShape& s) {
  switch (id) {
    case ParamId::base1_w: return {s.H, s.C, 3};
    case ParamId::base1_b: return {s.H};
    case ParamId::base2_w: return {s.H, s.H, 3};
    case ParamId::base2_b: return {s.H};
    case ParamId::tem1_w: return {s.H, s.H, 3};
    case ParamId::tem1_b: return {s.H};
    case ParamId::tem2_w: return {2, s.H, 1};
    case ParamId::tem2_b: return {2};
    case ParamId::pem1_w: return {s.H2, s.H, 3};
    case ParamId::pem1_b: return {s.H2};
    case ParamId::bm_reduce_w: return {s.H2, s.N, s.H2};
    case ParamId::bm_reduce_b: return {s.H2};
    case ParamId::pem2d1_w: return {s.H2, s.H2, 3, 3};
    case ParamId::pem2d1_b: return {s.H2};
    case ParamId::pem2d2_w: return {2, s.H2, 3, 3};
    case ParamId::pem2d2_b: return {2};
    case ParamId::recon_w: return {s.C, s.H, 3};
    case ParamId::recon_b: return {s.C};
    case ParamId::order1_w: return {s.H, s.H, 3};
    case ParamId::order1_b: return {s.H};
    case ParamId::order_fc_w: return {s.order_classes(), s.H};
    case ParamId::order_fc_b: return {s.order_classes()};
    case ParamId::count: break;
  }
  throw ArgumentError("unknown parameter id");
}

std::size_t param_fan_in(ParamId id, const HyperShape& s) {
  if (is_bias(id)) return 0;
  const auto shape = param_shape(id, s);
  std::size_t fan = 1;
  for (std::size_t k = 1; k < shape.size(); ++k) fan *= shape[k];
  return fan;
}

template <typename R>
ParamStore<R>::ParamStore(const HyperShape& hs) : shape_(hs) {
  tensors_.reserve(kParamCount);
  for (std::size_t k = 0; k < kParamCount; ++k) {
    tensors_.emplace_back(param_shape(static_cast<ParamId>(k), hs));
  }
}

template <typename R>
std::size_t ParamStore<R>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

template <typename R>
void ParamStore<R>::zero() {
  for (auto& t : tensors_) t.fill(R{0});
}

template <typename R>
bool ParamStore<R>::same_layout(const ParamStore& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t k = 0; k < tensors_.size(); ++k) {
    if (tensors_[k].shape() != other.tensors_[k].shape()) return false;
  }
  return true;
}

template <typename R>
void ParamStore<R>::axpby(R a, R b, const ParamStore& other) {
  if (!same_layout(other)) throw ContractError("parameter stores have different layouts");
  for (std::size_t k = 0; k < tensors_.size(); ++k) {
    R* dst = tensors_[k].data();
    const R* src = other.tensors_[k].data();
    for (std::size_t j = 0; j < tensors_[k].size(); ++j) dst[j] = a * dst[j] + b * src[j];
  }
}

template <typename R>
bool ParamStore<R>::all_finite() const {
  for (const auto& t : tensors_) {
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (!std::isfinite(t[j])) return false;
    }
  }
  return true;
}

template <typename R>
ParamStore<R> init_params(const HyperShape& hs, std::uint64_t seed) {
  hs.validate();
  ParamStore<R> p(hs);
  Rng rng(seed);
  for (std::size_t k = 0; k < kParamCount; ++k) {
    const auto id = static_cast<ParamId>(k);
    if (is_bias(id)) continue;
    const double bound = std::sqrt(1.0 / static_cast<double>(param_fan_in(id, hs)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t j = 0; j < p[id].size(); ++j) p[id][j] = static_cast<R>(dist(rng));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Boundary-matching sampling mask

BMSamplingMask::BMSamplingMask(std::size_t T, std::size_t D, std::size_t N)
    : T_(T), D_(D), N_(N), valid_(candidate_valid_mask(T, D)), taps_(T * D * N) {
  if (D < 1 || D > T || N < 2) throw ArgumentError("build_bm_mask: need 1 <= D <= T and N >= 2");
  const double t_max = static_cast<double>(T - 1);
  for (std::size_t d = 0; d < D; ++d) {
    const double len = static_cast<double>(d + 1);
    for (std::size_t i = 0; i + d + 1 <= T; ++i) {
      const double lo = static_cast<double>(i) - 0.25 * len;
      const double hi = static_cast<double>(i) + 1.25 * len;
      for (std::size_t n = 0; n < N; ++n) {
        double x = lo + (hi - lo) * static_cast<double>(n) / static_cast<double>(N - 1);
        x = std::clamp(x, 0.0, t_max);
        const double fl = std::floor(x);
        const double frac = x - fl;
        Taps& tp = taps_[(d * T + i) * N + n];
        tp.lo = static_cast<std::uint32_t>(fl);
        if (frac > 0.0) {
          tp.hi = tp.lo + 1;
          tp.w_lo = 1.0 - frac;
          tp.w_hi = frac;
        } else {
          tp.hi = tp.lo;
          tp.w_lo = 1.0;
          tp.w_hi = 0.0;
        }
      }
    }
  }
}

double BMSamplingMask::weight(std::size_t t, std::size_t d, std::size_t i, std::size_t n) const noexcept {
  if (d >= D_ || i >= T_ || n >= N_ || !valid_(d, i)) return 0.0;
  const Taps& tp = taps(d, i, n);
  double w = 0.0;
  if (tp.lo == t) w += tp.w_lo;
  if (tp.hi == t) w += tp.w_hi;
  return w;
}

BMSamplingMask build_bm_mask(std::size_t T, std::size_t D, std::size_t N) { return {T, D, N}; }

// ---------------------------------------------------------------------------
// Kernels

namespace {

template <typename R>
inline R dot(const R* a, const R* b, std::size_t n) {
  R acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

template <typename R>
inline void axpy(R a, const R* x, R* y, std::size_t n) {
#pragma omp simd
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

template <typename R>
inline R sigmoid(R z) {
  return R{1} / (R{1} + std::exp(-z));
}

template <typename R>
void check_finite(const Matrix<R>& m, const char* layer) {
  for (R v : m.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite activation in layer ") + layer);
  }
}

template <typename R>
void relu_inplace(Matrix<R>& m) {
  for (R& v : m.values()) v = v > R{0} ? v : R{0};
}

// Zeroes gradient entries where the ReLU output was not positive.
template <typename R>
void relu_backward(const Matrix<R>& act, Matrix<R>& grad) {
  const R* a = act.data();
  R* g = grad.data();
  for (std::size_t k = 0; k < grad.size(); ++k) g[k] = a[k] > R{0} ? g[k] : R{0};
}

// out(t, o) = b[o] + sum_{c, j} w[o, c, j] * in(t + j - k/2, c), zero padded.
template <typename R>
Matrix<R> conv1d(const Matrix<R>& in, const Tensor<R>& w, const Tensor<R>& b) {
  const std::size_t T = in.rows();
  const std::size_t cin = w.shape()[1];
  const std::size_t cout = w.shape()[0];
  const std::size_t k = w.shape()[2];
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Matrix<R> out(T, cout);
  for (std::size_t t = 0; t < T; ++t) {
    R* orow = out.row(t).data();
    for (std::size_t o = 0; o < cout; ++o) orow[o] = b[o];
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - pad;
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
      const R* x = in.row(static_cast<std::size_t>(s)).data();
      for (std::size_t o = 0; o < cout; ++o) {
        const R* wo = w.data() + o * cin * k + j;
        R acc = 0;
        for (std::size_t c = 0; c < cin; ++c) acc += wo[c * k] * x[c];
        orow[o] += acc;
      }
    }
  }
  return out;
}

template <typename R>
void conv1d_backward(const Matrix<R>& in, const Tensor<R>& w, const Matrix<R>& dout, Matrix<R>* din,
                     Tensor<R>& dw, Tensor<R>& db) {
  const std::size_t T = in.rows();
  const std::size_t cin = w.shape()[1];
  const std::size_t cout = w.shape()[0];
  const std::size_t k = w.shape()[2];
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t t = 0; t < T; ++t) {
    const R* grow = dout.row(t).data();
    for (std::size_t o = 0; o < cout; ++o) {
      const R g = grow[o];
      if (g == R{0}) continue;
      db[o] += g;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - pad;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
        const R* x = in.row(static_cast<std::size_t>(s)).data();
        R* dwo = dw.data() + o * cin * k + j;
        const R* wo = w.data() + o * cin * k + j;
        for (std::size_t c = 0; c < cin; ++c) dwo[c * k] += g * x[c];
        if (din) {
          R* dx = din->row(static_cast<std::size_t>(s)).data();
          for (std::size_t c = 0; c < cin; ++c) dx[c] += g * wo[c * k];
        }
      }
    }
  }
}

// 3x3 convolution with zero padding over planar maps [channel][d * T + i].
template <typename R>
Matrix<R> conv2d(const Matrix<R>& in, const Tensor<R>& w, const Tensor<R>& b, std::size_t D,
                 std::size_t T) {
  const std::size_t cout = w.shape()[0];
  const std::size_t cin = w.shape()[1];
  Matrix<R> out(cout, D * T);
  for (std::size_t o = 0; o < cout; ++o) {
    R* op = out.row(o).data();
    std::fill(op, op + D * T, b[o]);
    for (std::size_t c = 0; c < cin; ++c) {
      const R* ip = in.row(c).data();
      for (std::size_t kd = 0; kd < 3; ++kd) {
        for (std::size_t kt = 0; kt < 3; ++kt) {
          const R wv = w[((o * cin + c) * 3 + kd) * 3 + kt];
          const std::size_t t_lo = kt == 0 ? 1 : 0;
          const std::size_t t_hi = kt == 2 ? T - 1 : T;
          for (std::size_t d = 0; d < D; ++d) {
            const std::ptrdiff_t sd = static_cast<std::ptrdiff_t>(d) + static_cast<std::ptrdiff_t>(kd) - 1;
            if (sd < 0 || sd >= static_cast<std::ptrdiff_t>(D)) continue;
            const R* src = ip + static_cast<std::size_t>(sd) * T + t_lo + kt - 1;
            axpy(wv, src, op + d * T + t_lo, t_hi - t_lo);
          }
        }
      }
    }
  }
  return out;
}

template <typename R>
void conv2d_backward(const Matrix<R>& in, const Tensor<R>& w, const Matrix<R>& dout, Matrix<R>* din,
                     Tensor<R>& dw, Tensor<R>& db, std::size_t D, std::size_t T) {
  const std::size_t cout = w.shape()[0];
  const std::size_t cin = w.shape()[1];
  for (std::size_t o = 0; o < cout; ++o) {
    const R* gp = dout.row(o).data();
    R bsum = 0;
    for (std::size_t k = 0; k < D * T; ++k) bsum += gp[k];
    db[o] += bsum;
    for (std::size_t c = 0; c < cin; ++c) {
      const R* ip = in.row(c).data();
      R* dip = din ? din->row(c).data() : nullptr;
      for (std::size_t kd = 0; kd < 3; ++kd) {
        for (std::size_t kt = 0; kt < 3; ++kt) {
          const std::size_t widx = ((o * cin + c) * 3 + kd) * 3 + kt;
          const R wv = w[widx];
          const std::size_t t_lo = kt == 0 ? 1 : 0;
          const std::size_t t_hi = kt == 2 ? T - 1 : T;
          R acc = 0;
          for (std::size_t d = 0; d < D; ++d) {
            const std::ptrdiff_t sd = static_cast<std::ptrdiff_t>(d) + static_cast<std::ptrdiff_t>(kd) - 1;
            if (sd < 0 || sd >= static_cast<std::ptrdiff_t>(D)) continue;
            const std::size_t src_off = static_cast<std::size_t>(sd) * T + t_lo + kt - 1;
            acc += dot(gp + d * T + t_lo, ip + src_off, t_hi - t_lo);
            if (dip) axpy(wv, gp + d * T + t_lo, dip + src_off, t_hi - t_lo);
          }
          dw[widx] += acc;
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward / backward

ProposalModel::ProposalModel(const HyperShape& hs) : shape_(hs) {
  hs.validate();
  mask_ = build_bm_mask(hs.T, hs.D, hs.N);
}

template <typename R>
Matrix<R> ProposalModel::bm_sample(const Matrix<R>& x) const {
  const std::size_t T = shape_.T, D = shape_.D, N = shape_.N, H2 = x.cols();
  Matrix<R> s(N * H2, D * T);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t i = 0; i + d + 1 <= T; ++i) {
      const std::size_t cell = d * T + i;
      for (std::size_t n = 0; n < N; ++n) {
        const auto& tp = mask_.taps(d, i, n);
        const R wl = static_cast<R>(tp.w_lo);
        const R wh = static_cast<R>(tp.w_hi);
        const R* xl = x.row(tp.lo).data();
        const R* xh = x.row(tp.hi).data();
        for (std::size_t h = 0; h < H2; ++h) s(n * H2 + h, cell) = wl * xl[h] + wh * xh[h];
      }
    }
  }
  return s;
}

template <typename R>
ForwardResult<R> ProposalModel::forward(const ParamStore<R>& p, const Matrix<R>& f, Heads heads,
                                        const ForwardOptions<R>& opts) const {
  const HyperShape& hs = shape_;
  if (!(p.shape() == hs)) throw ArgumentError("forward: parameter store shape differs from model");
  if (f.rows() != hs.T || f.cols() != hs.C) {
    std::ostringstream os;
    os << "forward: input is " << f.rows() << "x" << f.cols() << ", model expects " << hs.T << "x" << hs.C;
    throw ArgumentError(os.str());
  }
  const std::size_t T = hs.T, D = hs.D, H = hs.H, H2 = hs.H2, N = hs.N;

  ForwardResult<R> res;
  Tape<R>& tp = res.tape;
  ModelOutputs<R>& out = res.out;
  tp.heads = heads;
  tp.train_mode = opts.train_mode;
  tp.input = f;

  // Base module
  tp.a1 = conv1d(f, p[ParamId::base1_w], p[ParamId::base1_b]);
  relu_inplace(tp.a1);
  check_finite(tp.a1, "base1");
  tp.a2 = conv1d(tp.a1, p[ParamId::base2_w], p[ParamId::base2_b]);
  relu_inplace(tp.a2);
  check_finite(tp.a2, "base2");
  tp.base = tp.a2;
  if (opts.train_mode && opts.p_drop > 0.0) {
    if (opts.dropout_scale) {
      if (!opts.dropout_scale->same_shape(tp.a2)) throw ContractError("forward: recorded dropout mask has wrong shape");
      tp.dropout_scale = *opts.dropout_scale;
    } else {
      if (!opts.rng) throw ArgumentError("forward: train mode needs a dropout rng or a recorded mask");
      tp.dropout_scale = Matrix<R>(T, H);
      std::bernoulli_distribution keep(1.0 - opts.p_drop);
      const R scale = static_cast<R>(1.0 / (1.0 - opts.p_drop));
      for (R& s : tp.dropout_scale.values()) s = keep(*opts.rng) ? scale : R{0};
    }
    for (std::size_t k = 0; k < tp.base.size(); ++k) tp.base.data()[k] *= tp.dropout_scale.data()[k];
  }
  out.base_feat = tp.base;
  out.valid_mask = mask_.valid_mask();

  if (heads.proposal) {
    // TEM
    tp.t1 = conv1d(tp.base, p[ParamId::tem1_w], p[ParamId::tem1_b]);
    relu_inplace(tp.t1);
    check_finite(tp.t1, "tem1");
    tp.probs = conv1d(tp.t1, p[ParamId::tem2_w], p[ParamId::tem2_b]);
    for (R& v : tp.probs.values()) v = sigmoid(v);
    check_finite(tp.probs, "tem2");
    out.p_s.resize(T);
    out.p_e.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      out.p_s[t] = tp.probs(t, 0);
      out.p_e[t] = tp.probs(t, 1);
    }

    // PEM
    tp.x = conv1d(tp.base, p[ParamId::pem1_w], p[ParamId::pem1_b]);
    relu_inplace(tp.x);
    check_finite(tp.x, "pem1");
    tp.samples = bm_sample(tp.x);

    const Tensor<R>& rw = p[ParamId::bm_reduce_w];
    const Tensor<R>& rb = p[ParamId::bm_reduce_b];
    tp.y = Matrix<R>(H2, D * T);
    for (std::size_t o = 0; o < H2; ++o) {
      R* yo = tp.y.row(o).data();
      std::fill(yo, yo + D * T, rb[o]);
      for (std::size_t nh = 0; nh < N * H2; ++nh) {
        const R wv = rw[o * N * H2 + nh];
        const R* s = tp.samples.row(nh).data();
        for (std::size_t d = 0; d < D; ++d) axpy(wv, s + d * T, yo + d * T, T - d);
      }
    }
    relu_inplace(tp.y);
    check_finite(tp.y, "bm_reduce");

    tp.z1 = conv2d(tp.y, p[ParamId::pem2d1_w], p[ParamId::pem2d1_b], D, T);
    relu_inplace(tp.z1);
    check_finite(tp.z1, "pem2d1");
    tp.maps = conv2d(tp.z1, p[ParamId::pem2d2_w], p[ParamId::pem2d2_b], D, T);
    const auto& valid = mask_.valid_mask();
    for (std::size_t ch = 0; ch < 2; ++ch) {
      R* m = tp.maps.row(ch).data();
      for (std::size_t cell = 0; cell < D * T; ++cell) m[cell] = valid.data()[cell] ? sigmoid(m[cell]) : R{0};
    }
    check_finite(tp.maps, "pem2d2");
    out.m_cc = Matrix<R>(D, T);
    out.m_cr = Matrix<R>(D, T);
    std::copy(tp.maps.row(0).begin(), tp.maps.row(0).end(), out.m_cc.data());
    std::copy(tp.maps.row(1).begin(), tp.maps.row(1).end(), out.m_cr.data());
  }

  if (heads.recon) {
    Matrix<R> r = conv1d(tp.base, p[ParamId::recon_w], p[ParamId::recon_b]);
    check_finite(r, "recon");
    out.recon = std::move(r);
  }

  if (heads.order) {
    tp.o1 = conv1d(tp.base, p[ParamId::order1_w], p[ParamId::order1_b]);
    relu_inplace(tp.o1);
    check_finite(tp.o1, "order1");
    tp.pooled.assign(H, R{0});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h) tp.pooled[h] += tp.o1(t, h);
    }
    for (R& v : tp.pooled) v /= static_cast<R>(T);
    const std::size_t n_cls = hs.order_classes();
    std::vector<R> logits(n_cls);
    for (std::size_t k = 0; k < n_cls; ++k) {
      logits[k] = p[ParamId::order_fc_b][k] + dot(p[ParamId::order_fc_w].data() + k * H, tp.pooled.data(), H);
      if (!std::isfinite(logits[k])) throw NumericError("non-finite activation in layer order_fc");
    }
    out.order_logits = std::move(logits);
  }
  return res;
}

template <typename R>
void ProposalModel::backward(const ParamStore<R>& p, const Tape<R>& tp, const OutputGrads<R>& g,
                             ParamStore<R>& grad) const {
  const HyperShape& hs = shape_;
  const std::size_t T = hs.T, D = hs.D, H = hs.H, H2 = hs.H2, N = hs.N;
  if (!grad.same_layout(p)) throw ContractError("backward: gradient store layout differs from parameters");
  if (tp.input.rows() != T) throw ContractError("backward: tape was not produced by this model");

  const bool has_prop = !g.p_s.empty() || !g.p_e.empty() || !g.m_cc.empty() || !g.m_cr.empty();
  const bool has_recon = !g.recon.empty();
  const bool has_order = !g.order_logits.empty();
  if (has_prop && !tp.heads.proposal) throw ContractError("backward: proposal gradients but proposal head did not run");
  if (has_recon && !tp.heads.recon) throw ContractError("backward: recon gradients but recon head did not run");
  if (has_order && !tp.heads.order) throw ContractError("backward: order gradients but order head did not run");
  if ((!g.p_s.empty() && g.p_s.size() != T) || (!g.p_e.empty() && g.p_e.size() != T) ||
      (!g.m_cc.empty() && (g.m_cc.rows() != D || g.m_cc.cols() != T)) ||
      (!g.m_cr.empty() && (g.m_cr.rows() != D || g.m_cr.cols() != T)) ||
      (has_recon && (g.recon.rows() != T || g.recon.cols() != hs.C)) ||
      (has_order && g.order_logits.size() != hs.order_classes())) {
    throw ContractError("backward: output gradient shapes do not match the tape");
  }

  Matrix<R> dbase(T, H);

  if (has_prop) {
    // TEM
    Matrix<R> dpre(T, 2);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t ch = 0; ch < 2; ++ch) {
        const auto& gv = ch == 0 ? g.p_s : g.p_e;
        if (gv.empty()) continue;
        const R pr = tp.probs(t, ch);
        dpre(t, ch) = gv[t] * pr * (R{1} - pr);
      }
    }
    Matrix<R> dt1(T, H);
    conv1d_backward(tp.t1, p[ParamId::tem2_w], dpre, &dt1, grad[ParamId::tem2_w], grad[ParamId::tem2_b]);
    relu_backward(tp.t1, dt1);
    conv1d_backward(tp.base, p[ParamId::tem1_w], dt1, &dbase, grad[ParamId::tem1_w], grad[ParamId::tem1_b]);

    // PEM
    Matrix<R> dmaps(2, D * T);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      const Matrix<R>& gm = ch == 0 ? g.m_cc : g.m_cr;
      if (gm.empty()) continue;
      const R* m = tp.maps.row(ch).data();
      R* dm = dmaps.row(ch).data();
      const auto* valid = mask_.valid_mask().data();
      for (std::size_t cell = 0; cell < D * T; ++cell) {
        dm[cell] = valid[cell] ? gm.data()[cell] * m[cell] * (R{1} - m[cell]) : R{0};
      }
    }
    Matrix<R> dz1(H2, D * T);
    conv2d_backward(tp.z1, p[ParamId::pem2d2_w], dmaps, &dz1, grad[ParamId::pem2d2_w], grad[ParamId::pem2d2_b], D, T);
    relu_backward(tp.z1, dz1);
    Matrix<R> dy(H2, D * T);
    conv2d_backward(tp.y, p[ParamId::pem2d1_w], dz1, &dy, grad[ParamId::pem2d1_w], grad[ParamId::pem2d1_b], D, T);
    relu_backward(tp.y, dy);

    const Tensor<R>& rw = p[ParamId::bm_reduce_w];
    Tensor<R>& drw = grad[ParamId::bm_reduce_w];
    Tensor<R>& drb = grad[ParamId::bm_reduce_b];
    Matrix<R> ds(N * H2, D * T);
    for (std::size_t o = 0; o < H2; ++o) {
      const R* dyo = dy.row(o).data();
      R bsum = 0;
      for (std::size_t cell = 0; cell < D * T; ++cell) bsum += dyo[cell];
      drb[o] += bsum;
      for (std::size_t nh = 0; nh < N * H2; ++nh) {
        const R wv = rw[o * N * H2 + nh];
        const R* s = tp.samples.row(nh).data();
        R* dsr = ds.row(nh).data();
        R acc = 0;
        for (std::size_t d = 0; d < D; ++d) {
          acc += dot(dyo + d * T, s + d * T, T - d);
          axpy(wv, dyo + d * T, dsr + d * T, T - d);
        }
        drw[o * N * H2 + nh] += acc;
      }
    }
    Matrix<R> dx(T, H2);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i + d + 1 <= T; ++i) {
        const std::size_t cell = d * T + i;
        for (std::size_t n = 0; n < N; ++n) {
          const auto& taps = mask_.taps(d, i, n);
          const R wl = static_cast<R>(taps.w_lo);
          const R wh = static_cast<R>(taps.w_hi);
          R* xl = dx.row(taps.lo).data();
          R* xh = dx.row(taps.hi).data();
          for (std::size_t h = 0; h < H2; ++h) {
            const R v = ds(n * H2 + h, cell);
            xl[h] += wl * v;
            xh[h] += wh * v;
          }
        }
      }
    }
    relu_backward(tp.x, dx);
    conv1d_backward(tp.base, p[ParamId::pem1_w], dx, &dbase, grad[ParamId::pem1_w], grad[ParamId::pem1_b]);
  }

  if (has_recon) {
    conv1d_backward(tp.base, p[ParamId::recon_w], g.recon, &dbase, grad[ParamId::recon_w], grad[ParamId::recon_b]);
  }

  if (has_order) {
    const std::size_t n_cls = hs.order_classes();
    std::vector<R> dpooled(H, R{0});
    for (std::size_t k = 0; k < n_cls; ++k) {
      const R gk = g.order_logits[k];
      grad[ParamId::order_fc_b][k] += gk;
      axpy(gk, tp.pooled.data(), grad[ParamId::order_fc_w].data() + k * H, H);
      axpy(gk, p[ParamId::order_fc_w].data() + k * H, dpooled.data(), H);
    }
    Matrix<R> do1(T, H);
    const R inv_t = R{1} / static_cast<R>(T);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h) do1(t, h) = tp.o1(t, h) > R{0} ? dpooled[h] * inv_t : R{0};
    }
    conv1d_backward(tp.base, p[ParamId::order1_w], do1, &dbase, grad[ParamId::order1_w], grad[ParamId::order1_b]);
  }

  // Base module
  if (!tp.dropout_scale.empty()) {
    for (std::size_t k = 0; k < dbase.size(); ++k) dbase.data()[k] *= tp.dropout_scale.data()[k];
  }
  relu_backward(tp.a2, dbase);
  Matrix<R> da1(T, H);
  conv1d_backward(tp.a1, p[ParamId::base2_w], dbase, &da1, grad[ParamId::base2_w], grad[ParamId::base2_b]);
  relu_backward(tp.a1, da1);
  conv1d_backward(tp.input, p[ParamId::base1_w], da1, static_cast<Matrix<R>*>(nullptr),
                  grad[ParamId::base1_w], grad[ParamId::base1_b]);
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<float> init_params(const HyperShape&, std::uint64_t);
template ParamStore<double> init_params(const HyperShape&, std::uint64_t);
template Matrix<float> ProposalModel::bm_sample(const Matrix<float>&) const;
template Matrix<double> ProposalModel::bm_sample(const Matrix<double>&) const;
template ForwardResult<float> ProposalModel::forward(const ParamStore<float>&, const Matrix<float>&, Heads,
                                                     const ForwardOptions<float>&) const;
template ForwardResult<double> ProposalModel::forward(const ParamStore<double>&, const Matrix<double>&, Heads,
                                                      const ForwardOptions<double>&) const;
template void ProposalModel::backward(const ParamStore<float>&, const Tape<float>&, const OutputGrads<float>&,
                                      ParamStore<float>&) const;
template void ProposalModel::backward(const ParamStore<double>&, const Tape<double>&, const OutputGrads<double>&,
                                      ParamStore<double>&) const;

}  // namespace sstap
