#include "sstap/grad_check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "sstap/data.hpp"
#include "sstap/error.hpp"
#include "sstap/losses.hpp"
#include "sstap/pretext.hpp"
#include "sstap/random.hpp"

namespace sstap {

namespace {

using R = double;

struct Problem {
  Matrix<R> input;
  LabelMaps labels;
  ModelOutputs<R> target;  // fixed consistency target
  Matrix<R> recon_target;
  std::size_t order_label = 0;
  std::vector<R> probe;  // weights of the linear probe
};

Problem make_problem(const HyperShape& hs, std::uint64_t seed) {
  Rng rng = derive_rng({seed, 0x67726164ULL});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  Problem p;
  p.input = Matrix<R>(hs.T, hs.C);
  for (auto& v : p.input.values()) v = normal(rng);
  // one instance in the first half, one in the second
  AnnotationSet ann;
  const double half = static_cast<double>(hs.T) / 2.0;
  ann.instances.push_back({1.0, std::floor(half) - 1.0});
  ann.instances.push_back({std::floor(half) + 1.0, static_cast<double>(hs.T) - 1.5});
  p.labels = build_label_maps(ann, hs.T, hs.D);

  p.target.p_s.resize(hs.T);
  p.target.p_e.resize(hs.T);
  for (auto& v : p.target.p_s) v = unit(rng);
  for (auto& v : p.target.p_e) v = unit(rng);
  p.target.valid_mask = candidate_valid_mask(hs.T, hs.D);
  p.target.m_cc = Matrix<R>(hs.D, hs.T);
  p.target.m_cr = Matrix<R>(hs.D, hs.T);
  for (std::size_t k = 0; k < p.target.m_cc.size(); ++k) {
    if (!p.target.valid_mask.data()[k]) continue;
    p.target.m_cc.data()[k] = unit(rng);
    p.target.m_cr.data()[k] = unit(rng);
  }
  p.recon_target = Matrix<R>(hs.T, hs.C);
  for (auto& v : p.recon_target.values()) v = normal(rng);
  p.order_label = std::uniform_int_distribution<std::size_t>(0, hs.order_classes() - 1)(rng);
  p.probe.resize(hs.order_classes());
  for (auto& v : p.probe) v = normal(rng);
  return p;
}

// ReLU on/off pattern of a forward pass.
std::vector<bool> relu_pattern(const Tape<R>& t) {
  std::vector<bool> out;
  for (const Matrix<R>* m : {&t.a1, &t.a2, &t.t1, &t.x, &t.y, &t.z1, &t.o1}) {
    for (R v : m->values()) out.push_back(v > 0.0);
  }
  return out;
}

}  // namespace

std::string GradCheckReport::to_json() const {
  nlohmann::json j;
  j["pass"] = pass;
  j["max_rel_error"] = max_rel_error;
  j["kink_refined"] = kink_refined;
  j["kink_skipped"] = kink_skipped;
  j["loss"] = loss;
  j["seconds"] = seconds;
  j["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) {
    j["tensors"].push_back({{"name", t.name},
                            {"checked", t.checked},
                            {"kink_refined", t.kink_refined},
                            {"kink_skipped", t.kink_skipped},
                            {"max_abs_analytic", t.max_abs_analytic},
                            {"max_abs_numeric", t.max_abs_numeric},
                            {"rel_error", t.rel_error},
                            {"pass", t.pass}});
  }
  return j.dump(2);
}

GradCheckReport grad_check(const GradCheckOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const HyperShape& hs = opts.shape;
  hs.validate();
  const ProposalModel model(hs);
  ParamStore<R> params = init_params<R>(hs, opts.seed);
  // Nonzero biases so that their gradients are exercised away from init.
  {
    Rng brng = derive_rng({opts.seed, 0x62696173ULL});
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    for (std::size_t k = 0; k < kParamCount; ++k) {
      if (!is_bias(static_cast<ParamId>(k))) continue;
      for (std::size_t j = 0; j < params.at(k).size(); ++j) params.at(k)[j] = small(brng);
    }
  }
  const Problem prob = make_problem(hs, opts.seed);
  const bool linear = opts.mode == GradCheckMode::linear_probe;
  const Heads heads = linear ? Heads::order_only() : Heads::all();

  // Dropout noise recorded once and replayed; the unfrozen control reseeds.
  Rng drop_rng = derive_rng({opts.seed, 0x64726f70ULL});
  ForwardOptions<R> base_opts;
  base_opts.train_mode = !linear;
  base_opts.p_drop = opts.p_drop;
  base_opts.rng = &drop_rng;
  auto first = model.forward(params, prob.input, heads, base_opts);
  const Matrix<R> frozen = first.tape.dropout_scale;
  std::uint64_t fresh_counter = 0;

  auto evaluate = [&](const ParamStore<R>& p, OutputGrads<R>* g, Tape<R>* tape_out) {
    ForwardOptions<R> o;
    o.train_mode = !linear;
    o.p_drop = opts.p_drop;
    Rng local = derive_rng({opts.seed, 0x667265736875ULL, ++fresh_counter});
    if (opts.mode == GradCheckMode::unfrozen_dropout) o.rng = &local;
    else o.dropout_scale = &frozen;
    auto fr = model.forward(p, prob.input, heads, o);
    double loss = 0.0;
    if (linear) {
      const auto& z = *fr.out.order_logits;
      for (std::size_t k = 0; k < z.size(); ++k) loss += prob.probe[k] * z[k];
      if (g) g->order_logits = prob.probe;
    } else {
      if (g) {
        g->recon = Matrix<R>(hs.T, hs.C);
        g->order_logits.assign(hs.order_classes(), 0.0);
      }
      loss += supervised_loss(fr.out, prob.labels, g);
      loss += consistency_loss(fr.out, prob.target, g);
      loss += recon_loss(*fr.out.recon, prob.recon_target, g ? &g->recon : nullptr);
      loss += order_loss<R>(*fr.out.order_logits, prob.order_label, g ? std::span<R>(g->order_logits) : std::span<R>{});
    }
    if (tape_out) *tape_out = std::move(fr.tape);
    return loss;
  };

  GradCheckReport rep;
  OutputGrads<R> og;
  Tape<R> tape;
  rep.loss = evaluate(params, &og, &tape);
  const ParamStore<R> analytic = model.backward(params, tape, og);

  rep.pass = true;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    const auto id = static_cast<ParamId>(k);
    if (linear && id != ParamId::order_fc_w && id != ParamId::order_fc_b) continue;
    TensorCheck tc;
    tc.name = std::string(param_name(id));
    for (std::size_t j = 0; j < params.at(k).size(); ++j) {
      const double orig = params.at(k)[j];
      // Shrink the step while the +h and -h evaluations straddle a ReLU kink.
      double h = opts.h;
      bool clean = false;
      double lp = 0.0, lm = 0.0;
      for (int attempt = 0; attempt < 5 && !clean; ++attempt, h *= 0.1) {
        Tape<R> tp, tm;
        params.at(k)[j] = orig + h;
        lp = evaluate(params, nullptr, &tp);
        params.at(k)[j] = orig - h;
        lm = evaluate(params, nullptr, &tm);
        params.at(k)[j] = orig;
        clean = linear || opts.mode != GradCheckMode::full || relu_pattern(tp) == relu_pattern(tm);
        if (!clean) ++tc.kink_refined;
      }
      if (!clean) {
        ++tc.kink_skipped;
        continue;
      }
      h *= 10.0;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = analytic.at(k)[j];
      tc.max_abs_analytic = std::max(tc.max_abs_analytic, std::abs(ana));
      tc.max_abs_numeric = std::max(tc.max_abs_numeric, std::abs(num));
      tc.max_abs_diff = std::max(tc.max_abs_diff, std::abs(ana - num));
      ++tc.checked;
    }
    const double denom = std::max({tc.max_abs_analytic, tc.max_abs_numeric, 1e-12});
    tc.rel_error = tc.max_abs_diff / denom;
    tc.pass = tc.checked > 0 && tc.rel_error <= opts.tolerance;
    rep.pass = rep.pass && tc.pass;
    rep.max_rel_error = std::max(rep.max_rel_error, tc.rel_error);
    rep.kink_skipped += tc.kink_skipped;
    rep.kink_refined += tc.kink_refined;
    rep.tensors.push_back(std::move(tc));
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace sstap
