// Acceptance checks. Prints one PASS/FAIL line per criterion; the exit code
// is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sstap/ablation.hpp"
#include "sstap/data.hpp"
#include "sstap/eval.hpp"
#include "sstap/grad_check.hpp"
#include "sstap/model.hpp"
#include "sstap/perturb.hpp"
#include "sstap/pipeline.hpp"
#include "sstap/postprocess.hpp"
#include "sstap/pretext.hpp"
#include "sstap/trainer.hpp"
#include "test_util.hpp"

using namespace sstap;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double naive_iou(double s1, double e1, double s2, double e2) {
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  return inter / ((e1 - s1) + (e2 - s2) - inter);
}

double naive_overlap(double lo1, double hi1, double lo2, double hi2) {
  return std::max(0.0, std::min(hi1, hi2) - std::max(lo1, lo2));
}

// ---- label maps -----------------------------------------------------------

Outcome label_maps() {
  constexpr std::size_t T = 20, D = 10;
  constexpr int kInstances = 50;
  constexpr double kTol = 1e-12, kSeconds = 5.0;
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::uniform_real_distribution<double> pos(0.0, double(T));
  double worst = 0.0;
  for (int trial = 0; trial < kInstances; ++trial) {
    double s = pos(rng), e = pos(rng);
    if (s > e) std::swap(s, e);
    if (e - s < 0.25) e = std::min(double(T), s + 0.25);
    if (e - s < 0.25) s = e - 0.25;
    AnnotationSet ann{{{s, e}}};
    const auto lm = build_label_maps(ann, T, D);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < T; ++i) {
        const double expect = i + d + 1 <= T ? naive_iou(double(i), double(i + d + 1), s, e) : 0.0;
        worst = std::max(worst, std::abs(lm.g_iou(d, i) - expect));
      }
    }
    const double r = (e - s) / 10.0;
    for (std::size_t t = 0; t < T; ++t) {
      worst = std::max(worst, std::abs(lm.g_start[t] - naive_overlap(double(t), t + 1.0, s - r, s + r)));
      worst = std::max(worst, std::abs(lm.g_end[t] - naive_overlap(double(t), t + 1.0, e - r, e + r)));
    }
  }
  const double sec = seconds_since(t0);
  return {worst <= kTol && sec < kSeconds,
          fmt("%d instances, max abs diff %.3g (tol %.0e), %.3f s (limit %.0f s)", kInstances, worst, kTol, sec,
              kSeconds)};
}

// ---- metrics --------------------------------------------------------------

double naive_recall(const std::vector<Proposal>& props, const AnnotationSet& gt, double theta, std::size_t an) {
  std::size_t hit = 0;
  for (const auto& g : gt.instances) {
    bool found = false;
    for (std::size_t k = 0; k < std::min(an, props.size()); ++k) {
      found = found || naive_iou(props[k].start, props[k].end, g.start, g.end) >= theta;
    }
    hit += found;
  }
  return double(hit) / double(gt.size());
}

Outcome metrics() {
  constexpr double kTol = 1e-12;
  // worked example: one proposal [12, 28] against [10, 30] at {0.5, 0.75, 0.95}
  const auto ex = evaluate_dataset({{"v", {{12, 28, 0.9}}}}, {{"v", AnnotationSet{{{10, 30}}}}}, {0.5, 0.75, 0.95}, {1});
  const double ar1 = *ar_at_an(ex, 1);
  const double ex_err = std::abs(ar1 - 2.0 / 3.0);

  // three-video fixtures against direct enumeration of every (threshold, AN) cell
  Rng rng(31);
  std::uniform_real_distribution<double> u(0.0, 30.0), sc(0.0, 1.0);
  double worst_ar = 0.0, worst_auc = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::map<std::string, std::vector<Proposal>> props;
    std::vector<std::pair<std::string, AnnotationSet>> gts;
    for (const char* id : {"x", "y", "z"}) {
      auto& p = props[id];
      const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 5)(rng);
      while (p.size() < n) {
        const double a = u(rng), b = u(rng);
        if (a != b) p.push_back({std::min(a, b), std::max(a, b), sc(rng)});
      }
      std::sort(p.begin(), p.end(), [](auto& l, auto& r) { return l.score > r.score; });
      AnnotationSet g;
      const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      while (g.size() < m) {
        const double a = u(rng), b = u(rng);
        if (a != b) g.instances.push_back({std::min(a, b), std::max(a, b)});
      }
      gts.emplace_back(id, g);
    }
    const auto th = activitynet_thresholds();
    const auto res = evaluate_dataset(props, gts, th, an_grid());
    double curve_sum = 0.0;
    for (std::size_t an = 1; an <= 100; ++an) {
      double ar = 0.0;
      for (const auto& [id, g] : gts) {
        double r = 0.0;
        for (double t : th) r += naive_recall(props[id], g, t, an);
        ar += r / double(th.size());
      }
      ar /= 3.0;
      worst_ar = std::max(worst_ar, std::abs(*ar_at_an(res, an) - ar));
      curve_sum += ar;
    }
    // AUC on a 0..100 scale is the mean over AN = 1..100 times 100
    worst_auc = std::max(worst_auc, std::abs(*auc(res) - curve_sum));
  }
  return {ex_err <= kTol && worst_ar <= kTol && worst_auc <= kTol,
          fmt("AR@1 worked example %.15f (expect 2/3), 20 three-video fixtures: max |AR@AN diff| %.3g, "
              "max |AUC diff| %.3g (tol %.0e)",
              ar1, worst_ar, worst_auc, kTol)};
}

// ---- soft-nms -------------------------------------------------------------

std::vector<Proposal> hard_nms(std::vector<Proposal> p) {
  std::sort(p.begin(), p.end(), [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  std::vector<Proposal> kept;
  for (const auto& q : p) {
    bool ok = true;
    for (const auto& k : kept) ok = ok && naive_iou(q.start, q.end, k.start, k.end) <= 0.0;
    if (ok) kept.push_back(q);
  }
  return kept;
}

Outcome soft_nms_oracle() {
  constexpr int kSets = 100;
  constexpr double kTol = 1e-6;
  Rng rng(77);
  std::uniform_int_distribution<std::size_t> count(1, 20);
  std::uniform_int_distribution<int> pos(0, 20);
  std::uniform_real_distribution<double> score(0.01, 1.0);
  int matched = 0;
  for (int trial = 0; trial < kSets; ++trial) {
    const std::size_t n = count(rng);
    std::vector<Proposal> props;
    while (props.size() < n) {
      int a = pos(rng), b = pos(rng);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      props.push_back({double(a), double(b), score(rng)});
    }
    matched += soft_nms(props, {1e-6, 0.001, 100}) == hard_nms(props);
  }
  const auto decay = soft_nms({{0, 10, 1.0}, {0, 8, 0.9}}, {0.4, 0.001, 100});
  const double got = decay.size() == 2 ? decay[1].score : -1.0;
  const double err = std::abs(got - 0.9 * std::exp(-1.6));
  return {matched == kSets && err <= kTol,
          fmt("sigma=1e-6 equals hard NMS on %d/%d sets; decay example %.6f vs 0.9*exp(-1.6) = %.6f, err %.2g "
              "(tol %.0e)",
              matched, kSets, got, 0.9 * std::exp(-1.6), err, kTol)};
}

// ---- gradient check -------------------------------------------------------

Outcome gradient_check() {
  constexpr double kTol = 1e-4, kSeconds = 60.0;
  GradCheckOptions opts;
  opts.tolerance = kTol;
  const auto rep = grad_check(opts);
  bool all_exercised = true;
  std::size_t worst_k = 0;
  for (std::size_t k = 0; k < rep.tensors.size(); ++k) {
    all_exercised = all_exercised && rep.tensors[k].checked > 0 && rep.tensors[k].max_abs_analytic > 0.0;
    if (rep.tensors[k].rel_error > rep.tensors[worst_k].rel_error) worst_k = k;
  }
  const bool every_tensor = rep.tensors.size() == kParamCount;
  return {rep.pass && every_tensor && all_exercised && rep.max_rel_error <= kTol && rep.seconds < kSeconds,
          fmt("%zu tensors, max rel error %.3g at %s (tol %.0e), all heads exercised: %s, kink-skipped %zu, "
              "%.2f s (limit %.0f s)",
              rep.tensors.size(), rep.max_rel_error, rep.tensors[worst_k].name.c_str(), kTol,
              all_exercised ? "yes" : "no", rep.kink_skipped, rep.seconds, kSeconds)};
}

// ---- EMA closed form ------------------------------------------------------

Outcome ema() {
  constexpr int kSteps = 50;
  constexpr double kTol = 1e-10, kAlpha = 0.999;
  const HyperShape hs{16, 4, 6, 4, 8, 4, 2};
  const auto theta = init_params<double>(hs, 1);
  TeacherState<double> t{init_params<double>(hs, 2), 0};
  const auto theta0 = t.params;
  for (int k = 0; k < kSteps; ++k) ema_update(t, theta, kAlpha);
  const double ak = std::pow(kAlpha, kSteps);
  double worst = 0.0;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    for (std::size_t j = 0; j < theta.at(k).size(); ++j) {
      worst = std::max(worst, std::abs(t.params.at(k)[j] - (ak * theta0.at(k)[j] + (1.0 - ak) * theta.at(k)[j])));
    }
  }
  return {worst <= kTol && t.step == std::uint64_t(kSteps),
          fmt("alpha %.3f, %d steps, max abs diff vs alpha^k interpolation %.3g (tol %.0e)", kAlpha, kSteps, worst,
              kTol)};
}

// ---- perturbation algebra -------------------------------------------------

Outcome perturbation() {
  constexpr int kTrials = 1000;
  Rng rng(17);
  std::uniform_int_distribution<std::size_t> dim(2, 30);

  int flip_ok = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const auto f = test::random_matrix<float>(dim(rng), dim(rng), rng());
    flip_ok += temporal_flip(temporal_flip(f)) == f;
  }

  int align_ok = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t T = std::uniform_int_distribution<std::size_t>(4, 24)(rng);
    const std::size_t D = std::uniform_int_distribution<std::size_t>(1, T)(rng);
    ModelOutputs<double> o;
    o.p_s.resize(T);
    o.p_e.resize(T);
    for (auto& v : o.p_s) v = u(rng);
    for (auto& v : o.p_e) v = u(rng);
    o.valid_mask = candidate_valid_mask(T, D);
    o.m_cc = Matrix<double>(D, T);
    o.m_cr = Matrix<double>(D, T);
    for (std::size_t k = 0; k < D * T; ++k) {
      if (!o.valid_mask.data()[k]) continue;
      o.m_cc.data()[k] = u(rng);
      o.m_cr.data()[k] = u(rng);
    }
    o.base_feat = test::random_matrix<double>(T, 3, rng());
    const auto b = align_flip_outputs(align_flip_outputs(o));
    bool ok = b.p_s == o.p_s && b.p_e == o.p_e && b.base_feat == o.base_feat;
    for (std::size_t k = 0; k < D * T; ++k) {
      if (o.valid_mask.data()[k]) ok = ok && b.m_cc.data()[k] == o.m_cc.data()[k] && b.m_cr.data()[k] == o.m_cr.data()[k];
    }
    align_ok += ok;
  }

  int shift_ok = 0;
  std::uniform_real_distribution<double> mu(0.1, 1.0);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t T = dim(rng), C = dim(rng);
    const auto f = test::random_matrix<double>(T, C, rng());
    const double m = std::max(mu(rng), 2.0 / double(C));
    const auto [g, plan] = temporal_shift(f, m, rng);
    std::vector<int> dir(C, 0);
    for (auto c : plan.forward) dir[c] = 1;
    for (auto c : plan.backward) dir[c] = -1;
    bool ok = plan.forward.size() + plan.backward.size() == shifted_channel_count(C, m);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        double expect = f(t, c);
        if (dir[c] == 1) expect = t == 0 ? 0.0 : f(t - 1, c);
        if (dir[c] == -1) expect = t + 1 == T ? 0.0 : f(t + 1, c);
        ok = ok && g(t, c) == expect;
      }
    }
    shift_ok += ok;
  }
  return {flip_ok == kTrials && align_ok == kTrials && shift_ok == kTrials,
          fmt("flip involution bitwise %d/%d, align_flip involution on valid region %d/%d, shift touches only "
              "selected channels %d/%d",
              flip_ok, kTrials, align_ok, kTrials, shift_ok, kTrials)};
}

// ---- loss decomposition ---------------------------------------------------

Outcome loss_decomposition() {
  constexpr int kSteps = 10;
  constexpr double kTol = 1e-9;
  TrainConfig cfg;  // lambda = (1, 0.1, 0.0001, 0.001)
  cfg.precision = Precision::f64;
  cfg.hidden = 8;
  cfg.pem_hidden = 4;
  cfg.num_samples = 4;
  cfg.mu = 0.5;
  GeneratorOptions g;
  g.n_videos = 8;
  g.T = 24;
  g.C = 4;
  g.label_fraction = 0.5;
  g.seed = 5;
  const auto videos = generate_synthetic_videos(g);
  const HyperShape hs = cfg.hyper_shape(g.T, g.C);
  const ProposalModel model(hs);
  const auto prepared = prepare_videos<double>(videos, hs.D);
  std::vector<std::size_t> lab_idx, unl_idx;
  for (std::size_t k = 0; k < prepared.size(); ++k) (prepared[k].labels ? lab_idx : unl_idx).push_back(k);
  BatchSchedule sched(lab_idx, unl_idx, cfg);
  auto st = init_trainer_state<double>(hs, cfg.seed);
  double worst = 0.0;
  bool every_term_active = true;
  for (int s = 0; s < kSteps; ++s) {
    const auto [li, ui] = sched.batch(st.step);
    std::vector<const PreparedVideo<double>*> lab, unl;
    for (auto k : li) lab.push_back(&prepared[k]);
    for (auto k : ui) unl.push_back(&prepared[k]);
    const auto r = train_step<double>(st, model, lab, unl, cfg);
    const double sum = r.supervised + 1.0 * r.shift + 0.1 * r.flip + 0.0001 * r.recons + 0.001 * r.order;
    worst = std::max(worst, std::abs(r.total - sum));
    every_term_active = every_term_active && r.supervised > 0 && r.shift > 0 && r.flip > 0 && r.recons > 0 && r.order > 0;
  }
  return {worst <= kTol && every_term_active,
          fmt("%d steps, lambda = (1, 0.1, 0.0001, 0.001), max |L_total - weighted sum| %.3g (tol %.0e), every "
              "term nonzero: %s",
              kSteps, worst, kTol, every_term_active ? "yes" : "no")};
}

// ---- overfit sanity -------------------------------------------------------

Outcome overfit() {
  constexpr double kMinAr10 = 0.9, kMaxLossRatio = 0.5, kSeconds = 600.0;
  const auto t0 = Clock::now();
  GeneratorOptions g;
  g.n_videos = 20;
  g.T = 100;
  g.C = 16;
  g.label_fraction = 1.0;
  g.seed = 1;
  const auto videos = generate_synthetic_videos(g);
  TrainConfig cfg;
  // plain supervised training: every video is labeled
  cfg.lambda1 = cfg.lambda2 = cfg.lambda3 = cfg.lambda4 = 0.0;
  cfg.use_unlabeled = false;
  cfg.epochs = 200;
  cfg.seed = 1;
  const auto res = train_run<float>(videos, cfg);
  const ProposalModel model(res.shape);
  const auto rep = evaluate_params(model, res.state.student, videos, {0.5});
  const double ar10 = rep.ar10.value_or(0.0);
  const double initial = res.epochs.front().first_step.total;
  const double final_loss = res.epochs.back().mean.total;
  const double sec = seconds_since(t0);
  return {ar10 >= kMinAr10 && final_loss <= kMaxLossRatio * initial && sec < kSeconds,
          fmt("train AR@10 at tIoU 0.5 = %.4f (min %.2f), L_total %.4f -> %.4f (ratio %.3f, max %.2f), %.1f s "
              "(limit %.0f s)",
              ar10, kMinAr10, initial, final_loss, final_loss / initial, kMaxLossRatio, sec, kSeconds)};
}

// ---- semi-supervised direction --------------------------------------------

Outcome semi_supervised() {
  constexpr int kMinWins = 4;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto grid = ablation_grid("default");
  const TrainConfig base;
  std::ostringstream rows;
  rows << "\n    " << ablation_csv_header();
  int wins = 0;
  double sum_full = 0.0, sum_base = 0.0;
  for (auto seed : seeds) {
    GeneratorOptions g;
    g.n_videos = 100;
    g.label_fraction = 0.1;
    g.seed = seed;
    const auto data = make_ablation_data(g, 50);
    double a_base = 0.0, a_full = 0.0;
    for (const auto& v : grid) {
      auto r = run_ablation_variant(data, base, v, seed, activitynet_thresholds());
      r.grid = "default";
      rows << "\n    " << ablation_csv_row(r);
      (v.name == "vanilla" ? a_base : a_full) = r.report.auc.value_or(0.0);
    }
    wins += a_full >= a_base;
    sum_full += a_full;
    sum_base += a_base;
  }
  const double n = double(seeds.size());
  return {wins >= kMinWins && sum_full > sum_base,
          fmt("full >= supervised-only AUC in %d/5 seeds (min %d), mean AUC %.3f vs %.3f", wins, kMinWins,
              sum_full / n, sum_base / n) +
              rows.str()};
}

// ---- pretext learnability -------------------------------------------------

// Clip-shuffled copy of f for the permutation with lexicographic rank p,
// zero-padded back to T rows as in training.
template <typename R>
Matrix<R> order_input(const Matrix<R>& f, std::size_t K, std::size_t p) {
  const auto perm = permutation_from_index(p, K);
  const std::size_t clip = f.rows() / K;
  Matrix<R> out(f.rows(), f.cols());
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t r = 0; r < clip; ++r) {
      auto src = f.row(perm[j] * clip + r);
      std::copy(src.begin(), src.end(), out.row(j * clip + r).begin());
    }
  }
  return out;
}

struct PretextScore {
  double accuracy = 0.0;
  double acc_crossing = 0.0;
  double acc_clean = 0.0;
  double crossing_fraction = 0.0;
  double recon = 0.0;
};

// Every permutation of every held-out video, and one fixed mask per video.
template <typename R>
PretextScore score_pretext(const ProposalModel& model, const ParamStore<R>& params,
                           const std::vector<FeatureSequence>& test, const TrainConfig& cfg) {
  const HyperShape& hs = model.shape();
  const std::size_t classes = factorial(hs.K);
  const double cut = double((hs.T / hs.K));
  std::size_t right = 0, total = 0, right_x = 0, total_x = 0, crossing = 0;
  double recon = 0.0;
  for (std::size_t v = 0; v < test.size(); ++v) {
    const auto f = matrix_cast<R>(test[v].values);
    // an instance straddling a clip boundary leaves a visible seam when the clips are reordered
    bool straddles = false;
    for (const auto& s : test[v].annotations->instances) {
      for (std::size_t j = 1; j < hs.K; ++j) straddles = straddles || (s.start < cut * j && s.end > cut * j);
    }
    crossing += straddles;
    for (std::size_t p = 0; p < classes; ++p) {
      auto fr = model.forward(params, order_input(f, hs.K, p), Heads::order_only());
      const std::vector<R> logits = fr.out.order_logits.value();
      const std::size_t pred = std::max_element(logits.begin(), logits.end()) - logits.begin();
      right += pred == p;
      ++total;
      if (straddles) {
        right_x += pred == p;
        ++total_x;
      }
    }
    Rng rng = derive_rng({0x6d61736bULL, v});
    const auto ms = mask_features(f, cfg.omega, rng);
    const auto out = model.forward(params, ms.masked, Heads::recon_only()).out;
    recon += recon_loss(*out.recon, f);
  }
  PretextScore s;
  s.accuracy = double(right) / double(total);
  s.acc_crossing = total_x ? double(right_x) / double(total_x) : 0.0;
  s.acc_clean = total > total_x ? double(right - right_x) / double(total - total_x) : 0.0;
  s.crossing_fraction = double(crossing) / double(test.size());
  s.recon = recon / double(test.size());
  return s;
}

Outcome pretext() {
  constexpr double kMinAccuracy = 0.95, kMinReconDrop = 5.0;
  const auto t0 = Clock::now();
  GeneratorOptions g;
  g.n_videos = 100;
  g.label_fraction = 0.1;
  g.seed = 1;
  const auto data = make_ablation_data(g, 50);
  TrainConfig cfg;
  // the pretext heads carry full weight here so that their own learnability is measured
  cfg.lambda3 = 1.0;
  cfg.lambda4 = 1.0;
  cfg.epochs = 60;
  cfg.seed = 1;
  const auto res = train_run<float>(data.train, cfg);
  const ProposalModel model(res.shape);
  const auto before = score_pretext(model, init_params<float>(res.shape, cfg.seed), data.test, cfg);
  const auto after = score_pretext(model, res.state.student, data.test, cfg);
  const double drop = before.recon / after.recon;
  // An order classifier can do no better than chance on videos whose clips
  // hold no instance crossing a clip boundary: the background is stationary
  // and reordered whole instances look like valid videos.
  const double ceiling = after.crossing_fraction + (1.0 - after.crossing_fraction) / double(factorial(res.shape.K));
  // Noise on masked rows cannot be recovered from their neighbours, so the
  // reconstruction error stays above (masked fraction) * noise variance.
  const double masked = std::round(cfg.omega * double(res.shape.T)) / double(res.shape.T);
  const double recon_floor = masked * g.noise_std * g.noise_std;
  return {after.accuracy >= kMinAccuracy && drop >= kMinReconDrop,
          fmt("held-out order accuracy %.4f (min %.2f; %.4f on videos with a boundary-crossing instance, %.4f "
              "without; crossing fraction %.3f gives a Bayes ceiling of %.4f); masked recon %.5f -> %.5f, drop "
              "%.2fx (min %.0fx; noise floor %.5f caps the drop at %.2fx); %.1f s",
              after.accuracy, kMinAccuracy, after.acc_crossing, after.acc_clean, after.crossing_fraction, ceiling,
              before.recon, after.recon, drop, kMinReconDrop, recon_floor, before.recon / recon_floor,
              seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"label_maps", label_maps},
      {"metrics", metrics},
      {"soft_nms", soft_nms_oracle},
      {"grad_check", gradient_check},
      {"ema", ema},
      {"perturbation", perturbation},
      {"loss_decomposition", loss_decomposition},
      {"overfit", overfit},
      {"semi_supervised", semi_supervised},
      {"pretext", pretext},
  };
  std::vector<std::string> names;
  for (const auto& c : criteria) names.push_back(c.first);

  CLI::App app{"sstap acceptance checks"};
  std::vector<std::string> only;
  app.add_option("--only", only, "run only these criteria")->check(CLI::IsMember(names));
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
