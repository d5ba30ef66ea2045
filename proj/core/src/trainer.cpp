#include "sstap/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "sstap/checkpoint.hpp"
#include "sstap/error.hpp"
#include "sstap/losses.hpp"
#include "sstap/perturb.hpp"
#include "sstap/random.hpp"
#include "sstap/train_config.hpp"

namespace sstap {

std::string_view precision_name(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

Precision parse_precision(std::string_view s) {
  if (s == "f32" || s == "float" || s == "32") return Precision::f32;
  if (s == "f64" || s == "double" || s == "64") return Precision::f64;
  throw ConfigError("unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

std::string_view recon_support_name(ReconSupport s) { return s == ReconSupport::masked_only ? "masked_only" : "all"; }

ReconSupport parse_recon_support(std::string_view s) {
  if (s == "all") return ReconSupport::all;
  if (s == "masked_only") return ReconSupport::masked_only;
  throw ConfigError("unknown recon_support '" + std::string(s) + "' (expected all or masked_only)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
  if (!(alpha >= 0.0 && alpha < 1.0)) fail("alpha must lie in [0, 1)");
  for (double l : {lambda1, lambda2, lambda3, lambda4}) {
    if (!(l >= 0.0) || !std::isfinite(l)) fail("lambda weights must be finite and >= 0");
  }
  if (!(mu > 0.0 && mu <= 1.0)) fail("mu must lie in (0, 1]");
  if (!(omega >= 0.0 && omega < 1.0)) fail("omega must lie in [0, 1)");
  if (K < 2 || K > 6) fail("K must lie in [2, 6]");
  if (!(p_drop >= 0.0 && p_drop < 1.0)) fail("p_drop must lie in [0, 1)");
  if (batch_labeled < 1) fail("batch_labeled must be >= 1");
  if (use_unlabeled && batch_unlabeled < 1) fail("batch_unlabeled must be >= 1 when unlabeled data is used");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("beta1 and beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (hidden < 1 || pem_hidden < 1) fail("hidden and pem_hidden must be >= 1");
  if (num_samples < 2) fail("num_samples must be >= 2");
}

HyperShape TrainConfig::hyper_shape(std::size_t T, std::size_t C) const {
  HyperShape hs;
  hs.T = T;
  hs.C = C;
  hs.H = hidden;
  hs.H2 = pem_hidden;
  hs.D = max_duration == 0 ? T : std::min(max_duration, T);
  hs.N = num_samples;
  hs.K = K;
  return hs;
}

template <typename R>
void ema_update(TeacherState<R>& teacher, const ParamStore<R>& student, double alpha) {
  if (!teacher.params.same_layout(student)) throw ContractError("ema_update: teacher and student layouts differ");
  teacher.params.axpby(static_cast<R>(alpha), static_cast<R>(1.0 - alpha), student);
  ++teacher.step;
}

template <typename R>
void adam_step(ParamStore<R>& params, const ParamStore<R>& grad, AdamState<R>& st, const TrainConfig& cfg) {
  if (st.m.tensor_count() == 0) {
    st.m = ParamStore<R>(params.shape());
    st.v = ParamStore<R>(params.shape());
  }
  if (!params.same_layout(grad) || !params.same_layout(st.m)) throw ContractError("adam_step: layout mismatch");
  ++st.t;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < params.tensor_count(); ++k) {
    R* p = params.at(k).data();
    const R* g = grad.at(k).data();
    R* m = st.m.at(k).data();
    R* v = st.v.at(k).data();
    for (std::size_t j = 0; j < params.at(k).size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
      m[j] = static_cast<R>(mj);
      v[j] = static_cast<R>(vj);
      p[j] = static_cast<R>(static_cast<double>(p[j]) - cfg.lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.adam_eps));
    }
  }
}

template <typename R>
TrainerState<R> init_trainer_state(const HyperShape& hs, std::uint64_t seed) {
  TrainerState<R> st;
  st.student = init_params<R>(hs, seed);
  st.teacher.params = st.student;
  st.adam.m = ParamStore<R>(hs);
  st.adam.v = ParamStore<R>(hs);
  return st;
}

template <typename R>
std::vector<PreparedVideo<R>> prepare_videos(const std::vector<FeatureSequence>& videos, std::size_t D) {
  std::vector<PreparedVideo<R>> out;
  out.reserve(videos.size());
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const FeatureSequence& seq = videos[v];
    PreparedVideo<R> pv;
    pv.index = v;
    pv.video_id = seq.video_id;
    pv.features = matrix_cast<R>(seq.values);
    if (seq.labeled && seq.annotations) pv.labels = build_label_maps(*seq.annotations, seq.T(), D);
    out.push_back(std::move(pv));
  }
  return out;
}

namespace {

// Pads an order sample truncated to floor(T/K)*K rows back to T rows.
template <typename R>
Matrix<R> pad_rows(const Matrix<R>& m, std::size_t T) {
  if (m.rows() == T) return m;
  Matrix<R> out(T, m.cols());
  std::copy(m.data(), m.data() + m.size(), out.data());
  return out;
}

}  // namespace

template <typename R>
LossReport train_step(TrainerState<R>& state, const ProposalModel& model,
                      std::span<const PreparedVideo<R>* const> labeled,
                      std::span<const PreparedVideo<R>* const> unlabeled, const TrainConfig& cfg) {
  if (labeled.empty()) throw ConfigError("train_step: the batch holds no labeled video");
  const HyperShape& hs = model.shape();
  ParamStore<R> grad(hs);
  const std::size_t n_lab = labeled.size();
  const std::size_t n_all = labeled.size() + unlabeled.size();
  const double inv_lab = 1.0 / static_cast<double>(n_lab);
  const double inv_all = 1.0 / static_cast<double>(n_all);
  const bool need_teacher = cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0;

  LossReport rep;
  rep.n_labeled = n_lab;
  rep.n_unlabeled = unlabeled.size();

  ForwardOptions<R> train_opts;
  train_opts.train_mode = true;
  train_opts.p_drop = cfg.p_drop;

  auto run_video = [&](const PreparedVideo<R>& v, bool is_labeled) {
    Rng rng = derive_rng({cfg.seed, state.step, static_cast<std::uint64_t>(v.index)});
    ForwardOptions<R> opts = train_opts;
    opts.rng = &rng;
    const Matrix<R>& f = v.features;
    if (f.rows() != hs.T || f.cols() != hs.C) throw ArgumentError("train_step: video " + v.video_id + " has the wrong shape");

    if (is_labeled) {
      if (!v.labels) throw ContractError("train_step: labeled video " + v.video_id + " has no label maps");
      auto fr = model.forward(state.student, f, Heads::proposal_only(), opts);
      OutputGrads<R> g;
      SupervisedTerms terms;
      rep.supervised += supervised_loss(fr.out, *v.labels, &g, inv_lab, &terms) * inv_lab;
      if (terms.missing_positives) ++rep.missing_positive_terms;
      model.backward(state.student, fr.tape, g, grad);
    }

    std::optional<ModelOutputs<R>> teacher_out;
    if (need_teacher) {
      teacher_out = model.forward(state.teacher.params, f, Heads::proposal_only()).out;
    }
    if (cfg.lambda1 > 0.0) {
      auto shifted = temporal_shift(f, cfg.mu, rng).first;
      auto fr = model.forward(state.student, shifted, Heads::proposal_only(), opts);
      OutputGrads<R> g;
      rep.shift += consistency_loss(fr.out, *teacher_out, &g, cfg.lambda1 * inv_all) * inv_all;
      model.backward(state.student, fr.tape, g, grad);
    }
    if (cfg.lambda2 > 0.0) {
      auto fr = model.forward(state.student, temporal_flip(f), Heads::proposal_only(), opts);
      const ModelOutputs<R> aligned = align_flip_outputs(*teacher_out);
      OutputGrads<R> g;
      rep.flip += consistency_loss(fr.out, aligned, &g, cfg.lambda2 * inv_all) * inv_all;
      model.backward(state.student, fr.tape, g, grad);
    }
    if (cfg.lambda3 > 0.0) {
      auto ms = mask_features(f, cfg.omega, rng);
      auto fr = model.forward(state.student, ms.masked, Heads::recon_only(), opts);
      OutputGrads<R> g;
      g.recon = Matrix<R>(hs.T, hs.C);
      const std::vector<std::uint8_t>* rows = cfg.recon_support == ReconSupport::masked_only ? &ms.mask : nullptr;
      rep.recons += recon_loss(*fr.out.recon, f, &g.recon, cfg.lambda3 * inv_all, rows) * inv_all;
      model.backward(state.student, fr.tape, g, grad);
    }
    if (cfg.lambda4 > 0.0) {
      auto os = make_order_sample(f, hs.K, rng);
      auto fr = model.forward(state.student, pad_rows(os.shuffled, hs.T), Heads::order_only(), opts);
      OutputGrads<R> g;
      g.order_logits.assign(fr.out.order_logits->size(), R{0});
      rep.order += order_loss<R>(*fr.out.order_logits, os.label, g.order_logits, cfg.lambda4 * inv_all) * inv_all;
      model.backward(state.student, fr.tape, g, grad);
    }
  };

  for (const auto* v : labeled) run_video(*v, true);
  for (const auto* v : unlabeled) run_video(*v, false);

  rep.total = rep.supervised + cfg.lambda1 * rep.shift + cfg.lambda2 * rep.flip + cfg.lambda3 * rep.recons +
              cfg.lambda4 * rep.order;
  if (!std::isfinite(rep.total)) throw NumericError("train_step: loss became non-finite at step " + std::to_string(state.step));
  if (!grad.all_finite()) throw NumericError("train_step: gradient became non-finite at step " + std::to_string(state.step));

  adam_step(state.student, grad, state.adam, cfg);
  if (!state.student.all_finite()) throw NumericError("train_step: parameters became non-finite at step " + std::to_string(state.step));
  ema_update(state.teacher, state.student, cfg.alpha);
  ++state.step;
  return rep;
}

namespace {

nlohmann::json report_json(const LossReport& r) {
  return {{"supervised", r.supervised}, {"shift", r.shift}, {"flip", r.flip},  {"recons", r.recons},
          {"order", r.order},           {"total", r.total}, {"n_labeled", r.n_labeled},
          {"n_unlabeled", r.n_unlabeled}, {"missing_positive_terms", r.missing_positive_terms}};
}

constexpr std::uint64_t kLabeledStream = 0x6c6162656c6564ULL;
constexpr std::uint64_t kUnlabeledStream = 0x756e6c6162656cULL;

}  // namespace

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["steps"] = r.steps;
  j["loss"] = report_json(r.mean);
  j["first_step_loss"] = report_json(r.first_step);
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

BatchSchedule::BatchSchedule(std::vector<std::size_t> labeled, std::vector<std::size_t> unlabeled,
                             const TrainConfig& cfg)
    : labeled_(std::move(labeled)),
      unlabeled_(cfg.use_unlabeled ? std::move(unlabeled) : std::vector<std::size_t>{}),
      b_lab_(cfg.batch_labeled),
      b_unl_(cfg.use_unlabeled ? cfg.batch_unlabeled : 0),
      seed_(cfg.seed) {
  if (labeled_.empty()) throw ConfigError("no labeled video available for training");
  if (b_lab_ == 0) throw ConfigError("batch_labeled must be >= 1");
  steps_per_epoch_ = (labeled_.size() + b_lab_ - 1) / b_lab_;
}

const std::vector<std::size_t>& BatchSchedule::labeled_order(std::uint64_t epoch) {
  if (epoch != cached_epoch_) {
    epoch_order_ = labeled_;
    Rng rng = derive_rng({seed_, kLabeledStream, epoch});
    std::shuffle(epoch_order_.begin(), epoch_order_.end(), rng);
    cached_epoch_ = epoch;
  }
  return epoch_order_;
}

const std::vector<std::size_t>& BatchSchedule::unlabeled_order(std::uint64_t pass) {
  if (pass != cached_pass_) {
    pass_order_ = unlabeled_;
    Rng rng = derive_rng({seed_, kUnlabeledStream, pass});
    std::shuffle(pass_order_.begin(), pass_order_.end(), rng);
    cached_pass_ = pass;
  }
  return pass_order_;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> BatchSchedule::batch(std::uint64_t step) {
  const std::uint64_t epoch = step / steps_per_epoch_;
  const std::uint64_t within = step % steps_per_epoch_;
  const auto& order = labeled_order(epoch);
  const std::size_t lo = within * b_lab_;
  const std::size_t hi = std::min(order.size(), lo + b_lab_);
  std::vector<std::size_t> lab(order.begin() + static_cast<std::ptrdiff_t>(lo),
                               order.begin() + static_cast<std::ptrdiff_t>(hi));
  std::vector<std::size_t> unl;
  if (!unlabeled_.empty() && b_unl_ > 0) {
    const std::size_t take = std::min(b_unl_, unlabeled_.size());
    for (std::size_t j = 0; j < take; ++j) {
      const std::uint64_t pos = step * take + j;
      unl.push_back(unlabeled_order(pos / unlabeled_.size())[pos % unlabeled_.size()]);
    }
  }
  return {std::move(lab), std::move(unl)};
}

template <typename R>
TrainResult<R> train_run(const std::vector<FeatureSequence>& videos, const TrainConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (videos.empty()) throw ArgumentError("train_run: no videos");
  const std::size_t T = videos.front().T();
  const std::size_t C = videos.front().C();
  for (const auto& v : videos) {
    if (v.T() != T || v.C() != C) throw ArgumentError("train_run: all videos must share T and C; " + v.video_id + " differs");
  }
  const HyperShape hs = cfg.hyper_shape(T, C);
  hs.validate();
  const ProposalModel model(hs);
  const auto prepared = prepare_videos<R>(videos, hs.D);

  std::vector<std::size_t> lab_idx, unl_idx;
  for (const auto& pv : prepared) (pv.labels ? lab_idx : unl_idx).push_back(pv.index);
  BatchSchedule schedule(lab_idx, unl_idx, cfg);

  TrainResult<R> result;
  result.shape = hs;
  if (opts.resume) {
    CheckpointInfo info;
    result.state = load_checkpoint<R>(*opts.resume, &info);
    if (!(info.shape == hs)) throw ConfigError("resume: checkpoint shape does not match the configuration");
    if (info.seed != cfg.seed) throw ConfigError("resume: checkpoint seed does not match the configuration");
  } else {
    result.state = init_trainer_state<R>(hs, cfg.seed);
  }
  TrainerState<R>& state = result.state;

  std::ofstream metrics;
  if (opts.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*opts.out_dir, ec);
    if (ec) throw IoError("cannot create run directory " + opts.out_dir->string() + ": " + ec.message());
    const auto path = *opts.out_dir / "metrics.jsonl";
    metrics.open(path, opts.resume ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open metrics log " + path.string());
  }

  const std::size_t stop = std::min<std::size_t>(cfg.epochs, opts.stop_after_epoch.value_or(cfg.epochs));
  const std::string config_text = format_config(cfg);
  while (state.epoch < stop) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = state.epoch + 1;
    for (std::uint64_t s = 0; s < schedule.steps_per_epoch(); ++s) {
      auto [lab, unl] = schedule.batch(state.step);
      std::vector<const PreparedVideo<R>*> lp, up;
      for (auto k : lab) lp.push_back(&prepared[k]);
      for (auto k : unl) up.push_back(&prepared[k]);
      const LossReport r = train_step<R>(state, model, lp, up, cfg);
      if (s == 0) rec.first_step = r;
      rec.mean.supervised += r.supervised;
      rec.mean.shift += r.shift;
      rec.mean.flip += r.flip;
      rec.mean.recons += r.recons;
      rec.mean.order += r.order;
      rec.mean.total += r.total;
      rec.mean.n_labeled += r.n_labeled;
      rec.mean.n_unlabeled += r.n_unlabeled;
      rec.mean.missing_positive_terms += r.missing_positive_terms;
      ++rec.steps;
    }
    const double inv = 1.0 / static_cast<double>(rec.steps);
    rec.mean.supervised *= inv;
    rec.mean.shift *= inv;
    rec.mean.flip *= inv;
    rec.mean.recons *= inv;
    rec.mean.order *= inv;
    rec.mean.total *= inv;
    ++state.epoch;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opts.out_dir) {
      save_checkpoint(*opts.out_dir / "checkpoint.bin", state, hs, cfg.seed, config_text);
      metrics << epoch_record_json(rec) << '\n';
      metrics.flush();
      if (!metrics) throw IoError("failed writing metrics log in " + opts.out_dir->string());
    }
    if (opts.on_epoch) opts.on_epoch(rec);
    result.epochs.push_back(rec);
  }
  return result;
}

#define SSTAP_INSTANTIATE(R)                                                                                 \
  template void ema_update(TeacherState<R>&, const ParamStore<R>&, double);                                  \
  template void adam_step(ParamStore<R>&, const ParamStore<R>&, AdamState<R>&, const TrainConfig&);          \
  template TrainerState<R> init_trainer_state<R>(const HyperShape&, std::uint64_t);                          \
  template std::vector<PreparedVideo<R>> prepare_videos<R>(const std::vector<FeatureSequence>&, std::size_t); \
  template LossReport train_step(TrainerState<R>&, const ProposalModel&, std::span<const PreparedVideo<R>* const>, \
                                 std::span<const PreparedVideo<R>* const>, const TrainConfig&);              \
  template TrainResult<R> train_run<R>(const std::vector<FeatureSequence>&, const TrainConfig&, const RunOptions&);
SSTAP_INSTANTIATE(float)
SSTAP_INSTANTIATE(double)
#undef SSTAP_INSTANTIATE

}  // namespace sstap
