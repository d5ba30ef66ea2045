#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sstap/data.hpp"
#include "sstap/model.hpp"
#include "sstap/pretext.hpp"

namespace sstap {

enum class Precision { f32, f64 };

std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view s);

std::string_view recon_support_name(ReconSupport s);
ReconSupport parse_recon_support(std::string_view s);

struct TrainConfig {
  // loss weights and perturbations
  double alpha = 0.999;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double lambda3 = 0.0001;
  double lambda4 = 0.001;
  // 2^-3: at the default C = 16 this moves one channel each way; 2^-4
  // would move none (2 * floor(C * mu / 2) = 0).
  double mu = 0.125;
  double omega = 0.3;
  std::size_t K = 2;
  double p_drop = 0.1;
  ReconSupport recon_support = ReconSupport::all;
  // When false the unlabeled pool is never sampled.
  bool use_unlabeled = true;

  // batching and optimizer
  std::size_t batch_labeled = 2;
  std::size_t batch_unlabeled = 4;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  Precision precision = Precision::f32;

  // network widths; max_duration 0 means D = T
  std::size_t hidden = 32;
  std::size_t pem_hidden = 16;
  std::size_t max_duration = 0;
  std::size_t num_samples = 8;

  // Throws ConfigError when an invariant fails.
  void validate() const;
  HyperShape hyper_shape(std::size_t T, std::size_t C) const;
};

template <typename R>
struct TeacherState {
  ParamStore<R> params;
  std::uint64_t step = 0;
};

// theta' <- alpha * theta' + (1 - alpha) * theta on every tensor, step + 1.
// Throws ContractError on a layout mismatch.
template <typename R>
void ema_update(TeacherState<R>& teacher, const ParamStore<R>& student, double alpha);

template <typename R>
struct AdamState {
  ParamStore<R> m;
  ParamStore<R> v;
  std::uint64_t t = 0;
};

template <typename R>
void adam_step(ParamStore<R>& params, const ParamStore<R>& grad, AdamState<R>& state, const TrainConfig& cfg);

template <typename R>
struct TrainerState {
  ParamStore<R> student;
  TeacherState<R> teacher;
  AdamState<R> adam;
  std::uint64_t step = 0;   // optimizer steps taken
  std::uint64_t epoch = 0;  // completed epochs
};

// Fresh student from init_params, teacher as an exact copy.
template <typename R>
TrainerState<R> init_trainer_state(const HyperShape& hs, std::uint64_t seed);

// A training video converted to the working precision.
template <typename R>
struct PreparedVideo {
  std::size_t index = 0;  // position in the dataset; keys the per-video random stream
  std::string video_id;
  Matrix<R> features;
  std::optional<LabelMaps> labels;  // present for labeled videos
};

template <typename R>
std::vector<PreparedVideo<R>> prepare_videos(const std::vector<FeatureSequence>& videos, std::size_t D);

struct LossReport {
  double supervised = 0.0;
  double shift = 0.0;
  double flip = 0.0;
  double recons = 0.0;
  double order = 0.0;
  double total = 0.0;
  std::size_t n_labeled = 0;
  std::size_t n_unlabeled = 0;
  // Labeled videos whose TEM or classification targets lacked a class.
  std::size_t missing_positive_terms = 0;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

// One optimizer step on a mixed batch. The supervised term is averaged over
// the labeled videos, the weighted consistency and pretext terms over all
// videos of the batch; terms with a zero weight are skipped. Random draws for
// video v come from derive_rng({seed, step, v.index}).
template <typename R>
LossReport train_step(TrainerState<R>& state, const ProposalModel& model,
                      std::span<const PreparedVideo<R>* const> labeled,
                      std::span<const PreparedVideo<R>* const> unlabeled, const TrainConfig& cfg);

struct EpochRecord {
  std::uint64_t epoch = 0;  // 1-based
  std::uint64_t steps = 0;  // optimizer steps in this epoch
  LossReport mean;          // per-term means over the epoch's steps
  LossReport first_step;
  double wall_seconds = 0.0;
};

std::string epoch_record_json(const EpochRecord& r);

// Batch composition is a pure function of (seed, step): the labeled pool is
// reshuffled every epoch and one epoch covers it once, the unlabeled pool is
// cycled independently. This makes resumption exact.
class BatchSchedule {
 public:
  BatchSchedule(std::vector<std::size_t> labeled, std::vector<std::size_t> unlabeled, const TrainConfig& cfg);

  std::uint64_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  // Dataset indices of the labeled and unlabeled videos for a global step.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> batch(std::uint64_t step);

 private:
  const std::vector<std::size_t>& labeled_order(std::uint64_t epoch);
  const std::vector<std::size_t>& unlabeled_order(std::uint64_t pass);

  std::vector<std::size_t> labeled_;
  std::vector<std::size_t> unlabeled_;
  std::size_t b_lab_;
  std::size_t b_unl_;
  std::uint64_t seed_;
  std::uint64_t steps_per_epoch_;
  std::uint64_t cached_epoch_ = UINT64_MAX;
  std::vector<std::size_t> epoch_order_;
  std::uint64_t cached_pass_ = UINT64_MAX;
  std::vector<std::size_t> pass_order_;
};

struct RunOptions {
  // Checkpoint and metrics go here when set.
  std::optional<std::filesystem::path> out_dir;
  // Continue from this checkpoint instead of a fresh initialization.
  std::optional<std::filesystem::path> resume;
  // Stop after this many completed epochs in total (defaults to cfg.epochs).
  std::optional<std::size_t> stop_after_epoch;
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename R>
struct TrainResult {
  TrainerState<R> state;
  HyperShape shape;
  std::vector<EpochRecord> epochs;
};

// Epoch loop over the labeled pool. Writes `checkpoint.bin` (after every
// epoch) and appends one JSON line per epoch to `metrics.jsonl` when an
// output directory is given.
template <typename R>
TrainResult<R> train_run(const std::vector<FeatureSequence>& videos, const TrainConfig& cfg,
                         const RunOptions& opts = {});

}  // namespace sstap
