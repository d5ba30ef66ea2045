#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sstap/model.hpp"
#include "sstap/trainer.hpp"

namespace sstap {

struct CheckpointInfo {
  HyperShape shape;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t teacher_step = 0;
  std::uint64_t adam_t = 0;
  Precision precision = Precision::f32;
  std::string config;  // format_config text of the run
};

// Binary layout: 12-byte magic, u32 version, length-prefixed JSON header,
// then for each of student, teacher, adam_m, adam_v every tensor as
// (name, rank, u64 dims, little-endian values of the stored precision).
// Written to a temporary file and renamed into place.
template <typename R>
void save_checkpoint(const std::filesystem::path& path, const TrainerState<R>& state, const HyperShape& hs,
                     std::uint64_t seed, const std::string& config_text = {});

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

// Values are converted when the stored precision differs from R.
// Throws FormatError on a malformed or truncated file.
template <typename R>
TrainerState<R> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace sstap
