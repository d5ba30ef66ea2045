#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sstap/outputs.hpp"

namespace sstap {

// Ranked proposal in snippet coordinates, 0 <= start < end <= T.
struct Proposal {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct DecodeOptions {
  // A snippet qualifies as a boundary when it is a strict local maximum or
  // exceeds this fraction of the sequence maximum.
  double peak_fraction = 0.5;
};

// Pairs every start snippet s with every end snippet e > s whose candidate
// fits the map; pair (s, e) is the segment [s, e + 1] at map cell
// (d, i) = (e - s, s). Score: p_s(s) * p_e(e) * m_cc(d, i) * m_cr(d, i).
// Sorted by score descending, ties by (start, end).
template <typename R>
std::vector<Proposal> decode_candidates(const ModelOutputs<R>& out, const DecodeOptions& opts = {});

// Indices qualifying as boundaries under the decode rule.
template <typename R>
std::vector<std::size_t> boundary_candidates(const std::vector<R>& p, double peak_fraction = 0.5);

struct SoftNmsOptions {
  double sigma = 0.4;
  double score_floor = 0.001;
  std::size_t max_out = 100;
};

// Gaussian Soft-NMS: repeatedly extracts the highest score (ties by
// (start, end)) and decays each remaining score by exp(-iou^2 / sigma).
// Stops when the pool is empty, max_out is reached or every remaining score
// is below the floor.
std::vector<Proposal> soft_nms(std::vector<Proposal> props, const SoftNmsOptions& opts = {});

// Proposal file: one line per proposal,
//   video_id start end score start_norm end_norm
// with snippet coordinates and their [0, 1] normalization by T.
// Lines starting with '#' are comments.
struct VideoProposals {
  std::string video_id;
  std::size_t T = 0;
  std::vector<Proposal> proposals;
};

void write_proposals(const std::vector<VideoProposals>& videos, const std::filesystem::path& path);
// Proposals per video, in file order. Throws FormatError on malformed lines.
std::map<std::string, std::vector<Proposal>> read_proposals(const std::filesystem::path& path);

}  // namespace sstap
