#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sstap/tensor.hpp"

namespace sstap {

// Half-open temporal segment in continuous snippet coordinates.
struct Segment {
  double start = 0.0;
  double end = 0.0;

  double length() const noexcept { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Ground-truth action instances of one video. Classes are not tracked.
struct AnnotationSet {
  std::vector<Segment> instances;

  bool empty() const noexcept { return instances.empty(); }
  std::size_t size() const noexcept { return instances.size(); }
  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

// Snippet-level features of one video, T x C, time-major.
struct FeatureSequence {
  std::string video_id;
  Matrix<float> values;
  bool labeled = false;
  // Annotations may be loaded for unlabeled videos too, for evaluation only.
  // Training must consult them only when `labeled` is set.
  std::optional<AnnotationSet> annotations;

  std::size_t T() const noexcept { return values.rows(); }
  std::size_t C() const noexcept { return values.cols(); }

  // Throws ArgumentError when T < 4, C < 1, a value is non-finite or an
  // annotation falls outside [0, T].
  void validate() const;
};

// Training targets for one video on the dense D x T candidate grid.
// Entry (d, i) refers to the candidate segment [i, i + d + 1].
struct LabelMaps {
  std::vector<double> g_start;
  std::vector<double> g_end;
  Matrix<double> g_iou;
  Matrix<std::uint8_t> valid_mask;
};

struct VideoEntry {
  std::string video_id;
  std::size_t T = 0;
  std::size_t C = 0;
  bool labeled = false;
  std::string feature_file;  // relative to the manifest directory
  AnnotationSet annotations;
};

struct DatasetManifest {
  std::vector<VideoEntry> videos;
  std::uint64_t seed = 0;
  std::map<std::string, double> generator_params;
  // Directory the manifest was read from or written to; feature paths resolve
  // against it. Not serialized.
  std::filesystem::path root;

  std::filesystem::path feature_path(const VideoEntry& v) const { return root / v.feature_file; }
};

struct GeneratorOptions {
  std::size_t n_videos = 20;
  std::size_t T = 100;
  std::size_t C = 16;
  double label_fraction = 1.0;
  std::uint64_t seed = 1;
  double noise_std = 0.1;
  double signature_scale = 1.0;
  double transient = 0.5;
  double min_duration_frac = 0.05;
  double max_duration_frac = 0.4;
  // Frames per snippet. Metadata only; no frames are produced.
  std::size_t frames_per_snippet = 16;
};

// Temporal IoU of two segments; 0 for disjoint or touching segments.
// Throws ArgumentError for degenerate segments (start >= end).
double iou_1d(const Segment& a, const Segment& b);

// valid(d, i) = 1 iff the candidate [i, i + d + 1] fits inside [0, T].
Matrix<std::uint8_t> candidate_valid_mask(std::size_t T, std::size_t D);

LabelMaps build_label_maps(const AnnotationSet& ann, std::size_t T, std::size_t D);

// Deterministic synthetic videos; each video draws from its own generator
// seeded with `seed ^ index`, so the result does not depend on ordering.
std::vector<FeatureSequence> generate_synthetic_videos(const GeneratorOptions& opts);

// Generates the videos, writes one feature file per video under
// `out_dir/features/` and `out_dir/manifest.json`, and returns the manifest.
DatasetManifest gen_synthetic_dataset(const GeneratorOptions& opts,
                                      const std::filesystem::path& out_dir);

void write_features(const FeatureSequence& seq, const std::filesystem::path& path);
FeatureSequence read_features(const std::filesystem::path& path);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Reads every feature file listed in the manifest and attaches the labeled
// flag and annotations. Throws FormatError when a file disagrees with the
// manifest's T, C or video id.
std::vector<FeatureSequence> load_dataset(const DatasetManifest& manifest);

}  // namespace sstap
