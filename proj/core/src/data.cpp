#include "sstap/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <numeric>
#include <random>
#include <sstream>

#include "sstap/error.hpp"

namespace sstap {

void FeatureSequence::validate() const {
  if (T() < 4 || C() < 1) {
    std::ostringstream os;
    os << "feature sequence '" << video_id << "' has shape " << T() << "x" << C()
       << ", need T >= 4 and C >= 1";
    throw ArgumentError(os.str());
  }
  for (float v : values.values()) {
    if (!std::isfinite(v)) {
      throw ArgumentError("feature sequence '" + video_id + "' contains a non-finite value");
    }
  }
  if (annotations) {
    const double t_max = static_cast<double>(T());
    for (const Segment& s : annotations->instances) {
      if (!(s.start >= 0.0 && s.start < s.end && s.end <= t_max)) {
        throw ArgumentError("annotation outside [0, T] in '" + video_id + "'");
      }
    }
  }
}

double iou_1d(const Segment& a, const Segment& b) {
  if (!(a.start < a.end) || !(b.start < b.end)) {
    throw ArgumentError("iou_1d: degenerate segment (start >= end)");
  }
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return inter / uni;
}

Matrix<std::uint8_t> candidate_valid_mask(std::size_t T, std::size_t D) {
  Matrix<std::uint8_t> mask(D, T, 0);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t i = 0; i + d + 1 <= T; ++i) mask(d, i) = 1;
  }
  return mask;
}

namespace {

// Overlap of the unit snippet [t, t + 1] with `region`, divided by the
// snippet length.
double snippet_ior(std::size_t t, double lo, double hi) {
  const double a = static_cast<double>(t);
  const double inter = std::min(a + 1.0, hi) - std::max(a, lo);
  return std::max(inter, 0.0);
}

}  // namespace

LabelMaps build_label_maps(const AnnotationSet& ann, std::size_t T, std::size_t D) {
  if (D == 0 || D > T) throw ArgumentError("build_label_maps: need 1 <= D <= T");
  LabelMaps maps;
  maps.g_start.assign(T, 0.0);
  maps.g_end.assign(T, 0.0);
  maps.g_iou = Matrix<double>(D, T, 0.0);
  maps.valid_mask = candidate_valid_mask(T, D);

  for (const Segment& g : ann.instances) {
    const double half = g.length() / 10.0;
    for (std::size_t t = 0; t < T; ++t) {
      maps.g_start[t] = std::max(maps.g_start[t], snippet_ior(t, g.start - half, g.start + half));
      maps.g_end[t] = std::max(maps.g_end[t], snippet_ior(t, g.end - half, g.end + half));
    }
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i + d + 1 <= T; ++i) {
        const Segment cand{static_cast<double>(i), static_cast<double>(i + d + 1)};
        maps.g_iou(d, i) = std::max(maps.g_iou(d, i), iou_1d(cand, g));
      }
    }
  }
  return maps;
}

namespace {

AnnotationSet plant_instances(std::mt19937_64& rng, const GeneratorOptions& o) {
  const double T = static_cast<double>(o.T);
  std::uniform_int_distribution<int> count_dist(1, 3);
  std::uniform_real_distribution<double> dur_dist(o.min_duration_frac * T, o.max_duration_frac * T);
  const int count = count_dist(rng);

  AnnotationSet ann;
  for (int k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double dur = dur_dist(rng);
      std::uniform_real_distribution<double> start_dist(0.0, T - dur);
      const Segment cand{start_dist(rng), 0.0};
      const Segment seg{cand.start, std::min(cand.start + dur, T)};
      // Keep at least one snippet of background between instances so that
      // boundary transients never collide.
      const bool clash = std::any_of(ann.instances.begin(), ann.instances.end(), [&](const Segment& s) {
        return seg.start < s.end + 1.0 && s.start < seg.end + 1.0;
      });
      if (!clash) {
        ann.instances.push_back(seg);
        break;
      }
    }
  }
  std::sort(ann.instances.begin(), ann.instances.end(),
            [](const Segment& a, const Segment& b) { return a.start < b.start; });
  return ann;
}

void render_instance(Matrix<float>& values, const Segment& seg, std::span<const double> signature,
                     double transient) {
  const std::size_t T = values.rows();
  const std::size_t C = values.cols();
  std::optional<std::size_t> first;
  std::size_t last = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const double centre = static_cast<double>(t) + 0.5;
    if (centre < seg.start || centre >= seg.end) continue;
    const double phase = (centre - seg.start) / seg.length();
    const double env = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * phase));
    for (std::size_t c = 0; c < C; ++c) {
      values(t, c) = static_cast<float>(values(t, c) + env * signature[c]);
    }
    if (!first) first = t;
    last = t;
  }
  if (first) {
    values(*first, 0) = static_cast<float>(values(*first, 0) + transient);
    values(last, 0) = static_cast<float>(values(last, 0) - transient);
  }
}

}  // namespace

std::vector<FeatureSequence> generate_synthetic_videos(const GeneratorOptions& o) {
  if (o.n_videos < 1) throw ArgumentError("gen_synthetic_dataset: need at least one video");
  if (o.T < 16) throw ArgumentError("gen_synthetic_dataset: need T >= 16");
  if (o.C < 4) throw ArgumentError("gen_synthetic_dataset: need C >= 4");
  if (!(o.label_fraction >= 0.0 && o.label_fraction <= 1.0)) {
    throw ArgumentError("gen_synthetic_dataset: label fraction must lie in [0, 1]");
  }

  std::vector<FeatureSequence> videos(o.n_videos);
  for (std::size_t v = 0; v < o.n_videos; ++v) {
    std::mt19937_64 rng(o.seed ^ static_cast<std::uint64_t>(v));
    FeatureSequence& seq = videos[v];
    char id[32];
    std::snprintf(id, sizeof id, "v%05zu", v);
    seq.video_id = id;

    AnnotationSet ann = plant_instances(rng, o);

    seq.values = Matrix<float>(o.T, o.C);
    std::normal_distribution<double> noise(0.0, o.noise_std);
    for (float& x : seq.values.values()) x = static_cast<float>(noise(rng));

    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<double> signature(o.C);
    for (const Segment& seg : ann.instances) {
      double norm = 0.0;
      for (double& s : signature) {
        s = unit(rng);
        norm += s * s;
      }
      norm = std::sqrt(norm);
      for (double& s : signature) s *= o.signature_scale / norm;
      render_instance(seq.values, seg, signature, o.transient);
    }
    seq.annotations = std::move(ann);
  }

  const auto n_labeled = static_cast<std::size_t>(
      std::llround(o.label_fraction * static_cast<double>(o.n_videos)));
  std::vector<std::size_t> order(o.n_videos);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 pick(o.seed);
  std::shuffle(order.begin(), order.end(), pick);
  for (std::size_t k = 0; k < n_labeled; ++k) videos[order[k]].labeled = true;
  return videos;
}

DatasetManifest gen_synthetic_dataset(const GeneratorOptions& o, const std::filesystem::path& out_dir) {
  std::vector<FeatureSequence> videos = generate_synthetic_videos(o);

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "features", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "features").string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.seed = o.seed;
  manifest.generator_params = {
      {"n_videos", static_cast<double>(o.n_videos)},
      {"T", static_cast<double>(o.T)},
      {"C", static_cast<double>(o.C)},
      {"label_fraction", o.label_fraction},
      {"noise_std", o.noise_std},
      {"signature_scale", o.signature_scale},
      {"transient", o.transient},
      {"min_duration_frac", o.min_duration_frac},
      {"max_duration_frac", o.max_duration_frac},
      {"frames_per_snippet", static_cast<double>(o.frames_per_snippet)},
  };
  for (const FeatureSequence& seq : videos) {
    VideoEntry e;
    e.video_id = seq.video_id;
    e.T = seq.T();
    e.C = seq.C();
    e.labeled = seq.labeled;
    e.feature_file = "features/" + seq.video_id + ".feat";
    e.annotations = *seq.annotations;
    write_features(seq, manifest.feature_path(e));
    manifest.videos.push_back(std::move(e));
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace sstap
