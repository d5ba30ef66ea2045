#include <fstream>
#include <set>

#include <json.hpp>

#include "sstap/data.hpp"
#include "sstap/error.hpp"

namespace sstap {

using nlohmann::json;

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json videos = json::array();
  for (const VideoEntry& v : m.videos) {
    json ann = json::array();
    for (const Segment& s : v.annotations.instances) ann.push_back({s.start, s.end});
    videos.push_back({{"video_id", v.video_id},
                      {"T", v.T},
                      {"C", v.C},
                      {"labeled", v.labeled},
                      {"feature_file", v.feature_file},
                      {"annotations", ann}});
  }
  const json doc = {{"format", "sstap-manifest"},
                    {"version", 1},
                    {"seed", m.seed},
                    {"generator_params", m.generator_params},
                    {"videos", videos}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << doc.dump(2) << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  const json doc = json::parse(is, nullptr, false);
  const std::string where = path.string();
  if (doc.is_discarded() || !doc.is_object()) throw FormatError(where + ": manifest is not valid JSON");
  if (doc.value("format", "") != "sstap-manifest") throw FormatError(where + ": not an sstap manifest");

  DatasetManifest m;
  m.root = path.parent_path();
  try {
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.generator_params = doc.value("generator_params", std::map<std::string, double>{});
    std::set<std::string> seen;
    for (const json& jv : doc.at("videos")) {
      VideoEntry v;
      v.video_id = jv.at("video_id").get<std::string>();
      v.T = jv.at("T").get<std::size_t>();
      v.C = jv.at("C").get<std::size_t>();
      v.labeled = jv.at("labeled").get<bool>();
      v.feature_file = jv.at("feature_file").get<std::string>();
      for (const json& s : jv.at("annotations")) {
        const Segment seg{s.at(0).get<double>(), s.at(1).get<double>()};
        if (!(seg.start >= 0.0 && seg.start < seg.end && seg.end <= static_cast<double>(v.T))) {
          throw FormatError(where + ": annotation outside [0, T] for " + v.video_id);
        }
        v.annotations.instances.push_back(seg);
      }
      if (!seen.insert(v.video_id).second) throw FormatError(where + ": duplicate video id " + v.video_id);
      m.videos.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": malformed manifest: " + e.what());
  }
  return m;
}

std::vector<FeatureSequence> load_dataset(const DatasetManifest& m) {
  std::vector<FeatureSequence> out;
  out.reserve(m.videos.size());
  for (const VideoEntry& v : m.videos) {
    FeatureSequence seq = read_features(m.feature_path(v));
    if (seq.video_id != v.video_id || seq.T() != v.T || seq.C() != v.C) {
      throw FormatError(m.feature_path(v).string() + ": header disagrees with manifest entry " + v.video_id);
    }
    seq.labeled = v.labeled;
    seq.annotations = v.annotations;
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace sstap
