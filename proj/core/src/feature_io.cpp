#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "sstap/data.hpp"
#include "sstap/error.hpp"

namespace sstap {

namespace {

// 12-byte magic followed by a little-endian u32 version: 16 bytes total.
constexpr char kMagic[12] = {'S', 'S', 'T', 'A', 'P', 'F', 'E', 'A', 'T', 'U', 'R', 'E'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  for (float v : seq.values.values()) {
    if (!std::isfinite(v)) throw FormatError("refusing to write non-finite features for " + seq.video_id);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");

  os.write(kMagic, sizeof kMagic);
  detail::put_le(os, kVersion);
  const nlohmann::json meta = {{"video_id", seq.video_id}, {"T", seq.T()}, {"C", seq.C()}};
  detail::put_string(os, meta.dump());
  for (float v : seq.values.values()) detail::put_f32(os, v);
  if (!os) throw IoError("write failed for " + path.string());
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string where = path.string();

  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError(where + ": bad magic, not a feature file");
  }
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  if (version != kVersion) throw FormatError(where + ": unsupported version " + std::to_string(version));

  const std::string meta_text = detail::get_string(is, "metadata");
  const nlohmann::json meta = nlohmann::json::parse(meta_text, nullptr, false);
  if (meta.is_discarded() || !meta.is_object() || !meta.contains("video_id") ||
      !meta.contains("T") || !meta.contains("C") || !meta["T"].is_number_unsigned() ||
      !meta["C"].is_number_unsigned() || !meta["video_id"].is_string()) {
    throw FormatError(where + ": malformed metadata header");
  }
  FeatureSequence seq;
  seq.video_id = meta["video_id"].get<std::string>();
  const auto T = meta["T"].get<std::size_t>();
  const auto C = meta["C"].get<std::size_t>();
  if (T == 0 || C == 0 || T > (1u << 24) || C > (1u << 16)) {
    throw FormatError(where + ": implausible shape in header");
  }

  const auto payload_start = is.tellg();
  is.seekg(0, std::ios::end);
  const auto payload_bytes = static_cast<std::uint64_t>(is.tellg() - payload_start);
  is.seekg(payload_start);
  if (payload_bytes != static_cast<std::uint64_t>(T) * C * 4) {
    throw FormatError(where + ": shape mismatch, header says " + std::to_string(T) + "x" +
                      std::to_string(C) + " but payload holds " + std::to_string(payload_bytes / 4) +
                      " values");
  }
  seq.values = Matrix<float>(T, C);
  for (float& v : seq.values.values()) {
    v = detail::get_f32(is, "payload");
    if (!std::isfinite(v)) throw FormatError(where + ": non-finite value in payload");
  }
  return seq;
}

}  // namespace sstap
