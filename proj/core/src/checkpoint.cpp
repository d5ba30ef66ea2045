#include "sstap/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <type_traits>

#include <json.hpp>

#include "binary_io.hpp"
#include "sstap/error.hpp"

namespace sstap {

namespace {

constexpr char kMagic[12] = {'S', 'S', 'T', 'A', 'P', 'C', 'K', 'P', 'T', 0, 0, 0};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kGroups[4] = {"student", "teacher", "adam_m", "adam_v"};

template <typename R>
void write_store(std::ostream& os, const ParamStore<R>& store) {
  for (std::size_t k = 0; k < store.tensor_count(); ++k) {
    const auto& t = store.at(k);
    detail::put_string(os, std::string(param_name(static_cast<ParamId>(k))));
    detail::put_le(os, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) detail::put_le(os, static_cast<std::uint64_t>(d));
    for (std::size_t j = 0; j < t.size(); ++j) {
      if constexpr (std::is_same_v<R, float>) detail::put_f32(os, t[j]);
      else detail::put_f64(os, t[j]);
    }
  }
}

template <typename R>
void read_store(std::istream& is, ParamStore<R>& store, Precision stored, const std::string& where,
                const std::string& group) {
  for (std::size_t k = 0; k < store.tensor_count(); ++k) {
    auto& t = store.at(k);
    const std::string expect(param_name(static_cast<ParamId>(k)));
    const std::string name = detail::get_string(is, where + " tensor name", 256);
    if (name != expect) throw FormatError(where + ": " + group + " expected tensor " + expect + ", found " + name);
    const auto rank = detail::get_le<std::uint32_t>(is, where + " rank");
    if (rank != t.shape().size()) throw FormatError(where + ": rank mismatch for " + group + "/" + name);
    for (std::size_t r = 0; r < rank; ++r) {
      if (detail::get_le<std::uint64_t>(is, where + " dims") != t.shape()[r]) {
        throw FormatError(where + ": shape mismatch for " + group + "/" + name);
      }
    }
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double v = stored == Precision::f32 ? static_cast<double>(detail::get_f32(is, where + " values"))
                                                : detail::get_f64(is, where + " values");
      t[j] = static_cast<R>(v);
    }
  }
}

CheckpointInfo read_header(std::istream& is, const std::string& where) {
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError(where + ": bad magic, not a checkpoint");
  }
  const auto version = detail::get_le<std::uint32_t>(is, where + " version");
  if (version != kVersion) throw FormatError(where + ": unsupported checkpoint version " + std::to_string(version));
  const auto j = nlohmann::json::parse(detail::get_string(is, where + " header"), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FormatError(where + ": malformed checkpoint header");
  CheckpointInfo info;
  try {
    const auto& s = j.at("shape");
    info.shape.T = s.at("T").get<std::size_t>();
    info.shape.C = s.at("C").get<std::size_t>();
    info.shape.H = s.at("H").get<std::size_t>();
    info.shape.H2 = s.at("H2").get<std::size_t>();
    info.shape.D = s.at("D").get<std::size_t>();
    info.shape.N = s.at("N").get<std::size_t>();
    info.shape.K = s.at("K").get<std::size_t>();
    info.seed = j.at("seed").get<std::uint64_t>();
    info.step = j.at("step").get<std::uint64_t>();
    info.epoch = j.at("epoch").get<std::uint64_t>();
    info.teacher_step = j.at("teacher_step").get<std::uint64_t>();
    info.adam_t = j.at("adam_t").get<std::uint64_t>();
    info.precision = parse_precision(j.at("precision").get<std::string>());
    info.config = j.value("config", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": incomplete checkpoint header (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw FormatError(where + ": " + e.what());
  }
  try {
    info.shape.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(where + ": " + e.what());
  }
  return info;
}

}  // namespace

template <typename R>
void save_checkpoint(const std::filesystem::path& path, const TrainerState<R>& state, const HyperShape& hs,
                     std::uint64_t seed, const std::string& config_text) {
  const nlohmann::json header = {
      {"shape", {{"T", hs.T}, {"C", hs.C}, {"H", hs.H}, {"H2", hs.H2}, {"D", hs.D}, {"N", hs.N}, {"K", hs.K}}},
      {"seed", seed},
      {"step", state.step},
      {"epoch", state.epoch},
      {"teacher_step", state.teacher.step},
      {"adam_t", state.adam.t},
      {"precision", std::string(precision_name(std::is_same_v<R, float> ? Precision::f32 : Precision::f64))},
      {"config", config_text}};
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(kMagic, sizeof kMagic);
    detail::put_le(os, kVersion);
    detail::put_string(os, header.dump());
    const ParamStore<R> empty(hs);
    write_store(os, state.student);
    write_store(os, state.teacher.params);
    write_store(os, state.adam.m.tensor_count() ? state.adam.m : empty);
    write_store(os, state.adam.v.tensor_count() ? state.adam.v : empty);
    os.flush();
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return read_header(is, path.string());
}

template <typename R>
TrainerState<R> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  const std::string where = path.string();
  const CheckpointInfo info = read_header(is, where);
  TrainerState<R> st;
  st.student = ParamStore<R>(info.shape);
  st.teacher.params = ParamStore<R>(info.shape);
  st.adam.m = ParamStore<R>(info.shape);
  st.adam.v = ParamStore<R>(info.shape);
  ParamStore<R>* stores[4] = {&st.student, &st.teacher.params, &st.adam.m, &st.adam.v};
  for (int g = 0; g < 4; ++g) read_store(is, *stores[g], info.precision, where, kGroups[g]);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(where + ": trailing bytes after checkpoint data");
  st.step = info.step;
  st.epoch = info.epoch;
  st.teacher.step = info.teacher_step;
  st.adam.t = info.adam_t;
  if (info_out) *info_out = info;
  return st;
}

template void save_checkpoint(const std::filesystem::path&, const TrainerState<float>&, const HyperShape&,
                              std::uint64_t, const std::string&);
template void save_checkpoint(const std::filesystem::path&, const TrainerState<double>&, const HyperShape&,
                              std::uint64_t, const std::string&);
template TrainerState<float> load_checkpoint<float>(const std::filesystem::path&, CheckpointInfo*);
template TrainerState<double> load_checkpoint<double>(const std::filesystem::path&, CheckpointInfo*);

}  // namespace sstap
