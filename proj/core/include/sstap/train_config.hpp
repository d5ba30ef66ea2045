#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sstap/trainer.hpp"

namespace sstap {

// One documented configuration key. Keys are the TrainConfig field names.
struct ConfigKey {
  std::string_view name;
  std::string_view type;
  std::string_view help;
};

const std::vector<ConfigKey>& config_schema();

// Sets one field from its textual value. Throws ConfigError for an unknown
// key or an unparsable value.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const TrainConfig& cfg, std::string_view key);

// `key = value` lines; '#' starts a comment; blank lines are ignored.
// Unknown keys and malformed lines throw ConfigError naming the line.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

// Every key in schema order, one per line; parse_config(format_config(c)) == c.
std::string format_config(const TrainConfig& cfg);

// 64-bit FNV-1a over `text`.
std::uint64_t fnv1a64(std::string_view text);
// Hash of format_config with the seed field excluded, as 16 hex digits.
std::string config_hash(const TrainConfig& cfg);

}  // namespace sstap
