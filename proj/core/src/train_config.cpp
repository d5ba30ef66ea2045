#include "sstap/train_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "sstap/error.hpp"

namespace sstap {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("config key '" + std::string(key) + "': not a number: '" + s + "'");
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': not a non-negative integer: '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': not a boolean: '" + std::string(v) + "'");
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Field {
  ConfigKey doc;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define REAL_FIELD(name, help)                                                                  \
  Field {                                                                                       \
    {#name, "real", help}, [](TrainConfig& c, std::string_view v) { c.name = to_double(#name, v); }, \
        [](const TrainConfig& c) { return fmt_double(c.name); }                                 \
  }
#define UINT_FIELD(name, help)                                                                   \
  Field {                                                                                        \
    {#name, "integer", help},                                                                    \
        [](TrainConfig& c, std::string_view v) { c.name = static_cast<decltype(c.name)>(to_uint(#name, v)); }, \
        [](const TrainConfig& c) { return std::to_string(c.name); }                              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      REAL_FIELD(alpha, "EMA coefficient of the teacher, in [0, 1)"),
      REAL_FIELD(lambda1, "weight of the temporal-shift consistency loss"),
      REAL_FIELD(lambda2, "weight of the temporal-flip consistency loss"),
      REAL_FIELD(lambda3, "weight of the masked reconstruction loss"),
      REAL_FIELD(lambda4, "weight of the clip-order loss"),
      REAL_FIELD(mu, "fraction of channels moved by the temporal shift, in (0, 1]"),
      REAL_FIELD(omega, "fraction of snippets masked for reconstruction, in [0, 1)"),
      UINT_FIELD(K, "number of clips for order prediction (K! classes)"),
      REAL_FIELD(p_drop, "dropout probability on base features"),
      Field{{"recon_support", "all|masked_only", "positions scored by the reconstruction loss"},
            [](TrainConfig& c, std::string_view v) { c.recon_support = parse_recon_support(v); },
            [](const TrainConfig& c) { return std::string(recon_support_name(c.recon_support)); }},
      Field{{"use_unlabeled", "bool", "sample unlabeled videos into each batch"},
            [](TrainConfig& c, std::string_view v) { c.use_unlabeled = to_bool("use_unlabeled", v); },
            [](const TrainConfig& c) { return std::string(c.use_unlabeled ? "true" : "false"); }},
      UINT_FIELD(batch_labeled, "labeled videos per batch"),
      UINT_FIELD(batch_unlabeled, "unlabeled videos per batch"),
      REAL_FIELD(lr, "Adam learning rate"),
      REAL_FIELD(beta1, "Adam first-moment decay"),
      REAL_FIELD(beta2, "Adam second-moment decay"),
      REAL_FIELD(adam_eps, "Adam denominator epsilon"),
      UINT_FIELD(epochs, "passes over the labeled pool"),
      UINT_FIELD(seed, "seed for initialization, batching and perturbations"),
      Field{{"precision", "f32|f64", "arithmetic precision of training"},
            [](TrainConfig& c, std::string_view v) { c.precision = parse_precision(v); },
            [](const TrainConfig& c) { return std::string(precision_name(c.precision)); }},
      UINT_FIELD(hidden, "channels of the base module and TEM"),
      UINT_FIELD(pem_hidden, "channels of the PEM"),
      UINT_FIELD(max_duration, "rows D of the boundary-matching map; 0 means T"),
      UINT_FIELD(num_samples, "sample points N per candidate in the BM layer"),
  };
  return f;
}

#undef REAL_FIELD
#undef UINT_FIELD

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.doc.name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.doc);
    return k;
  }();
  return keys;
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  find_field(key).set(cfg, trim(value));
}

std::string get_config_value(const TrainConfig& cfg, std::string_view key) { return find_field(key).get(cfg); }

TrainConfig parse_config(std::string_view text, TrainConfig cfg) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += std::string(f.doc.name) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.seed = 0;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(format_config(c))));
  return buf;
}

}  // namespace sstap
