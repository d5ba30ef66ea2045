#pragma once

// Little-endian primitives shared by the feature and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "sstap/error.hpp"

namespace sstap::detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  char buf[sizeof(U)];
  for (std::size_t k = 0; k < sizeof(U); ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
  os.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& is, const std::string& what) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError("truncated " + what);
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(buf[k]) << (8 * k);
  return v;
}

inline void put_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_le<std::uint32_t>(is, what));
}
inline double get_f64(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(is, what));
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_le(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& what, std::uint32_t max_len = 1u << 24) {
  const auto n = get_le<std::uint32_t>(is, what + " length");
  if (n > max_len) throw FormatError(what + " length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw FormatError("truncated " + what);
  return s;
}

}  // namespace sstap::detail
