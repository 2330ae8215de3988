#pragma once

// Little-endian helpers shared by the checkpoint and patch-cache formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace lungfpr::detail {

template <typename T>
T byteswap_if_big(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <typename T>
void write_le(std::ostream& os, T value) {
  value = byteswap_if_big(value);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

/// Returns false on short read.
template <typename T>
bool read_le(std::istream& is, T& value) {
  T raw;
  if (!is.read(reinterpret_cast<char*>(&raw), sizeof(T))) return false;
  value = byteswap_if_big(raw);
  return true;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline bool read_string(std::istream& is, std::string& s, std::uint32_t max_len = 1u << 16) {
  std::uint32_t len = 0;
  if (!read_le(is, len) || len > max_len) return false;
  s.resize(len);
  return static_cast<bool>(is.read(s.data(), len));
}

}  // namespace lungfpr::detail
