#pragma once

// Little-endian encode/decode helpers shared by the checkpoint container and
// the wire framing.

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

namespace fqkl::bytes {

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put(out, std::bit_cast<std::uint32_t>(v));
}

template <class T>
T get(const std::uint8_t* p) {
  static_assert(std::is_integral_v<T>);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

inline double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get<std::uint64_t>(p)); }
inline float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get<std::uint32_t>(p)); }

}  // namespace fqkl::bytes
