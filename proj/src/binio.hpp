#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "themescope/util.hpp"

// Little-endian binary encoding helpers.
namespace themescope::detail::binio {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw Error("truncated binary file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline float get_f32(const std::string& in, std::size_t& pos) {
  std::uint32_t bits = get_u32(in, pos);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u32(out, static_cast<std::uint32_t>(bits));
  put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

inline double get_f64(const std::string& in, std::size_t& pos) {
  std::uint64_t lo = get_u32(in, pos);
  std::uint64_t hi = get_u32(in, pos);
  std::uint64_t bits = lo | (hi << 32);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

inline std::string get_str(const std::string& in, std::size_t& pos) {
  auto n = get_u32(in, pos);
  if (pos + n > in.size()) throw Error("truncated binary file");
  std::string s = in.substr(pos, n);
  pos += n;
  return s;
}


}  // namespace themescope::detail::binio
