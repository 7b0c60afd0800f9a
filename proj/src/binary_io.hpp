#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "rqmatch/types.hpp"

namespace rqmatch::detail {

// Little-endian primitives shared by the model, bundle and trace codecs.

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw Error("unexpected end of file");
}

template <typename T>
void put_uint(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, buf, sizeof(T));
}

template <typename T>
T get_uint(std::istream& in) {
  unsigned char buf[sizeof(T)];
  get_bytes(in, buf, sizeof(T));
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

inline void put_u8(std::ostream& o, std::uint8_t v) { put_uint<std::uint8_t>(o, v); }
inline void put_u32(std::ostream& o, std::uint32_t v) { put_uint<std::uint32_t>(o, v); }
inline void put_u64(std::ostream& o, std::uint64_t v) { put_uint<std::uint64_t>(o, v); }
inline void put_i32(std::ostream& o, std::int32_t v) { put_u32(o, static_cast<std::uint32_t>(v)); }

inline std::uint8_t get_u8(std::istream& i) { return get_uint<std::uint8_t>(i); }
inline std::uint32_t get_u32(std::istream& i) { return get_uint<std::uint32_t>(i); }
inline std::uint64_t get_u64(std::istream& i) { return get_uint<std::uint64_t>(i); }
inline std::int32_t get_i32(std::istream& i) { return static_cast<std::int32_t>(get_u32(i)); }

inline void put_f32(std::ostream& o, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(o, bits);
}

inline float get_f32(std::istream& i) {
  std::uint32_t bits = get_u32(i);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void put_f64(std::ostream& o, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(o, bits);
}

inline double get_f64(std::istream& i) {
  std::uint64_t bits = get_u64(i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void put_u128(std::ostream& o, FieldValue v) {
  put_u64(o, static_cast<std::uint64_t>(v));
  put_u64(o, static_cast<std::uint64_t>(v >> 64));
}

inline FieldValue get_u128(std::istream& i) {
  std::uint64_t lo = get_u64(i);
  std::uint64_t hi = get_u64(i);
  return (FieldValue{hi} << 64) | lo;
}

inline void put_magic(std::ostream& o, const char m[4]) { put_bytes(o, m, 4); }

inline void expect_magic(std::istream& i, const char m[4], const char* what) {
  char buf[4];
  get_bytes(i, buf, 4);
  if (std::memcmp(buf, m, 4) != 0) throw Error(std::string("bad magic for ") + what);
}

}  // namespace rqmatch::detail
