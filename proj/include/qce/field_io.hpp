#pragma once

// Binary field snapshots:
//   bytes 0-7   magic "QCEFIELD"
//   byte  8     format version (1)
//   bytes 9-12  endianness marker, uint32 0x01020304 in writer byte order
//   bytes 13-20 nx, uint64
//   bytes 21-28 ny, uint64
//   then nx*ny float64 values, row-major (index i*ny + j)
// Integers and values use the writer's byte order; a byte-swapped marker
// makes the reader swap on load.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "qce/error.hpp"
#include "qce/spectral_grid.hpp"

namespace qce {

inline constexpr std::array<char, 8> kFieldMagic{'Q', 'C', 'E', 'F', 'I', 'E', 'L', 'D'};
inline constexpr std::uint8_t kFieldVersion = 1;
inline constexpr std::uint32_t kEndianMarker = 0x01020304u;
inline constexpr std::size_t kFieldHeaderBytes = 29;

namespace detail {

template <class T>
T byteswap_any(T v) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <class T>
void put(std::vector<char>& out, T v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(const std::vector<char>& in, std::size_t off, bool swap) {
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  return swap ? byteswap_any(v) : v;
}

}  // namespace detail

inline std::vector<char> encode_field(const GridField& f) {
  std::vector<char> out(kFieldMagic.begin(), kFieldMagic.end());
  out.push_back(static_cast<char>(kFieldVersion));
  detail::put<std::uint32_t>(out, kEndianMarker);
  detail::put<std::uint64_t>(out, f.grid().nx);
  detail::put<std::uint64_t>(out, f.grid().ny);
  const char* p = reinterpret_cast<const char*>(f.data());
  out.insert(out.end(), p, p + f.size() * sizeof(double));
  return out;
}

/// Decodes a snapshot onto a grid with the given bounds (the format stores sizes only).
inline GridField decode_field(const std::vector<char>& in, double ax = 0.0,
                              double bx = 2.0 * std::numbers::pi, double ay = 0.0,
                              double by = 2.0 * std::numbers::pi) {
  if (in.size() < kFieldHeaderBytes) throw FormatError("field file shorter than its header");
  if (!std::equal(kFieldMagic.begin(), kFieldMagic.end(), in.begin()))
    throw FormatError("bad magic, not a field snapshot");
  const auto version = static_cast<std::uint8_t>(in[8]);
  if (version != kFieldVersion)
    throw FormatError("unsupported field format version " + std::to_string(version));
  const auto marker = detail::get<std::uint32_t>(in, 9, false);
  bool swap = false;
  if (marker == detail::byteswap_any(kEndianMarker)) swap = true;
  else if (marker != kEndianMarker) throw FormatError("unrecognized endianness marker");
  const auto nx = detail::get<std::uint64_t>(in, 13, swap);
  const auto ny = detail::get<std::uint64_t>(in, 21, swap);
  if (nx == 0 || ny == 0 || nx > (1u << 20) || ny > (1u << 20))
    throw FormatError("implausible field shape");
  const std::size_t expect = kFieldHeaderBytes + nx * ny * sizeof(double);
  if (in.size() != expect) {
    throw FormatError("shape mismatch: header says " + std::to_string(nx) + "x" + std::to_string(ny) +
                      " (" + std::to_string(expect) + " bytes), file has " + std::to_string(in.size()));
  }
  Grid g(nx, ny, ax, bx, ay, by);
  std::vector<double> v(nx * ny);
  for (std::size_t k = 0; k < v.size(); ++k)
    v[k] = detail::get<double>(in, kFieldHeaderBytes + k * sizeof(double), swap);
  return GridField(g, std::move(v));
}

inline void save_field(const std::string& path, const GridField& f) {
  const auto bytes = encode_field(f);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("write failed for '" + path + "'");
}

inline GridField load_field(const std::string& path, double ax = 0.0,
                            double bx = 2.0 * std::numbers::pi, double ay = 0.0,
                            double by = 2.0 * std::numbers::pi) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_field(bytes, ax, bx, ay, by);
}

}  // namespace qce
