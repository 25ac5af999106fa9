#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "gaussperc/connectivity.hpp"
#include "gaussperc/error.hpp"
#include "gaussperc/grid.hpp"
#include "gaussperc/synthesis.hpp"

namespace gaussperc {

inline constexpr char kFieldMagic[8] = {'G', 'P', 'F', 'L', 'D', '0', '0', '1'};
inline constexpr char kMaskMagic[8] = {'G', 'P', 'M', 'S', 'K', '0', '0', '1'};

namespace io {

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_arithmetic_v<T>);
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  std::array<unsigned char, sizeof(T)> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), sizeof(T))) throw FormatError("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  if (s.size() > UINT16_MAX) throw InvalidArgument("string too long for header");
  put<std::uint16_t>(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto n = get<std::uint16_t>(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError("truncated string");
  return s;
}

inline void put_grid(std::ostream& os, const GridSpec& g) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim));
  for (std::size_t a = 0; a < g.dim; ++a) put<std::uint32_t>(os, static_cast<std::uint32_t>(g.cells[a]));
  for (std::size_t a = 0; a < g.dim; ++a) put<double>(os, g.spacing[a]);
}

inline GridSpec get_grid(std::istream& is) {
  GridSpec g;
  g.dim = get<std::uint32_t>(is);
  if (g.dim < 1 || g.dim > kMaxDim) throw FormatError("bad dimension in header");
  for (std::size_t a = 0; a < g.dim; ++a) g.cells[a] = get<std::uint32_t>(is);
  for (std::size_t a = 0; a < g.dim; ++a) g.spacing[a] = get<double>(is);
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("bad grid in header: ") + e.what());
  }
  return g;
}

inline void expect_magic(std::istream& is, const char (&magic)[8]) {
  char m[8];
  if (!is.read(m, 8) || std::memcmp(m, magic, 8) != 0) throw FormatError("bad magic");
}

}  // namespace io

inline void write_field(std::ostream& os, const FieldSample& s) {
  os.write(kFieldMagic, 8);
  io::put_grid(os, s.grid);
  io::put<std::uint64_t>(os, s.seed);
  io::put_string(os, s.kernel_id);
  if (s.values.size() != s.grid.size()) throw InvalidArgument("field size does not match grid");
  for (double v : s.values) io::put<double>(os, v);
  if (!os) throw Error("write failed");
}

inline FieldSample read_field(std::istream& is) {
  io::expect_magic(is, kFieldMagic);
  FieldSample s;
  s.grid = io::get_grid(is);
  s.seed = io::get<std::uint64_t>(is);
  s.kernel_id = io::get_string(is);
  s.method = SynthesisMethod::Loaded;
  s.values.resize(s.grid.size());
  for (double& v : s.values) v = io::get<double>(is);
  return s;
}

inline void save_field(const std::string& path, const FieldSample& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  write_field(os, s);
}

inline FieldSample load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_field(is);
}

/// GPM1: magic, grid header, f64 level, u8 nodal flag, u16 source length + UTF-8,
/// u64 run count, then u32 run lengths alternating false/true starting with false.
inline void write_mask(std::ostream& os, const ExcursionMask& m) {
  os.write(kMaskMagic, 8);
  io::put_grid(os, m.grid);
  io::put<double>(os, m.level);
  io::put<std::uint8_t>(os, m.nodal ? 1 : 0);
  io::put_string(os, m.source);
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t len = 0;
  for (std::uint8_t b : m.bits) {
    const std::uint8_t v = b ? 1 : 0;
    if (v != current) {
      runs.push_back(len);
      current = v;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  io::put<std::uint64_t>(os, runs.size());
  for (auto r : runs) io::put<std::uint32_t>(os, r);
  if (!os) throw Error("write failed");
}

inline ExcursionMask read_mask(std::istream& is) {
  io::expect_magic(is, kMaskMagic);
  ExcursionMask m;
  m.grid = io::get_grid(is);
  m.level = io::get<double>(is);
  m.nodal = io::get<std::uint8_t>(is) != 0;
  m.source = io::get_string(is);
  const auto n_runs = io::get<std::uint64_t>(is);
  m.bits.reserve(m.grid.size());
  std::uint8_t current = 0;
  for (std::uint64_t k = 0; k < n_runs; ++k) {
    const auto r = io::get<std::uint32_t>(is);
    if (m.bits.size() + r > m.grid.size()) throw FormatError("mask runs exceed grid size");
    m.bits.insert(m.bits.end(), r, current);
    current ^= 1;
  }
  if (m.bits.size() != m.grid.size()) throw FormatError("mask runs do not cover grid");
  return m;
}

inline void save_mask(const std::string& path, const ExcursionMask& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  write_mask(os, m);
}

inline ExcursionMask load_mask(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_mask(is);
}

/// One row per component: id, size, then touch flags in face order (-x0, +x0, -x1, ...).
inline void write_labeling_csv(std::ostream& os, const Labeling& lab) {
  const std::size_t d = lab.grid.dim;
  static const char* names[6] = {"x0_lo", "x0_hi", "x1_lo", "x1_hi", "x2_lo", "x2_hi"};
  os << "component,size";
  for (std::size_t f = 0; f < 2 * d; ++f) os << ",touches_" << names[f];
  os << '\n';
  for (std::uint32_t id = 1; id <= lab.count(); ++id) {
    const auto& c = lab.component(id);
    os << id << ',' << c.size;
    for (std::size_t f = 0; f < 2 * d; ++f) os << ',' << (c.touches[f] ? 1 : 0);
    os << '\n';
  }
}

}  // namespace gaussperc
