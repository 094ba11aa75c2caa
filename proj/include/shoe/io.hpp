// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Binary containers (all little-endian):
//   SHM1  matrix:  magic, u32 rows, u32 cols, u32 dtype (0 = f32, 1 = f64), row-major payload
//   SHC1  codes:   magic, u32 n_items, u32 code_len, u64 words row-major
// plus the text formats for labels, embedding tables and hierarchies.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "shoe/core.hpp"

namespace shoe::io {

enum class DType : std::uint32_t { Float32 = 0, Float64 = 1 };

// ---- little-endian primitives ---------------------------------------------

template <typename UInt>
void put_le(std::ostream& os, UInt v) {
  std::array<char, sizeof(UInt)> buf{};
  for (std::size_t k = 0; k < sizeof(UInt); ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
  os.write(buf.data(), buf.size());
}

template <typename UInt>
UInt get_le(std::istream& is) {
  std::array<unsigned char, sizeof(UInt)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw FormatError("unexpected end of stream");
  UInt v = 0;
  for (std::size_t k = 0; k < sizeof(UInt); ++k) v |= static_cast<UInt>(buf[k]) << (8 * k);
  return v;
}

inline void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
inline void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
inline std::uint64_t get_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_le<std::uint32_t>(is)); }

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

inline void expect_magic(std::istream& is, std::string_view magic) {
  char buf[4] = {};
  is.read(buf, 4);
  if (!is || std::string_view(buf, 4) != magic) {
    throw FormatError("bad magic: expected " + std::string(magic));
  }
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  std::uint32_t n = get_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError("truncated string");
  return s;
}

/// Raw row-major f64 payload without a header.
inline void put_payload(std::ostream& os, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) put_f64(os, m(i, j));
}

inline Matrix get_payload(std::istream& is, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = get_f64(is);
  return m;
}

inline void put_vector(std::ostream& os, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) put_f64(os, v[i]);
}

inline Vector get_vector(std::istream& is, Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = get_f64(is);
  return v;
}

// ---- SHM1 -------------------------------------------------------------------

inline void write_matrix(std::ostream& os, const Matrix& m, DType dtype = DType::Float64) {
  put_magic(os, "SHM1");
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  put_u32(os, static_cast<std::uint32_t>(dtype));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (dtype == DType::Float32) {
        put_f32(os, static_cast<float>(m(i, j)));
      } else {
        put_f64(os, m(i, j));
      }
    }
  }
}

inline Matrix read_matrix(std::istream& is) {
  expect_magic(is, "SHM1");
  const std::uint32_t rows = get_u32(is);
  const std::uint32_t cols = get_u32(is);
  const std::uint32_t dtype = get_u32(is);
  if (dtype > 1) throw FormatError("SHM1: unknown dtype " + std::to_string(dtype));
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) {
      m(i, j) = dtype == 0 ? static_cast<double>(get_f32(is)) : get_f64(is);
    }
  }
  return m;
}

// ---- SHC1 -------------------------------------------------------------------

inline void write_codes(std::ostream& os, const PackedCodes& codes) {
  put_magic(os, "SHC1");
  put_u32(os, static_cast<std::uint32_t>(codes.n_items()));
  put_u32(os, codes.code_len());
  for (std::uint64_t w : codes.words()) put_u64(os, w);
}

inline PackedCodes read_codes(std::istream& is) {
  expect_magic(is, "SHC1");
  const std::uint32_t n = get_u32(is);
  const std::uint32_t c = get_u32(is);
  if (c == 0) throw FormatError("SHC1: zero code length");
  PackedCodes codes(n, c);
  const std::uint32_t spare = static_cast<std::uint32_t>(codes.words_per_row() * 64) - c;
  for (std::uint64_t& w : codes.words()) w = get_u64(is);
  if (spare > 0) {
    const std::uint64_t high_mask = ~std::uint64_t{0} << (64 - spare);
    for (Index i = 0; i < codes.n_items(); ++i) {
      if (codes.row(i).words.back() & high_mask) throw FormatError("SHC1: unused bits are not zero");
    }
  }
  return codes;
}

// ---- file helpers -------------------------------------------------------------

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open for reading: " + path);
  return is;
}

inline void save_matrix(const std::string& path, const Matrix& m, DType dtype = DType::Float64) {
  auto os = open_out(path);
  write_matrix(os, m, dtype);
}

inline Matrix load_matrix(const std::string& path) {
  auto is = open_in(path);
  return read_matrix(is);
}

inline void save_codes(const std::string& path, const PackedCodes& codes) {
  auto os = open_out(path);
  write_codes(os, codes);
}

inline PackedCodes load_codes(const std::string& path) {
  auto is = open_in(path);
  return read_codes(is);
}

// ---- text formats ---------------------------------------------------------------

/// One non-negative integer label per line; blank lines and `#` comments skipped.
inline std::vector<ClassId> read_labels(std::istream& is) {
  std::vector<ClassId> out;
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    long long v = 0;
    if (!(ls >> v)) continue;
    if (v < 0) throw FormatError("negative label: " + std::to_string(v));
    out.push_back(static_cast<ClassId>(v));
  }
  return out;
}

inline void write_labels(std::ostream& os, const std::vector<ClassId>& labels) {
  for (ClassId y : labels) os << y << '\n';
}

inline std::vector<ClassId> load_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open labels: " + path);
  return read_labels(is);
}

inline void save_labels(const std::string& path, const std::vector<ClassId>& labels) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open for writing: " + path);
  write_labels(os, labels);
}

/// Delimited text matrix: one row per line, values separated by whitespace or commas.
inline Matrix read_text_matrix(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    for (char& ch : line)
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    std::istringstream ls(line);
    std::vector<double> row;
    double v = 0;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) throw FormatError("non-numeric entry in text matrix: " + line);
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError("ragged text matrix: row " + std::to_string(rows.size()) + " has " +
                        std::to_string(row.size()) + " values, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("empty text matrix");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

/// SHM1 if the file starts with the magic, delimited text otherwise.
inline Matrix load_any_matrix(const std::string& path) {
  auto is = open_in(path);
  char buf[4] = {};
  is.read(buf, 4);
  const bool binary = is.gcount() == 4 && std::string_view(buf, 4) == "SHM1";
  is.clear();
  is.seekg(0);
  return binary ? read_matrix(is) : read_text_matrix(is);
}

/// Edge of a parent-pointer forest; parent == -1 marks a root.
struct HierarchyEdge {
  std::int64_t child = 0;
  std::int64_t parent = -1;
};

/// Two columns `child_id parent_id` per line.
inline std::vector<HierarchyEdge> read_hierarchy(std::istream& is) {
  std::vector<HierarchyEdge> edges;
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    HierarchyEdge e;
    if (!(ls >> e.child)) continue;
    if (!(ls >> e.parent)) throw FormatError("hierarchy line missing parent: " + line);
    edges.push_back(e);
  }
  return edges;
}

inline std::vector<HierarchyEdge> load_hierarchy(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open hierarchy: " + path);
  return read_hierarchy(is);
}

}  // namespace shoe::io
