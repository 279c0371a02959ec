#pragma once

#include "magnet/common.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

// Raw little-endian helpers shared by the model and checkpoint formats.
namespace magnet::io {

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw ParseError("truncated binary stream");
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw ParseError("truncated binary stream");
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[9]) {
  char buf[8];
  if (!in.read(buf, 8) || std::string(buf, 8) != std::string(magic, 8))
    throw ParseError(std::string("bad magic, expected ") + magic);
}

/// Row-major dump of a double matrix (no shape header).
inline void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) write_pod(out, m(r, c));
}

inline void read_matrix(std::istream& in, Eigen::MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = read_pod<double>(in);
}

/// Shape-prefixed matrix: u64 rows, u64 cols, row-major f64.
inline void write_sized_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  write_matrix(out, m);
}

inline Eigen::MatrixXd read_sized_matrix(std::istream& in) {
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  if (rows > (1u << 24) || cols > (1u << 24)) throw ParseError("implausible matrix shape");
  Eigen::MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
  read_matrix(in, m);
  return m;
}

}  // namespace magnet::io
