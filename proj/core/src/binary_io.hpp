// SPDX-License-Identifier: Apache-2.0
//
// Little-endian record writer/reader with a trailing CRC32, shared by the
// model and surrogate checkpoints.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "gibbsnet/autodiff.hpp"

namespace gibbsnet::detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  /// Row-major element order.
  void matrix(const ad::Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  void vector(const ad::Vector& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) f64(v(k));
  }
  /// Appends the CRC32 of everything so far and writes the file.
  void finish(const std::filesystem::path& path);

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  /// Reads the file and verifies the trailing CRC32.
  explicit ByteReader(const std::filesystem::path& path);

  void bytes(void* p, std::size_t n) {
    if (pos_ + n > end_) throw DataError("truncated checkpoint");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  ad::Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    ad::Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
    return m;
  }
  ad::Vector vector(Eigen::Index n) {
    ad::Vector v(n);
    for (Eigen::Index k = 0; k < n; ++k) v(k) = f64();
    return v;
  }
  void expect_magic(const char (&magic)[5]);
  bool done() const { return pos_ == end_; }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

}  // namespace gibbsnet::detail
