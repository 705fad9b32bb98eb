// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/checkpoint.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

#include "binary_io.hpp"

namespace gibbsnet {

namespace detail {

namespace {

std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(::crc32(crc, p, static_cast<uInt>(n)));
}

}  // namespace

void ByteWriter::finish(const std::filesystem::path& path) {
  const std::uint32_t crc = crc32_of(buf_.data(), buf_.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
  if (!out) throw DataError("failed writing " + path.string());
}

ByteReader::ByteReader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (buf_.size() < 8) throw DataError("truncated checkpoint");
  end_ = buf_.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, buf_.data() + end_, 4);
  if (crc32_of(buf_.data(), end_) != stored) throw DataError("checkpoint checksum mismatch");
}

void ByteReader::expect_magic(const char (&magic)[5]) {
  char got[4];
  bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) throw DataError(std::string("not a ") + magic + " checkpoint");
}

}  // namespace detail

void save_model(const hanna::ModelParams& params, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes("HCNN", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.D));
  const auto layers = params.layers();
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto* l : layers) {
    w.u32(static_cast<std::uint32_t>(l->out()));
    w.u32(static_cast<std::uint32_t>(l->in()));
  }
  for (const auto* l : layers) {
    w.matrix(l->W_raw);
    w.matrix(l->bias);
    w.f64(l->c_star(0, 0));
    w.vector(l->u);
  }
  const bool fitted = params.embedding_scaler.fitted() && params.temperature_scaler.fitted();
  w.u32(fitted ? 1 : 0);
  if (fitted) {
    w.vector(params.embedding_scaler.mean);
    w.vector(params.embedding_scaler.std);
    w.f64(params.temperature_scaler.mean(0));
    w.f64(params.temperature_scaler.std(0));
  }
  w.finish(path);
}

hanna::ModelParams load_model(const std::filesystem::path& path, std::optional<int> expected_D) {
  detail::ByteReader r(path);
  r.expect_magic("HCNN");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  hanna::ModelParams p;
  p.D = static_cast<int>(r.u32());
  if (expected_D && *expected_D != p.D) {
    throw DataError("embedding dimension " + std::to_string(*expected_D) + " does not match checkpoint (" +
                    std::to_string(p.D) + ")");
  }
  auto layers = p.layers();
  if (r.u32() != layers.size()) throw DataError("unexpected layer count in checkpoint");
  const std::array<std::pair<int, int>, 5> expected{{{hanna::kHidden, p.D},
                                                      {hanna::kHidden, hanna::kHidden + 2},
                                                      {hanna::kHidden, hanna::kHidden},
                                                      {hanna::kHidden, hanna::kHidden},
                                                      {1, hanna::kHidden}}};
  for (const auto& [out, in] : expected) {
    const auto o = static_cast<int>(r.u32());
    const auto i = static_cast<int>(r.u32());
    if (o != out || i != in) throw DataError("unexpected layer shape in checkpoint");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto [out, in] = expected[k];
    layers[k]->W_raw = r.matrix(out, in);
    layers[k]->bias = r.matrix(1, out);
    layers[k]->c_star(0, 0) = r.f64();
    layers[k]->u = r.vector(out);
  }
  if (r.u32() == 1) {
    p.embedding_scaler.mean = r.vector(p.D);
    p.embedding_scaler.std = r.vector(p.D);
    p.temperature_scaler.mean = ad::Vector::Constant(1, r.f64());
    p.temperature_scaler.std = ad::Vector::Constant(1, r.f64());
  }
  if (!r.done()) throw DataError("trailing bytes in checkpoint");
  return p;
}

}  // namespace gibbsnet
