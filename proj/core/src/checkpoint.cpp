#include "fflocal/errors.hpp"
#include "fflocal/model.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace fflocal {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr std::array<char, 8> kMagic = {'F', 'F', 'L', 'C', 'K', 'P', 'T', '\0'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename Dense>
void write_dense(std::ostream& os, const Dense& m) {
  // Row-major order regardless of the storage order of `m`.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(os, m(r, c));
  }
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError("checkpoint: truncated header");
  }
  return v;
}

double read_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError("checkpoint: truncated parameter payload");
  }
  return v;
}

template <typename Dense>
void read_dense(std::istream& is, Dense& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_f64(is);
  }
}

}  // namespace

void save_checkpoint(const Network& net, std::ostream& os) {
  net.validate();
  os.write(kMagic.data(), kMagic.size());
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(net.depth()));
  write_u32(os, static_cast<std::uint32_t>(net.input_dim));
  write_u32(os, static_cast<std::uint32_t>(net.hidden_dim));
  write_u32(os, static_cast<std::uint32_t>(net.output_dim));
  write_u32(os, static_cast<std::uint32_t>(net.classes));
  for (const auto& b : net.blocks) {
    const char inject = b.inject_label ? 1 : 0;
    os.write(&inject, 1);
    write_f64(os, b.goodness_scale);
    write_dense(os, b.w1);
    write_dense(os, b.b1);
    write_dense(os, b.w2);
    write_dense(os, b.b2);
    write_dense(os, b.label_embed);
  }
  if (!os) throw IoError("checkpoint: write failed");
}

Network load_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("checkpoint: bad magic");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("checkpoint: unsupported version {}", version));
  }
  const std::uint32_t depth = read_u32(is);
  Network net;
  net.input_dim = read_u32(is);
  net.hidden_dim = read_u32(is);
  net.output_dim = read_u32(is);
  net.classes = read_u32(is);
  if (depth == 0 || net.input_dim == 0 || net.hidden_dim == 0 || net.output_dim == 0 ||
      net.classes < 2) {
    throw FormatError("checkpoint: invalid header dimensions");
  }
  for (std::uint32_t d = 0; d < depth; ++d) {
    const Eigen::Index in = d == 0 ? net.input_dim : net.output_dim;
    BlockParams b;
    char inject = 0;
    if (!is.read(&inject, 1)) throw FormatError("checkpoint: truncated block header");
    b.inject_label = inject != 0;
    b.goodness_scale = read_f64(is);
    b.w1.resize(in, net.hidden_dim);
    b.b1.resize(net.hidden_dim);
    b.w2.resize(net.hidden_dim, net.output_dim);
    b.b2.resize(net.output_dim);
    b.label_embed.resize(net.classes, in);
    read_dense(is, b.w1);
    read_dense(is, b.b1);
    read_dense(is, b.w2);
    read_dense(is, b.b2);
    read_dense(is, b.label_embed);
    net.blocks.push_back(std::move(b));
  }
  net.validate();
  return net;
}

void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path));
  save_checkpoint(net, os);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(fmt::format("cannot open checkpoint '{}'", path));
  return load_checkpoint(is);
}

}  // namespace fflocal
