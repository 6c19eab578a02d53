#include "fflocal/model.hpp"

#include "fflocal/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace fflocal {

namespace {

constexpr double kNormEps = 1e-12;

template <typename Dense>
void append(Vector& flat, Eigen::Index& pos, const Dense& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat[pos++] = m(r, c);
  }
}

template <typename Dense>
void extract(const Vector& flat, Eigen::Index& pos, Dense& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat[pos++];
  }
}

template <typename Dense>
bool bitwise_equal(const Dense& a, const Dense& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
  });
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw DimensionError(fmt::format("block_forward: {} labels for {} rows", labels.size(), rows));
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw DomainError(fmt::format("block_forward: label {} outside [0, {})", y, classes));
    }
  }
}

}  // namespace

std::size_t BlockParams::parameter_count() const noexcept {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size() + label_embed.size());
}

Vector BlockParams::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index pos = 0;
  append(flat, pos, w1);
  append(flat, pos, b1);
  append(flat, pos, w2);
  append(flat, pos, b2);
  append(flat, pos, label_embed);
  return flat;
}

void BlockParams::assign(const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw DimensionError(fmt::format("BlockParams::assign: expected {} values, got {}",
                                     parameter_count(), flat.size()));
  }
  Eigen::Index pos = 0;
  extract(flat, pos, w1);
  extract(flat, pos, b1);
  extract(flat, pos, w2);
  extract(flat, pos, b2);
  extract(flat, pos, label_embed);
}

void BlockParams::validate() const {
  if (b1.size() != w1.cols() || w2.rows() != w1.cols() || b2.size() != w2.cols() ||
      label_embed.cols() != w1.rows()) {
    throw DimensionError(fmt::format(
        "BlockParams: inconsistent shapes W1 {} b1 {} W2 {} b2 {} embed {}", shape_string(w1),
        b1.size(), shape_string(w2), b2.size(), shape_string(label_embed)));
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite() ||
      !label_embed.allFinite()) {
    throw NumericError("BlockParams: non-finite entry");
  }
}

BlockParams BlockParams::zeros_like(const BlockParams& other) {
  BlockParams z;
  z.w1 = Matrix::Zero(other.w1.rows(), other.w1.cols());
  z.b1 = Vector::Zero(other.b1.size());
  z.w2 = Matrix::Zero(other.w2.rows(), other.w2.cols());
  z.b2 = Vector::Zero(other.b2.size());
  z.label_embed = Matrix::Zero(other.label_embed.rows(), other.label_embed.cols());
  z.goodness_scale = other.goodness_scale;
  z.inject_label = other.inject_label;
  return z;
}

bool BlockParams::operator==(const BlockParams& o) const {
  return bitwise_equal(w1, o.w1) && bitwise_equal(b1, o.b1) && bitwise_equal(w2, o.w2) &&
         bitwise_equal(b2, o.b2) && bitwise_equal(label_embed, o.label_embed) &&
         std::bit_cast<std::uint64_t>(goodness_scale) ==
             std::bit_cast<std::uint64_t>(o.goodness_scale) &&
         inject_label == o.inject_label;
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.parameter_count();
  return n;
}

void Network::validate() const {
  if (blocks.empty()) throw DomainError("Network: needs at least one block");
  for (std::size_t d = 0; d < blocks.size(); ++d) {
    const auto& b = blocks[d];
    b.validate();
    const Eigen::Index expected_in = d == 0 ? input_dim : blocks[d - 1].output_dim();
    if (b.input_dim() != expected_in) {
      throw DimensionError(fmt::format("Network: block {} expects input width {}, got {}", d,
                                       expected_in, b.input_dim()));
    }
    if (b.classes() != classes) {
      throw DimensionError(fmt::format("Network: block {} embeds {} classes, network has {}", d,
                                       b.classes(), classes));
    }
  }
}

bool Network::operator==(const Network& o) const {
  return input_dim == o.input_dim && hidden_dim == o.hidden_dim && output_dim == o.output_dim &&
         classes == o.classes && blocks == o.blocks;
}

Network init_network(const NetworkShape& shape, std::mt19937_64& rng) {
  if (shape.depth < 1) throw DomainError("init_network: depth must be >= 1");
  if (shape.classes < 2) throw DomainError("init_network: need at least two classes");
  if (shape.input_dim < 1 || shape.hidden_dim < 1 || shape.output_dim < 1) {
    throw DomainError("init_network: dimensions must be positive");
  }
  Network net;
  net.input_dim = shape.input_dim;
  net.hidden_dim = shape.hidden_dim;
  net.output_dim = shape.output_dim;
  net.classes = shape.classes;
  for (std::size_t d = 0; d < shape.depth; ++d) {
    const Eigen::Index in = d == 0 ? shape.input_dim : shape.output_dim;
    BlockParams b;
    // Blocks after the first see unit-norm rows rather than unit-variance coordinates.
    const double fan = d == 0 ? static_cast<double>(in) : 1.0;
    b.w1 = random_normal(in, shape.hidden_dim, std::sqrt(2.0 / fan), rng);
    b.b1 = Vector::Zero(shape.hidden_dim);
    b.w2 = random_normal(shape.hidden_dim, shape.output_dim,
                         std::sqrt(1.0 / static_cast<double>(shape.hidden_dim)), rng);
    b.b2 = Vector::Zero(shape.output_dim);
    b.label_embed = random_normal(shape.classes, in,
                                  shape.embed_scale / std::sqrt(static_cast<double>(in)), rng);
    b.goodness_scale = shape.goodness_scale;
    b.inject_label = shape.label_every_block || d == 0;
    net.blocks.push_back(std::move(b));
  }
  return net;
}

BlockForward block_forward(const BlockParams& params, const Matrix& tokens,
                           std::span<const int> labels) {
  if (tokens.cols() != params.input_dim()) {
    throw DimensionError(fmt::format("block_forward: tokens {} incompatible with W1 {}",
                                     shape_string(tokens), shape_string(params.w1)));
  }
  check_labels(labels, tokens.rows(), params.classes());

  BlockForward f;
  f.input = tokens;
  if (params.inject_label) {
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
      f.input.row(i) += params.label_embed.row(labels[static_cast<std::size_t>(i)]);
    }
  }
  f.pre = affine_forward(f.input, params.w1, params.b1);
  f.hidden = f.pre.cwiseMax(0.0);
  const double width = static_cast<double>(params.hidden_dim());
  f.goodness = f.hidden.rowwise().squaredNorm() / width;
  f.goodness.array() -= params.goodness_scale;
  f.output_raw = affine_forward(f.hidden, params.w2, params.b2);
  f.output = l2_normalize_rows(f.output_raw, kNormEps);
  return f;
}

BlockForward block_forward(const BlockParams& params, const Matrix& tokens, int label) {
  const std::vector<int> labels(static_cast<std::size_t>(tokens.rows()), label);
  return block_forward(params, tokens, labels);
}

BlockGradients block_backward(const BlockParams& params, const BlockForward& fwd,
                              std::span<const int> labels, const Vector& d_goodness,
                              const Matrix* d_output, Matrix* d_tokens) {
  const Eigen::Index n = fwd.hidden.rows();
  if (d_goodness.size() != n) {
    throw DimensionError(fmt::format("block_backward: {} goodness gradients for {} rows",
                                     d_goodness.size(), n));
  }
  BlockGradients g = BlockParams::zeros_like(params);
  const double width = static_cast<double>(params.hidden_dim());

  // g_i = |h_i|^2 / H  =>  dh_i = dg_i * 2 h_i / H
  Matrix d_hidden = (2.0 / width) * (d_goodness.asDiagonal() * fwd.hidden);

  if (d_output != nullptr) {
    if (d_output->rows() != n || d_output->cols() != params.output_dim()) {
      throw DimensionError("block_backward: output gradient shape mismatch");
    }
    // y = r / max(|r|, eps)
    Matrix d_raw(n, params.output_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = fwd.output_raw.row(i).norm();
      if (norm >= kNormEps) {
        const double proj = fwd.output.row(i).dot(d_output->row(i));
        d_raw.row(i) = (d_output->row(i) - proj * fwd.output.row(i)) / norm;
      } else {
        d_raw.row(i) = d_output->row(i) / kNormEps;
      }
    }
    g.w2 = fwd.hidden.transpose() * d_raw;
    g.b2 = d_raw.colwise().sum().transpose();
    d_hidden += d_raw * params.w2.transpose();
  }

  const Matrix d_pre = d_hidden.cwiseProduct((fwd.pre.array() > 0.0).cast<double>().matrix());
  g.w1 = fwd.input.transpose() * d_pre;
  g.b1 = d_pre.colwise().sum().transpose();
  const Matrix d_input = d_pre * params.w1.transpose();
  if (params.inject_label) {
    for (Eigen::Index i = 0; i < n; ++i) {
      g.label_embed.row(labels[static_cast<std::size_t>(i)]) += d_input.row(i);
    }
  }
  if (d_tokens != nullptr) *d_tokens = d_input;
  return g;
}

namespace {

void accumulate(BlockGradients& into, const BlockGradients& g) {
  into.w1 += g.w1;
  into.b1 += g.b1;
  into.w2 += g.w2;
  into.b2 += g.b2;
  into.label_embed += g.label_embed;
}

bool finite(const BlockGradients& g) {
  return g.w1.allFinite() && g.b1.allFinite() && g.w2.allFinite() && g.b2.allFinite() &&
         g.label_embed.allFinite();
}

}  // namespace

BlockGradients block_gradients(const BlockParams& params, std::span<const StreamBatch> streams,
                               const GoodnessLoss& loss, double* loss_value) {
  std::vector<BlockForward> fwd;
  std::vector<Vector> goodness;
  fwd.reserve(streams.size());
  for (const auto& s : streams) {
    fwd.push_back(block_forward(params, s.tokens, s.labels));
    goodness.push_back(fwd.back().goodness);
  }
  std::vector<Vector> d_goodness;
  const double value = loss(goodness, d_goodness);
  if (!std::isfinite(value)) {
    throw NumericError(fmt::format("block_gradients: non-finite loss {}", value));
  }
  if (d_goodness.size() != streams.size()) {
    throw DimensionError("block_gradients: loss returned wrong number of stream gradients");
  }
  BlockGradients total = BlockParams::zeros_like(params);
  for (std::size_t s = 0; s < streams.size(); ++s) {
    accumulate(total, block_backward(params, fwd[s], streams[s].labels, d_goodness[s], nullptr,
                                     nullptr));
  }
  if (!finite(total)) throw NumericError("block_gradients: non-finite gradient");
  if (loss_value != nullptr) *loss_value = value;
  return total;
}

std::vector<Matrix> network_tokens(const Network& net, const Matrix& images,
                                   std::span<const int> labels) {
  std::vector<Matrix> tokens;
  tokens.reserve(net.depth());
  tokens.push_back(images);
  for (std::size_t d = 0; d + 1 < net.depth(); ++d) {
    tokens.push_back(block_forward(net.blocks[d], tokens.back(), labels).output);
  }
  return tokens;
}

std::vector<Vector> network_forward(const Network& net, const Matrix& images,
                                    std::span<const int> labels) {
  std::vector<Vector> goodness;
  goodness.reserve(net.depth());
  Matrix tokens = images;
  for (const auto& block : net.blocks) {
    BlockForward f = block_forward(block, tokens, labels);
    goodness.push_back(std::move(f.goodness));
    tokens = std::move(f.output);
  }
  return goodness;
}

std::vector<Vector> network_forward(const Network& net, const Matrix& images, int label) {
  const std::vector<int> labels(static_cast<std::size_t>(images.rows()), label);
  return network_forward(net, images, labels);
}

EmaTeacher make_teacher(const Network& live, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) {
    throw ParameterError(fmt::format("EMA decay must lie in [0,1], got {}", decay));
  }
  return EmaTeacher{live, decay};
}

void ema_update_block(EmaTeacher& teacher, const Network& live, std::size_t block) {
  if (teacher.shadow.depth() != live.depth() || block >= live.depth()) {
    throw DimensionError("ema_update: teacher and live network depth differ");
  }
  auto& s = teacher.shadow.blocks[block];
  const auto& l = live.blocks[block];
  if (s.parameter_count() != l.parameter_count() || s.w1.rows() != l.w1.rows() ||
      s.w1.cols() != l.w1.cols() || s.w2.cols() != l.w2.cols()) {
    throw DimensionError(fmt::format("ema_update: block {} shapes differ", block));
  }
  const double a = teacher.decay;
  const double b = 1.0 - a;
  s.w1 = a * s.w1 + b * l.w1;
  s.b1 = a * s.b1 + b * l.b1;
  s.w2 = a * s.w2 + b * l.w2;
  s.b2 = a * s.b2 + b * l.b2;
  s.label_embed = a * s.label_embed + b * l.label_embed;
}

void ema_update(EmaTeacher& teacher, const Network& live) {
  if (teacher.shadow.depth() != live.depth()) {
    throw DimensionError("ema_update: teacher and live network depth differ");
  }
  for (std::size_t d = 0; d < live.depth(); ++d) ema_update_block(teacher, live, d);
}

}  // namespace fflocal
