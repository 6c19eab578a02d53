#pragma once

#include "fflocal/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fflocal {

/// Learnable parameters of one label-conditioned dense block:
///   z = tokens + label_embed[y]         (when inject_label)
///   h = relu(z W1 + b1)
///   g = mean_j h_j^2 - goodness_scale   (energy goodness)
///   out = l2_normalize(h W2 + b2)
struct BlockParams {
  Matrix w1;           // in x hidden
  Vector b1;           // hidden
  Matrix w2;           // hidden x out
  Vector b2;           // out
  Matrix label_embed;  // classes x in
  double goodness_scale = 1.0;
  bool inject_label = true;

  Eigen::Index input_dim() const noexcept { return w1.rows(); }
  Eigen::Index hidden_dim() const noexcept { return w1.cols(); }
  Eigen::Index output_dim() const noexcept { return w2.cols(); }
  Eigen::Index classes() const noexcept { return label_embed.rows(); }

  std::size_t parameter_count() const noexcept;
  Vector flatten() const;
  void assign(const Vector& flat);
  void validate() const;
  static BlockParams zeros_like(const BlockParams& other);

  bool operator==(const BlockParams& o) const;
};

/// Gradient of one block's loss w.r.t. that block's parameters; same layout
/// as BlockParams.
using BlockGradients = BlockParams;

struct Network {
  std::vector<BlockParams> blocks;
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;
  Eigen::Index output_dim = 0;
  Eigen::Index classes = 0;

  std::size_t depth() const noexcept { return blocks.size(); }
  std::size_t parameter_count() const noexcept;
  void validate() const;
  bool operator==(const Network& o) const;
};

struct NetworkShape {
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 64;
  Eigen::Index output_dim = 32;
  Eigen::Index classes = 2;
  std::size_t depth = 4;
  double goodness_scale = 1.0;
  bool label_every_block = true;
  double embed_scale = 1.0;
};

/// Gaussian initialisation: fan-in scaled on block 0, sqrt(2) std on deeper
/// blocks, whose inputs are unit-norm rows. Deterministic for a given engine state.
Network init_network(const NetworkShape& shape, std::mt19937_64& rng);

struct BlockForward {
  Matrix input;       // tokens with label embedding added
  Matrix pre;         // z W1 + b1
  Matrix hidden;      // relu(pre)
  Matrix output_raw;  // h W2 + b2
  Matrix output;      // row-normalised output_raw
  Vector goodness;
};

/// Batched forward pass; labels[i] conditions row i. Throws DomainError for a
/// label out of range and DimensionError on shape mismatch.
BlockForward block_forward(const BlockParams& params, const Matrix& tokens,
                           std::span<const int> labels);
BlockForward block_forward(const BlockParams& params, const Matrix& tokens, int label);

/// Reverse pass through one block. `d_goodness` is dL/dg per example; the
/// optional `d_output` is dL/d(normalised output). Returns parameter gradients
/// and writes dL/d(tokens) into `d_tokens` when non-null.
BlockGradients block_backward(const BlockParams& params, const BlockForward& fwd,
                              std::span<const int> labels, const Vector& d_goodness,
                              const Matrix* d_output, Matrix* d_tokens);

/// One negative/positive stream entering a block: detached tokens plus the
/// label that conditions each row.
struct StreamBatch {
  Matrix tokens;
  std::vector<int> labels;
};

/// A scalar loss of the per-stream goodness vectors. Must fill `d_goodness`
/// with one gradient vector per stream.
using GoodnessLoss =
    std::function<double(std::span<const Vector> goodness, std::vector<Vector>& d_goodness)>;

/// Exact gradient of `loss` w.r.t. the block's parameters. Throws NumericError
/// if the loss or a gradient entry is non-finite.
BlockGradients block_gradients(const BlockParams& params, std::span<const StreamBatch> streams,
                               const GoodnessLoss& loss, double* loss_value = nullptr);

/// Per-block goodness of (image, label) pairs. Block d consumes block d-1's
/// normalised output as a constant.
std::vector<Vector> network_forward(const Network& net, const Matrix& images,
                                    std::span<const int> labels);
std::vector<Vector> network_forward(const Network& net, const Matrix& images, int label);

/// Tokens entering each block (entry 0 is the image batch).
std::vector<Matrix> network_tokens(const Network& net, const Matrix& images,
                                   std::span<const int> labels);

struct EmaTeacher {
  Network shadow;
  double decay = 0.999;
};

EmaTeacher make_teacher(const Network& live, double decay);

/// shadow <- decay * shadow + (1 - decay) * live for every parameter.
void ema_update(EmaTeacher& teacher, const Network& live);
void ema_update_block(EmaTeacher& teacher, const Network& live, std::size_t block);

// Checkpoint container (little-endian binary):
//   "FFLCKPT\0" | u32 version | u32 L | u32 input | u32 hidden | u32 output |
//   u32 classes | then per block: u8 inject_label, f64 goodness_scale,
//   W1, b1, W2, b2, label_embed as raw f64 in row-major order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Network& net, std::ostream& os);
Network load_checkpoint(std::istream& is);
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace fflocal
