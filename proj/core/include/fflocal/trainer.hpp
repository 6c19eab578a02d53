#pragma once

#include "fflocal/dataset.hpp"
#include "fflocal/diagnostics.hpp"
#include "fflocal/goodness.hpp"
#include "fflocal/losses.hpp"
#include "fflocal/model.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace fflocal {

/// How the teacher scores a candidate wrong label.
enum class MiningScore { Summed, CurrentBlock };

std::string_view to_string(MiningScore s) noexcept;
MiningScore parse_mining_score(std::string_view s);

struct TrainConfig {
  // architecture
  std::size_t depth = 4;
  Eigen::Index hidden_dim = 64;
  Eigen::Index output_dim = 32;
  double goodness_scale = 1.0;
  bool label_every_block = true;
  double embed_scale = 1.0;
  // objective
  GateConfig gate;  // gate.gamma0 is the collaboration strength
  LossWeights loss;
  bool mgc = false;
  // negatives
  int hnm_k_first = 8;
  int hnm_k_last = 16;
  MiningScore mining_score = MiningScore::Summed;
  double ema_decay = 0.999;
  // optimisation
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  bool refresh = false;       // later blocks see tokens from already-updated earlier blocks
  bool eval_teacher = false;  // evaluate the EMA teacher instead of the live network
  int audit_every = 0;        // locality audit every N steps (0 = never)
  int jitter = 0;             // max pixel shift for image data (0 = off)
  DatasetSpec data;

  void validate() const;
  NetworkShape shape(Eigen::Index input_dim, Eigen::Index classes) const;
  bool operator==(const TrainConfig&) const = default;
};

/// Adam moments for one block's flattened parameters.
struct OptimizerState {
  Vector m;
  Vector v;
  long long step = 0;

  static OptimizerState for_block(const BlockParams& block);
};

/// One bias-corrected Adam step on a flat parameter vector.
void adam_step(OptimizerState& state, Vector& params, const Vector& grads, double lr, double beta1,
               double beta2, double eps);
void adam_step(OptimizerState& state, BlockParams& params, const BlockGradients& grads, double lr,
               double beta1, double beta2, double eps);

/// Teacher score of every (example, class) pair: the sum of per-block goodness
/// (Summed) or the goodness of a single block (CurrentBlock).
Matrix teacher_scores(const Network& teacher, const Matrix& images, MiningScore mode,
                      std::size_t block = 0);

/// Draws k wrong labels with replacement and returns the best-scored one;
/// the first drawn wins ties. `scores` holds the candidate scores of one example.
int hard_negative_mine(const Eigen::Ref<const Eigen::RowVectorXd>& scores, int true_label, int k,
                       std::mt19937_64& rng);
/// Single-example form that scores with the teacher's summed goodness.
int hard_negative_mine(const Matrix& image, int true_label, int k, const EmaTeacher& teacher,
                       std::mt19937_64& rng);
std::vector<int> hard_negative_mine(const Matrix& score_table, std::span<const int> labels, int k,
                                    std::mt19937_64& rng);

/// Uniform wrong label.
int sample_wrong_label(int true_label, int classes, std::mt19937_64& rng);

/// k at `epoch` (0-based): linear from k_first to k_last, rounded, clamped.
int hnm_ramp(int epoch, int total_epochs, int k_first, int k_last);

struct StepResult {
  std::vector<BlockLossBreakdown> losses;
  MarginTrace wrong_label;
  MarginTrace wrong_image;
  std::vector<double> gamma;
};

struct TrainState {
  Network net;
  EmaTeacher teacher;
  std::vector<OptimizerState> optim;

  static TrainState create(const TrainConfig& cfg, Eigen::Index input_dim, Eigen::Index classes,
                           std::mt19937_64& rng);
};

/// One block-local update sweep over blocks 0..L-1 on a batch.
StepResult train_step(TrainState& state, const Matrix& images, std::span<const int> labels,
                      const TrainConfig& cfg, int epoch, std::mt19937_64& rng);

struct LocalityEntry {
  std::size_t loss_block = 0;
  std::size_t param_block = 0;
  double max_abs_grad = 0.0;
};

struct LocalityReport {
  std::vector<LocalityEntry> entries;    // every (loss block, earlier block) pair
  std::vector<double> own_block_norm;    // |grad| of each loss w.r.t. its own block
  bool passed() const noexcept;
};

/// Gradient of every block's loss w.r.t. all parameters of the network on a
/// batch. `detach = false` is the broken control that lets gradient flow into
/// the incoming tokens and the accumulated goodness.
LocalityReport locality_audit(const Network& net, const Matrix& images, std::span<const int> labels,
                              const TrainConfig& cfg, std::uint64_t seed, bool detach = true);

using MetricsCallback = std::function<void(const DiagnosticsRecord&)>;

struct TrainResult {
  Network net;
  EmaTeacher teacher;
  std::vector<DiagnosticsRecord> history;
  std::size_t audits = 0;
};

/// Full training run. Emits one record per epoch, diagnosed on the validation split.
TrainResult train(const TrainConfig& cfg, const DataSplits& data, const MetricsCallback& sink = {});

/// Network used for evaluation under the config (live or teacher).
const Network& evaluation_network(const TrainResult& r, const TrainConfig& cfg);

}  // namespace fflocal
