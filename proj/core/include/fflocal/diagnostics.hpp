#pragma once

#include "fflocal/goodness.hpp"
#include "fflocal/model.hpp"
#include "fflocal/numerics.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace fflocal {

/// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row);

/// Cumulative class scores of a classifier on a fixed set of examples.
struct PredictionSet {
  Matrix scores;  // n x C
  std::vector<int> predicted;
  std::vector<int> truth;

  static PredictionSet from_scores(Matrix scores, std::vector<int> truth);

  std::size_t size() const noexcept { return truth.size(); }
  Eigen::Index classes() const noexcept { return scores.cols(); }
  double accuracy() const;
  /// Checks shapes and that every prediction is the tie-broken argmax.
  void validate() const;
  bool operator==(const PredictionSet& o) const;
};

/// Goodness of every (example, class) pair at every block: per_block[d] is
/// n x C with entry (i, y) = g^(d)(x_i, y).
struct GoodnessTable {
  std::vector<Matrix> per_block;

  std::size_t blocks() const noexcept { return per_block.size(); }
  std::size_t examples() const noexcept {
    return per_block.empty() ? 0 : static_cast<std::size_t>(per_block.front().rows());
  }
  /// sum_{j <= d} per_block[j]
  Matrix prefix(std::size_t d) const;
};

/// Runs the network once per class label.
GoodnessTable goodness_table(const Network& net, const Matrix& images);

/// Predictions from the scores of blocks 0..d.
PredictionSet prefix_predictions(const GoodnessTable& table, std::size_t d,
                                 const std::vector<int>& truth);

/// mean_i [ s(i, y_i) - max_{y' != y_i} s(i, y') ] for one n x C score table.
double label_separation(const Matrix& scores, const std::vector<int>& truth);

double sep_cur_nl(const GoodnessTable& table, std::size_t d, const std::vector<int>& truth);
double sep_nl(const GoodnessTable& table, std::size_t d, const std::vector<int>& truth);

/// DS(d) = acc(prefix d) / acc(full). Missing (nullopt) when full accuracy is 0.
std::vector<std::optional<double>> depth_saturation(const std::vector<PredictionSet>& prefixes);

/// Margin traces over every (example, wrong label) pair and over a fixed
/// wrong-image pairing: partner[i] supplies the image paired with y_i.
struct DiagnosticTraces {
  MarginTrace wrong_label;
  MarginTrace wrong_image;
};

DiagnosticTraces diagnostic_traces(const GoodnessTable& table, const std::vector<int>& truth,
                                   const std::vector<std::size_t>& partner,
                                   const std::vector<double>& gamma);

/// LC(d): mean barrier of the prefix-summed inference margin, averaged over
/// the two negative streams.
std::vector<double> loss_collapse(const DiagnosticTraces& traces, double beta);

/// Own share of the gamma-mixed cumulative positive goodness at each block.
std::vector<std::optional<double>> own_vs_inherited(const GoodnessTable& table,
                                                    const std::vector<int>& truth,
                                                    const std::vector<double>& gamma);

/// Effective gamma at every block, gated on the mean positive goodness.
std::vector<double> block_gammas(const GateConfig& gate, const GoodnessTable& table,
                                 const std::vector<int>& truth);

struct RedistributionReport {
  bool predictions_unchanged = true;
  double max_score_change = 0.0;
  double max_margin_shift_error = 0.0;  // |observed - (q(y) - q(y'))| over all pairs
};

/// Adds q at depth a and subtracts it at depth b, then compares cumulative
/// scores, predictions and per-block margins against the closed form.
RedistributionReport redistribution_check(const GoodnessTable& table, const std::vector<int>& truth,
                                          std::size_t depth_a, std::size_t depth_b,
                                          const Matrix& q);

struct StabilityRow {
  double t = 0.0;
  double disagreement = 0.0;
  double margin_band = 0.0;  // Pr[Delta_A <= 2t]
  double tail = 0.0;         // Pr[E > t]
  bool holds = true;
};

struct StabilityReport {
  std::vector<StabilityRow> rows;
  double disagreement = 0.0;
  double accuracy_gap = 0.0;
  bool accuracy_gap_ok = true;
  bool all_hold = true;
};

/// Cumulative margin Delta(x) of the argmax class over the runner-up.
Vector decision_margins(const PredictionSet& p);

StabilityReport stability_bound_check(const PredictionSet& a, const PredictionSet& b,
                                      const std::vector<double>& t_grid);

struct BootstrapReport {
  std::size_t examples = 0;
  std::size_t resamples = 0;
  double mean_delta = 0.0;  // acc(A) - acc(B)
  double ci_low = 0.0;
  double ci_high = 0.0;
  double coverage = 0.95;
  double disagreement = 0.0;
  std::size_t a_correct_b_wrong = 0;
  std::size_t a_wrong_b_correct = 0;
};

/// Paired bootstrap over per-example correctness deltas with a percentile
/// interval. Resample r draws from its own counter-based substream.
BootstrapReport paired_bootstrap(const PredictionSet& a, const PredictionSet& b,
                                 std::size_t resamples, std::uint64_t seed,
                                 double coverage = 0.95);

struct BlockDiagnostics {
  double sep_cur_nl = 0.0;
  double sep_nl = 0.0;
  double loss_collapse = 0.0;
  std::optional<double> depth_saturation;
  double mean_pos_goodness = 0.0;
  double mean_ratio = 1.0;
  double free_riding = 0.0;
  std::optional<double> own_fraction;
  double gamma = 0.0;
};

struct DiagnosticsRecord {
  int epoch = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<BlockDiagnostics> blocks;

  bool operator==(const DiagnosticsRecord& o) const;
};

/// Everything the block-health analysis needs for one network on one set.
struct Evaluation {
  GoodnessTable table;
  PredictionSet full;
  std::vector<PredictionSet> prefixes;
  DiagnosticTraces traces;
  std::vector<double> gamma;
  std::vector<BlockDiagnostics> blocks;
};

/// Full diagnostic pass. The wrong-image pairing is a derangement drawn from
/// `pairing_seed`.
Evaluation evaluate(const Network& net, const Matrix& images, const std::vector<int>& truth,
                    const GateConfig& gate, double beta, std::uint64_t pairing_seed);

/// Sattolo shuffle: a uniformly random n-cycle, hence a permutation with no
/// fixed points for n >= 2. Identity for n < 2.
std::vector<std::size_t> derangement(std::size_t n, std::mt19937_64& rng);

}  // namespace fflocal
