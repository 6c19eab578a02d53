#pragma once

#include "fflocal/numerics.hpp"

#include <cstddef>
#include <span>

namespace fflocal {

/// Coefficients and sharpness parameters of the per-block objective.
struct LossWeights {
  double lambda_aspect = 1.0;  // weight of the energy margin term
  double lambda_block = 1.0;
  double lambda0 = 0.25;
  double rho = 3.0;
  double lambda_depth = 0.0;
  double eta = 0.5;  // wrong-label / wrong-image blend
  double delta_pos = 0.1;
  double delta_neg = 0.1;
  double beta = 4.0;
  double alpha = 4.0;
  double theta = 1.0;
  double w_min = 0.1;
  double w_max = 10.0;
  // Attenuation-compensated term (off unless mgc_enabled is passed).
  double mgc_c0 = 1.0;
  double mgc_rho = 0.0;
  double mgc_eps = 0.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct BlockLossBreakdown {
  double total = 0.0;
  // Unweighted components.
  double aspects = 0.0;
  double block_cumulative = 0.0;
  double current_block = 0.0;
  double depth_order = 0.0;
  double mgc = 0.0;
  // Coefficients that multiplied them.
  double lambda_aspect = 0.0;
  double lambda_block = 0.0;
  double lambda_curr = 0.0;
  double lambda_depth = 0.0;
  // Per-stream sub-terms (unweighted, before the eta blend).
  double block_nl = 0.0;
  double block_ni = 0.0;
  double current_nl = 0.0;
  double current_ni = 0.0;

  double weighted_sum() const noexcept {
    return lambda_aspect * aspects + lambda_block * block_cumulative +
           lambda_curr * current_block + lambda_depth * depth_order + mgc;
  }
};

/// mean softplus(-alpha (a_i - b_i))
double sep_loss(const Vector& a, const Vector& b, double alpha);

/// mean softplus(theta - g_pos) + mean softplus(g_neg - theta)
double margin_loss(const Vector& g_pos, const Vector& g_neg, double theta);

/// (1 - eta) sep(G_pos, G_nl) + eta sep(G_pos, G_ni)
double block_cumulative_loss(const Vector& G_pos, const Vector& G_nl, const Vector& G_ni,
                             double eta, double alpha);

/// sigmoid(-beta P) weights, mean-normalised, clipped to [w_min, w_max] and
/// re-normalised so the batch mean is exactly one.
Vector residual_weights(const Vector& P_prev, double beta, double w_min, double w_max);

/// lambda0 (1 + rho d / (L - 1)). Requires L >= 2 and d < L.
double depth_scaled_lambda(std::size_t d, std::size_t L, double lambda0, double rho);

/// (1 - eta) mean(w_nl * l_beta(m_nl)) + eta mean(w_ni * l_beta(m_ni))
double current_block_loss(const Vector& m_nl, const Vector& m_ni, const Vector& w_nl,
                          const Vector& w_ni, double eta, double beta);

/// mean softplus(delta_pos - (G_pos_d - G_pos_prev)) plus, for every negative
/// stream k, mean softplus(delta_neg - (G_neg_prev[k] - G_neg_d[k])).
double depth_order_loss(const Vector& G_pos_d, const Vector& G_pos_prev,
                        std::span<const Vector> G_neg_d, std::span<const Vector> G_neg_prev,
                        double delta_pos, double delta_neg);
double depth_order_loss(const Vector& G_pos_d, const Vector& G_pos_prev, const Vector& G_neg_d,
                        const Vector& G_neg_prev, double delta_pos, double delta_neg);

struct MgcResult {
  double loss = 0.0;
  Vector lambda;  // per-example compensation weights (stop-gradient)
};

/// Missing-gradient compensated loss:
///   lambda_i = max(0, c_d - s(M_i) / (s(m_i) + eps)),  s(u) = sigmoid(-beta u)
///   loss     = mean[l_beta(M_i) + lambda_i l_beta(m_i)]
MgcResult mgc_loss(const Vector& m, const Vector& P_prev, double gamma, double beta, double c_d,
                   double eps);

/// Per-example derivative of the MGC loss w.r.t. m_i (scaled by 1/B as the
/// loss is a batch mean).
Vector mgc_margin_gradient(const Vector& m, const Vector& P_prev, double gamma, double beta,
                           double c_d, double eps);

/// Everything the block-d objective sees. Only the g_* vectors depend on the
/// block's own parameters; everything else is a detached constant.
struct BlockLossInputs {
  Vector g_pos, g_nl, g_ni;              // current-block goodness
  Vector prior_pos, prior_nl, prior_ni;  // sum_{j<d} g^(j), per stream
  Vector prev_mixed_pos, prev_mixed_nl, prev_mixed_ni;  // G^(d-1) (gamma-mixed), d >= 1
  double gamma = 0.0;                    // effective gamma at this block

  std::size_t batch() const noexcept { return static_cast<std::size_t>(g_pos.size()); }
  void validate() const;

  Vector margin_nl() const { return g_pos - g_nl; }
  Vector margin_ni() const { return g_pos - g_ni; }
  Vector upstream_nl() const { return prior_pos - prior_nl; }
  Vector upstream_ni() const { return prior_pos - prior_ni; }
  Vector mixed_pos() const { return g_pos + gamma * prior_pos; }
  Vector mixed_nl() const { return g_nl + gamma * prior_nl; }
  Vector mixed_ni() const { return g_ni + gamma * prior_ni; }

  /// Block-0 inputs: all detached summaries are zero.
  static BlockLossInputs first_block(Vector g_pos, Vector g_nl, Vector g_ni);
};

/// Gradient of the total block loss w.r.t. the three current-goodness vectors.
struct GoodnessGradient {
  Vector d_pos, d_nl, d_ni;
};

BlockLossBreakdown total_block_loss(const BlockLossInputs& in, const LossWeights& w,
                                    std::size_t d, std::size_t L, bool mgc_enabled);

/// Same as total_block_loss, also returning dL/dg for each stream.
BlockLossBreakdown total_block_loss(const BlockLossInputs& in, const LossWeights& w,
                                    std::size_t d, std::size_t L, bool mgc_enabled,
                                    GoodnessGradient& grad);

/// Also returns the gradient w.r.t. the gamma-mixed scores G = g + gamma * prior
/// through the terms that consume G (block-cumulative and depth-order).
BlockLossBreakdown total_block_loss(const BlockLossInputs& in, const LossWeights& w,
                                    std::size_t d, std::size_t L, bool mgc_enabled,
                                    GoodnessGradient& grad, GoodnessGradient& mixed_grad);

/// Current-block coefficient used by the total loss; falls back to lambda0
/// for a single-block network.
double current_lambda(std::size_t d, std::size_t L, const LossWeights& w);

/// Depth control coefficient c_d for the MGC term.
double mgc_coefficient(std::size_t d, std::size_t L, const LossWeights& w);

}  // namespace fflocal
