#include "fflocal/losses.hpp"

#include "fflocal/errors.hpp"
#include "fflocal/goodness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace fflocal {

namespace {

void require_same_length(const Vector& a, const Vector& b, const char* where) {
  if (a.size() != b.size()) {
    throw DimensionError(fmt::format("{}: length mismatch ({} vs {})", where, a.size(), b.size()));
  }
}

void require_nonempty(const Vector& a, const char* where) {
  if (a.size() == 0) {
    throw DomainError(fmt::format("{}: empty input", where));
  }
}

double mean_of(const Vector& v) { return v.sum() / static_cast<double>(v.size()); }

// Gradient accumulation helpers; all terms are batch means so each example
// contributes scale / B.
struct SepTerm {
  double value = 0.0;
  Vector d_a;  // dvalue/da; dvalue/db = -d_a
};

SepTerm sep_with_grad(const Vector& a, const Vector& b, double alpha) {
  SepTerm t;
  const auto n = static_cast<double>(a.size());
  t.d_a.resize(a.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double u = -alpha * (a[i] - b[i]);
    acc += softplus(u);
    t.d_a[i] = -alpha * sigmoid(u) / n;
  }
  t.value = acc / n;
  return t;
}

}  // namespace

void LossWeights::validate() const {
  if (eta < 0.0 || eta > 1.0) throw ParameterError(fmt::format("eta must lie in [0,1], got {}", eta));
  if (!(beta > 0.0)) throw ParameterError(fmt::format("beta must be > 0, got {}", beta));
  if (!(alpha > 0.0)) throw ParameterError(fmt::format("alpha must be > 0, got {}", alpha));
  if (!(w_min > 0.0) || w_min > 1.0 || w_max < 1.0) {
    throw ParameterError(
        fmt::format("residual weight clip must satisfy 0 < w_min <= 1 <= w_max, got ({}, {})", w_min,
                    w_max));
  }
  if (lambda0 < 0.0) throw ParameterError(fmt::format("lambda0 must be >= 0, got {}", lambda0));
  if (rho < 0.0) throw ParameterError(fmt::format("rho must be >= 0, got {}", rho));
  if (delta_pos < 0.0 || delta_neg < 0.0) {
    throw ParameterError("depth-order tolerances must be >= 0");
  }
  if (mgc_c0 < 1.0) throw ParameterError(fmt::format("mgc_c0 must be >= 1, got {}", mgc_c0));
  if (mgc_eps < 0.0) throw ParameterError("mgc_eps must be >= 0");
}

double sep_loss(const Vector& a, const Vector& b, double alpha) {
  require_same_length(a, b, "sep_loss");
  require_nonempty(a, "sep_loss");
  if (!(alpha > 0.0)) throw ParameterError("sep_loss: alpha must be > 0");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += softplus(-alpha * (a[i] - b[i]));
  return acc / static_cast<double>(a.size());
}

double margin_loss(const Vector& g_pos, const Vector& g_neg, double theta) {
  require_nonempty(g_pos, "margin_loss");
  require_nonempty(g_neg, "margin_loss");
  double pos = 0.0;
  for (Eigen::Index i = 0; i < g_pos.size(); ++i) pos += softplus(theta - g_pos[i]);
  double neg = 0.0;
  for (Eigen::Index i = 0; i < g_neg.size(); ++i) neg += softplus(g_neg[i] - theta);
  return pos / static_cast<double>(g_pos.size()) + neg / static_cast<double>(g_neg.size());
}

double block_cumulative_loss(const Vector& G_pos, const Vector& G_nl, const Vector& G_ni,
                             double eta, double alpha) {
  require_same_length(G_pos, G_nl, "block_cumulative_loss");
  require_same_length(G_pos, G_ni, "block_cumulative_loss");
  if (eta < 0.0 || eta > 1.0) throw ParameterError("block_cumulative_loss: eta must lie in [0,1]");
  return (1.0 - eta) * sep_loss(G_pos, G_nl, alpha) + eta * sep_loss(G_pos, G_ni, alpha);
}

Vector residual_weights(const Vector& P_prev, double beta, double w_min, double w_max) {
  if (P_prev.size() == 0) throw DomainError("residual_weights: empty batch");
  if (!(beta > 0.0)) throw ParameterError("residual_weights: beta must be > 0");
  if (!(w_min > 0.0) || w_min > 1.0 || w_max < 1.0) {
    throw ParameterError("residual_weights: need 0 < w_min <= 1 <= w_max");
  }
  const Eigen::Index n = P_prev.size();
  // log a_i = log sigmoid(-beta P_i) = -softplus(beta P_i); a_i / mean(a) is
  // formed in log space so that large P does not underflow the mean.
  Vector log_a(n);
  for (Eigen::Index i = 0; i < n; ++i) log_a[i] = -softplus(beta * P_prev[i]);
  const double mx = log_a.maxCoeff();
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::exp(log_a[i] - mx);
  const double log_mean = mx + std::log(s / static_cast<double>(n));

  Vector u(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    u[i] = std::clamp(std::exp(log_a[i] - log_mean), w_min, w_max);
  }
  return u / mean_of(u);
}

double depth_scaled_lambda(std::size_t d, std::size_t L, double lambda0, double rho) {
  if (L < 2) throw DomainError(fmt::format("depth_scaled_lambda: need L >= 2, got {}", L));
  if (d >= L) throw DomainError(fmt::format("depth_scaled_lambda: block {} out of range for L={}", d, L));
  return lambda0 * (1.0 + rho * static_cast<double>(d) / static_cast<double>(L - 1));
}

double current_block_loss(const Vector& m_nl, const Vector& m_ni, const Vector& w_nl,
                          const Vector& w_ni, double eta, double beta) {
  require_same_length(m_nl, w_nl, "current_block_loss");
  require_same_length(m_ni, w_ni, "current_block_loss");
  require_nonempty(m_nl, "current_block_loss");
  require_nonempty(m_ni, "current_block_loss");
  double nl = 0.0;
  for (Eigen::Index i = 0; i < m_nl.size(); ++i) nl += w_nl[i] * barrier(m_nl[i], beta);
  double ni = 0.0;
  for (Eigen::Index i = 0; i < m_ni.size(); ++i) ni += w_ni[i] * barrier(m_ni[i], beta);
  return (1.0 - eta) * nl / static_cast<double>(m_nl.size()) +
         eta * ni / static_cast<double>(m_ni.size());
}

double depth_order_loss(const Vector& G_pos_d, const Vector& G_pos_prev,
                        std::span<const Vector> G_neg_d, std::span<const Vector> G_neg_prev,
                        double delta_pos, double delta_neg) {
  require_same_length(G_pos_d, G_pos_prev, "depth_order_loss");
  require_nonempty(G_pos_d, "depth_order_loss");
  if (G_neg_d.size() != G_neg_prev.size()) {
    throw DimensionError("depth_order_loss: negative stream count mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < G_pos_d.size(); ++i) {
    total += softplus(delta_pos - (G_pos_d[i] - G_pos_prev[i])) / static_cast<double>(G_pos_d.size());
  }
  for (std::size_t k = 0; k < G_neg_d.size(); ++k) {
    require_same_length(G_neg_d[k], G_neg_prev[k], "depth_order_loss");
    require_nonempty(G_neg_d[k], "depth_order_loss");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < G_neg_d[k].size(); ++i) {
      acc += softplus(delta_neg - (G_neg_prev[k][i] - G_neg_d[k][i]));
    }
    total += acc / static_cast<double>(G_neg_d[k].size());
  }
  return total;
}

double depth_order_loss(const Vector& G_pos_d, const Vector& G_pos_prev, const Vector& G_neg_d,
                        const Vector& G_neg_prev, double delta_pos, double delta_neg) {
  return depth_order_loss(G_pos_d, G_pos_prev, std::span<const Vector>(&G_neg_d, 1),
                          std::span<const Vector>(&G_neg_prev, 1), delta_pos, delta_neg);
}

namespace {

Vector mgc_lambdas(const Vector& m, const Vector& P_prev, double gamma, double beta, double c_d,
                   double eps) {
  Vector lambda(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double M = m[i] + gamma * P_prev[i];
    const double s_M = sigmoid(-beta * M);
    const double s_m = sigmoid(-beta * m[i]);
    double ratio;
    if (eps == 0.0) {
      // s(M)/s(m) is the attenuation ratio; use the log-space form so that
      // it stays finite when both sigmoids underflow.
      ratio = attenuation_ratio(m[i], P_prev[i], gamma, beta);
    } else {
      ratio = s_M / (s_m + eps);
    }
    lambda[i] = std::max(0.0, c_d - ratio);
  }
  return lambda;
}

}  // namespace

MgcResult mgc_loss(const Vector& m, const Vector& P_prev, double gamma, double beta, double c_d,
                   double eps) {
  require_same_length(m, P_prev, "mgc_loss");
  require_nonempty(m, "mgc_loss");
  if (c_d < 1.0) throw ParameterError(fmt::format("mgc_loss: c_d must be >= 1, got {}", c_d));
  if (eps < 0.0) throw ParameterError("mgc_loss: eps must be >= 0");
  MgcResult r;
  r.lambda = mgc_lambdas(m, P_prev, gamma, beta, c_d, eps);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    acc += barrier(m[i] + gamma * P_prev[i], beta) + r.lambda[i] * barrier(m[i], beta);
  }
  r.loss = acc / static_cast<double>(m.size());
  return r;
}

Vector mgc_margin_gradient(const Vector& m, const Vector& P_prev, double gamma, double beta,
                           double c_d, double eps) {
  require_same_length(m, P_prev, "mgc_margin_gradient");
  require_nonempty(m, "mgc_margin_gradient");
  const Vector lambda = mgc_lambdas(m, P_prev, gamma, beta, c_d, eps);
  const auto n = static_cast<double>(m.size());
  Vector g(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    g[i] = (barrier_deriv(m[i] + gamma * P_prev[i], beta) + lambda[i] * barrier_deriv(m[i], beta)) / n;
  }
  return g;
}

void BlockLossInputs::validate() const {
  const Eigen::Index n = g_pos.size();
  if (n == 0) throw DomainError("block loss: empty batch");
  for (const Vector* v : {&g_nl, &g_ni, &prior_pos, &prior_nl, &prior_ni, &prev_mixed_pos,
                          &prev_mixed_nl, &prev_mixed_ni}) {
    if (v->size() != n) {
      throw DimensionError(fmt::format("block loss: stream length {} does not match batch {}",
                                       v->size(), n));
    }
  }
  if (gamma < 0.0 || gamma > 1.0) throw ParameterError("block loss: gamma must lie in [0,1]");
}

BlockLossInputs BlockLossInputs::first_block(Vector g_pos, Vector g_nl, Vector g_ni) {
  BlockLossInputs in;
  const Eigen::Index n = g_pos.size();
  in.g_pos = std::move(g_pos);
  in.g_nl = std::move(g_nl);
  in.g_ni = std::move(g_ni);
  in.prior_pos = in.prior_nl = in.prior_ni = Vector::Zero(n);
  in.prev_mixed_pos = in.prev_mixed_nl = in.prev_mixed_ni = Vector::Zero(n);
  in.gamma = 0.0;
  return in;
}

double current_lambda(std::size_t d, std::size_t L, const LossWeights& w) {
  if (L < 2) return w.lambda0;
  return depth_scaled_lambda(d, L, w.lambda0, w.rho);
}

double mgc_coefficient(std::size_t d, std::size_t L, const LossWeights& w) {
  if (L < 2) return w.mgc_c0;
  return w.mgc_c0 * (1.0 + w.mgc_rho * static_cast<double>(d) / static_cast<double>(L - 1));
}

namespace {

BlockLossBreakdown evaluate_block_loss(const BlockLossInputs& in, const LossWeights& w,
                                       std::size_t d, std::size_t L, bool mgc_enabled,
                                       GoodnessGradient* grad, GoodnessGradient* mixed) {
  in.validate();
  w.validate();
  const Eigen::Index n = in.g_pos.size();
  const auto nd = static_cast<double>(n);
  const double eta = w.eta;

  if (grad != nullptr) {
    grad->d_pos = Vector::Zero(n);
    grad->d_nl = Vector::Zero(n);
    grad->d_ni = Vector::Zero(n);
  }
  if (mixed != nullptr) {
    mixed->d_pos = Vector::Zero(n);
    mixed->d_nl = Vector::Zero(n);
    mixed->d_ni = Vector::Zero(n);
  }

  BlockLossBreakdown out;
  out.lambda_aspect = w.lambda_aspect;
  out.lambda_block = w.lambda_block;
  out.lambda_curr = current_lambda(d, L, w);
  out.lambda_depth = d >= 1 ? w.lambda_depth : 0.0;

  // Energy margin term, blended over the two negative streams. The positive
  // half appears in both blends and sums to a single full-weight term.
  {
    double pos = 0.0, nl = 0.0, ni = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      pos += softplus(w.theta - in.g_pos[i]);
      nl += softplus(in.g_nl[i] - w.theta);
      ni += softplus(in.g_ni[i] - w.theta);
      if (grad != nullptr) {
        const double c = out.lambda_aspect / nd;
        grad->d_pos[i] += -c * sigmoid(w.theta - in.g_pos[i]);
        grad->d_nl[i] += c * (1.0 - eta) * sigmoid(in.g_nl[i] - w.theta);
        grad->d_ni[i] += c * eta * sigmoid(in.g_ni[i] - w.theta);
      }
    }
    out.aspects = pos / nd + (1.0 - eta) * nl / nd + eta * ni / nd;
  }

  // Block-cumulative discrimination on gamma-mixed goodness. G_pos - G_s is
  // exactly the cumulative margin m + gamma P.
  const Vector G_pos = in.mixed_pos();
  const Vector G_nl = in.mixed_nl();
  const Vector G_ni = in.mixed_ni();
  {
    const SepTerm nl = sep_with_grad(G_pos, G_nl, w.alpha);
    const SepTerm ni = sep_with_grad(G_pos, G_ni, w.alpha);
    out.block_nl = nl.value;
    out.block_ni = ni.value;
    out.block_cumulative = (1.0 - eta) * nl.value + eta * ni.value;
    if (grad != nullptr) {
      const double c = out.lambda_block;
      grad->d_pos += c * ((1.0 - eta) * nl.d_a + eta * ni.d_a);
      grad->d_nl -= c * (1.0 - eta) * nl.d_a;
      grad->d_ni -= c * eta * ni.d_a;
    }
    if (mixed != nullptr) {
      const double c = out.lambda_block;
      mixed->d_pos += c * ((1.0 - eta) * nl.d_a + eta * ni.d_a);
      mixed->d_nl -= c * (1.0 - eta) * nl.d_a;
      mixed->d_ni -= c * eta * ni.d_a;
    }
  }

  // Current-block residual term with weights from the detached upstream margin.
  const Vector m_nl = in.margin_nl();
  const Vector m_ni = in.margin_ni();
  const Vector P_nl = in.upstream_nl();
  const Vector P_ni = in.upstream_ni();
  {
    const Vector w_nl = d >= 1 ? residual_weights(P_nl, w.beta, w.w_min, w.w_max) : Vector::Ones(n);
    const Vector w_ni = d >= 1 ? residual_weights(P_ni, w.beta, w.w_min, w.w_max) : Vector::Ones(n);
    double nl = 0.0, ni = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      nl += w_nl[i] * barrier(m_nl[i], w.beta);
      ni += w_ni[i] * barrier(m_ni[i], w.beta);
      if (grad != nullptr) {
        const double c = out.lambda_curr / nd;
        const double gnl = c * (1.0 - eta) * w_nl[i] * barrier_deriv(m_nl[i], w.beta);
        const double gni = c * eta * w_ni[i] * barrier_deriv(m_ni[i], w.beta);
        grad->d_pos[i] += gnl + gni;
        grad->d_nl[i] -= gnl;
        grad->d_ni[i] -= gni;
      }
    }
    out.current_nl = nl / nd;
    out.current_ni = ni / nd;
    out.current_block = (1.0 - eta) * out.current_nl + eta * out.current_ni;
  }

  // Depth-order increments between the gamma-mixed cumulative scores.
  if (d >= 1) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double up = w.delta_pos - (G_pos[i] - in.prev_mixed_pos[i]);
      const double dn_nl = w.delta_neg - (in.prev_mixed_nl[i] - G_nl[i]);
      const double dn_ni = w.delta_neg - (in.prev_mixed_ni[i] - G_ni[i]);
      total += softplus(up) + softplus(dn_nl) + softplus(dn_ni);
      if (grad != nullptr && out.lambda_depth != 0.0) {
        const double c = out.lambda_depth / nd;
        grad->d_pos[i] += -c * sigmoid(up);
        grad->d_nl[i] += c * sigmoid(dn_nl);
        grad->d_ni[i] += c * sigmoid(dn_ni);
      }
      if (mixed != nullptr && out.lambda_depth != 0.0) {
        const double c = out.lambda_depth / nd;
        mixed->d_pos[i] += -c * sigmoid(up);
        mixed->d_nl[i] += c * sigmoid(dn_nl);
        mixed->d_ni[i] += c * sigmoid(dn_ni);
      }
    }
    out.depth_order = total / nd;
  }

  if (mgc_enabled) {
    const double c_d = mgc_coefficient(d, L, w);
    const MgcResult nl = mgc_loss(m_nl, P_nl, in.gamma, w.beta, c_d, w.mgc_eps);
    const MgcResult ni = mgc_loss(m_ni, P_ni, in.gamma, w.beta, c_d, w.mgc_eps);
    out.mgc = (1.0 - eta) * nl.loss + eta * ni.loss;
    if (grad != nullptr) {
      const Vector gnl = (1.0 - eta) * mgc_margin_gradient(m_nl, P_nl, in.gamma, w.beta, c_d, w.mgc_eps);
      const Vector gni = eta * mgc_margin_gradient(m_ni, P_ni, in.gamma, w.beta, c_d, w.mgc_eps);
      grad->d_pos += gnl + gni;
      grad->d_nl -= gnl;
      grad->d_ni -= gni;
    }
  }

  out.total = out.weighted_sum();
  return out;
}

}  // namespace

BlockLossBreakdown total_block_loss(const BlockLossInputs& in, const LossWeights& w,
                                    std::size_t d, std::size_t L, bool mgc_enabled) {
  return evaluate_block_loss(in, w, d, L, mgc_enabled, nullptr, nullptr);
}

BlockLossBreakdown total_block_loss(const BlockLossInputs& in, const LossWeights& w,
                                    std::size_t d, std::size_t L, bool mgc_enabled,
                                    GoodnessGradient& grad) {
  return evaluate_block_loss(in, w, d, L, mgc_enabled, &grad, nullptr);
}

BlockLossBreakdown total_block_loss(const BlockLossInputs& in, const LossWeights& w,
                                    std::size_t d, std::size_t L, bool mgc_enabled,
                                    GoodnessGradient& grad, GoodnessGradient& mixed_grad) {
  return evaluate_block_loss(in, w, d, L, mgc_enabled, &grad, &mixed_grad);
}

}  // namespace fflocal
