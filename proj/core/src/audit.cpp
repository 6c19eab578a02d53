#include "fflocal/audit.hpp"

#include "fflocal/diagnostics.hpp"
#include "fflocal/errors.hpp"
#include "fflocal/goodness.hpp"
#include "fflocal/losses.hpp"
#include "fflocal/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace fflocal {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

BlockParams random_block(Rng& rng, int in, int hidden, int out, int classes) {
  std::normal_distribution<double> n(0.0, 0.8);
  BlockParams b;
  b.w1 = Matrix::NullaryExpr(in, hidden, [&] { return n(rng); });
  b.b1 = Vector::NullaryExpr(hidden, [&] { return 0.2 * n(rng); });
  b.w2 = Matrix::NullaryExpr(hidden, out, [&] { return n(rng); });
  b.b2 = Vector::NullaryExpr(out, [&] { return 0.2 * n(rng); });
  b.label_embed = Matrix::NullaryExpr(classes, in, [&] { return n(rng); });
  b.goodness_scale = uniform(rng, 0.0, 1.0);
  return b;
}

CheckResult result(std::string name, bool ok, std::string detail) {
  return {std::move(name), ok, std::move(detail)};
}

}  // namespace

CheckResult check_attenuation_identity(const AuditOptions& opt) {
  Rng rng(opt.seed);
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
  for (std::size_t t = 0; t < opt.blocks; ++t) {
    const int in = uniform_int(rng, 1, 4), hidden = uniform_int(rng, 1, 4), out = uniform_int(rng, 1, 4);
    const int classes = uniform_int(rng, 2, 4);
    BlockParams block = random_block(rng, in, hidden, out, classes);
    const Matrix x = Matrix::NullaryExpr(1, in, [&] { return uniform(rng, -1.0, 1.0); });
    const int y = uniform_int(rng, 0, classes - 1);
    const int y_neg = (y + uniform_int(rng, 1, classes - 1)) % classes;
    const double P = uniform(rng, 0.0, 3.0);
    const double gamma = uniform(rng, 0.0, 1.0);
    const double beta = uniform(rng, 1.0, 8.0);

    const std::vector<StreamBatch> streams = {{x, {y}}, {x, {y_neg}}};
    auto barrier_loss = [&](double shift) -> GoodnessLoss {
      return [=](std::span<const Vector> g, std::vector<Vector>& dg) {
        const double m = g[0][0] - g[1][0];
        const double d = barrier_deriv(m + shift, beta);
        dg = {Vector::Constant(1, d), Vector::Constant(1, -d)};
        return barrier(m + shift, beta);
      };
    };
    const Vector grad_cum = block_gradients(block, streams, barrier_loss(gamma * P)).flatten();
    const Vector grad_loc = block_gradients(block, streams, barrier_loss(0.0)).flatten();

    const auto g0 = block_forward(block, x, y).goodness[0];
    const auto g1 = block_forward(block, x, y_neg).goodness[0];
    const double R = attenuation_ratio(g0 - g1, P, gamma, beta);
    for (Eigen::Index k = 0; k < grad_cum.size(); ++k) {
      const double a = grad_cum[k];
      const double b = R * grad_loc[k];
      const double denom = std::max({std::abs(a), std::abs(b), 1e-300});
      if (a != b) worst_analytic = std::max(worst_analytic, std::abs(a - b) / denom);
    }

    const Vector theta = block.flatten();
    const ScalarFunction f = [&](const Vector& p) {
      BlockParams probe = block;
      probe.assign(p);
      const double m = block_forward(probe, x, y).goodness[0] - block_forward(probe, x, y_neg).goodness[0];
      return barrier(m + gamma * P, beta);
    };
    worst_fd = std::max(worst_fd, check_gradient(f, grad_cum, theta, 1e-5).max_rel_err);
  }
  const bool ok = worst_analytic <= 1e-10 && worst_fd <= 1e-4;
  return result("attenuation identity", ok,
                fmt::format("{} blocks: max rel err vs R*local {:.3g} (tol 1e-10), vs finite differences {:.3g} (tol 1e-4)",
                            opt.blocks, worst_analytic, worst_fd));
}

CheckResult check_attenuation_sandwich(const AuditOptions& opt) {
  Rng rng(opt.seed + 1);
  std::size_t violations = 0;
  for (std::size_t i = 0; i < opt.draws; ++i) {
    const double m = uniform(rng, 0.0, 5.0), P = uniform(rng, 0.0, 8.0);
    const double gamma = uniform(rng, 0.0, 1.0), beta = uniform(rng, 1.0, 8.0);
    const double R = attenuation_ratio(m, P, gamma, beta);
    const auto [lo, hi] = attenuation_bounds(m, P, gamma, beta);
    if (!(lo <= R && R <= hi)) ++violations;
  }
  return result("attenuation sandwich", violations == 0,
                fmt::format("{} draws, {} violations", opt.draws, violations));
}

CheckResult check_ratio_consistency(const AuditOptions& opt) {
  Rng rng(opt.seed + 2);
  double worst = 0.0;
  std::size_t monotone_breaks = 0;
  for (std::size_t i = 0; i < opt.draws; ++i) {
    const double m = uniform(rng, -5.0, 5.0), P = uniform(rng, -8.0, 8.0);
    const double gamma = uniform(rng, 0.0, 1.0), beta = uniform(rng, 1.0, 8.0);
    const double num = std::abs(barrier_deriv(m + gamma * P, beta));
    const double den = std::abs(barrier_deriv(m, beta));
    if (num == 0.0 || den == 0.0 || !std::isfinite(num / den)) continue;
    const double R = attenuation_ratio(m, P, gamma, beta);
    worst = std::max(worst, std::abs(R - num / den) / (num / den));
  }
  for (std::size_t i = 0; i < opt.draws / 100; ++i) {
    const double m = uniform(rng, 0.0, 5.0);
    const double gamma = uniform(rng, 0.05, 1.0), beta = uniform(rng, 1.0, 8.0);
    double last = attenuation_ratio(m, 0.0, gamma, beta);
    for (int k = 1; k <= 50; ++k) {
      const double r = attenuation_ratio(m, 0.2 * k, gamma, beta);
      if (r > last) ++monotone_breaks;
      last = r;
    }
  }
  return result("ratio definition", worst <= 1e-12 && monotone_breaks == 0,
                fmt::format("max rel err {:.3g} (tol 1e-12), {} monotonicity breaks", worst, monotone_breaks));
}

CheckResult check_free_riding_range(const AuditOptions& opt) {
  Rng rng(opt.seed + 3);
  std::size_t bad = 0;
  const std::size_t batches = std::max<std::size_t>(1, opt.draws / 100);
  for (std::size_t t = 0; t < batches; ++t) {
    const Vector m = Vector::NullaryExpr(100, [&] { return uniform(rng, -3.0, 5.0); });
    const Vector P = Vector::NullaryExpr(100, [&] { return uniform(rng, -5.0, 10.0); });
    const double beta = uniform(rng, 1.0, 8.0);
    const double F = free_riding_index(m, P, uniform(rng, 0.0, 1.0), beta);
    if (!(F >= 0.0 && F < 1.0)) ++bad;
    if (free_riding_index(m, P, 0.0, beta) != 0.0) ++bad;
  }
  return result("free-riding index range", bad == 0, fmt::format("{} batches, {} out of range", batches, bad));
}

CheckResult check_gradient_floor(const AuditOptions& opt) {
  Rng rng(opt.seed + 4);
  constexpr std::size_t kBatch = 100;
  std::size_t checked = 0, violations = 0;
  double tightest = std::numeric_limits<double>::infinity();
  const std::size_t batches = std::max<std::size_t>(1, opt.draws / kBatch);
  for (std::size_t t = 0; t < batches; ++t) {
    LossWeights w;
    w.lambda_aspect = 0.0;
    w.lambda_depth = 0.0;
    w.lambda_block = 1.0;
    w.eta = 0.0;
    w.beta = uniform(rng, 1.0, 8.0);
    w.alpha = w.beta;  // the block term becomes the cumulative barrier l_beta(M)
    w.lambda0 = uniform(rng, 0.01, 1.0);
    w.rho = uniform(rng, 0.0, 3.0);
    const std::size_t L = 4;
    const std::size_t d = static_cast<std::size_t>(uniform_int(rng, 1, 3));

    BlockLossInputs in;
    in.g_pos = Vector::NullaryExpr(kBatch, [&] { return uniform(rng, -3.0, 3.0); });
    in.g_nl = Vector::NullaryExpr(kBatch, [&] { return uniform(rng, -3.0, 3.0); });
    in.g_ni = in.g_nl;
    in.prior_nl = Vector::Zero(kBatch);
    in.prior_ni = Vector::Zero(kBatch);
    in.prior_pos = Vector::NullaryExpr(kBatch, [&] { return uniform(rng, 0.0, 100.0); });
    in.prev_mixed_pos = in.prev_mixed_nl = in.prev_mixed_ni = Vector::Zero(kBatch);
    in.gamma = uniform(rng, 0.0, 1.0);

    GoodnessGradient g;
    total_block_loss(in, w, d, L, false, g);
    const Vector weights = residual_weights(in.upstream_nl(), w.beta, w.w_min, w.w_max);
    const double lam = depth_scaled_lambda(d, L, w.lambda0, w.rho);
    const Vector m = in.margin_nl();
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (m[i] > 0.0) continue;
      ++checked;
      const double dJ = std::abs(g.d_nl[i]) * static_cast<double>(kBatch);
      const double floor = lam * weights[i] * w.beta / 2.0;
      tightest = std::min(tightest, dJ / floor);
      if (dJ < floor * (1.0 - 1e-12)) ++violations;
    }
  }
  return result("gradient floor", violations == 0 && checked > 0,
                fmt::format("{} unresolved examples, {} violations, min |dJ/dm| / floor = {:.4g}", checked,
                            violations, tightest));
}

CheckResult check_weight_lemma(const AuditOptions& opt) {
  Rng rng(opt.seed + 5);
  double worst_mean = 0.0;
  std::size_t order_breaks = 0, floor_breaks = 0;
  const std::size_t batches = std::max<std::size_t>(1, opt.draws / 10);
  for (std::size_t t = 0; t < batches; ++t) {
    const int n = uniform_int(rng, 1, 64);
    const double spread = uniform(rng, 0.01, 20.0);
    const Vector P = Vector::NullaryExpr(n, [&] { return uniform(rng, -spread, spread); });
    const double beta = uniform(rng, 0.5, 8.0);
    const double w_min = uniform(rng, 0.01, 1.0), w_max = uniform(rng, 1.0, 100.0);
    const Vector w = residual_weights(P, beta, w_min, w_max);
    worst_mean = std::max(worst_mean, std::abs(w.mean() - 1.0));
    if (w.minCoeff() < w_min / w_max * (1.0 - 1e-12)) ++floor_breaks;

    // Ordering is claimed only while the clip is inactive.
    Vector a(n);
    for (int i = 0; i < n; ++i) a[i] = sigmoid(-beta * P[i]);
    const Vector u = a / a.mean();
    if (u.minCoeff() < w_min || u.maxCoeff() > w_max) continue;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (P[i] < P[j] && a[i] > a[j] && !(w[i] > w[j])) ++order_breaks;
      }
    }
  }
  return result("residual-weight lemma", worst_mean <= 1e-12 && order_breaks == 0 && floor_breaks == 0,
                fmt::format("{} batches: max |mean-1| {:.3g}, {} ordering breaks, {} floor breaks", batches,
                            worst_mean, order_breaks, floor_breaks));
}

CheckResult check_depth_order(const AuditOptions& opt) {
  Rng rng(opt.seed + 6);
  std::size_t violations = 0;
  const std::size_t trials = std::max<std::size_t>(1, opt.draws / 10);
  for (std::size_t t = 0; t < trials; ++t) {
    const int depth = uniform_int(rng, 1, 8);
    const double dp = uniform(rng, 0.0, 1.0), dn = uniform(rng, 0.0, 1.0);
    double gp = uniform(rng, -5.0, 5.0), gn = uniform(rng, -5.0, 5.0);
    const double start = gp - gn;
    for (int d = 1; d <= depth; ++d) {
      gp += dp + uniform(rng, 0.0, 0.5);
      gn -= dn + uniform(rng, 0.0, 0.5);
      // The depth-order loss sees a violation-free increment: each term is at most log 2.
      const double term = depth_order_loss(Vector::Constant(1, gp), Vector::Constant(1, gp - dp),
                                           Vector::Constant(1, gn), Vector::Constant(1, gn + dn), dp, dn);
      if (term > 2.0 * std::log(2.0) + 1e-12) ++violations;
    }
    if (gp - gn - start < depth * (dp + dn) * (1.0 - 1e-12) - 1e-12) ++violations;
  }
  return result("depth-order telescoping", violations == 0,
                fmt::format("{} sequences, {} violations", trials, violations));
}

CheckResult check_mgc_recovery(const AuditOptions& opt) {
  Rng rng(opt.seed + 7);
  double worst = 0.0;
  std::size_t clip_misses = 0, clip_cases = 0;
  const std::size_t batches = std::max<std::size_t>(1, opt.draws / 100);
  for (std::size_t t = 0; t < batches; ++t) {
    const double beta = uniform(rng, 1.0, 8.0), gamma = uniform(rng, 0.0, 1.0);
    const Vector m = Vector::NullaryExpr(100, [&] { return uniform(rng, -3.0, 3.0); });
    const Vector P = Vector::NullaryExpr(100, [&] { return uniform(rng, 0.0, 5.0); });
    const Vector g = mgc_margin_gradient(m, P, gamma, beta, 1.0, 0.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double expect = beta * sigmoid(-beta * m[i]);
      worst = std::max(worst, std::abs(std::abs(g[i]) * 100.0 - expect) / expect);
    }
    // Negative upstream margins push R above c_d.
    const Vector Pn = Vector::NullaryExpr(100, [&] { return uniform(rng, -5.0, 5.0); });
    const double c_d = uniform(rng, 1.0, 2.0);
    const MgcResult r = mgc_loss(m, Pn, gamma, beta, c_d, 0.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (attenuation_ratio(m[i], Pn[i], gamma, beta) > c_d) {
        ++clip_cases;
        if (r.lambda[i] != 0.0) ++clip_misses;
      }
    }
  }
  return result("MGC local-gradient recovery", worst <= 1e-10 && clip_misses == 0,
                fmt::format("max rel err {:.3g} (tol 1e-10); clip engaged on {}/{} draws with R > c_d", worst,
                            clip_cases - clip_misses, clip_cases));
}

CheckResult check_redistribution(const AuditOptions& opt) {
  Rng rng(opt.seed + 8);
  std::size_t changed = 0;
  double worst_score = 0.0, worst_shift = 0.0;
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t t = 0; t < opt.trials; ++t) {
    const int L = uniform_int(rng, 2, 5), C = uniform_int(rng, 2, 6), N = uniform_int(rng, 1, 40);
    GoodnessTable table;
    for (int d = 0; d < L; ++d) table.per_block.push_back(Matrix::NullaryExpr(N, C, [&] { return n(rng); }));
    std::vector<int> truth(static_cast<std::size_t>(N));
    for (auto& y : truth) y = uniform_int(rng, 0, C - 1);
    const auto a = static_cast<std::size_t>(uniform_int(rng, 0, L - 1));
    auto b = static_cast<std::size_t>(uniform_int(rng, 0, L - 2));
    if (b >= a) ++b;
    const Matrix q = Matrix::NullaryExpr(N, C, [&] { return n(rng); });
    const RedistributionReport r = redistribution_check(table, truth, a, b, q);
    if (!r.predictions_unchanged) ++changed;
    worst_score = std::max(worst_score, r.max_score_change);
    worst_shift = std::max(worst_shift, r.max_margin_shift_error);
  }
  return result("redistribution invariance", changed == 0 && worst_score <= 1e-12,
                fmt::format("{} trials: {} prediction changes, max score change {:.3g}, max margin-shift error {:.3g}",
                            opt.trials, changed, worst_score, worst_shift));
}

CheckResult check_prediction_stability(const AuditOptions& opt) {
  Rng rng(opt.seed + 9);
  std::size_t violations = 0;
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t trials = std::max<std::size_t>(1, opt.trials / 10);
  std::vector<double> grid;
  for (int k = 0; k < 50; ++k) grid.push_back(0.02 * k);
  for (std::size_t t = 0; t < trials; ++t) {
    const int N = uniform_int(rng, 20, 200), C = uniform_int(rng, 2, 10);
    const Matrix S = Matrix::NullaryExpr(N, C, [&] { return n(rng); });
    const double scale = uniform(rng, 0.0, 1.0);
    const Matrix noise = Matrix::NullaryExpr(N, C, [&] { return scale * n(rng); });
    std::vector<int> truth(static_cast<std::size_t>(N));
    for (auto& y : truth) y = uniform_int(rng, 0, C - 1);
    const PredictionSet A = PredictionSet::from_scores(S, truth);
    const PredictionSet B = PredictionSet::from_scores(S + noise, truth);
    if (!stability_bound_check(A, B, grid).all_hold) ++violations;
  }
  return result("prediction stability", violations == 0,
                fmt::format("{} pairs x {} thresholds, {} violations", trials, grid.size(), violations));
}

std::vector<CheckResult> run_theorem_audit(const AuditOptions& opt) {
  return {check_attenuation_identity(opt), check_attenuation_sandwich(opt), check_ratio_consistency(opt),
          check_free_riding_range(opt),    check_gradient_floor(opt),      check_weight_lemma(opt),
          check_depth_order(opt),          check_mgc_recovery(opt),        check_redistribution(opt),
          check_prediction_stability(opt)};
}

}  // namespace fflocal
