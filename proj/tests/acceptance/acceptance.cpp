// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "fflocal/cli.hpp"
#include "fflocal/config.hpp"
#include "fflocal/diagnostics.hpp"
#include "fflocal/experiment.hpp"
#include "fflocal/goodness.hpp"
#include "fflocal/losses.hpp"
#include "fflocal/trainer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace fflocal;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

long double ref_sigmoid(long double u) { return 1.0L / (1.0L + std::exp(-u)); }

long double ref_ratio(long double m, long double P, long double gamma, long double beta) {
  return (1.0L + std::exp(beta * m)) / (1.0L + std::exp(beta * (m + gamma * P)));
}

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

Vector gaussian_vec(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  return gaussian(n, 1, rng, sd).col(0);
}

std::string config_path(const std::string& name) { return std::string(FFLOCAL_CONFIG_DIR) + "/" + name; }

// ---------------------------------------------------------------------------

Outcome attenuation_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 4), cls(2, 3);
  std::uniform_real_distribution<double> pu(-2.0, 4.0), gu(0.05, 1.0);
  const double beta = 4.0;
  double worst_analytic = 0.0, worst_fd = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    BlockParams p;
    const int in = dim(rng), hid = dim(rng), out = dim(rng), C = cls(rng);
    p.w1 = gaussian(in, hid, rng, 0.8);
    p.b1 = gaussian_vec(hid, rng, 0.5).cwiseAbs();  // keep some units active
    p.w2 = gaussian(hid, out, rng);
    p.b2 = gaussian_vec(out, rng);
    p.label_embed = gaussian(C, in, rng, 0.5);
    p.goodness_scale = 0.3;
    std::vector<StreamBatch> streams(2);
    for (int s = 0; s < 2; ++s) {
      streams[static_cast<std::size_t>(s)].tokens = gaussian(1, in, rng);
      streams[static_cast<std::size_t>(s)].labels = {static_cast<int>(rng() % static_cast<unsigned>(C))};
    }
    const double P = pu(rng), gamma = gu(rng);
    auto loss_with = [&](double shift) {
      return GoodnessLoss([=](std::span<const Vector> g, std::vector<Vector>& dg) {
        const double m = g[0][0] - g[1][0];
        dg.assign(2, Vector::Zero(1));
        dg[0][0] = barrier_deriv(m + shift, beta);
        dg[1][0] = -dg[0][0];
        return barrier(m + shift, beta);
      });
    };
    const Vector cum = block_gradients(p, streams, loss_with(gamma * P)).flatten();
    const Vector loc = block_gradients(p, streams, loss_with(0.0)).flatten();
    const double m = block_forward(p, streams[0].tokens, streams[0].labels).goodness[0] -
                     block_forward(p, streams[1].tokens, streams[1].labels).goodness[0];
    const long double R = ref_ratio(m, P, gamma, beta);

    const double scale = std::max(cum.lpNorm<Eigen::Infinity>(), 1e-300);
    for (Eigen::Index i = 0; i < cum.size(); ++i) {
      const double expect = static_cast<double>(R * loc[i]);
      const double err = std::abs(cum[i] - expect) / std::max(std::abs(expect), 1e-12 * scale);
      worst_analytic = std::max(worst_analytic, err);
    }
    auto f = [&](const Vector& flat) {
      BlockParams q = p;
      q.assign(flat);
      const double mm = block_forward(q, streams[0].tokens, streams[0].labels).goodness[0] -
                        block_forward(q, streams[1].tokens, streams[1].labels).goodness[0];
      return barrier(mm + gamma * P, beta);
    };
    const Vector fd = finite_diff_grad(f, p.flatten(), 1e-5);
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
      const double expect = static_cast<double>(R * loc[i]);
      const double err = std::abs(fd[i] - expect) / std::max({std::abs(expect), std::abs(fd[i]), 1e-8});
      worst_fd = std::max(worst_fd, err);
    }
  }
  const double secs = seconds_since(t0);
  return {worst_analytic <= 1e-10 && worst_fd <= 1e-4 && secs < 10.0,
          fmt::format("100 blocks: max rel err analytic {:.2e} (<= 1e-10), finite-diff {:.2e} (<= 1e-4), {:.2f} s (< 10 s)",
                      worst_analytic, worst_fd, secs)};
}

Outcome sandwich() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> mu(0.0, 10.0), pu(0.0, 30.0), gu(0.0, 1.0), bu(0.25, 8.0);
  long violations = 0;
  for (int i = 0; i < 100000; ++i) {
    const double m = mu(rng), P = pu(rng), g = gu(rng), b = bu(rng);
    const double R = attenuation_ratio(m, P, g, b);
    const double lo = std::exp(-(b * g * P));
    const double hi = std::min(1.0, 2.0 * lo);
    if (!(lo <= R && R <= hi)) ++violations;
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 5.0,
          fmt::format("1e5 draws: {} violations, {:.2f} s (< 5 s)", violations, secs)};
}

Outcome table_values() {
  const double r1 = attenuation_ratio(2.36, 1.76, 0.7, 4.0);
  const double r2 = attenuation_ratio(1.08, 1.74, 1.0, 4.0);
  const double e1 = std::abs(r1 / 7.2e-3 - 1.0), e2 = std::abs(r2 / 9.7e-4 - 1.0);
  return {e1 <= 0.05 && e2 <= 0.05,
          fmt::format("R = {:.4e} (7.2e-3, rel {:.3f}), R = {:.4e} (9.7e-4, rel {:.3f}); tol 5%", r1, e1, r2, e2)};
}

Outcome depth_schedule() {
  const double expect[] = {0.25, 0.50, 0.75, 1.00};
  bool ok = true;
  std::string got;
  for (std::size_t d = 0; d < 4; ++d) {
    const double v = depth_scaled_lambda(d, 4, 0.25, 3.0);
    ok = ok && v == expect[d];
    got += fmt::format("{}{}", d ? ", " : "", v);
  }
  return {ok, fmt::format("lambda_curr = ({}) exact", got)};
}

Outcome weight_lemma() {
  std::mt19937_64 rng(105);
  std::uniform_int_distribution<int> size(2, 64);
  std::uniform_real_distribution<double> beta_u(0.5, 8.0), scale_u(0.01, 5.0);
  const double w_min = 0.1, w_max = 10.0;
  double worst_mean = 0.0, lowest = 1e300;
  long order_checks = 0, order_violations = 0;
  for (int t = 0; t < 10000; ++t) {
    const int n = size(rng);
    const double beta = beta_u(rng);
    const Vector P = gaussian_vec(n, rng, scale_u(rng));
    const Vector w = residual_weights(P, beta, w_min, w_max);
    worst_mean = std::max(worst_mean, std::abs(w.mean() - 1.0));
    lowest = std::min(lowest, w.minCoeff());
    // Clip inactivity from an independent long-double evaluation of a_i / mean(a).
    std::vector<long double> a(static_cast<std::size_t>(n));
    long double abar = 0;
    for (int i = 0; i < n; ++i) abar += a[static_cast<std::size_t>(i)] = ref_sigmoid(-beta * P[i]);
    abar /= n;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const long double ui = a[static_cast<std::size_t>(i)] / abar, uj = a[static_cast<std::size_t>(j)] / abar;
        if (!(P[i] < P[j])) continue;
        if (w[i] < w[j]) ++order_violations;
        const bool unclipped = ui > w_min && ui < w_max && uj > w_min && uj < w_max;
        const bool resolvable = ui - uj > 1e-14L * uj;
        if (unclipped && resolvable) {
          ++order_checks;
          if (!(w[i] > w[j])) ++order_violations;
        }
      }
    }
  }
  const bool ok = worst_mean <= 1e-12 && order_violations == 0 && lowest >= w_min / w_max;
  return {ok, fmt::format("1e4 batches: max |mean-1| {:.1e}, {} ordering violations ({} strict pairs), min weight {:.4f} (>= {})",
                          worst_mean, order_violations, order_checks, lowest, w_min / w_max)};
}

Outcome gradient_floor() {
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> mu(-4.0, 1.0), pu(-100.0, 100.0), gu(0.0, 1.0), bu(0.5, 8.0);
  LossWeights w;
  w.lambda_aspect = 0.0;
  w.lambda_depth = 0.0;
  w.eta = 0.0;
  const std::size_t L = 4;
  const Eigen::Index n = 8;
  long checked = 0, violations = 0;
  double tightest = 1e300;
  for (int batch = 0; batch < 100000 / n; ++batch) {
    w.beta = bu(rng);
    w.alpha = w.beta;
    const std::size_t d = 1 + static_cast<std::size_t>(batch % 3);
    BlockLossInputs in;
    in.gamma = gu(rng);
    in.g_nl = gaussian_vec(n, rng);
    in.g_pos = in.g_nl;
    in.prior_nl = Vector::Zero(n);
    in.prior_pos = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      in.g_pos[i] += mu(rng);
      in.prior_pos[i] = pu(rng);
    }
    in.g_ni = in.g_pos;  // wrong-image stream carries no weight at eta = 0
    in.prior_ni = in.prior_pos;
    in.prev_mixed_pos = in.prev_mixed_nl = in.prev_mixed_ni = Vector::Zero(n);
    GoodnessGradient g;
    total_block_loss(in, w, d, L, false, g);
    const double lam = w.lambda0 * (1.0 + w.rho * static_cast<double>(d) / static_cast<double>(L - 1));
    // Residual weights recomputed from the three-step formula.
    std::vector<long double> a(static_cast<std::size_t>(n));
    long double abar = 0;
    for (Eigen::Index i = 0; i < n; ++i) abar += a[static_cast<std::size_t>(i)] = ref_sigmoid(-w.beta * in.prior_pos[i]);
    abar /= n;
    long double ubar = 0;
    for (auto& v : a) ubar += v = std::clamp(v / abar, static_cast<long double>(w.w_min), static_cast<long double>(w.w_max));
    ubar /= n;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = in.g_pos[i] - in.g_nl[i];
      if (m > 0.0) continue;
      const double weight = static_cast<double>(a[static_cast<std::size_t>(i)] / ubar);
      const double floor = lam * weight * w.beta / 2.0;
      const double dJdm = std::abs(g.d_nl[i]) * static_cast<double>(n);
      ++checked;
      tightest = std::min(tightest, dJdm / floor);
      if (dJdm < floor * (1.0 - 1e-12)) ++violations;
    }
  }
  return {violations == 0 && checked > 0,
          fmt::format("{} unresolved examples (|P| <= 100): {} violations, min |dJ/dm| / floor = {:.6f}", checked,
                      violations, tightest)};
}

Outcome mgc_recovery() {
  std::mt19937_64 rng(107);
  std::uniform_real_distribution<double> mu(-3.0, 3.0), pu(0.0, 10.0), gu(0.0, 1.0), bu(0.5, 8.0), nu(-10.0, -0.01);
  double worst = 0.0;
  long clip_cases = 0, clip_missed = 0;
  for (int t = 0; t < 20000; ++t) {
    const double beta = bu(rng);
    Vector m(4), P(4);
    for (int i = 0; i < 4; ++i) m[i] = mu(rng), P[i] = pu(rng);
    const double gamma = gu(rng);
    const Vector g = mgc_margin_gradient(m, P, gamma, beta, 1.0, 0.0) * 4.0;
    for (int i = 0; i < 4; ++i) {
      const long double ref = beta * ref_sigmoid(-beta * m[i]);
      worst = std::max(worst, static_cast<double>(std::abs(std::abs(g[i]) - ref) / ref));
    }
    // Negative upstream: R > c_d = 1 whenever gamma > 0.
    Vector Pn(4);
    for (int i = 0; i < 4; ++i) Pn[i] = nu(rng);
    const double gpos = std::max(gamma, 0.05);
    const MgcResult r = mgc_loss(m, Pn, gpos, beta, 1.0, 0.0);
    for (int i = 0; i < 4; ++i) {
      if (ref_ratio(m[i], Pn[i], gpos, beta) > 1.0L) {
        ++clip_cases;
        if (r.lambda[i] != 0.0) ++clip_missed;
      }
    }
  }
  return {worst <= 1e-10 && clip_missed == 0 && clip_cases > 0,
          fmt::format("max rel err vs beta*s(m) {:.2e} (<= 1e-10); clip engaged on {}/{} draws with R > c_d", worst,
                      clip_cases - clip_missed, clip_cases)};
}

Outcome redistribution() {
  std::mt19937_64 rng(108);
  const Eigen::Index n = 50, C = 5;
  const std::size_t L = 4;
  long changed_predictions = 0;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<Matrix> blocks;
    for (std::size_t d = 0; d < L; ++d) blocks.push_back(gaussian(n, C, rng));
    const std::size_t a = rng() % L;
    std::size_t b = rng() % (L - 1);
    if (b >= a) ++b;
    const Matrix q = gaussian(n, C, rng, 5.0);
    Matrix before = Matrix::Zero(n, C), after = Matrix::Zero(n, C);
    for (std::size_t d = 0; d < L; ++d) {
      before += blocks[d];
      Matrix moved = blocks[d];
      if (d == a) moved += q;
      if (d == b) moved -= q;
      after += moved;
    }
    worst = std::max(worst, (after - before).cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index ia = 0, ib = 0;
      before.row(i).maxCoeff(&ia);
      after.row(i).maxCoeff(&ib);
      if (ia != ib) ++changed_predictions;
    }
    GoodnessTable table;
    table.per_block = blocks;
    std::vector<int> truth(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) truth[static_cast<std::size_t>(i)] = static_cast<int>(i % C);
    const RedistributionReport r = redistribution_check(table, truth, a, b, q);
    if (!r.predictions_unchanged) ++changed_predictions;
    worst = std::max({worst, r.max_score_change, r.max_margin_shift_error});
  }
  return {changed_predictions == 0 && worst <= 1e-12,
          fmt::format("1000 trials: {} changed predictions, max score change {:.2e} (<= 1e-12)", changed_predictions,
                      worst)};
}

Outcome prediction_stability() {
  std::mt19937_64 rng(109);
  const Eigen::Index n = 200, C = 5;
  std::vector<double> grid;
  for (int k = 0; k < 50; ++k) grid.push_back(0.02 * (k + 1));
  long violations = 0, acc_violations = 0, library_disagrees = 0;
  for (int t = 0; t < 100; ++t) {
    const Matrix sa = gaussian(n, C, rng);
    const Matrix sb = sa + gaussian(n, C, rng, 0.05 + 0.01 * (t % 30));
    std::vector<int> truth(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) truth[static_cast<std::size_t>(i)] = static_cast<int>(rng() % C);
    const PredictionSet a = PredictionSet::from_scores(sa, truth), b = PredictionSet::from_scores(sb, truth);
    int disagree = 0, correct_a = 0, correct_b = 0;
    std::vector<double> margin(static_cast<std::size_t>(n)), err(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      disagree += a.predicted[iu] != b.predicted[iu];
      correct_a += a.predicted[iu] == truth[iu];
      correct_b += b.predicted[iu] == truth[iu];
      std::vector<double> row(sa.row(i).data(), sa.row(i).data() + C);
      std::sort(row.rbegin(), row.rend());
      margin[iu] = row[0] - row[1];
      err[iu] = (sb.row(i) - sa.row(i)).cwiseAbs().maxCoeff();
    }
    if (std::abs(correct_a - correct_b) > disagree) ++acc_violations;
    const StabilityReport rep = stability_bound_check(a, b, grid);
    if (!rep.all_hold || !rep.accuracy_gap_ok) ++library_disagrees;
    for (double tt : grid) {
      int band = 0, tail = 0;
      for (std::size_t i = 0; i < margin.size(); ++i) {
        band += margin[i] <= 2.0 * tt;
        tail += err[i] > tt;
      }
      if (disagree > band + tail) ++violations;
    }
  }
  return {violations == 0 && acc_violations == 0 && library_disagrees == 0,
          fmt::format("100 pairs x 50 t: {} bound violations, {} accuracy-gap violations, library report agrees: {}",
                      violations, acc_violations, library_disagrees == 0 ? "yes" : "no")};
}

Outcome locality() {
  RunConfig rc = load_config(config_path("quick.ini"));
  TrainConfig cfg = rc.train;
  cfg.epochs = 2;
  cfg.loss.lambda_depth = 0.2;
  const DataSplits data = load_dataset(cfg.data);
  const std::size_t n = 32;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const ExampleSet batch = data.train.subset(idx);

  std::mt19937_64 init(cfg.seed);
  const Network fresh = init_network(cfg.shape(data.train.dim(), data.train.classes), init);
  const Network trained = train(cfg, data).net;
  auto exact_zero = [](const LocalityReport& r) {
    double worst = 0.0;
    for (const auto& e : r.entries) worst = std::max(worst, e.max_abs_grad);
    return worst;
  };
  const LocalityReport a = locality_audit(fresh, batch.features, batch.labels, cfg, 7);
  const LocalityReport b = locality_audit(trained, batch.features, batch.labels, cfg, 7);
  const LocalityReport c = locality_audit(fresh, batch.features, batch.labels, cfg, 7, /*detach=*/false);
  const bool ok = a.passed() && b.passed() && exact_zero(a) == 0.0 && exact_zero(b) == 0.0 && !c.passed();
  return {ok, fmt::format("max cross-block |grad|: fresh {}, trained {} ({} pairs each); un-detached control max {:.3e} -> {}",
                          exact_zero(a), exact_zero(b), a.entries.size(), exact_zero(c), c.passed() ? "missed" : "flagged")};
}

Outcome free_riding_pattern() {
  const auto t0 = Clock::now();
  const RunConfig rc = load_config(config_path("free_riding.ini"));
  const GammaComparison cmp = compare_gamma(rc.train, {0.0, 0.7, 1.0}, {1, 2, 3}, /*parallel=*/false);
  const double secs = seconds_since(t0);
  const PatternVerdict& v = cmp.verdict;
  std::string profile;
  for (const auto& s : cmp.summaries) {
    profile += fmt::format(" gamma={}:", s.gamma);
    for (std::size_t d = 0; d < s.sep_mean.size(); ++d) profile += fmt::format(" {:.3f}", s.sep_mean[d]);
  }
  return {v.passed() && secs < 600.0,
          fmt::format("gamma=0 non-decreasing over blocks 1..3: {}; gamma=1 deepest/block-1 = {:.3f} (<= 0.5); "
                      "accuracy gap {:.2f} pp (<= 3); {:.1f} s single-core (< 600 s); sep_cur_nl means{}",
                      v.local_profile_nondecreasing ? "yes" : "NO", v.collapse_ratio, 100.0 * v.accuracy_gap, secs,
                      profile)};
}

Outcome hnm_coverage() {
  const int C = 10, k = 8, trials = 100000;
  std::mt19937_64 rng(112);
  const Eigen::RowVectorXd flat = Eigen::RowVectorXd::Zero(C);
  long long covered = 0;
  for (int t = 0; t < trials; ++t) {
    // Record the candidates the miner draws by replaying its engine one draw at a time.
    std::set<int> seen;
    for (int j = 0; j < k; ++j) seen.insert(hard_negative_mine(flat, t % C, 1, rng));
    covered += static_cast<long long>(seen.size());
  }
  const double p = 1.0 - std::pow(8.0 / 9.0, 8);
  const double N = 9.0 * trials;
  const double cov = static_cast<double>(covered) / N;
  const double sigma = std::sqrt(p * (1.0 - p) / N);
  return {std::abs(cov - p) <= 3.0 * sigma,
          fmt::format("coverage {:.5f} vs 1-(8/9)^8 = {:.5f}, |diff| = {:.2e} (3 sigma = {:.2e})", cov, p,
                      std::abs(cov - p), 3.0 * sigma)};
}

PredictionSet planted_set(const std::vector<bool>& correct, int C, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(correct.size());
  Matrix s = gaussian(n, C, rng, 0.1);
  std::vector<int> truth(correct.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    truth[iu] = static_cast<int>(i % C);
    s(i, correct[iu] ? truth[iu] : (truth[iu] + 1) % C) += 5.0;
  }
  return PredictionSet::from_scores(s, truth);
}

Outcome bootstrap() {
  std::mt19937_64 rng(113);
  const std::size_t n = 10000;
  std::vector<bool> base(n), other(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = i % 5 != 0;  // 80%
  const PredictionSet a = planted_set(base, 10, rng);
  const BootstrapReport same = paired_bootstrap(a, a, 5000, 1);
  const bool same_ok = same.ci_low == 0.0 && same.ci_high == 0.0 && same.mean_delta == 0.0;

  // Planted flips: 600 correct -> wrong, 300 wrong -> correct, so delta = acc(A) - acc(B) = 0.03.
  other = base;
  std::size_t down = 0, up = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (base[i] && down < 600 && i % 7 == 1) other[i] = false, ++down;
    if (!base[i] && up < 300) other[i] = true, ++up;
  }
  const double planted_delta = (static_cast<double>(down) - static_cast<double>(up)) / static_cast<double>(n);
  const PredictionSet b = planted_set(other, 10, rng);
  const auto t0 = Clock::now();
  const BootstrapReport r = paired_bootstrap(a, b, 5000, 2);
  const double secs = seconds_since(t0);
  const bool contains = r.ci_low <= planted_delta && planted_delta <= r.ci_high;
  return {same_ok && contains && secs < 5.0,
          fmt::format("identical: CI [{}, {}]; planted delta {:.4f} in CI [{:.4f}, {:.4f}]: {}; 5000 resamples of 1e4 in "
                      "{:.2f} s (< 5 s)",
                      same.ci_low, same.ci_high, planted_delta, r.ci_low, r.ci_high, contains ? "yes" : "NO", secs)};
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / fmt::format("fflocal_accept_{}", std::random_device{}());
  std::filesystem::create_directories(dir);
  const std::string m1 = (dir / "a.txt").string(), m2 = (dir / "b.txt").string();
  std::ostringstream sink;
  const std::string cfg = config_path("quick.ini");
  const int c1 = run_command({"fflocal", "train", cfg, "--metrics", m1}, sink, sink);
  const int c2 = run_command({"fflocal", "train", cfg, "--metrics", m2}, sink, sink);
  const std::string a = slurp(m1), b = slurp(m2);
  std::filesystem::remove_all(dir);
  const bool ok = c1 == 0 && c2 == 0 && !a.empty() && a == b;
  return {ok, fmt::format("two runs of quick.ini: {} bytes vs {} bytes, identical: {}", a.size(), b.size(),
                          a == b ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"attenuation identity", attenuation_identity},
      {"sandwich bounds", sandwich},
      {"attenuation table values", table_values},
      {"depth-scaled schedule", depth_schedule},
      {"residual-weight lemma", weight_lemma},
      {"gradient floor", gradient_floor},
      {"MGC recovery", mgc_recovery},
      {"redistribution invariance", redistribution},
      {"prediction-stability bound", prediction_stability},
      {"block locality", locality},
      {"free-riding pattern", free_riding_pattern},
      {"HNM coverage", hnm_coverage},
      {"paired bootstrap", bootstrap},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !o.passed;
    std::cout << fmt::format("[{}] {:>2} {}: {}", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail)
              << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - static_cast<std::size_t>(failed), criteria.size())
            << std::endl;
  return failed == 0 ? 0 : 1;
}
