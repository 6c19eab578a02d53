#include "fflocal/diagnostics.hpp"

#include "fflocal/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace fflocal {

namespace {

void require_same_examples(const PredictionSet& a, const PredictionSet& b, const char* where) {
  if (a.size() != b.size() || a.truth != b.truth || a.classes() != b.classes()) {
    throw DimensionError(fmt::format("{}: prediction sets cover different examples", where));
  }
  if (a.size() == 0) throw DomainError(fmt::format("{}: empty prediction set", where));
}

// splitmix64 finaliser; used as a counter-based generator keyed by
// (seed, stream, counter).
std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next() noexcept { return mix64(key_ + counter_++ * 0x9e3779b97f4a7c15ULL); }

  // Uniform integer in [0, n); the modulo bias is below n / 2^64.
  std::size_t below(std::size_t n) noexcept { return static_cast<std::size_t>(next() % n); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Type-7 empirical quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = static_cast<int>(c);
  }
  return best;
}

PredictionSet PredictionSet::from_scores(Matrix scores, std::vector<int> truth) {
  if (static_cast<std::size_t>(scores.rows()) != truth.size()) {
    throw DimensionError(fmt::format("PredictionSet: {} score rows but {} labels", scores.rows(),
                                     truth.size()));
  }
  PredictionSet p;
  p.predicted.reserve(truth.size());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) p.predicted.push_back(argmax_lowest(scores.row(i)));
  p.scores = std::move(scores);
  p.truth = std::move(truth);
  return p;
}

double PredictionSet::accuracy() const {
  if (truth.empty()) throw DomainError("PredictionSet::accuracy: empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

void PredictionSet::validate() const {
  if (static_cast<std::size_t>(scores.rows()) != truth.size() || predicted.size() != truth.size()) {
    throw DimensionError("PredictionSet: inconsistent lengths");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= scores.cols()) {
      throw DomainError(fmt::format("PredictionSet: true label {} out of range", truth[i]));
    }
    if (predicted[i] != argmax_lowest(scores.row(static_cast<Eigen::Index>(i)))) {
      throw FormatError(fmt::format("PredictionSet: example {} prediction is not the argmax", i));
    }
  }
}

bool PredictionSet::operator==(const PredictionSet& o) const {
  if (scores.rows() != o.scores.rows() || scores.cols() != o.scores.cols()) return false;
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    if (std::bit_cast<std::uint64_t>(scores.data()[k]) != std::bit_cast<std::uint64_t>(o.scores.data()[k])) {
      return false;
    }
  }
  return predicted == o.predicted && truth == o.truth;
}

Matrix GoodnessTable::prefix(std::size_t d) const {
  if (d >= per_block.size()) throw DomainError(fmt::format("GoodnessTable::prefix: block {} out of range", d));
  Matrix s = per_block[0];
  for (std::size_t j = 1; j <= d; ++j) s += per_block[j];
  return s;
}

GoodnessTable goodness_table(const Network& net, const Matrix& images) {
  GoodnessTable t;
  const Eigen::Index n = images.rows();
  t.per_block.assign(net.depth(), Matrix(n, net.classes));
  for (Eigen::Index y = 0; y < net.classes; ++y) {
    const auto g = network_forward(net, images, static_cast<int>(y));
    for (std::size_t d = 0; d < net.depth(); ++d) t.per_block[d].col(y) = g[d];
  }
  return t;
}

PredictionSet prefix_predictions(const GoodnessTable& table, std::size_t d,
                                 const std::vector<int>& truth) {
  return PredictionSet::from_scores(table.prefix(d), truth);
}

double label_separation(const Matrix& scores, const std::vector<int>& truth) {
  if (truth.empty()) throw DomainError("label separation: empty example set");
  if (scores.cols() < 2) throw DomainError("label separation: needs at least one wrong class");
  if (static_cast<std::size_t>(scores.rows()) != truth.size()) {
    throw DimensionError("label separation: score rows and labels differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < scores.cols(); ++y) {
      if (y != truth[i]) worst = std::max(worst, scores(r, y));
    }
    acc += scores(r, truth[i]) - worst;
  }
  return acc / static_cast<double>(truth.size());
}

double sep_cur_nl(const GoodnessTable& table, std::size_t d, const std::vector<int>& truth) {
  if (d >= table.blocks()) throw DomainError("sep_cur_nl: block out of range");
  return label_separation(table.per_block[d], truth);
}

double sep_nl(const GoodnessTable& table, std::size_t d, const std::vector<int>& truth) {
  return label_separation(table.prefix(d), truth);
}

std::vector<std::optional<double>> depth_saturation(const std::vector<PredictionSet>& prefixes) {
  if (prefixes.empty()) throw DomainError("depth_saturation: no prefixes");
  for (const auto& p : prefixes) {
    if (p.truth != prefixes.back().truth) {
      throw DimensionError("depth_saturation: prefixes evaluated on different examples");
    }
  }
  const double full = prefixes.back().accuracy();
  std::vector<std::optional<double>> ds;
  ds.reserve(prefixes.size());
  for (const auto& p : prefixes) {
    if (full == 0.0) {
      ds.emplace_back(std::nullopt);
    } else {
      ds.emplace_back(p.accuracy() / full);
    }
  }
  return ds;
}

DiagnosticTraces diagnostic_traces(const GoodnessTable& table, const std::vector<int>& truth,
                                   const std::vector<std::size_t>& partner,
                                   const std::vector<double>& gamma) {
  const std::size_t n = table.examples();
  const std::size_t L = table.blocks();
  if (truth.size() != n || partner.size() != n || gamma.size() != L) {
    throw DimensionError("diagnostic_traces: inconsistent sizes");
  }
  const auto C = static_cast<std::size_t>(table.per_block.front().cols());
  std::vector<Vector> nl(L, Vector(static_cast<Eigen::Index>(n * (C - 1))));
  std::vector<Vector> ni(L, Vector(static_cast<Eigen::Index>(n)));
  for (std::size_t d = 0; d < L; ++d) {
    const Matrix& g = table.per_block[d];
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      for (std::size_t y = 0; y < C; ++y) {
        if (static_cast<int>(y) == truth[i]) continue;
        nl[d][k++] = g(r, truth[i]) - g(r, static_cast<Eigen::Index>(y));
      }
      ni[d][r] = g(r, truth[i]) - g(static_cast<Eigen::Index>(partner[i]), truth[i]);
    }
  }
  return {MarginTrace::from_current(NegativeStream::WrongLabel, std::move(nl), gamma),
          MarginTrace::from_current(NegativeStream::WrongImage, std::move(ni), gamma)};
}

std::vector<double> loss_collapse(const DiagnosticTraces& traces, double beta) {
  const std::size_t L = traces.wrong_label.blocks();
  std::vector<double> lc(L, 0.0);
  for (std::size_t d = 0; d < L; ++d) {
    double stream_sum = 0.0;
    for (const MarginTrace* t : {&traces.wrong_label, &traces.wrong_image}) {
      const Vector total = t->accumulated[d] + t->current[d];
      double acc = 0.0;
      for (Eigen::Index i = 0; i < total.size(); ++i) acc += barrier(total[i], beta);
      stream_sum += acc / static_cast<double>(total.size());
    }
    lc[d] = stream_sum / 2.0;
  }
  return lc;
}

std::vector<std::optional<double>> own_vs_inherited(const GoodnessTable& table,
                                                    const std::vector<int>& truth,
                                                    const std::vector<double>& gamma) {
  const std::size_t n = table.examples();
  const std::size_t L = table.blocks();
  if (truth.size() != n || gamma.size() != L) throw DimensionError("own_vs_inherited: size mismatch");
  if (n == 0) throw DomainError("own_vs_inherited: empty set");
  std::vector<std::optional<double>> out;
  double prior = 0.0;  // mean of sum_{j<d} g_+^(j)
  for (std::size_t d = 0; d < L; ++d) {
    double own = 0.0;
    for (std::size_t i = 0; i < n; ++i) own += table.per_block[d](static_cast<Eigen::Index>(i), truth[i]);
    own /= static_cast<double>(n);
    const double total = own + gamma[d] * prior;
    if (total == 0.0) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(own / total);
    }
    prior += own;
  }
  return out;
}

std::vector<double> block_gammas(const GateConfig& gate, const GoodnessTable& table,
                                 const std::vector<int>& truth) {
  const std::size_t n = table.examples();
  std::vector<double> gamma;
  double prior = 0.0;
  double prev = 0.0;
  for (std::size_t d = 0; d < table.blocks(); ++d) {
    gamma.push_back(effective_gamma(gate, prior, prev));
    double own = 0.0;
    for (std::size_t i = 0; i < n; ++i) own += table.per_block[d](static_cast<Eigen::Index>(i), truth[i]);
    own /= static_cast<double>(std::max<std::size_t>(n, 1));
    prior += own;
    prev = own;
  }
  return gamma;
}

RedistributionReport redistribution_check(const GoodnessTable& table, const std::vector<int>& truth,
                                          std::size_t depth_a, std::size_t depth_b,
                                          const Matrix& q) {
  if (depth_a == depth_b) throw DomainError("redistribution_check: depths must differ");
  if (depth_a >= table.blocks() || depth_b >= table.blocks()) {
    throw DomainError("redistribution_check: depth out of range");
  }
  const Matrix& ga = table.per_block[depth_a];
  if (q.rows() != ga.rows() || q.cols() != ga.cols()) {
    throw DimensionError("redistribution_check: perturbation shape mismatch");
  }
  GoodnessTable moved = table;
  moved.per_block[depth_a] += q;
  moved.per_block[depth_b] -= q;

  const std::size_t last = table.blocks() - 1;
  const PredictionSet before = prefix_predictions(table, last, truth);
  const PredictionSet after = prefix_predictions(moved, last, truth);

  RedistributionReport r;
  r.predictions_unchanged = before.predicted == after.predicted;
  r.max_score_change = (after.scores - before.scores).cwiseAbs().maxCoeff();

  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const int y = truth[static_cast<std::size_t>(i)];
    for (Eigen::Index yp = 0; yp < q.cols(); ++yp) {
      if (yp == y) continue;
      const double expected = q(i, y) - q(i, yp);
      const double obs_a = (moved.per_block[depth_a](i, y) - moved.per_block[depth_a](i, yp)) -
                           (table.per_block[depth_a](i, y) - table.per_block[depth_a](i, yp));
      const double obs_b = (moved.per_block[depth_b](i, y) - moved.per_block[depth_b](i, yp)) -
                           (table.per_block[depth_b](i, y) - table.per_block[depth_b](i, yp));
      r.max_margin_shift_error = std::max(
          {r.max_margin_shift_error, std::abs(obs_a - expected), std::abs(obs_b + expected)});
    }
  }
  return r;
}

Vector decision_margins(const PredictionSet& p) {
  Vector delta(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int top = p.predicted[i];
    double runner = -std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < p.scores.cols(); ++y) {
      if (y != top) runner = std::max(runner, p.scores(r, y));
    }
    delta[r] = p.scores(r, top) - runner;
  }
  return delta;
}

StabilityReport stability_bound_check(const PredictionSet& a, const PredictionSet& b,
                                      const std::vector<double>& t_grid) {
  require_same_examples(a, b, "stability_bound_check");
  const std::size_t n = a.size();
  const auto nd = static_cast<double>(n);
  const Vector delta = decision_margins(a);
  const Vector gap = (a.scores - b.scores).cwiseAbs().rowwise().maxCoeff();

  std::size_t disagree = 0;
  for (std::size_t i = 0; i < n; ++i) disagree += a.predicted[i] != b.predicted[i] ? 1 : 0;

  StabilityReport rep;
  rep.disagreement = static_cast<double>(disagree) / nd;
  rep.accuracy_gap = std::abs(a.accuracy() - b.accuracy());
  rep.accuracy_gap_ok = rep.accuracy_gap <= rep.disagreement + 1e-15;
  rep.all_hold = rep.accuracy_gap_ok;
  for (double t : t_grid) {
    StabilityRow row;
    row.t = t;
    row.disagreement = rep.disagreement;
    std::size_t band = 0, tail = 0;
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      band += delta[i] <= 2.0 * t ? 1 : 0;
      tail += gap[i] > t ? 1 : 0;
    }
    row.margin_band = static_cast<double>(band) / nd;
    row.tail = static_cast<double>(tail) / nd;
    // Counts are compared exactly to avoid rounding in the probabilities.
    row.holds = disagree <= band + tail;
    rep.all_hold = rep.all_hold && row.holds;
    rep.rows.push_back(row);
  }
  return rep;
}

BootstrapReport paired_bootstrap(const PredictionSet& a, const PredictionSet& b,
                                 std::size_t resamples, std::uint64_t seed, double coverage) {
  require_same_examples(a, b, "paired_bootstrap");
  if (resamples < 1000) {
    throw ParameterError(fmt::format("paired_bootstrap: need >= 1000 resamples, got {}", resamples));
  }
  if (!(coverage > 0.0 && coverage < 1.0)) throw ParameterError("paired_bootstrap: coverage must lie in (0,1)");

  const std::size_t n = a.size();
  std::vector<int> delta(n);
  BootstrapReport rep;
  rep.examples = n;
  rep.resamples = resamples;
  rep.coverage = coverage;
  long long sum = 0;
  std::size_t disagree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int ca = a.predicted[i] == a.truth[i] ? 1 : 0;
    const int cb = b.predicted[i] == b.truth[i] ? 1 : 0;
    delta[i] = ca - cb;
    sum += delta[i];
    if (ca == 1 && cb == 0) ++rep.a_correct_b_wrong;
    if (ca == 0 && cb == 1) ++rep.a_wrong_b_correct;
    if (a.predicted[i] != b.predicted[i]) ++disagree;
  }
  rep.mean_delta = static_cast<double>(sum) / static_cast<double>(n);
  rep.disagreement = static_cast<double>(disagree) / static_cast<double>(n);

  std::vector<double> means(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    CounterStream stream(seed, r);
    long long s = 0;
    for (std::size_t k = 0; k < n; ++k) s += delta[stream.below(n)];
    means[r] = static_cast<double>(s) / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - coverage) / 2.0;
  rep.ci_low = quantile_sorted(means, tail);
  rep.ci_high = quantile_sorted(means, 1.0 - tail);
  return rep;
}

bool DiagnosticsRecord::operator==(const DiagnosticsRecord& o) const {
  auto same = [](double x, double y) {
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
  };
  auto same_opt = [&](const std::optional<double>& x, const std::optional<double>& y) {
    return x.has_value() == y.has_value() && (!x || same(*x, *y));
  };
  if (epoch != o.epoch || !same(train_accuracy, o.train_accuracy) ||
      !same(val_accuracy, o.val_accuracy) || blocks.size() != o.blocks.size()) {
    return false;
  }
  for (std::size_t d = 0; d < blocks.size(); ++d) {
    const auto& x = blocks[d];
    const auto& y = o.blocks[d];
    if (!same(x.sep_cur_nl, y.sep_cur_nl) || !same(x.sep_nl, y.sep_nl) ||
        !same(x.loss_collapse, y.loss_collapse) || !same_opt(x.depth_saturation, y.depth_saturation) ||
        !same(x.mean_pos_goodness, y.mean_pos_goodness) || !same(x.mean_ratio, y.mean_ratio) ||
        !same(x.free_riding, y.free_riding) || !same_opt(x.own_fraction, y.own_fraction) ||
        !same(x.gamma, y.gamma)) {
      return false;
    }
  }
  return true;
}

std::vector<std::size_t> derangement(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  if (n < 2) return p;
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i], p[pick(rng)]);
  }
  return p;
}

Evaluation evaluate(const Network& net, const Matrix& images, const std::vector<int>& truth,
                    const GateConfig& gate, double beta, std::uint64_t pairing_seed) {
  if (truth.empty()) throw DomainError("evaluate: empty example set");
  Evaluation ev;
  ev.table = goodness_table(net, images);
  const std::size_t L = net.depth();
  for (std::size_t d = 0; d < L; ++d) ev.prefixes.push_back(prefix_predictions(ev.table, d, truth));
  ev.full = ev.prefixes.back();
  ev.gamma = block_gammas(gate, ev.table, truth);

  std::mt19937_64 rng(pairing_seed);
  const auto partner = derangement(truth.size(), rng);
  ev.traces = diagnostic_traces(ev.table, truth, partner, ev.gamma);

  const auto ds = depth_saturation(ev.prefixes);
  const auto lc = loss_collapse(ev.traces, beta);
  const auto own = own_vs_inherited(ev.table, truth, ev.gamma);
  for (std::size_t d = 0; d < L; ++d) {
    BlockDiagnostics b;
    b.sep_cur_nl = sep_cur_nl(ev.table, d, truth);
    b.sep_nl = sep_nl(ev.table, d, truth);
    b.loss_collapse = lc[d];
    b.depth_saturation = ds[d];
    double pos = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) pos += ev.table.per_block[d](static_cast<Eigen::Index>(i), truth[i]);
    b.mean_pos_goodness = pos / static_cast<double>(truth.size());

    // Attenuation statistics pooled over both negative streams.
    const auto& nl = ev.traces.wrong_label;
    const auto& ni = ev.traces.wrong_image;
    Vector m(nl.current[d].size() + ni.current[d].size());
    Vector P(m.size());
    m << nl.current[d], ni.current[d];
    P << nl.accumulated[d], ni.accumulated[d];
    const AttenuationStats st = attenuation_stats(m, P, ev.gamma[d], beta);
    b.mean_ratio = st.mean_ratio;
    b.free_riding = st.free_riding;
    b.own_fraction = own[d];
    b.gamma = ev.gamma[d];
    ev.blocks.push_back(b);
  }
  return ev;
}

}  // namespace fflocal
