#include "fflocal/experiment.hpp"

#include "fflocal/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <future>

namespace fflocal {

namespace {

RegimeRun run_one(TrainConfig cfg, const DataSplits& data, double gamma, std::uint64_t seed) {
  cfg.gate.mode = GateMode::Off;
  cfg.gate.gamma0 = gamma;
  cfg.seed = seed;
  const TrainResult res = train(cfg, data);
  const Network& net = evaluation_network(res, cfg);
  const Evaluation ev = evaluate(net, data.test.features, data.test.labels, cfg.gate, cfg.loss.beta, seed);
  RegimeRun run;
  run.gamma = gamma;
  run.seed = seed;
  run.test_accuracy = ev.full.accuracy();
  for (const auto& b : ev.blocks) {
    run.sep_cur_nl.push_back(b.sep_cur_nl);
    run.mean_ratio.push_back(b.mean_ratio);
    run.free_riding.push_back(b.free_riding);
  }
  return run;
}

const RegimeSummary& find(const std::vector<RegimeSummary>& s, double gamma) {
  for (const auto& r : s) {
    if (r.gamma == gamma) return r;
  }
  throw ParameterError(fmt::format("compare_gamma: no runs at gamma = {}", gamma));
}

}  // namespace

PatternVerdict judge_pattern(const std::vector<RegimeSummary>& summaries) {
  const RegimeSummary& local = find(summaries, 0.0);
  const RegimeSummary& full = find(summaries, 1.0);
  const std::size_t L = local.sep_mean.size();
  if (L < 3) throw DomainError("judge_pattern: needs at least three blocks");

  PatternVerdict v;
  v.local_profile_nondecreasing = true;
  for (std::size_t d = 1; d + 1 < L; ++d) {
    const double pooled = std::sqrt((local.sep_std[d] * local.sep_std[d] +
                                     local.sep_std[d + 1] * local.sep_std[d + 1]) / 2.0);
    if (local.sep_mean[d + 1] < local.sep_mean[d] - pooled) v.local_profile_nondecreasing = false;
  }
  v.collapse_ratio = full.sep_mean[L - 1] / full.sep_mean[1];
  v.full_collapse = full.sep_mean[1] > 0.0 && full.sep_mean[L - 1] <= 0.5 * full.sep_mean[1];
  v.accuracy_gap = std::abs(local.accuracy_mean - full.accuracy_mean);
  v.accuracy_close = v.accuracy_gap <= 0.03;
  return v;
}

GammaComparison compare_gamma(const TrainConfig& base, const std::vector<double>& gammas,
                              const std::vector<std::uint64_t>& seeds, bool parallel) {
  if (gammas.empty() || seeds.empty()) throw ParameterError("compare_gamma: need gammas and seeds");
  base.validate();
  const DataSplits data = load_dataset(base.data);

  GammaComparison cmp;
  if (parallel) {
    std::vector<std::future<RegimeRun>> jobs;
    for (double g : gammas) {
      for (auto s : seeds) jobs.push_back(std::async(std::launch::async, run_one, base, std::cref(data), g, s));
    }
    for (auto& j : jobs) cmp.runs.push_back(j.get());
  } else {
    for (double g : gammas) {
      for (auto s : seeds) cmp.runs.push_back(run_one(base, data, g, s));
    }
  }

  for (double g : gammas) {
    RegimeSummary sum;
    sum.gamma = g;
    std::vector<const RegimeRun*> mine;
    for (const auto& r : cmp.runs) {
      if (r.gamma == g) mine.push_back(&r);
    }
    const std::size_t L = mine.front()->sep_cur_nl.size();
    const auto k = static_cast<double>(mine.size());
    sum.sep_mean.assign(L, 0.0);
    sum.sep_std.assign(L, 0.0);
    for (const auto* r : mine) {
      sum.accuracy_mean += r->test_accuracy / k;
      for (std::size_t d = 0; d < L; ++d) sum.sep_mean[d] += r->sep_cur_nl[d] / k;
    }
    if (mine.size() > 1) {
      for (std::size_t d = 0; d < L; ++d) {
        double ss = 0.0;
        for (const auto* r : mine) ss += std::pow(r->sep_cur_nl[d] - sum.sep_mean[d], 2);
        sum.sep_std[d] = std::sqrt(ss / (k - 1.0));
      }
    }
    cmp.summaries.push_back(std::move(sum));
  }
  cmp.verdict = judge_pattern(cmp.summaries);
  return cmp;
}

std::string format_comparison(const GammaComparison& cmp) {
  std::string out = "gamma  seed  test_acc  sep_cur_nl per block  |  mean R per block\n";
  for (const auto& r : cmp.runs) {
    out += fmt::format("{:<5}  {:<4}  {:.4f}   ", r.gamma, r.seed, r.test_accuracy);
    for (double s : r.sep_cur_nl) out += fmt::format(" {:8.4f}", s);
    out += "  |";
    for (double s : r.mean_ratio) out += fmt::format(" {:.3g}", s);
    out += '\n';
  }
  out += "\nsummary (mean +- std over seeds)\n";
  for (const auto& s : cmp.summaries) {
    out += fmt::format("gamma {:<4} acc {:.4f}  sep_cur_nl", s.gamma, s.accuracy_mean);
    for (std::size_t d = 0; d < s.sep_mean.size(); ++d) out += fmt::format(" {:.4f}+-{:.4f}", s.sep_mean[d], s.sep_std[d]);
    out += '\n';
  }
  const auto& v = cmp.verdict;
  out += fmt::format("\nlocal profile non-decreasing (blocks 1..L-1): {}\n", v.local_profile_nondecreasing ? "yes" : "no");
  out += fmt::format("gamma=1 deepest/block-1 separation: {:.3f} (collapse if <= 0.5): {}\n", v.collapse_ratio,
                     v.full_collapse ? "yes" : "no");
  out += fmt::format("test accuracy gap: {:.2f} pp (<= 3 pp): {}\n", 100.0 * v.accuracy_gap,
                     v.accuracy_close ? "yes" : "no");
  return out;
}

}  // namespace fflocal
