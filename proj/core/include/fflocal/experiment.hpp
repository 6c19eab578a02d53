#pragma once

#include "fflocal/config.hpp"
#include "fflocal/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fflocal {

struct RegimeRun {
  double gamma = 0.0;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  std::vector<double> sep_cur_nl;   // end-of-training, test split
  std::vector<double> mean_ratio;
  std::vector<double> free_riding;
};

struct RegimeSummary {
  double gamma = 0.0;
  std::vector<double> sep_mean;  // over seeds, per block
  std::vector<double> sep_std;   // sample std over seeds, per block
  double accuracy_mean = 0.0;
};

struct PatternVerdict {
  bool local_profile_nondecreasing = false;  // gamma = 0, blocks 1..L-1, within 1 pooled std
  double collapse_ratio = 0.0;               // gamma = 1: sep(L-1) / sep(1)
  bool full_collapse = false;                // collapse_ratio <= 0.5
  double accuracy_gap = 0.0;                 // |acc(gamma=0) - acc(gamma=1)|
  bool accuracy_close = false;               // gap <= 0.03
  bool passed() const noexcept { return local_profile_nondecreasing && full_collapse && accuracy_close; }
};

struct GammaComparison {
  std::vector<RegimeRun> runs;
  std::vector<RegimeSummary> summaries;
  PatternVerdict verdict;
};

/// Trains `base` once per (gamma, seed) with the gate off and summarises the
/// end-of-training test diagnostics. Requires gammas to contain 0 and 1.
GammaComparison compare_gamma(const TrainConfig& base, const std::vector<double>& gammas,
                              const std::vector<std::uint64_t>& seeds, bool parallel = true);

PatternVerdict judge_pattern(const std::vector<RegimeSummary>& summaries);

/// Human-readable table of the comparison.
std::string format_comparison(const GammaComparison& cmp);

}  // namespace fflocal
