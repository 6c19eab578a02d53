#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fflocal {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct AuditOptions {
  std::size_t draws = 100000;  // scalar random draws per check
  std::size_t blocks = 100;    // random blocks for the parameter-level identity
  std::size_t trials = 1000;   // random perturbation trials
  std::uint64_t seed = 20240607;
};

/// Gradient of the cumulative barrier equals R times the local one, for
/// every parameter of random small blocks; also checked by finite differences.
CheckResult check_attenuation_identity(const AuditOptions& opt);
/// e^{-beta gamma P} <= R <= min(1, 2 e^{-beta gamma P}) for m, P >= 0.
CheckResult check_attenuation_sandwich(const AuditOptions& opt);
/// R = |l'(m + gamma P)| / |l'(m)|, and R non-increasing in P.
CheckResult check_ratio_consistency(const AuditOptions& opt);
/// Free-riding index in [0, 1), zero at gamma = 0.
CheckResult check_free_riding_range(const AuditOptions& opt);
/// |dJ/dm| >= lambda_curr w beta / 2 on unresolved examples, through the
/// block objective's own gradient.
CheckResult check_gradient_floor(const AuditOptions& opt);
/// Residual weights: unit mean, ordering when unclipped, floor w_min / w_max.
CheckResult check_weight_lemma(const AuditOptions& opt);
/// Per-depth increments of delta_pos / delta_neg telescope to d (delta_pos + delta_neg).
CheckResult check_depth_order(const AuditOptions& opt);
/// MGC margin gradient equals c_d beta s(m) when gamma P >= 0; clip engages when R > c_d.
CheckResult check_mgc_recovery(const AuditOptions& opt);
/// Zero-sum goodness redistribution leaves cumulative scores and predictions unchanged.
CheckResult check_redistribution(const AuditOptions& opt);
/// Disagreement <= Pr[Delta_A <= 2t] + Pr[E > t] and |dAcc| <= disagreement.
CheckResult check_prediction_stability(const AuditOptions& opt);

std::vector<CheckResult> run_theorem_audit(const AuditOptions& opt = {});

}  // namespace fflocal
