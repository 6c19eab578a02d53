#pragma once

#include "fflocal/numerics.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fflocal {

enum class NegativeStream { WrongLabel, WrongImage };

std::string_view to_string(NegativeStream s) noexcept;

/// Per-example current and accumulated margins, one entry per block.
/// current[d][i] is m_i^(d); accumulated[d][i] is P_i^(d-1), the sum of
/// current margins over blocks j < d (so accumulated[0] is all zeros).
struct MarginTrace {
  NegativeStream stream = NegativeStream::WrongLabel;
  std::vector<Vector> current;
  std::vector<Vector> accumulated;
  std::vector<double> gamma;  // effective gamma used at each block

  std::size_t blocks() const noexcept { return current.size(); }
  std::size_t examples() const noexcept {
    return current.empty() ? 0 : static_cast<std::size_t>(current.front().size());
  }

  /// Builds the accumulated sums from per-block current margins.
  static MarginTrace from_current(NegativeStream stream, std::vector<Vector> current,
                                  std::vector<double> gamma);

  /// Checks P^(0) = 0 and P^(d) = P^(d-1) + m^(d) up to `tol`.
  bool consistent(double tol = 1e-12) const;
};

struct AttenuationStats {
  double mean_ratio = 1.0;
  double min_ratio = 1.0;
  double max_ratio = 1.0;
  double free_riding = 0.0;
  double fraction_nonneg_upstream = 1.0;
};

enum class GateMode { Off, Cumulative, Previous };

std::string_view to_string(GateMode m) noexcept;
GateMode parse_gate_mode(std::string_view s);

struct GateConfig {
  GateMode mode = GateMode::Off;
  double kappa = 0.0;
  double tau = 1.0;
  double gamma0 = 0.7;

  void validate() const;
  bool operator==(const GateConfig&) const = default;
};

/// M = m + gamma * P. P is a detached constant for every caller.
double cumulative_margin(double current, double accumulated, double gamma);

/// l_beta(u) = softplus(-beta u). Throws ParameterError for beta <= 0.
double barrier(double u, double beta);

/// d/du l_beta(u) = -beta * sigmoid(-beta u).
double barrier_deriv(double u, double beta);

/// (1 + e^{beta m}) / (1 + e^{beta (m + gamma P)}), evaluated in log space.
double attenuation_ratio(double m, double P, double gamma, double beta);

/// (e^{-beta gamma P}, min(1, 2 e^{-beta gamma P})) for m >= 0, P >= 0.
/// Throws RegimeError outside that regime.
std::pair<double, double> attenuation_bounds(double m, double P, double gamma, double beta);

/// Mean over examples of 1 - min(1, R). Throws DomainError on empty input.
double free_riding_index(const Vector& current, const Vector& accumulated, double gamma,
                         double beta);
double free_riding_index(const MarginTrace& trace, std::size_t block, double beta);

AttenuationStats attenuation_stats(const Vector& current, const Vector& accumulated, double gamma,
                                   double beta);

/// Gate on accumulated goodness. `g_cumulative` is used in cumulative mode,
/// `g_prev` in prev mode; off mode returns gamma0.
double effective_gamma(const GateConfig& gate, double g_cumulative, double g_prev);

}  // namespace fflocal
