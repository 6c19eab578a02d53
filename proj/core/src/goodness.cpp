#include "fflocal/goodness.hpp"

#include "fflocal/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace fflocal {

namespace {

void require_positive_beta(double beta, const char* where) {
  if (!(beta > 0.0)) {
    throw ParameterError(fmt::format("{}: beta must be > 0, got {}", where, beta));
  }
}

// log(1 + e^x)
double log1p_exp(double x) noexcept { return softplus(x); }

}  // namespace

std::string_view to_string(NegativeStream s) noexcept {
  return s == NegativeStream::WrongLabel ? "wrong-label" : "wrong-image";
}

MarginTrace MarginTrace::from_current(NegativeStream stream, std::vector<Vector> current,
                                      std::vector<double> gamma) {
  MarginTrace t;
  t.stream = stream;
  t.gamma = std::move(gamma);
  t.accumulated.reserve(current.size());
  Vector running;
  for (std::size_t d = 0; d < current.size(); ++d) {
    if (d == 0) {
      running = Vector::Zero(current[0].size());
    }
    t.accumulated.push_back(running);
    running += current[d];
  }
  t.current = std::move(current);
  if (t.gamma.size() != t.current.size()) {
    t.gamma.resize(t.current.size(), 0.0);
  }
  return t;
}

bool MarginTrace::consistent(double tol) const {
  if (current.size() != accumulated.size()) return false;
  for (std::size_t d = 0; d < current.size(); ++d) {
    if (accumulated[d].size() != current[d].size()) return false;
    const Vector expected =
        d == 0 ? Vector::Zero(current[d].size()) : Vector(accumulated[d - 1] + current[d - 1]);
    if ((accumulated[d] - expected).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

std::string_view to_string(GateMode m) noexcept {
  switch (m) {
    case GateMode::Off: return "off";
    case GateMode::Cumulative: return "cumulative";
    case GateMode::Previous: return "prev";
  }
  return "off";
}

GateMode parse_gate_mode(std::string_view s) {
  if (s == "off") return GateMode::Off;
  if (s == "cumulative") return GateMode::Cumulative;
  if (s == "prev") return GateMode::Previous;
  throw ParameterError(fmt::format("unknown gate mode '{}'", s));
}

void GateConfig::validate() const {
  if (gamma0 < 0.0 || gamma0 > 1.0) {
    throw ParameterError(fmt::format("gate: gamma0 must lie in [0,1], got {}", gamma0));
  }
  if (tau < 0.0) {
    throw ParameterError(fmt::format("gate: tau must be >= 0, got {}", tau));
  }
}

double cumulative_margin(double current, double accumulated, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) {
    throw ParameterError(fmt::format("cumulative_margin: gamma must lie in [0,1], got {}", gamma));
  }
  return current + gamma * accumulated;
}

double barrier(double u, double beta) {
  require_positive_beta(beta, "barrier");
  return softplus(-beta * u);
}

double barrier_deriv(double u, double beta) {
  require_positive_beta(beta, "barrier_deriv");
  return -beta * sigmoid(-beta * u);
}

double attenuation_ratio(double m, double P, double gamma, double beta) {
  require_positive_beta(beta, "attenuation_ratio");
  // log R = log(1 + e^{beta m}) - log(1 + e^{beta (m + gamma P)})
  const double a = beta * m;
  const double shift = beta * gamma * P;
  const double b = beta * (m + gamma * P);
  if (a >= 0.0 && shift >= 0.0) {
    // = -shift + [log1p(e^{-a}) - log1p(e^{-b})], the bracket being >= 0
    return std::exp(-shift + (std::log1p(std::exp(-a)) - std::log1p(std::exp(-b))));
  }
  return std::exp(log1p_exp(a) - log1p_exp(b));
}

std::pair<double, double> attenuation_bounds(double m, double P, double gamma, double beta) {
  require_positive_beta(beta, "attenuation_bounds");
  if (m < 0.0 || P < 0.0 || gamma < 0.0) {
    throw RegimeError(fmt::format(
        "attenuation_bounds: requires m >= 0, P >= 0, gamma >= 0 (got m={}, P={}, gamma={})", m, P,
        gamma));
  }
  const double shift = beta * gamma * P;
  const double lower = std::exp(-shift);
  return {lower, std::min(1.0, 2.0 * lower)};
}

double free_riding_index(const Vector& current, const Vector& accumulated, double gamma,
                         double beta) {
  if (current.size() == 0) {
    throw DomainError("free_riding_index: empty example set");
  }
  if (current.size() != accumulated.size()) {
    throw DimensionError(fmt::format("free_riding_index: {} current margins vs {} accumulated",
                                     current.size(), accumulated.size()));
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < current.size(); ++i) {
    acc += 1.0 - std::min(1.0, attenuation_ratio(current[i], accumulated[i], gamma, beta));
  }
  return acc / static_cast<double>(current.size());
}

double free_riding_index(const MarginTrace& trace, std::size_t block, double beta) {
  if (block >= trace.blocks()) {
    throw DomainError(fmt::format("free_riding_index: block {} out of range", block));
  }
  return free_riding_index(trace.current[block], trace.accumulated[block], trace.gamma[block],
                           beta);
}

AttenuationStats attenuation_stats(const Vector& current, const Vector& accumulated, double gamma,
                                   double beta) {
  if (current.size() == 0) {
    throw DomainError("attenuation_stats: empty example set");
  }
  AttenuationStats s;
  s.min_ratio = std::numeric_limits<double>::infinity();
  s.max_ratio = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  double fr = 0.0;
  std::size_t nonneg = 0;
  for (Eigen::Index i = 0; i < current.size(); ++i) {
    const double r = attenuation_ratio(current[i], accumulated[i], gamma, beta);
    sum += r;
    fr += 1.0 - std::min(1.0, r);
    s.min_ratio = std::min(s.min_ratio, r);
    s.max_ratio = std::max(s.max_ratio, r);
    if (accumulated[i] >= 0.0) ++nonneg;
  }
  const auto n = static_cast<double>(current.size());
  s.mean_ratio = sum / n;
  s.free_riding = fr / n;
  s.fraction_nonneg_upstream = static_cast<double>(nonneg) / n;
  return s;
}

double effective_gamma(const GateConfig& gate, double g_cumulative, double g_prev) {
  switch (gate.mode) {
    case GateMode::Off: return gate.gamma0;
    case GateMode::Cumulative: return gate.gamma0 * sigmoid(gate.tau * (gate.kappa - g_cumulative));
    case GateMode::Previous: return gate.gamma0 * sigmoid(gate.tau * (gate.kappa - g_prev));
  }
  return gate.gamma0;
}

}  // namespace fflocal
