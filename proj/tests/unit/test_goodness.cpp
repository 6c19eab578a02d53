#include "fflocal/errors.hpp"
#include "fflocal/goodness.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace fflocal;

namespace {

long double ref_ratio(long double m, long double P, long double gamma, long double beta) {
  return (1.0L + std::exp(beta * m)) / (1.0L + std::exp(beta * (m + gamma * P)));
}

}  // namespace

TEST(CumulativeMargin, Values) {
  EXPECT_NEAR(cumulative_margin(2.36, 1.76, 0.7), 3.592, 1e-12);
  EXPECT_EQ(cumulative_margin(1.3, 9.0, 0.0), 1.3);
  EXPECT_EQ(cumulative_margin(0.0, 5.0, 1.0), 5.0);
}

TEST(Barrier, Values) {
  EXPECT_NEAR(barrier(0.0, 4.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(barrier(1.0, 4.0), static_cast<double>(test::ref_barrier(1.0L, 4.0L)), 1e-15);
  EXPECT_NEAR(barrier(1.0, 4.0), 0.01815, 1e-5);
  EXPECT_NEAR(barrier(-10.0, 4.0), 40.0, 1e-12);
  EXPECT_THROW(barrier(0.0, 0.0), ParameterError);
  EXPECT_THROW(barrier(0.0, -1.0), ParameterError);
}

TEST(BarrierDeriv, Values) {
  EXPECT_DOUBLE_EQ(barrier_deriv(0.0, 4.0), -2.0);
  EXPECT_LT(barrier_deriv(50.0, 4.0), 0.0);
  EXPECT_GT(barrier_deriv(50.0, 4.0), -1e-80);
  Vector p(1);
  p << 1.0;
  Vector fd = finite_diff_grad([](const Vector& v) { return barrier(v[0], 4.0); }, p);
  EXPECT_NEAR(barrier_deriv(1.0, 4.0), fd[0], 1e-8);
  EXPECT_NEAR(barrier_deriv(1.0, 4.0), -0.07194, 1e-5);
}

TEST(AttenuationRatio, TableValues) {
  const double r1 = attenuation_ratio(2.36, 1.76, 0.7, 4.0);
  EXPECT_NEAR(r1 / 7.2e-3, 1.0, 0.05);
  const double r2 = attenuation_ratio(1.08, 1.74, 1.0, 4.0);
  EXPECT_NEAR(r2 / 9.7e-4, 1.0, 0.05);
}

TEST(AttenuationRatio, UnitWithoutUpstream) {
  for (double m : {-3.0, 0.0, 0.4, 12.0}) EXPECT_DOUBLE_EQ(attenuation_ratio(m, 0.0, 0.7, 4.0), 1.0);
  EXPECT_DOUBLE_EQ(attenuation_ratio(1.0, 5.0, 0.0, 4.0), 1.0);
}

TEST(AttenuationRatio, MatchesExtendedPrecision) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mu(-5.0, 5.0), pu(-3.0, 6.0), gu(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double m = mu(rng), P = pu(rng), g = gu(rng);
    const double ref = static_cast<double>(ref_ratio(m, P, g, 4.0));
    EXPECT_NEAR(attenuation_ratio(m, P, g, 4.0) / ref, 1.0, 1e-12);
  }
}

TEST(AttenuationRatio, FiniteForLargeArguments) {
  const double r = attenuation_ratio(100.0, 300.0, 1.0, 4.0);
  EXPECT_TRUE(std::isfinite(r));
  EXPECT_GE(r, 0.0);
  EXPECT_NEAR(attenuation_ratio(0.0, 250.0, 1.0, 4.0), std::exp(std::log(2.0) - 1000.0), 1e-300);
}

TEST(AttenuationBounds, Values) {
  auto [lo0, hi0] = attenuation_bounds(0.0, 0.0, 0.7, 4.0);
  EXPECT_DOUBLE_EQ(lo0, 1.0);
  EXPECT_DOUBLE_EQ(hi0, 1.0);

  auto [lo, hi] = attenuation_bounds(2.0, 1.0, 0.5, 4.0);
  EXPECT_NEAR(lo, std::exp(-2.0), 1e-15);
  EXPECT_NEAR(hi, 2.0 * std::exp(-2.0), 1e-15);
  const double r = attenuation_ratio(2.0, 1.0, 0.5, 4.0);
  EXPECT_NEAR(r, static_cast<double>((1.0L + std::exp(8.0L)) / (1.0L + std::exp(10.0L))), 1e-15);
  EXPECT_LE(lo, r);
  EXPECT_LE(r, hi);

  const double rt = attenuation_ratio(2.36, 1.76, 0.7, 4.0);
  auto [lt, ht] = attenuation_bounds(2.36, 1.76, 0.7, 4.0);
  EXPECT_LE(lt, rt);
  EXPECT_GE(ht, rt);
}

TEST(AttenuationBounds, RefusesOutOfRegime) {
  EXPECT_THROW(attenuation_bounds(-0.1, 1.0, 0.5, 4.0), RegimeError);
  EXPECT_THROW(attenuation_bounds(0.1, -1.0, 0.5, 4.0), RegimeError);
}

TEST(AttenuationBounds, SandwichProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> mu(0.0, 8.0), pu(0.0, 20.0), gu(0.0, 1.0), bu(0.5, 8.0);
  for (int i = 0; i < 20000; ++i) {
    const double m = mu(rng), P = pu(rng), g = gu(rng), b = bu(rng);
    const double r = attenuation_ratio(m, P, g, b);
    auto [lo, hi] = attenuation_bounds(m, P, g, b);
    ASSERT_LE(lo, r) << m << ' ' << P << ' ' << g << ' ' << b;
    ASSERT_LE(r, hi) << m << ' ' << P << ' ' << g << ' ' << b;
  }
}

TEST(AttenuationRatio, NonIncreasingInUpstream) {
  double last = std::numeric_limits<double>::infinity();
  for (double P = -2.0; P <= 10.0; P += 0.25) {
    const double r = attenuation_ratio(0.8, P, 0.7, 4.0);
    EXPECT_LE(r, last);
    last = r;
  }
}

TEST(FreeRiding, Values) {
  Vector m(3), P = Vector::Zero(3);
  m << 0.1, 1.0, -0.5;
  EXPECT_EQ(free_riding_index(m, P, 0.7, 4.0), 0.0);

  // One example with R = 0.3: pick P so that the ratio lands there.
  const double m0 = 0.0, beta = 1.0;
  const double target = 0.3;
  // (1 + e^0) / (1 + e^{gamma P}) = 0.3  =>  e^{P} = 2 / 0.3 - 1
  const double P0 = std::log(2.0 / target - 1.0);
  Vector mm(1), pp(1);
  mm << m0;
  pp << P0;
  EXPECT_NEAR(free_riding_index(mm, pp, 1.0, beta), 0.7, 1e-12);

  // P < 0 makes R > 1; the clip contributes 0.
  pp << -0.5;
  EXPECT_GT(attenuation_ratio(m0, -0.5, 1.0, 4.0), 1.0);
  EXPECT_EQ(free_riding_index(mm, pp, 1.0, 4.0), 0.0);
  EXPECT_THROW(free_riding_index(Vector(), Vector(), 1.0, 4.0), DomainError);
}

TEST(FreeRiding, RangeProperty) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 200; ++t) {
    Vector m = test::random_vector(16, rng, 2.0), P = test::random_vector(16, rng, 3.0);
    const double f = free_riding_index(m, P, 0.7, 4.0);
    EXPECT_GE(f, 0.0);
    EXPECT_LT(f, 1.0);
  }
}

TEST(MarginTraceTest, AccumulatesAndChecksConsistency) {
  Vector a(2), b(2), c(2);
  a << 1, 2;
  b << 0.5, -1;
  c << 3, 3;
  MarginTrace t = MarginTrace::from_current(NegativeStream::WrongLabel, {a, b, c}, {0.0, 0.7, 0.7});
  EXPECT_EQ(t.blocks(), 3u);
  EXPECT_EQ(t.examples(), 2u);
  EXPECT_EQ(t.accumulated[0].norm(), 0.0);
  EXPECT_DOUBLE_EQ(t.accumulated[2][0], 1.5);
  EXPECT_DOUBLE_EQ(t.accumulated[2][1], 1.0);
  EXPECT_TRUE(t.consistent());
  t.accumulated[1][0] += 1e-6;
  EXPECT_FALSE(t.consistent());
}

TEST(EffectiveGamma, Values) {
  GateConfig prev{GateMode::Previous, 2.0, 1.0, 1.0};
  EXPECT_NEAR(effective_gamma(prev, 99.0, 4.04), 0.115, 5e-4);
  EXPECT_NEAR(effective_gamma(prev, 99.0, 4.04), static_cast<double>(test::ref_sigmoid(-2.04L)), 1e-15);

  GateConfig off{GateMode::Off, 2.0, 1.0, 0.7};
  EXPECT_EQ(effective_gamma(off, -50.0, 50.0), 0.7);

  GateConfig cum{GateMode::Cumulative, 0.0, 1.0, 0.8};
  EXPECT_DOUBLE_EQ(effective_gamma(cum, 0.0, 123.0), 0.4);
}

TEST(EffectiveGamma, NonIncreasingInGoodness) {
  GateConfig g{GateMode::Cumulative, 1.0, 3.0, 1.0};
  double last = 2.0;
  for (double x = -5.0; x <= 5.0; x += 0.1) {
    const double v = effective_gamma(g, x, 0.0);
    EXPECT_LE(v, last);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    last = v;
  }
}

TEST(GateConfigTest, Validation) {
  GateConfig g;
  g.gamma0 = 1.2;
  EXPECT_THROW(g.validate(), ParameterError);
  g.gamma0 = 0.5;
  g.tau = -1.0;
  EXPECT_THROW(g.validate(), ParameterError);
  EXPECT_EQ(parse_gate_mode("prev"), GateMode::Previous);
  EXPECT_EQ(to_string(parse_gate_mode("cumulative")), "cumulative");
  EXPECT_THROW(parse_gate_mode("sideways"), ParameterError);
}
