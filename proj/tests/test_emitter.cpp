#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "oracles.hpp"
#include "qdshape/emitter.hpp"

using namespace qdshape;

TEST(CoherenceParams, ReferenceEmitter) {
  const auto m = coherence_params(1.4, 0.28);
  EXPECT_NEAR(m.gamma, 0.7143, 1e-4);
  EXPECT_NEAR(m.gamma_star, 3.2143, 1e-4);
  EXPECT_NEAR(m.implied_indistinguishability(), 0.100, 1e-12);
}

TEST(CoherenceParams, TransformLimited) {
  const auto m = coherence_params(1.4, 2.8);
  EXPECT_EQ(m.gamma_star, 0.0);
  EXPECT_DOUBLE_EQ(m.implied_indistinguishability(), 1.0);
}

TEST(CoherenceParams, LongerCoherenceEmitter) {
  EXPECT_NEAR(coherence_params(1.4, 0.58).gamma_star, 1.3670, 1e-4);
}

TEST(CoherenceParams, ImpliedOverlapEqualsT2Over2T1) {
  for (double t1 : {0.3, 1.0, 1.4, 5.0})
    for (double frac : {0.01, 0.2, 0.5, 0.99}) {
      const auto m = coherence_params(t1, frac * 2 * t1);
      EXPECT_NEAR(m.implied_indistinguishability(), frac, 1e-12);
    }
}

TEST(CoherenceParams, AboveTransformLimitRejected) {
  EXPECT_THROW(coherence_params(1.4, 2.81), InvalidArgument);
  EXPECT_THROW(coherence_params(1.4, 0.0), InvalidArgument);
  EXPECT_THROW(coherence_params(-1.0, 0.1), InvalidArgument);
}

TEST(ExponentialWavepacket, PeakAndLifetime) {
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(0.0, 20.0, 0.001);
  const auto psi = exponential_wavepacket(m, g, 0.0);
  EXPECT_NEAR(psi.intensity(0), 0.7143, 1e-4);
  EXPECT_NEAR(psi.intensity(1400) / psi.intensity(0), std::exp(-1.0), 1e-12);
  for (std::size_t k = 0; k < psi.size(); ++k) EXPECT_EQ(psi.phase()[k], 0.0);
}

TEST(ExponentialWavepacket, NormOverTwentyLifetimes) {
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(0.0, 28.0, 0.001);
  EXPECT_NEAR(norm(exponential_wavepacket(m, g, 0.0)), 1.0 - std::exp(-20.0), 1e-6);
}

TEST(ExponentialWavepacket, ZeroBeforeEmission) {
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(0.0, 10.0, 0.001);
  const auto psi = exponential_wavepacket(m, g, 2.0);
  EXPECT_EQ(psi.intensity(1999), 0.0);
  EXPECT_NEAR(psi.intensity(2000), m.gamma, 1e-12);
}

TEST(ExponentialWavepacket, GridEndingBeforeEmissionRejected) {
  const auto m = coherence_params(1.4, 0.28);
  EXPECT_THROW(exponential_wavepacket(m, make_time_grid(0.0, 1.0, 0.01), 1.5), InvalidArgument);
}

TEST(ExponentialWavepacket, TranslationCovariant) {
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(-1.0, 12.0, 0.001);
  const auto a = exponential_wavepacket(m, g, 0.25);
  for (long shift : {1L, 7L, 800L}) {
    const auto b = exponential_wavepacket(m, g, 0.25 + static_cast<double>(shift) * g.dt());
    for (std::size_t k = 0; k + static_cast<std::size_t>(shift) < g.size(); ++k)
      ASSERT_EQ(b.intensity(k + static_cast<std::size_t>(shift)), a.intensity(k)) << "shift " << shift;
  }
}

TEST(PhaseTrajectory, ZeroDephasingIsFlat) {
  const auto m = coherence_params(1.4, 2.8);
  const auto g = make_time_grid(0.0, 5.0, 0.01);
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    const auto tr = sample_phase_trajectory(m, g, seed);
    for (double p : tr.phase) EXPECT_EQ(p, 0.0);
  }
}

TEST(PhaseTrajectory, DeterministicPerSeedAndStartsAtZero) {
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(0.0, 5.0, 0.01);
  const auto a = sample_phase_trajectory(m, g, 5);
  const auto b = sample_phase_trajectory(m, g, 5);
  const auto c = sample_phase_trajectory(m, g, 6);
  EXPECT_EQ(a.phase, b.phase);
  EXPECT_NE(a.phase, c.phase);
  EXPECT_EQ(a.phase[0], 0.0);
}

TEST(PhaseTrajectory, CoherenceAtCoherenceTimeMatchesWienerOracle) {
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(0.0, 1.0, 0.002);
  const std::size_t lag = 140;  // 0.28 ns
  const std::size_t n = 10000;
  std::complex<double> sum = 0.0;
  double sum_re2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto tr = sample_phase_trajectory(m, g, derived_seed(1234, i));
    const auto z = std::polar(1.0, tr.phase[100 + lag] - tr.phase[100]);
    sum += z;
    sum_re2 += z.real() * z.real();
  }
  const double mean = sum.real() / n;
  const double se = std::sqrt((sum_re2 / n - mean * mean) / n);
  const double expected = oracle::wiener_coherence(m.gamma_star, 0.28);
  EXPECT_NEAR(expected, 0.4066, 1e-4);
  EXPECT_LE(std::abs(std::abs(sum) / n - expected), 3 * se);
}

TEST(PhaseTrajectory, VarianceGrowsLinearly) {
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(0.0, 1.0, 0.005);
  const std::size_t n = 10000;
  std::vector<double> s(g.size(), 0.0), s2(g.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto tr = sample_phase_trajectory(m, g, derived_seed(77, i));
    for (std::size_t k = 0; k < g.size(); ++k) {
      s[k] += tr.phase[k];
      s2[k] += tr.phase[k] * tr.phase[k];
    }
  }
  for (std::size_t k : {20ul, 60ul, 100ul, 200ul}) {
    const double mean = s[k] / n;
    const double var = s2[k] / n - mean * mean;
    EXPECT_NEAR(var, 2 * m.gamma_star * g.time(k), 0.05 * 2 * m.gamma_star * g.time(k)) << "t=" << g.time(k);
  }
}

TEST(Dephasing, IntensityBitIdentical) {
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(0.0, 10.0, 0.001);
  const auto psi = exponential_wavepacket(m, g, 0.5);
  const auto d = dephase(psi, sample_phase_trajectory(m, g, 3));
  for (std::size_t k = 0; k < g.size(); ++k) ASSERT_EQ(d.intensity(k), psi.intensity(k));
}

TEST(Dephasing, EnsembleFirstOrderCoherenceDecaysAtInverseT2) {
  // g1(tau) = <psi*(t) psi(t + tau)> / <|psi(t)|^2> ~ exp(-(Gamma/2 + gamma*) tau)
  const auto m = coherence_params(1.4, 0.28);
  const auto g = make_time_grid(0.0, 2.0, 0.002);
  const auto psi = exponential_wavepacket(m, g, 0.0);
  const std::size_t t0 = 50, n = 10000;
  for (std::size_t lag : {50ul, 100ul, 200ul}) {
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = dephase(psi, sample_phase_trajectory(m, g, derived_seed(42, i)));
      const double v = (std::conj(d.amplitude(t0)) * d.amplitude(t0 + lag)).real() / psi.intensity(t0);
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    const double tau = static_cast<double>(lag) * g.dt();
    EXPECT_LE(std::abs(mean - std::exp(-tau / m.tau_coh)), 3 * se) << "tau=" << tau;
  }
}
