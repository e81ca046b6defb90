#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qdshape/detect.hpp"
#include "qdshape/emitter.hpp"
#include "qdshape/fit.hpp"

using namespace qdshape;

namespace {

std::vector<double> centers(std::size_t n, double bw) {
  std::vector<double> t(n);
  for (std::size_t j = 0; j < n; ++j) t[j] = bw * (static_cast<double>(j) + 0.5);
  return t;
}

Histogram mc_decay(std::uint64_t gated, std::uint64_t seed, double span = 20.0) {
  const auto m = coherence_params(1.4, 0.28);
  const auto psi = exponential_wavepacket(m, make_time_grid(1.0, 50.0, 0.001), 1.0);
  TimingConfig cfg;
  cfg.gate_divider = 1;
  cfg.n_pulses = gated;
  const auto stamps = detect_mc(psi, DetectorModel{}, schedule_events(cfg), seed);
  return histogram(std::span<const Timestamp>(stamps), 0.05, span, gated);
}

Histogram scaled(const Histogram& h, double k) {
  Histogram out = h;
  for (auto& c : out.counts) c = static_cast<std::uint64_t>(std::llround(static_cast<double>(c) * k));
  return out;
}

}  // namespace

TEST(FitExponential, NoiselessRecoversTau) {
  const auto t = centers(400, 0.05);
  std::vector<double> y(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) y[j] = 5000.0 * std::exp(-t[j] / 1.4);
  const auto r = fit_exponential(t, y);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value("tau") / 1.4, 1.0, 1e-6);
  EXPECT_LT(r.ci95("tau"), 1e-6);
  EXPECT_NEAR(r.value("baseline"), 0.0, 1e-6 * 5000.0);
}

TEST(FitExponential, NoiselessWithBaselineAndLeadingRise) {
  const auto t = centers(500, 0.05);
  std::vector<double> y(t.size());
  for (std::size_t j = 0; j < t.size(); ++j)
    y[j] = t[j] < 2.0 ? 40.0 + 300.0 * t[j] : 40.0 + 1000.0 * std::exp(-(t[j] - 2.0) / 0.9);
  const auto r = fit_exponential(t, y);
  EXPECT_NEAR(r.value("tau") / 0.9, 1.0, 1e-6);
  EXPECT_NEAR(r.value("baseline"), 40.0, 1e-4);
}

TEST(FitExponential, HundredThousandCountHistogram) {
  const auto h = mc_decay(100'000, 1);
  const auto r = fit_exponential(h, {.start_after_peak = 3 * DetectorModel{}.jitter_sigma()});
  EXPECT_LE(std::abs(r.value("tau") - 1.4), r.ci95("tau"));
  EXPECT_LE(r.ci95("tau"), 0.1);
  EXPECT_GT(r.ci95("tau"), 0.0);
}

TEST(FitExponential, CoverageOfNinetyFivePercentIntervals) {
  const double skip = 3 * DetectorModel{}.jitter_sigma();
  int covered = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const auto r = fit_exponential(mc_decay(100'000, derived_seed(5000, rep * 1'000'003)),
                                   {.start_after_peak = skip});
    covered += std::abs(r.value("tau") - 1.4) <= r.ci95("tau");
  }
  EXPECT_GE(covered, 93);
}

TEST(FitExponential, ScaleInvariance) {
  // Invariance needs every fitted bin above the unit weight floor.
  const auto h = mc_decay(100'000, 4, 7.0);
  ASSERT_GE(*std::min_element(h.counts.begin() + 30, h.counts.end()), 2u);
  const ExponentialFitOptions opt{.start_after_peak = 0.3};
  const auto base = fit_exponential(h, opt);
  for (double k : {2.0, 17.0, 1000.0}) {
    const auto r = fit_exponential(scaled(h, k), opt);
    EXPECT_NEAR(r.value("tau") / base.value("tau"), 1.0, 1e-9) << k;
    EXPECT_NEAR(r.value("amplitude") / base.value("amplitude"), k, 1e-6 * k);
  }
}

TEST(FitExponential, DegenerateInputs) {
  const auto t = centers(100, 0.05);
  EXPECT_THROW(fit_exponential(t, std::vector<double>(100, 0.0)), FitError);
  std::vector<double> sparse(100, 0.0);
  for (int j = 0; j < 8; ++j) sparse[static_cast<std::size_t>(10 + 5 * j)] = 10.0 - j;
  EXPECT_THROW(fit_exponential(t, sparse), FitError);
}

TEST(FitExponential, NonConvergenceCarriesBestIterate) {
  const auto h = mc_decay(20'000, 3);
  try {
    fit_exponential(h, {.start_after_peak = 0.0, .max_iter = 1});
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_TRUE(e.best().has("tau"));
    EXPECT_GT(e.best().value("tau"), 0.0);
  }
}

TEST(FitGaussian, NoiselessRecoversFwhm) {
  const auto t = centers(120, 0.05);
  const double sigma = 0.720 / kFwhmPerSigma;
  std::vector<double> y(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) y[j] = 20.0 + 900.0 * std::exp(-0.5 * std::pow((t[j] - 3.1) / sigma, 2));
  const auto r = fit_gaussian(t, y, false);
  EXPECT_NEAR(r.value("fwhm") / 0.720, 1.0, 1e-6);
  EXPECT_NEAR(r.value("center"), 3.1, 1e-6);
  EXPECT_NEAR(r.value("height"), 920.0, 1e-4);
  EXPECT_FALSE(r.has("fwhm_deconvolved"));
}

TEST(FitGaussian, NoiselessNotch) {
  const auto t = centers(160, 0.05);
  const double sigma = 0.770 / kFwhmPerSigma;
  std::vector<double> y(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) y[j] = 1000.0 - 990.0 * std::exp(-0.5 * std::pow((t[j] - 4.0) / sigma, 2));
  const auto r = fit_gaussian(t, y, true);
  EXPECT_EQ(r.model, FitModel::notch);
  EXPECT_NEAR(r.value("fwhm") / 0.770, 1.0, 1e-6);
  EXPECT_NEAR(r.value("height"), 10.0, 1e-4);
}

TEST(FitGaussian, DeconvolvesKnownJitter) {
  const auto t = centers(120, 0.05);
  const double measured = std::hypot(0.72, 0.25);
  const double sigma = measured / kFwhmPerSigma;
  std::vector<double> y(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) y[j] = 500.0 * std::exp(-0.5 * std::pow((t[j] - 3.0) / sigma, 2));
  const auto r = fit_gaussian(t, y, false, {.jitter_fwhm = 0.25});
  EXPECT_NEAR(r.value("fwhm_deconvolved"), 0.72, 1e-6);
}

TEST(FitGaussian, ScaleInvarianceAndNoisyCoverage) {
  std::mt19937_64 rng(17);
  const auto t = centers(120, 0.05);
  const double sigma = 0.72 / kFwhmPerSigma;
  std::vector<double> y(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) {
    const double mu = 30.0 + 2000.0 * std::exp(-0.5 * std::pow((t[j] - 3.0) / sigma, 2));
    y[j] = static_cast<double>(std::poisson_distribution<long>(mu)(rng));
  }
  const auto base = fit_gaussian(t, y, false);
  EXPECT_LE(std::abs(base.value("fwhm") - 0.72), base.ci95("fwhm"));
  for (double k : {3.0, 250.0}) {
    std::vector<double> yk(y);
    for (auto& v : yk) v *= k;
    EXPECT_NEAR(fit_gaussian(t, yk, false).value("fwhm") / base.value("fwhm"), 1.0, 1e-9) << k;
  }
}

TEST(FitGaussian, DegenerateInputs) {
  EXPECT_THROW(fit_gaussian(centers(50, 0.1), std::vector<double>(50, 0.0), false), FitError);
  EXPECT_THROW(fit_gaussian(centers(3, 0.1), std::vector<double>{1, 2, 1}, false), FitError);
}

TEST(EvaluateFit, ModelCurves) {
  FitResult r;
  r.model = FitModel::exponential;
  r.t_ref = 1.0;
  r.params = {{"amplitude", 10.0, 0}, {"tau", 2.0, 0}, {"baseline", 1.0, 0}};
  EXPECT_DOUBLE_EQ(evaluate_fit(r, 3.0), 1.0 + 10.0 * std::exp(-1.0));
  EXPECT_EQ(evaluate_fit(r, 0.5), 0.0);
  r.model = FitModel::notch;
  r.params = {{"amplitude", 4.0, 0}, {"center", 2.0, 0}, {"sigma", 0.5, 0}, {"baseline", 5.0, 0}};
  EXPECT_DOUBLE_EQ(evaluate_fit(r, 2.0), 1.0);
  EXPECT_THROW(r.value("tau"), Error);
}
