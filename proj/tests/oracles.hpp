#pragma once

// Test-only reference computations. Nothing here calls into the library:
// closed forms and brute-force quadrature that the implementation is
// checked against.

#include <cmath>
#include <functional>
#include <numbers>

namespace oracle {

constexpr double kFwhmPerSigma = 2.3548200450309493;

inline double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Composite Simpson on [a, b] with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, long n) {
  if (n % 2) ++n;
  const double h = (b - a) / static_cast<double>(n);
  double s = f(a) + f(b);
  for (long i = 1; i < n; ++i) s += f(a + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Fraction of an exponential photon (rate gamma, emitted at 0) passed by
// floor + (1 - floor) * Gaussian(center, fwhm).
inline double gauss_exp_fraction_closed(double gamma, double fwhm, double center, double floor) {
  const double s = fwhm / kFwhmPerSigma;
  const double core = gamma * s * std::sqrt(std::numbers::pi / 2.0) *
                      std::exp(-gamma * center + 0.5 * gamma * gamma * s * s) *
                      std::erfc((gamma * s * s - center) / (s * std::numbers::sqrt2));
  return floor + (1.0 - floor) * core;
}

// Same integral by Simpson quadrature at step h (ns) over [0, t_max].
inline double gauss_exp_fraction_quadrature(double gamma, double fwhm, double center, double floor,
                                            double h = 5e-5, double t_max = 60.0) {
  const double s = fwhm / kFwhmPerSigma;
  auto f = [&](double t) {
    const double d = t - center;
    return (floor + (1.0 - floor) * std::exp(-0.5 * d * d / (s * s))) * gamma * std::exp(-gamma * t);
  };
  return simpson(f, 0.0, t_max, static_cast<long>(t_max / h));
}

// CDF of exponential(gamma) + Normal(0, sigma): exponentially modified Gaussian.
inline double emg_cdf(double x, double gamma, double sigma) {
  const double a = (x - gamma * sigma * sigma) / sigma;
  const double log_term = -gamma * x + 0.5 * gamma * gamma * sigma * sigma;
  return phi(x / sigma) - std::exp(log_term + std::log(std::max(phi(a), 1e-300)));
}

// Two-sided z-sigma Poisson band: the observed count passes when neither
// tail probability falls below that of a z-sigma normal deviation. Exact
// tails for small means, normal band above.
inline bool poisson_band_ok(double observed, double mean, double z = 4.0) {
  if (mean > 200.0) return std::abs(observed - mean) <= z * std::sqrt(mean);
  const double alpha = 0.5 * std::erfc(z / std::numbers::sqrt2);
  if (mean <= 0.0) return observed == 0.0;
  const long n = std::lround(observed);
  auto pmf = [&](long k) { return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0)); };
  double lower = 0.0;  // P(X <= n)
  for (long k = 0; k <= n; ++k) lower += pmf(k);
  const double upper = 1.0 - lower + pmf(n);  // P(X >= n)
  return lower >= alpha && upper >= alpha;
}

// Upper 95% point of chi-squared with k degrees of freedom (Wilson-Hilferty).
inline double chi2_quantile_95(double k) {
  const double z = 1.6448536269514722;
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3);
}

// Mean-square overlap of an unmodulated exponential photon, Gamma/(Gamma+2 gamma*).
inline double unmodulated_indistinguishability(double tau_sp, double tau_coh) {
  return tau_coh / (2.0 * tau_sp);
}

// Wiener-phase characteristic function <exp(i dphi)> over lag tau.
inline double wiener_coherence(double gamma_star, double tau) { return std::exp(-gamma_star * std::abs(tau)); }

}  // namespace oracle
