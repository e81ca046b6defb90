#pragma once

// Post-selection analysis: transmitted fraction and two-photon overlap of
// modulated, dephased photons, delay optimization and the tau_mod sweep.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qdshape/emitter.hpp"
#include "qdshape/eomod.hpp"
#include "qdshape/error.hpp"
#include "qdshape/sigcore.hpp"

namespace qdshape {

// Photon emitted at t = 0 on a grid that starts at the emission time and is
// aligned with `env`, so the quadrature never straddles the onset step.
inline TimeGrid photon_grid(const TimeGrid& env_grid) {
  require(env_grid.t_start() <= 1e-12 && env_grid.t_end() > 0.0,
          "envelope grid must contain the emission time t = 0");
  const long first = std::lround(-env_grid.t_start() / env_grid.dt());
  const auto n = static_cast<std::size_t>(static_cast<long>(env_grid.size()) - first);
  return TimeGrid::with_samples(0.0, env_grid.dt(), n);
}

// Modulated photon psi'(t) = sqrt(T(t - delay)) psi(t), emission at t = 0.
inline Wavepacket modulated_photon(const EmitterModel& model, const TransmissionEnvelope& env, double delay) {
  return apply_modulation(exponential_wavepacket(model, photon_grid(env.grid()), 0.0), env, delay);
}

inline double transmitted_fraction(const EmitterModel& model, const TransmissionEnvelope& env, double delay) {
  return norm(modulated_photon(model, env, delay));
}

namespace detail {

// sum_jk u_j u_k r^|j-k| by forward/backward recursion.
inline double exp_kernel_quadratic_form(std::span<const double> u, double r) {
  const std::size_t n = u.size();
  std::vector<double> fwd(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) fwd[k] = acc = u[k] + r * acc;
  double s = 0.0;
  acc = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    acc = u[k] + r * acc;
    s += u[k] * (fwd[k] + acc - u[k]);
  }
  return s;
}

inline std::vector<double> trapezoid_masses(const Wavepacket& psi) {
  std::vector<double> u(psi.size());
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = psi.grid().trapezoid_weight(k) * psi.intensity(k);
  return u;
}

inline double indistinguishability_of(const std::vector<double>& u, double gamma_star, double dt) {
  double total = 0.0;
  for (double v : u) total += v;
  if (!(total > 0.0)) throw Error("indistinguishability: envelope extinguishes the photon entirely");
  if (gamma_star == 0.0) return 1.0;
  const double s = exp_kernel_quadratic_form(u, std::exp(-2.0 * gamma_star * dt));
  return std::clamp(s / (total * total), 0.0, 1.0);
}

}  // namespace detail

// Mean two-photon overlap of independently dephased photons:
//   I = int int w(t1) w(t2) exp(-2 gamma* |t1 - t2|) / (int w)^2
inline double indistinguishability_exact(const EmitterModel& model, const TransmissionEnvelope& env,
                                         double delay) {
  const auto psi = modulated_photon(model, env, delay);
  return detail::indistinguishability_of(detail::trapezoid_masses(psi), model.gamma_star, env.grid().dt());
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

// Monte Carlo oracle for indistinguishability_exact: average |<psi1|psi2>|^2
// over pairs of wavepackets with independent phase trajectories. Samples
// whose weight is below `support_cut` of the maximum are dropped.
inline McEstimate mc_indistinguishability(const EmitterModel& model, const TransmissionEnvelope& env,
                                          double delay, std::size_t n_pairs, std::uint64_t seed,
                                          double support_cut = 1e-14) {
  require(n_pairs >= 2, "mc_indistinguishability needs at least two pairs");
  const auto psi = modulated_photon(model, env, delay);
  const auto u = detail::trapezoid_masses(psi);
  const double umax = *std::max_element(u.begin(), u.end());
  if (!(umax > 0.0)) throw Error("indistinguishability: envelope extinguishes the photon entirely");
  std::size_t lo = 0, hi = u.size() - 1;
  while (u[lo] < support_cut * umax) ++lo;
  while (u[hi] < support_cut * umax) --hi;
  const std::size_t m = hi - lo + 1;
  double total = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) total += u[k];

  const auto sub = m >= 2 ? TimeGrid::with_samples(psi.grid().time(lo), psi.grid().dt(), m)
                          : TimeGrid::with_samples(psi.grid().time(lo), psi.grid().dt(), 2);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t pair = 0; pair < n_pairs; ++pair) {
    const auto a = sample_phase_trajectory(model, sub, derived_seed(seed, 2 * pair));
    const auto b = sample_phase_trajectory(model, sub, derived_seed(seed, 2 * pair + 1));
    std::complex<double> overlap = 0.0;
    for (std::size_t k = 0; k < m; ++k) overlap += u[lo + k] * std::polar(1.0, b.phase[k] - a.phase[k]);
    const double v = std::norm(overlap) / (total * total);
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(n_pairs);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), n_pairs};
}

// Envelopes obtained by sliding one drive pulse in time. A family without a
// drive is the unmodulated case: constant transmission t_max.
struct EnvelopeFamily {
  std::optional<DriveWaveform> drive;
  EomParams params;
  TimeGrid grid;

  TransmissionEnvelope at(double delay) const {
    if (!drive) return TransmissionEnvelope::constant(grid, params.t_max);
    return mz_transmission(drive->delayed_to(delay), params, grid);
  }
};

enum class DelayObjective { fraction, indistinguishability, product };

inline std::string to_string(DelayObjective o) {
  switch (o) {
    case DelayObjective::fraction: return "fraction";
    case DelayObjective::indistinguishability: return "indistinguishability";
    case DelayObjective::product: return "product";
  }
  return "unknown";
}

struct DelaySearch {
  double lo = -1.5;    // ns
  double hi = 3.0;     // ns
  double step = 0.0;   // scan step; 0 means the grid step
};

struct DelayOptimum {
  double delay = 0.0;
  double objective = 0.0;
  double scan_delay = 0.0;  // best point of the grid scan
};

namespace detail {

inline double objective_value(DelayObjective obj, const EmitterModel& model, const Wavepacket& psi) {
  const double frac = norm(psi);
  if (obj == DelayObjective::fraction) return frac;
  if (!(frac > 0.0)) return 0.0;
  const double ind = indistinguishability_of(trapezoid_masses(psi), model.gamma_star, psi.grid().dt());
  return obj == DelayObjective::indistinguishability ? ind : ind * frac;
}

}  // namespace detail

// Grid scan over [lo, hi] followed by golden-section refinement in the
// bracketing cell. The scan slides one envelope by whole grid steps; the
// refinement re-evaluates the drive at off-grid delays. Ties go to the
// smaller delay.
inline DelayOptimum optimal_delay(const EmitterModel& model, const EnvelopeFamily& family,
                                  DelayObjective objective, const DelaySearch& search = {}) {
  require(search.hi >= search.lo, "delay search range inverted");
  const double dt = family.grid.dt();
  const double step = search.step > 0.0 ? search.step : dt;
  const long step_samples = std::max(1L, std::lround(step / dt));
  if (!family.drive) return {0.0, detail::objective_value(objective, model, modulated_photon(model, family.at(0.0), 0.0)), 0.0};

  const auto base = family.at(0.0);
  const auto photon = exponential_wavepacket(model, photon_grid(family.grid), 0.0);
  const long first = std::lround(search.lo / dt);
  const long last = std::lround(search.hi / dt);
  double best_val = -std::numeric_limits<double>::infinity();
  long best = first;
  for (long s = first; s <= last; s += step_samples) {
    const double v = detail::objective_value(objective, model,
                                             apply_modulation(photon, base, static_cast<double>(s) * dt));
    if (v > best_val) {
      best_val = v;
      best = s;
    }
  }
  const double scan_delay = static_cast<double>(best) * dt;

  auto eval = [&](double d) {
    return detail::objective_value(objective, model, apply_modulation(photon, family.at(d), 0.0));
  };
  const double h = static_cast<double>(step_samples) * dt;
  double a = scan_delay - h, b = scan_delay + h;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = eval(c), fd = eval(d);
  for (int i = 0; i < 40 && (b - a) > 1e-4 * dt; ++i) {
    if (fc >= fd) {
      b = d; d = c; fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
    }
  }
  const double refined = 0.5 * (a + b);
  const double refined_val = eval(refined);
  if (refined_val > best_val) return {refined, refined_val, scan_delay};
  return {scan_delay, best_val, scan_delay};
}

struct EfficiencyChain {
  std::vector<std::pair<std::string, double>> factors;

  double product() const noexcept {
    double p = 1.0;
    for (const auto& f : factors) p *= f.second;
    return p;
  }

  void validate() const {
    for (const auto& [name, v] : factors)
      require(v >= 0.0 && v <= 1.0, "efficiency factor '" + name + "' must lie in [0, 1]");
  }
};

struct ChainCalibration {
  EfficiencyChain chain;
  std::string derivation;
};

// Single-factor chain that makes rep_rate * product * fraction equal target_rate.
inline ChainCalibration calibrate_chain(double target_rate_hz, double rep_rate_hz, double fraction,
                                        double tau_mod) {
  require(rep_rate_hz > 0.0 && fraction > 0.0, "calibration needs positive rate and fraction");
  const double product = target_rate_hz / (rep_rate_hz * fraction);
  require(product <= 1.0, "calibrated efficiency product exceeds 1");
  std::ostringstream os;
  os.precision(6);
  os << "product = target_rate / (rep_rate * fraction(tau_mod = " << tau_mod << " ns)) = " << target_rate_hz
     << " / (" << rep_rate_hz << " * " << fraction << ") = " << product;
  return {EfficiencyChain{{{"calibrated", product}}}, os.str()};
}

struct TradeoffRow {
  double tau_mod = 0.0;  // ns; +inf for the unmodulated row
  double delay_opt = 0.0;
  double indist_exact = 0.0;
  double indist_simple = 0.0;
  double transmitted_fraction = 0.0;
  double rate = 0.0;  // counts / s
};

struct TradeoffOptions {
  EomParams eom{4.0, std::numeric_limits<double>::infinity(), 1.0, kBiasNull};
  double dt = 0.001;          // ns
  double t_before = 1.0;      // minimum envelope margin around the photon, ns
  double horizon_lifetimes = 10.0;
  DelayObjective objective = DelayObjective::fraction;
  double scan_step = 0.0;     // delay scan step, ns; 0 = max(dt, tau_mod / 50)
};

// Envelope grid: the photon horizon plus margins wide enough that the
// envelope is flat at both edges for every delay searched.
inline TimeGrid tradeoff_grid(const EmitterModel& model, const TradeoffOptions& opt, double margin = 0.0) {
  const double pad = opt.t_before + margin;
  return make_time_grid(-pad, opt.horizon_lifetimes * model.tau_sp + pad, opt.dt);
}

inline EnvelopeFamily gaussian_family(double tau_mod, const EomParams& eom, const TimeGrid& grid) {
  if (std::isinf(tau_mod)) return {std::nullopt, eom, grid};
  return {gaussian_drive(eom, eom.v_pi, tau_mod, 0.0, false), eom, grid};
}

inline double indist_simple(double tau_coh, double tau_mod) {
  return std::min(1.0, tau_coh / (2.0 * tau_mod));
}

inline TradeoffRow tradeoff_row(const EmitterModel& model, double tau_mod, double rep_rate_hz,
                                const EfficiencyChain& chain, const TradeoffOptions& opt = {}) {
  DelaySearch search;
  double margin = 0.0;
  if (!std::isinf(tau_mod)) {
    search.lo = -2.0 * tau_mod;
    search.hi = 2.0 * tau_mod + model.tau_sp;
    search.step = opt.scan_step > 0.0 ? opt.scan_step : std::max(opt.dt, tau_mod / 50.0);
    margin = search.hi + 4.0 * tau_mod;
  }
  const auto grid = tradeoff_grid(model, opt, margin);
  const auto family = gaussian_family(tau_mod, opt.eom, grid);
  const auto best = optimal_delay(model, family, opt.objective, search);
  const auto env = family.at(best.delay);
  TradeoffRow row;
  row.tau_mod = tau_mod;
  row.delay_opt = best.delay;
  row.indist_exact = indistinguishability_exact(model, env, 0.0);
  row.indist_simple = indist_simple(model.tau_coh, tau_mod);
  row.transmitted_fraction = transmitted_fraction(model, env, 0.0);
  row.rate = rep_rate_hz * chain.product() * row.transmitted_fraction;
  return row;
}

inline std::vector<TradeoffRow> tradeoff_sweep(const EmitterModel& model, const std::vector<double>& tau_range,
                                               double rep_rate_hz, const EfficiencyChain& chain,
                                               const TradeoffOptions& opt = {}) {
  require(!tau_range.empty(), "tradeoff sweep needs at least one tau_mod");
  chain.validate();
  std::vector<TradeoffRow> rows;
  rows.reserve(tau_range.size());
  for (double tau : tau_range) {
    require(tau > 0.0, "tau_mod must be positive");
    rows.push_back(tradeoff_row(model, tau, rep_rate_hz, chain, opt));
  }
  return rows;
}

}  // namespace qdshape
