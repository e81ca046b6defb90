#pragma once

// Pulsed two-level emitter: deterministic exponential wavepacket plus a
// Wiener phase-diffusion trajectory per emission event.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qdshape/error.hpp"
#include "qdshape/sigcore.hpp"

namespace qdshape {

struct EmitterModel {
  double tau_sp = 1.4;          // T1, ns
  double tau_coh = 0.28;        // T2, ns
  double gamma = 1.0 / 1.4;     // 1/T1, ns^-1
  double gamma_star = 0.0;      // pure dephasing, ns^-1
  double wavelength_nm = 1302.5;

  // Two-photon overlap of the unmodulated photon, Gamma / (Gamma + 2 gamma*).
  double implied_indistinguishability() const noexcept {
    return gamma / (gamma + 2.0 * gamma_star);
  }
};

inline EmitterModel coherence_params(double tau_sp, double tau_coh, double wavelength_nm = 1302.5) {
  require(tau_sp > 0.0 && std::isfinite(tau_sp), "tau_sp must be positive");
  require(tau_coh > 0.0 && std::isfinite(tau_coh), "tau_coh must be positive");
  if (tau_coh > 2.0 * tau_sp * (1.0 + 1e-12))
    throw InvalidArgument("tau_coh above transform limit (T2 <= 2 T1 required)");
  EmitterModel m;
  m.tau_sp = tau_sp;
  m.tau_coh = tau_coh;
  m.gamma = 1.0 / tau_sp;
  m.gamma_star = std::max(0.0, 1.0 / tau_coh - 1.0 / (2.0 * tau_sp));
  m.wavelength_nm = wavelength_nm;
  return m;
}

// |psi(t)|^2 = Gamma exp(-Gamma (t - t_emit)) for t >= t_emit, zero before.
// The sample offset of t_emit is computed once, so shifting t_emit by whole
// steps shifts the samples exactly.
inline Wavepacket exponential_wavepacket(const EmitterModel& model, const TimeGrid& grid, double t_emit) {
  require(std::isfinite(t_emit), "t_emit must be finite");
  if (t_emit > grid.t_end()) throw InvalidArgument("grid ends before the emission time");
  const double dt = grid.dt();
  const double pos = (t_emit - grid.t_start()) / dt;
  long first = static_cast<long>(std::ceil(pos - 1e-9));
  if (first < 0) first = 0;
  double frac = grid.time(static_cast<std::size_t>(first)) - t_emit;
  if (std::abs(frac) < 1e-9 * dt) frac = 0.0;

  const double amp0 = std::sqrt(model.gamma);
  std::vector<double> mag(grid.size(), 0.0);
  for (std::size_t k = static_cast<std::size_t>(first); k < grid.size(); ++k) {
    const double elapsed = static_cast<double>(k - static_cast<std::size_t>(first)) * dt + frac;
    mag[k] = amp0 * std::exp(-0.5 * model.gamma * elapsed);
  }
  return Wavepacket(grid, std::move(mag));
}

// Seed for trajectory / cycle `index` of an ensemble.
constexpr std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return seed + index;
}

// Engines seeded with neighbouring integers produce visibly correlated
// streams, so the seed goes through the SplitMix64 finalizer first.
inline std::mt19937_64 make_engine(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return std::mt19937_64(z ^ (z >> 31));
}

struct PhaseTrajectory {
  TimeGrid grid;
  std::vector<double> phase;  // rad, phase[0] == 0
  std::uint64_t seed = 0;
};

// Wiener phase: independent Gaussian increments of variance 2 gamma* dt, so
// that <exp(i(phi(t+tau) - phi(t)))> = exp(-gamma* |tau|).
inline PhaseTrajectory sample_phase_trajectory(const EmitterModel& model, const TimeGrid& grid,
                                               std::uint64_t seed) {
  require(model.gamma_star >= 0.0, "gamma_star must be non-negative");
  PhaseTrajectory traj{grid, std::vector<double>(grid.size(), 0.0), seed};
  if (model.gamma_star == 0.0) return traj;
  auto rng = make_engine(seed);
  std::normal_distribution<double> step(0.0, std::sqrt(2.0 * model.gamma_star * grid.dt()));
  for (std::size_t k = 1; k < grid.size(); ++k) traj.phase[k] = traj.phase[k - 1] + step(rng);
  return traj;
}

inline Wavepacket dephase(const Wavepacket& psi, const PhaseTrajectory& traj) {
  require(psi.grid() == traj.grid, "phase trajectory grid does not match wavepacket");
  return psi.with_added_phase(traj.phase);
}

}  // namespace qdshape
