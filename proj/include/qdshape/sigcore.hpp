#pragma once

// Uniform time grids and the sampled signals that live on them.
//
// Every optical quantity in the library (photon amplitudes, modulator
// transmission, detection densities) is carried on a TimeGrid with a fixed
// step. Times are in nanoseconds throughout.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qdshape/error.hpp"

namespace qdshape {

class TimeGrid {
 public:
  // Builds a grid on [t_start, t_end] with step dt. When the span is not an
  // integral number of steps the end is snapped down to the last full step
  // and snapped() reports it.
  static TimeGrid make(double t_start, double t_end, double dt) {
    require(std::isfinite(t_start) && std::isfinite(t_end) && std::isfinite(dt),
            "time grid bounds must be finite");
    require(dt > 0.0, "time grid step must be positive (dt = " + std::to_string(dt) + ")");
    require(t_end > t_start, "time grid end must exceed start");
    const double ratio = (t_end - t_start) / dt;
    const auto steps = static_cast<std::size_t>(std::floor(ratio + 1e-9));
    TimeGrid g;
    g.t_start_ = t_start;
    g.dt_ = dt;
    g.n_ = steps + 1;
    g.requested_end_ = t_end;
    g.snapped_ = std::abs(ratio - static_cast<double>(steps)) > 1e-9;
    return g;
  }

  // Grid of n samples starting at t_start.
  static TimeGrid with_samples(double t_start, double dt, std::size_t n) {
    require(n >= 2, "time grid needs at least two samples");
    return make(t_start, t_start + static_cast<double>(n - 1) * dt, dt);
  }

  double t_start() const noexcept { return t_start_; }
  double t_end() const noexcept { return time(n_ - 1); }
  double dt() const noexcept { return dt_; }
  std::size_t size() const noexcept { return n_; }
  double requested_end() const noexcept { return requested_end_; }
  bool snapped() const noexcept { return snapped_; }

  double time(std::size_t k) const noexcept {
    return t_start_ + static_cast<double>(k) * dt_;
  }

  std::vector<double> times() const {
    std::vector<double> t(n_);
    for (std::size_t k = 0; k < n_; ++k) t[k] = time(k);
    return t;
  }

  // Trapezoid quadrature weight of sample k, in units of dt.
  double trapezoid_weight(std::size_t k) const noexcept {
    return (k == 0 || k + 1 == n_) ? 0.5 : 1.0;
  }

  // Same step, and start times differing by a whole number of steps.
  bool aligned_with(const TimeGrid& other) const noexcept {
    if (std::abs(dt_ - other.dt_) > 1e-12 * dt_) return false;
    const double shift = (other.t_start_ - t_start_) / dt_;
    return std::abs(shift - std::round(shift)) < 1e-6;
  }

  // Whole-step offset of other's first sample relative to ours.
  long offset_steps(const TimeGrid& other) const noexcept {
    return std::lround((other.t_start_ - t_start_) / dt_);
  }

  bool operator==(const TimeGrid& o) const noexcept {
    return t_start_ == o.t_start_ && dt_ == o.dt_ && n_ == o.n_;
  }

 private:
  TimeGrid() = default;

  double t_start_ = 0.0;
  double dt_ = 1.0;
  std::size_t n_ = 0;
  double requested_end_ = 0.0;
  bool snapped_ = false;
};

inline TimeGrid make_time_grid(double t_start, double t_end, double dt) {
  return TimeGrid::make(t_start, t_end, dt);
}

// Trapezoid integral of uniformly spaced samples.
inline double trapezoid(std::span<const double> y, double dt) noexcept {
  if (y.size() < 2) return 0.0;
  double s = 0.5 * (y.front() + y.back());
  for (std::size_t k = 1; k + 1 < y.size(); ++k) s += y[k];
  return s * dt;
}

class IntensityTrace {
 public:
  IntensityTrace(TimeGrid grid, std::vector<double> value)
      : grid_(std::move(grid)), value_(std::move(value)) {
    require(value_.size() == grid_.size(), "intensity trace length does not match its grid");
    for (double v : value_)
      require(std::isfinite(v) && v >= 0.0, "intensity trace values must be finite and non-negative");
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return value_; }
  double operator[](std::size_t k) const noexcept { return value_[k]; }
  std::size_t size() const noexcept { return value_.size(); }

  double integral() const noexcept { return trapezoid(value_, grid_.dt()); }

 private:
  TimeGrid grid_;
  std::vector<double> value_;
};

// Complex single-photon amplitude psi(t) in ns^-1/2, stored in polar form so
// that phase-only operations leave |psi|^2 bit-identical.
class Wavepacket {
 public:
  Wavepacket(TimeGrid grid, std::vector<double> magnitude, std::vector<double> phase = {})
      : grid_(std::move(grid)), magnitude_(std::move(magnitude)), phase_(std::move(phase)) {
    if (phase_.empty()) phase_.assign(magnitude_.size(), 0.0);
    require(magnitude_.size() == grid_.size() && phase_.size() == grid_.size(),
            "wavepacket length does not match its grid");
    for (double m : magnitude_)
      require(std::isfinite(m) && m >= 0.0, "wavepacket magnitude must be finite and non-negative");
    for (double p : phase_) require(std::isfinite(p), "wavepacket phase must be finite");
  }

  static Wavepacket from_complex(TimeGrid grid, std::span<const std::complex<double>> amp) {
    std::vector<double> mag(amp.size()), ph(amp.size());
    for (std::size_t k = 0; k < amp.size(); ++k) {
      mag[k] = std::abs(amp[k]);
      ph[k] = std::arg(amp[k]);
    }
    return Wavepacket(std::move(grid), std::move(mag), std::move(ph));
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return magnitude_.size(); }
  std::span<const double> magnitude() const noexcept { return magnitude_; }
  std::span<const double> phase() const noexcept { return phase_; }

  std::complex<double> amplitude(std::size_t k) const {
    return std::polar(magnitude_[k], phase_[k]);
  }

  double intensity(std::size_t k) const noexcept { return magnitude_[k] * magnitude_[k]; }

  IntensityTrace intensity() const {
    std::vector<double> v(size());
    for (std::size_t k = 0; k < size(); ++k) v[k] = intensity(k);
    return IntensityTrace(grid_, std::move(v));
  }

  // Multiplies by exp(i*phi). Magnitudes are untouched.
  Wavepacket with_added_phase(std::span<const double> phi) const {
    require(phi.size() == size(), "phase length does not match wavepacket");
    std::vector<double> ph(phase_);
    for (std::size_t k = 0; k < ph.size(); ++k) ph[k] += phi[k];
    return Wavepacket(grid_, magnitude_, std::move(ph));
  }

  Wavepacket with_global_phase(double phi) const {
    std::vector<double> ph(phase_);
    for (double& p : ph) p += phi;
    return Wavepacket(grid_, magnitude_, std::move(ph));
  }

 private:
  TimeGrid grid_;
  std::vector<double> magnitude_;
  std::vector<double> phase_;
};

// Total detection probability, sum |psi|^2 dt by the trapezoid rule.
inline double norm(const Wavepacket& psi) noexcept {
  const auto& g = psi.grid();
  double s = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) s += g.trapezoid_weight(k) * psi.intensity(k);
  return s * g.dt();
}

// Full width at half maximum of the global peak, with linear interpolation
// between the outermost samples bracketing the half-max level.
inline double fwhm(std::span<const double> y, const TimeGrid& grid) {
  require(y.size() == grid.size(), "fwhm: value count does not match grid");
  const auto peak_it = std::max_element(y.begin(), y.end());
  const double peak = *peak_it;
  if (!(peak > 0.0)) throw Error("fwhm: no half-max crossings (trace has no positive peak)");
  const double half = 0.5 * peak;

  std::size_t first = 0;
  while (first < y.size() && y[first] < half) ++first;
  std::size_t last = y.size() - 1;
  while (last > 0 && y[last] < half) --last;
  if (first == 0 || last + 1 == y.size())
    throw Error("fwhm: no half-max crossings on both sides of the peak");

  const double dt = grid.dt();
  const double left = grid.time(first - 1) + (half - y[first - 1]) / (y[first] - y[first - 1]) * dt;
  const double right = grid.time(last) + (y[last] - half) / (y[last] - y[last + 1]) * dt;
  return right - left;
}

inline double fwhm(const IntensityTrace& trace) { return fwhm(trace.values(), trace.grid()); }

}  // namespace qdshape
