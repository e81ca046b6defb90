#pragma once

// Pulse generator and Mach-Zehnder intensity modulator.
//
// The modulator maps drive voltage to intensity transmission through
//   T(t) = floor + (t_max - floor) * sin^2(pi V(t) / (2 V_pi) + bias_phase)
// where floor = t_max * 10^(-extinction_db / 10). Gaussian drives are
// arcsine-predistorted by default so that a full-swing (V_peak = V_pi) pulse
// produces an exactly Gaussian optical envelope on top of the floor.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "qdshape/error.hpp"
#include "qdshape/sigcore.hpp"

namespace qdshape {

struct EomParams {
  double v_pi = 4.0;            // V
  double extinction_db = 20.0;  // on/off ratio; +inf gives an ideal zero floor
  double t_max = 1.0;           // peak intensity transmission
  double bias_phase = 0.0;      // rad; 0 = transmission null, pi/2 = maximum

  double floor() const noexcept {
    if (std::isinf(extinction_db)) return 0.0;
    return t_max * std::pow(10.0, -extinction_db / 10.0);
  }

  void validate() const {
    require(v_pi > 0.0 && std::isfinite(v_pi), "v_pi must be positive");
    require(extinction_db > 0.0, "extinction_db must be positive");
    require(t_max > 0.0 && t_max <= 1.0, "t_max must lie in (0, 1]");
    require(std::isfinite(bias_phase), "bias_phase must be finite");
  }
};

// Bias phase for upright pulses (null) and notches (maximum transmission).
constexpr double kBiasNull = 0.0;
constexpr double kBiasMax = std::numbers::pi / 2.0;

enum class DriveShape { gaussian, inverted_gaussian, square, piecewise };

inline std::string to_string(DriveShape s) {
  switch (s) {
    case DriveShape::gaussian: return "gaussian";
    case DriveShape::inverted_gaussian: return "inverted_gaussian";
    case DriveShape::square: return "square";
    case DriveShape::piecewise: return "piecewise";
  }
  return "unknown";
}

inline DriveShape parse_drive_shape(const std::string& s) {
  if (s == "gaussian") return DriveShape::gaussian;
  if (s == "inverted_gaussian") return DriveShape::inverted_gaussian;
  if (s == "square") return DriveShape::square;
  if (s == "piecewise") return DriveShape::piecewise;
  throw InvalidArgument("unknown drive shape '" + s + "'");
}

// Minimum electrical pulse width of the generator, ns.
constexpr double kMinPulseWidth = 0.3;

struct DriveWaveform {
  DriveShape shape = DriveShape::gaussian;
  double v_peak = 4.0;    // V
  double fwhm = 0.72;     // electrical FWHM, ns
  double delay = 0.0;     // pulse center relative to trigger, ns
  double baseline = 0.0;  // V
  bool predistort = true;
  // piecewise: (time relative to delay, volts), strictly increasing times
  std::vector<std::pair<double, double>> points;

  // Drive pulse shape in [0, 1] before predistortion.
  double profile(double t) const noexcept {
    const double x = t - delay;
    switch (shape) {
      case DriveShape::gaussian:
      case DriveShape::inverted_gaussian:
        return std::exp(-4.0 * std::numbers::ln2 * x * x / (fwhm * fwhm));
      case DriveShape::square:
        return std::abs(x) <= 0.5 * fwhm ? 1.0 : 0.0;
      case DriveShape::piecewise:
        break;
    }
    return 0.0;
  }

  double voltage(double t) const noexcept {
    if (shape == DriveShape::piecewise) {
      const double x = t - delay;
      if (points.empty() || x < points.front().first || x > points.back().first) return baseline;
      auto hi = std::upper_bound(points.begin(), points.end(), x,
                                 [](double v, const auto& p) { return v < p.first; });
      if (hi == points.end()) return baseline + points.back().second;
      auto lo = std::prev(hi);
      const double w = (x - lo->first) / (hi->first - lo->first);
      return baseline + lo->second + w * (hi->second - lo->second);
    }
    double g = profile(t);
    if (predistort && (shape == DriveShape::gaussian || shape == DriveShape::inverted_gaussian))
      g = 2.0 / std::numbers::pi * std::asin(std::sqrt(g));
    return baseline + v_peak * g;
  }

  DriveWaveform delayed_to(double new_delay) const {
    DriveWaveform d = *this;
    d.delay = new_delay;
    return d;
  }

  void validate() const {
    require(std::isfinite(v_peak) && std::isfinite(baseline) && std::isfinite(delay),
            "drive voltages and delay must be finite");
    if (shape == DriveShape::piecewise) {
      require(points.size() >= 2, "piecewise drive needs at least two points");
      for (std::size_t i = 1; i < points.size(); ++i)
        require(points[i].first > points[i - 1].first, "piecewise drive times must increase");
    } else {
      require(fwhm > 0.0 && std::isfinite(fwhm), "drive fwhm must be positive");
    }
  }
};

// Warnings for drives outside the generator/modulator bandwidth. These are
// advisory; short pulses remain usable for analysis.
inline std::vector<std::string> drive_warnings(const DriveWaveform& drive,
                                               double min_width = kMinPulseWidth) {
  std::vector<std::string> out;
  if (drive.shape != DriveShape::piecewise && drive.fwhm < min_width) {
    out.push_back("drive fwhm " + std::to_string(drive.fwhm) + " ns is below the " +
                  std::to_string(min_width) + " ns pulse generator limit");
  }
  return out;
}

class TransmissionEnvelope {
 public:
  TransmissionEnvelope(TimeGrid grid, std::vector<double> transmission, double floor, double t_max)
      : grid_(std::move(grid)), t_(std::move(transmission)), floor_(floor), t_max_(t_max) {
    require(t_.size() == grid_.size(), "envelope length does not match its grid");
    require(floor_ >= 0.0 && floor_ <= t_max_ && t_max_ <= 1.0, "envelope bounds invalid");
    for (double v : t_) require(v >= floor_ && v <= t_max_, "envelope sample outside [floor, t_max]");
  }

  static TransmissionEnvelope constant(const TimeGrid& grid, double value = 1.0) {
    return TransmissionEnvelope(grid, std::vector<double>(grid.size(), value), value, value);
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return t_; }
  double operator[](std::size_t k) const noexcept { return t_[k]; }
  std::size_t size() const noexcept { return t_.size(); }
  double floor() const noexcept { return floor_; }
  double t_max() const noexcept { return t_max_; }

  IntensityTrace trace() const { return IntensityTrace(grid_, t_); }

  // t_max + floor - T; turns a notch into a peak of the same width.
  IntensityTrace complement() const {
    std::vector<double> c(t_.size());
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = std::max(0.0, t_max_ + floor_ - t_[k]);
    return IntensityTrace(grid_, std::move(c));
  }

 private:
  TimeGrid grid_;
  std::vector<double> t_;
  double floor_;
  double t_max_;
};

inline double mz_transfer(double volts, const EomParams& p) noexcept {
  const double f = p.floor();
  const double s = std::sin(std::numbers::pi * volts / (2.0 * p.v_pi) + p.bias_phase);
  return std::clamp(f + (p.t_max - f) * s * s, f, p.t_max);
}

inline TransmissionEnvelope mz_transmission(const DriveWaveform& drive, const EomParams& params,
                                            const TimeGrid& grid) {
  params.validate();
  drive.validate();
  std::vector<double> t(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) t[k] = mz_transfer(drive.voltage(grid.time(k)), params);
  return TransmissionEnvelope(grid, std::move(t), params.floor(), params.t_max);
}

// Solves the electrical width of a Gaussian drive so that the optical
// envelope produced by mz_transmission has the requested FWHM. For an
// inverted drive the width refers to the notch, measured on t_max+floor-T.
inline DriveWaveform gaussian_drive(const EomParams& params, double v_peak, double fwhm_optical,
                                    double delay, bool inverted, bool predistort = true) {
  using std::numbers::pi;
  params.validate();
  require(fwhm_optical > 0.0 && std::isfinite(fwhm_optical), "optical fwhm must be positive");
  require(v_peak > 0.0, "v_peak must be positive");

  const double f = params.floor();
  const double tm = params.t_max;
  const double swing = 0.5 * pi * v_peak / params.v_pi;
  const double theta0 = params.bias_phase;
  const double theta1 = theta0 + swing;
  const double quarter = pi / 2.0;
  const double seg = std::floor(theta0 / quarter + 1e-12);
  if (std::floor((theta1 - 1e-12) / quarter) != seg)
    throw Error("transfer saturation: drive swing crosses a turning point of the sin^2 transfer");
  const bool rising = std::fmod(seg, 2.0) == 0.0;
  if (rising == inverted)
    throw Error(std::string("transfer saturation: bias produces a ") + (rising ? "peak" : "notch") +
                " but a " + (inverted ? "notch" : "peak") + " was requested");

  auto transfer = [&](double th) { return f + (tm - f) * std::sin(th) * std::sin(th); };
  double level;
  if (rising) {
    level = 0.5 * transfer(theta1);
    if (transfer(theta0) >= level) throw Error("transfer saturation: peak below twice the baseline");
  } else {
    const double c_peak = tm + f - transfer(theta1);
    level = tm + f - 0.5 * c_peak;
    if (tm + f - transfer(theta0) >= 0.5 * c_peak)
      throw Error("transfer saturation: notch depth below twice the baseline");
  }
  const double s = std::clamp((level - f) / (tm - f), 0.0, 1.0);
  const double base = std::floor(seg / 2.0) * pi;
  const double theta_half = rising ? base + std::asin(std::sqrt(s)) : base + pi - std::asin(std::sqrt(s));
  const double q = (theta_half - theta0) / swing;
  if (!(q > 0.0 && q < 1.0)) throw Error("transfer saturation: half level not reachable by the drive");
  const double g = predistort ? std::pow(std::sin(0.5 * pi * q), 2) : q;

  // g(t) = exp(-4 ln2 t^2 / w^2) crosses g at t = (w/2) sqrt(ln(1/g)/ln2).
  const double w_elec = fwhm_optical * std::sqrt(std::numbers::ln2 / std::log(1.0 / g));

  DriveWaveform d;
  d.shape = inverted ? DriveShape::inverted_gaussian : DriveShape::gaussian;
  d.v_peak = v_peak;
  d.fwhm = w_elec;
  d.delay = delay;
  d.predistort = predistort;
  return d;
}

struct QuantizedDelay {
  double value;
  long steps;
  bool snapped;
};

inline QuantizedDelay quantize_delay(double delay, double dt) {
  const long steps = std::lround(delay / dt);
  const double value = static_cast<double>(steps) * dt;
  return {value, steps, std::abs(value - delay) > 1e-9 * dt};
}

// psi'(t) = sqrt(T(t - delta_t_mod)) psi(t); the delay is snapped to whole
// grid steps. Outside the envelope grid the nearest edge value applies.
inline Wavepacket apply_modulation(const Wavepacket& psi, const TransmissionEnvelope& env,
                                   double delta_t_mod) {
  if (!env.grid().aligned_with(psi.grid()))
    throw InvalidArgument("envelope grid is not aligned with the wavepacket grid");
  const long shift = quantize_delay(delta_t_mod, psi.grid().dt()).steps;
  const long offset = env.grid().offset_steps(psi.grid());
  const long n_env = static_cast<long>(env.size());

  std::vector<double> mag(psi.magnitude().begin(), psi.magnitude().end());
  for (std::size_t k = 0; k < mag.size(); ++k) {
    const long j = std::clamp(static_cast<long>(k) + offset - shift, 0L, n_env - 1);
    mag[k] *= std::sqrt(env[static_cast<std::size_t>(j)]);
  }
  return Wavepacket(psi.grid(), std::move(mag),
                    std::vector<double>(psi.phase().begin(), psi.phase().end()));
}

}  // namespace qdshape
