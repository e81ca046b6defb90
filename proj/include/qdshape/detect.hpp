#pragma once

// Master-clock scheduling, gated SPAD Monte Carlo and TCSPC histograms.
//
// Time inside a gated cycle is measured from the gate opening; wavepackets
// handed to the detector are expected on a grid in those coordinates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "qdshape/emitter.hpp"
#include "qdshape/error.hpp"
#include "qdshape/sigcore.hpp"

namespace qdshape {

struct TimingConfig {
  double t_rep = 20.0;         // ns, laser period (50 MHz)
  int gate_divider = 10;       // one gate every N laser pulses
  double t_gate = 50.0;        // ns, gate length
  double delta_t_mod = 0.0;    // ns, modulator trigger after excitation
  std::uint64_t n_pulses = 1'000'000;

  void validate() const {
    require(t_rep > 0.0 && std::isfinite(t_rep), "t_rep must be positive");
    require(gate_divider >= 1, "gate_divider must be >= 1");
    require(t_gate > 0.0 && std::isfinite(t_gate), "t_gate must be positive");
    require(std::isfinite(delta_t_mod), "delta_t_mod must be finite");
    require(n_pulses >= 1, "n_pulses must be >= 1");
  }
};

struct CycleRecord {
  std::uint64_t index;
  double excitation;   // ns
  double eom_trigger;  // ns
  double gate_open;    // ns
  double gate_close;   // ns
  bool gated;
};

// Deterministic cycle table, computed on demand.
class EventSchedule {
 public:
  explicit EventSchedule(TimingConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const TimingConfig& config() const noexcept { return cfg_; }
  std::uint64_t size() const noexcept { return cfg_.n_pulses; }

  bool gated(std::uint64_t k) const noexcept {
    return k % static_cast<std::uint64_t>(cfg_.gate_divider) == 0;
  }

  CycleRecord operator[](std::uint64_t k) const noexcept {
    const double t0 = static_cast<double>(k) * cfg_.t_rep;
    const bool g = gated(k);
    return {k, t0, t0 + cfg_.delta_t_mod, g ? t0 : 0.0, g ? t0 + cfg_.t_gate : 0.0, g};
  }

  std::uint64_t gated_count() const noexcept {
    const auto d = static_cast<std::uint64_t>(cfg_.gate_divider);
    return (cfg_.n_pulses + d - 1) / d;
  }

  double gate_rate_hz() const noexcept { return 1e9 / (cfg_.t_rep * cfg_.gate_divider); }

  template <class Fn>
  void for_each_gated(Fn&& fn) const {
    const auto d = static_cast<std::uint64_t>(cfg_.gate_divider);
    for (std::uint64_t k = 0; k < cfg_.n_pulses; k += d) fn((*this)[k]);
  }

 private:
  TimingConfig cfg_;
};

inline EventSchedule schedule_events(const TimingConfig& cfg) { return EventSchedule(cfg); }

constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

struct DetectorModel {
  double jitter_fwhm = 0.25;  // ns, Gaussian FWHM
  double efficiency = 1.0;
  double dark_rate = 0.0;     // counts per ns while the gate is open

  double jitter_sigma() const noexcept { return jitter_fwhm / kFwhmPerSigma; }

  void validate() const {
    require(jitter_fwhm >= 0.0 && std::isfinite(jitter_fwhm), "jitter_fwhm must be >= 0");
    require(efficiency >= 0.0 && efficiency <= 1.0, "efficiency must lie in [0, 1]");
    require(dark_rate >= 0.0 && std::isfinite(dark_rate), "dark_rate must be >= 0");
  }
};

struct Timestamp {
  std::uint64_t cycle;
  double t;  // ns from gate opening

  bool operator==(const Timestamp&) const = default;
};

// Inverse-CDF sampler of arrival times from |psi|^2 with trapezoid weights.
class ArrivalSampler {
 public:
  explicit ArrivalSampler(const Wavepacket& psi) : grid_(psi.grid()) {
    cumulative_.resize(psi.size());
    double s = 0.0;
    for (std::size_t k = 0; k < psi.size(); ++k) {
      s += grid_.trapezoid_weight(k) * psi.intensity(k);
      cumulative_[k] = s;
    }
    probability_ = s * grid_.dt();
  }

  double probability() const noexcept { return probability_; }

  template <class Rng>
  double sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, cumulative_.back());
    const double x = u(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
    if (it == cumulative_.end()) --it;
    return grid_.time(static_cast<std::size_t>(it - cumulative_.begin()));
  }

 private:
  TimeGrid grid_;
  std::vector<double> cumulative_;
  double probability_ = 0.0;
};

namespace detail {

template <class Rng>
bool detect_one(const ArrivalSampler& sampler, const DetectorModel& det, double t_gate, Rng& rng,
                double& out) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  bool hit = false;
  double best = 0.0;
  if (u01(rng) < det.efficiency * std::min(1.0, sampler.probability())) {
    const double arrival = sampler.sample(rng);
    if (arrival >= 0.0 && arrival < t_gate) {
      double t = arrival;
      if (det.jitter_fwhm > 0.0) t += std::normal_distribution<double>(0.0, det.jitter_sigma())(rng);
      hit = true;
      best = t;
    }
  }
  if (det.dark_rate > 0.0) {
    const auto n_dark = std::poisson_distribution<int>(det.dark_rate * t_gate)(rng);
    std::uniform_real_distribution<double> ut(0.0, t_gate);
    for (int i = 0; i < n_dark; ++i) {
      const double t = ut(rng);
      if (!hit || t < best) best = t;
      hit = true;
    }
  }
  out = best;
  return hit;
}

}  // namespace detail

// Monte Carlo gated detection. `provider(cycle)` returns the (modulated)
// wavepacket of a gated cycle; consecutive cycles returning the same object
// reuse its sampler. Each cycle draws from its own engine,
// make_engine(derived_seed(seed, cycle)), so results do not depend on the
// evaluation order.
template <class Provider>
std::vector<Timestamp> detect_mc(Provider&& provider, const DetectorModel& det,
                                 const EventSchedule& sched, std::uint64_t seed) {
  det.validate();
  std::vector<Timestamp> out;
  const Wavepacket* cached = nullptr;
  std::optional<ArrivalSampler> sampler;
  const double t_gate = sched.config().t_gate;
  sched.for_each_gated([&](const CycleRecord& rec) {
    const Wavepacket& psi = provider(rec.index);
    if (&psi != cached) {
      sampler.emplace(psi);
      cached = &psi;
    }
    auto rng = make_engine(derived_seed(seed, rec.index));
    double t;
    if (detail::detect_one(*sampler, det, t_gate, rng, t)) out.push_back({rec.index, t});
  });
  return out;
}

inline std::vector<Timestamp> detect_mc(const Wavepacket& psi, const DetectorModel& det,
                                        const EventSchedule& sched, std::uint64_t seed) {
  return detect_mc([&psi](std::uint64_t) -> const Wavepacket& { return psi; }, det, sched, seed);
}

// Bin index of t for bins [j w, (j+1) w). Shared by the counting and the
// expectation paths so edge samples land in the same bin.
inline long bin_index(double t, double bin_width) noexcept {
  return static_cast<long>(std::floor(t / bin_width + 1e-9));
}

struct Histogram {
  double bin_width = 0.05;
  std::vector<std::uint64_t> counts;
  std::uint64_t underflow = 0;
  std::uint64_t overflow = 0;
  std::uint64_t total_detected = 0;  // sum of counts
  std::uint64_t total_pulses = 0;    // gated cycles behind the data

  std::size_t size() const noexcept { return counts.size(); }
  double span() const noexcept { return bin_width * static_cast<double>(counts.size()); }
  double bin_start(std::size_t j) const noexcept { return bin_width * static_cast<double>(j); }
  double bin_center(std::size_t j) const noexcept { return bin_width * (static_cast<double>(j) + 0.5); }

  std::vector<double> bin_edges() const {
    std::vector<double> e(counts.size() + 1);
    for (std::size_t j = 0; j < e.size(); ++j) e[j] = bin_width * static_cast<double>(j);
    return e;
  }

  void add(double t) {
    const long j = bin_index(t, bin_width);
    if (j < 0) {
      ++underflow;
    } else if (static_cast<std::size_t>(j) >= counts.size()) {
      ++overflow;
    } else {
      ++counts[static_cast<std::size_t>(j)];
      ++total_detected;
    }
  }

  // Exact, order-independent accumulation of a partial histogram.
  Histogram& merge(const Histogram& other) {
    require(other.counts.size() == counts.size() && other.bin_width == bin_width,
            "cannot merge histograms with different binning");
    for (std::size_t j = 0; j < counts.size(); ++j) counts[j] += other.counts[j];
    underflow += other.underflow;
    overflow += other.overflow;
    total_detected += other.total_detected;
    total_pulses += other.total_pulses;
    return *this;
  }
};

inline Histogram empty_histogram(double bin_width, double span) {
  require(bin_width > 0.0 && std::isfinite(bin_width), "bin_width must be positive");
  require(span > 0.0 && std::isfinite(span), "histogram span must be positive");
  Histogram h;
  h.bin_width = bin_width;
  h.counts.assign(static_cast<std::size_t>(std::max(1L, std::lround(span / bin_width))), 0);
  return h;
}

inline Histogram histogram(std::span<const double> times, double bin_width, double span) {
  Histogram h = empty_histogram(bin_width, span);
  for (double t : times) h.add(t);
  h.total_pulses = times.size();
  return h;
}

inline Histogram histogram(std::span<const Timestamp> stamps, double bin_width, double span,
                           std::uint64_t total_pulses) {
  Histogram h = empty_histogram(bin_width, span);
  for (const auto& s : stamps) h.add(s.t);
  h.total_pulses = total_pulses;
  return h;
}

struct HistogramExpectation {
  double bin_width = 0.05;
  std::vector<double> expected;

  double bin_center(std::size_t j) const noexcept { return bin_width * (static_cast<double>(j) + 0.5); }
  double total() const noexcept {
    double s = 0.0;
    for (double e : expected) s += e;
    return s;
  }
};

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Noise-free expected counts: each grid sample carries its trapezoid share
// of |psi'|^2 and is spread over the bins by the Gaussian jitter kernel.
inline HistogramExpectation analytic_histogram(const Wavepacket& psi, const DetectorModel& det,
                                               std::uint64_t n_gated, double bin_width, double span) {
  det.validate();
  const Histogram shape = empty_histogram(bin_width, span);
  HistogramExpectation out{bin_width, std::vector<double>(shape.size(), 0.0)};
  const auto& g = psi.grid();
  const double scale = static_cast<double>(n_gated) * det.efficiency * g.dt();
  const double sigma = det.jitter_sigma();
  const long nb = static_cast<long>(out.expected.size());

  for (std::size_t k = 0; k < psi.size(); ++k) {
    const double p = g.trapezoid_weight(k) * psi.intensity(k) * scale;
    if (p == 0.0) continue;
    const double t = g.time(k);
    if (sigma == 0.0) {
      const long j = bin_index(t, bin_width);
      if (j >= 0 && j < nb) out.expected[static_cast<std::size_t>(j)] += p;
      continue;
    }
    const long lo = std::max(0L, bin_index(t - 9.0 * sigma, bin_width));
    const long hi = std::min(nb - 1, bin_index(t + 9.0 * sigma, bin_width));
    if (hi < lo) continue;
    double prev = normal_cdf((bin_width * static_cast<double>(lo) - t) / sigma);
    for (long j = lo; j <= hi; ++j) {
      const double next = normal_cdf((bin_width * static_cast<double>(j + 1) - t) / sigma);
      out.expected[static_cast<std::size_t>(j)] += p * (next - prev);
      prev = next;
    }
  }
  return out;
}

}  // namespace qdshape
