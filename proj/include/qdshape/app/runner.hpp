#pragma once

// Scenario execution: generate -> modulate -> detect -> histogram -> fit,
// then CSV, SVG and report output. All outputs except the duration line of
// report.txt depend only on the scenario and its seed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qdshape/analyze.hpp"
#include "qdshape/app/plot.hpp"
#include "qdshape/app/scenario.hpp"
#include "qdshape/csv.hpp"
#include "qdshape/detect.hpp"
#include "qdshape/emitter.hpp"
#include "qdshape/eomod.hpp"
#include "qdshape/fit.hpp"

namespace qdshape::app {

struct TraceResult {
  std::string label;
  bool modulated = false;
  bool inverted = false;
  double delay = 0.0;         // drive delay from the scenario, ns
  double center = 0.0;        // envelope center in gate time, ns
  double optical_fwhm = 0.0;  // configured, ns
  std::uint64_t gated = 0;
  Histogram histogram;
  HistogramExpectation expected;
  std::optional<FitResult> fit;           // fit of the MC histogram
  std::optional<FitResult> expected_fit;  // same fit on the noise-free expectation
  std::string fit_error;
  double fraction = 0.0;        // norm of the modulated field
  double peak_intensity = 0.0;  // jitter-free max of |psi'|^2, ns^-1
  double env_min = 0.0, env_max = 0.0, env_floor = 0.0;
  double dip_ratio = 0.0;  // notch photons: counts at the notch / unmodulated expectation there
};

struct RunReport {
  std::string name;
  ScenarioMode mode = ScenarioMode::photon;
  std::uint64_t seed = 0;
  std::uint64_t n_pulses = 0;
  std::string out_dir;
  std::vector<std::string> files;
  std::vector<TraceResult> traces;
  std::vector<TradeoffRow> tradeoff;
  std::vector<std::pair<double, std::vector<TradeoffRow>>> tradeoff_compare;  // by tau_coh
  std::optional<ChainCalibration> calibration;
  std::vector<std::string> notes;
  std::vector<std::string> warnings;
  double seconds = 0.0;

  const TraceResult& trace(const std::string& label) const {
    for (const auto& t : traces)
      if (t.label == label) return t;
    throw Error("run report has no trace '" + label + "'");
  }

  std::string text() const;
};

namespace detail {

inline std::string pm(const FitResult& r, const std::string& p, double scale = 1.0) {
  return fmt_num(r.value(p) * scale) + " +/- " + fmt_num(r.ci95(p) * scale);
}

inline std::string db(double ratio) { return std::isfinite(ratio) && ratio > 0 ? fmt_num(10.0 * std::log10(ratio)) : "inf"; }

inline std::string fit_line(const TraceResult& t) {
  if (!t.fit) return t.fit_error.empty() ? "" : "fit failed: " + t.fit_error;
  const auto& f = *t.fit;
  std::string s = to_string(f.model);
  if (f.model == FitModel::exponential) {
    s += ": tau = " + pm(f, "tau") + " ns, amplitude = " + pm(f, "amplitude") + ", baseline = " + pm(f, "baseline");
  } else {
    s += ": fwhm = " + pm(f, "fwhm", 1000.0) + " ps";
    if (f.has("fwhm_deconvolved")) s += ", deconvolved = " + pm(f, "fwhm_deconvolved", 1000.0) + " ps";
    s += ", center = " + pm(f, "center") + " ns, height = " + pm(f, "height");
  }
  s += ", chi2/dof = " + fmt_num(f.residual_norm) + (f.converged ? "" : " (not converged)");
  return s;
}

// Bins whose centers lie in [lo, hi].
inline void window(const Histogram& h, const HistogramExpectation& e, double lo, double hi, std::vector<double>& t,
                   std::vector<double>& y, std::vector<double>& ye) {
  for (std::size_t j = 0; j < h.size(); ++j) {
    const double c = h.bin_center(j);
    if (c < lo || c > hi) continue;
    t.push_back(c);
    y.push_back(static_cast<double>(h.counts[j]));
    ye.push_back(e.expected[j]);
  }
}

class Runner {
 public:
  Runner(const Scenario& s, std::string out_dir) : s_(s), out_(std::move(out_dir)) {
    rep_.name = s.name;
    rep_.mode = s.mode;
    rep_.seed = s.seed;
    rep_.n_pulses = s.timing.n_pulses;
    rep_.out_dir = out_;
    rep_.warnings = s.warnings;
  }

  RunReport run() {
    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(out_);
    switch (s_.mode) {
      case ScenarioMode::photon: photon(); break;
      case ScenarioMode::laser: laser(); break;
      case ScenarioMode::tradeoff: tradeoff(); break;
    }
    rep_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto report = path("report.txt");
    rep_.files.push_back(report);
    write_text_file(report, rep_.text());
    return rep_;
  }

 private:
  std::string path(const std::string& file) const { return (std::filesystem::path(out_) / file).string(); }

  void write(const std::string& file, const std::string& content) {
    const auto p = path(file);
    write_text_file(p, content);
    rep_.files.push_back(p);
  }

  template <class Fn>
  void write_csv(const std::string& file, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write(file, os.str());
  }

  TransmissionEnvelope envelope(const DriveSpec& d, const TimeGrid& grid, double center) const {
    const EomParams p = drive_params(s_, d);
    DriveWaveform w;
    if (d.shape == DriveShape::gaussian || d.shape == DriveShape::inverted_gaussian) {
      w = gaussian_drive(p, d.v_peak, d.optical_fwhm, center, d.inverted, d.predistort);
    } else {
      w.shape = d.shape;
      w.v_peak = d.v_peak;
      w.fwhm = d.optical_fwhm;
      w.delay = center;
      w.points = d.points;
    }
    return mz_transmission(w, p, grid);
  }

  // MC detection of one field plus its noise-free expectation.
  void detect(TraceResult& tr, const Wavepacket& psi, std::uint64_t n_pulses, std::size_t index) {
    TimingConfig cfg = s_.timing;
    cfg.n_pulses = n_pulses;
    const auto sched = schedule_events(cfg);
    tr.gated = sched.gated_count();
    // Hashed so that nearby scenario seeds do not replay shifted cycle streams.
    const auto seed = make_engine(derived_seed(s_.seed, static_cast<std::uint64_t>(index) << 40))();
    const auto stamps = detect_mc(psi, s_.detector, sched, seed);
    tr.histogram = histogram(std::span<const Timestamp>(stamps), s_.analysis.bin_width, cfg.t_gate, tr.gated);
    tr.expected = analytic_histogram(psi, s_.detector, tr.gated, s_.analysis.bin_width, cfg.t_gate);
    tr.fraction = norm(psi);
    for (std::size_t k = 0; k < psi.size(); ++k) tr.peak_intensity = std::max(tr.peak_intensity, psi.intensity(k));
    if (s_.analysis.write_timestamps)
      write_csv(tr.label + "_timestamps.csv", [&](std::ostream& os) { write_timestamps_csv(os, stamps); });
    write_csv(tr.label + "_histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, tr.histogram); });
    write_csv(tr.label + "_expected.csv", [&](std::ostream& os) { write_expectation_csv(os, tr.expected); });
  }

  void record_envelope(TraceResult& tr, const TransmissionEnvelope& env) {
    const auto v = env.values();
    tr.env_min = *std::min_element(v.begin(), v.end());
    tr.env_max = *std::max_element(v.begin(), v.end());
    tr.env_floor = env.floor();
    write_csv(tr.label + "_envelope.csv", [&](std::ostream& os) { write_envelope_csv(os, env); });
  }

  void write_fit(TraceResult& tr) {
    if (!tr.fit) return;
    write_csv(tr.label + "_fit.txt", [&](std::ostream& os) { write_fit_text(os, *tr.fit); });
  }

  void gaussian_fit(TraceResult& tr, double lo, double hi) {
    std::vector<double> t, y, ye;
    window(tr.histogram, tr.expected, lo, hi, t, y, ye);
    const GaussianFitOptions opt{.jitter_fwhm = s_.detector.jitter_fwhm, .max_iter = 2000};
    try {
      tr.fit = fit_gaussian(t, y, tr.inverted, opt);
    } catch (const Error& e) {
      tr.fit_error = e.what();
      rep_.warnings.push_back(tr.label + ": " + e.what());
    }
    try {
      tr.expected_fit = fit_gaussian(t, ye, tr.inverted, opt);
    } catch (const Error& e) {
      rep_.warnings.push_back(tr.label + " (expected counts): " + e.what());
    }
  }

  void photon() {
    const auto& a = s_.analysis;
    const auto grid = make_time_grid(a.arrival, s_.timing.t_gate, a.dt);
    const auto psi0 = exponential_wavepacket(s_.emitter, grid, a.arrival);
    const double skip = a.tail_skip_sigmas * s_.detector.jitter_sigma();
    std::size_t index = 0;
    std::optional<HistogramExpectation> unmod_expected;

    if (a.include_unmodulated) {
      // Pulse generator off, DC bias at maximum transmission.
      TraceResult tr;
      tr.label = "unmodulated";
      const auto env = TransmissionEnvelope::constant(grid, s_.eom.t_max);
      const auto psi = apply_modulation(psi0, env, 0.0);
      detect(tr, psi, s_.timing.n_pulses, index++);
      try {
        tr.fit = fit_exponential(tr.histogram, {.start_after_peak = skip});
      } catch (const Error& e) {
        tr.fit_error = e.what();
        rep_.warnings.push_back(tr.label + ": " + e.what());
      }
      try {
        tr.expected_fit = fit_exponential(histogram_centers(tr.histogram), tr.expected.expected, {.start_after_peak = skip});
      } catch (const Error& e) {
        rep_.warnings.push_back(tr.label + " (expected counts): " + e.what());
      }
      write_fit(tr);
      unmod_expected = tr.expected;
      rep_.traces.push_back(std::move(tr));
    }

    for (const auto& d : s_.drives) {
      TraceResult tr;
      tr.label = d.label;
      tr.modulated = true;
      tr.inverted = d.inverted;
      tr.delay = d.delay;
      tr.optical_fwhm = d.optical_fwhm;
      tr.center = a.arrival + s_.timing.delta_t_mod + d.delay;
      const auto env = envelope(d, grid, tr.center);
      record_envelope(tr, env);
      const auto psi = apply_modulation(psi0, env, 0.0);
      detect(tr, psi, s_.timing.n_pulses, index++);
      if (!d.inverted) {
        const double hw = a.peak_fit_halfwidth > 0.0 ? a.peak_fit_halfwidth : 1.5 * d.optical_fwhm;
        // Bins before the emission hold only jitter spill-over.
        const double lo = std::max(tr.center - hw, a.arrival - 2.0 * s_.detector.jitter_sigma());
        gaussian_fit(tr, lo, tr.center + hw);
        write_fit(tr);
      } else {
        // Reference: the unmodulated photon at full transmission, same statistics.
        const auto ref = unmod_expected
                             ? *unmod_expected
                             : analytic_histogram(apply_modulation(psi0, TransmissionEnvelope::constant(grid, s_.eom.t_max), 0.0),
                                                  s_.detector, tr.gated, a.bin_width, s_.timing.t_gate);
        const double hw = std::max(0.25 * d.optical_fwhm, 0.5 * a.bin_width);
        double got = 0.0, want = 0.0;
        for (std::size_t j = 0; j < tr.histogram.size(); ++j) {
          if (std::abs(tr.histogram.bin_center(j) - tr.center) > hw) continue;
          got += static_cast<double>(tr.histogram.counts[j]);
          want += ref.expected[j];
        }
        tr.dip_ratio = want > 0.0 ? got / want : 0.0;
      }
      rep_.traces.push_back(std::move(tr));
    }
    photon_notes();
    plots();
  }

  void photon_notes() {
    const TraceResult* first = nullptr;
    for (const auto& t : rep_.traces)
      if (t.modulated && !t.inverted && t.fit) {
        first = &t;
        break;
      }
    if (first && first->expected_fit) {
      rep_.notes.push_back("peak contour (heights relative to the first upright drive, ideal exp(-delay/" +
                           fmt_num(s_.tau_sp) + " ns)):");
      for (const auto& t : rep_.traces) {
        if (!t.modulated || t.inverted || !t.fit || !t.expected_fit) continue;
        const double dd = t.delay - first->delay;
        rep_.notes.push_back("  " + t.label + ": delay " + fmt_num(t.delay) + " ns, mc " +
                             fmt_num(t.fit->value("height") / first->fit->value("height")) + ", expected " +
                             fmt_num(t.expected_fit->value("height") / first->expected_fit->value("height")) +
                             ", jitter-free " + fmt_num(t.peak_intensity / first->peak_intensity) + ", ideal " +
                             fmt_num(std::exp(-dd / s_.tau_sp)) + ", mc/expected height " +
                             fmt_num(t.fit->value("height") / t.expected_fit->value("height")));
      }
    }
    for (const auto& t : rep_.traces) {
      if (!t.inverted) continue;
      rep_.notes.push_back("notch " + t.label + ": center " + fmt_num(t.center) + " ns, counts at notch / unmodulated = " +
                           fmt_num(t.dip_ratio) + ", envelope min " + fmt_num(t.env_min) + " (floor " +
                           fmt_num(t.env_floor) + "), on/off " + db(t.env_max / t.env_min) + " dB");
    }
  }

  void laser() {
    const auto& a = s_.analysis;
    const auto grid = make_time_grid(a.arrival, s_.timing.t_gate, a.dt);
    std::vector<double> mag(grid.size(), 0.0);
    const double level = 1.0 / std::sqrt(a.cw_window);
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (grid.time(k) <= a.arrival + a.cw_window + 1e-9 * a.dt) mag[k] = level;
    const Wavepacket cw(grid, std::move(mag));
    std::size_t index = 0;
    for (const auto& d : s_.drives) {
      TraceResult tr;
      tr.label = d.label;
      tr.modulated = true;
      tr.inverted = d.inverted;
      tr.delay = d.delay;
      tr.optical_fwhm = d.optical_fwhm;
      tr.center = a.arrival + 0.5 * a.cw_window + d.delay;
      const auto env = envelope(d, grid, tr.center);
      record_envelope(tr, env);
      const auto psi = apply_modulation(cw, env, 0.0);
      std::uint64_t pulses = s_.timing.n_pulses;
      if (a.target_counts > 0) {
        const double per_gate = s_.detector.efficiency * std::min(1.0, norm(psi));
        if (!(per_gate > 0.0)) throw Error(d.label + ": no light reaches the detector");
        const auto gated = static_cast<std::uint64_t>(std::ceil(static_cast<double>(a.target_counts) / per_gate));
        pulses = gated * static_cast<std::uint64_t>(s_.timing.gate_divider);
        rep_.warnings.push_back(d.label + ": n_pulses set to " + std::to_string(pulses) + " by analysis.target_counts = " +
                                std::to_string(a.target_counts));
      }
      detect(tr, psi, pulses, index++);
      gaussian_fit(tr, a.arrival + a.fit_margin, a.arrival + a.cw_window - a.fit_margin);
      write_fit(tr);
      std::string line = "calibration " + tr.label + ": configured " + fmt_num(d.optical_fwhm * 1000.0) + " ps, " +
                         std::to_string(tr.histogram.total_detected) + " counts";
      if (tr.fit && tr.fit->has("fwhm_deconvolved"))
        line += ", deconvolved fwhm " + pm(*tr.fit, "fwhm_deconvolved", 1000.0) + " ps";
      line += ", envelope on/off " + db(tr.env_max / tr.env_min) + " dB";
      rep_.notes.push_back(line);
      rep_.traces.push_back(std::move(tr));
    }
    plots();
  }

  void tradeoff() {
    const auto& a = s_.analysis;
    TradeoffOptions opt;
    opt.eom = s_.eom;
    opt.dt = a.dt;
    opt.horizon_lifetimes = a.horizon_lifetimes;
    opt.objective = a.objective;
    const double rep = s_.rep_rate_hz();
    const EfficiencyChain unit{{{"unit", 1.0}}};

    auto rows = tradeoff_sweep(s_.emitter, a.taus, rep, unit, opt);
    EfficiencyChain chain{a.chain};
    if (a.chain.empty()) {
      double fraction = -1.0;
      for (const auto& r : rows)
        if (std::abs(r.tau_mod - a.calibrate_tau) <= 1e-12 * a.calibrate_tau) fraction = r.transmitted_fraction;
      if (fraction < 0.0) fraction = tradeoff_row(s_.emitter, a.calibrate_tau, rep, unit, opt).transmitted_fraction;
      rep_.calibration = calibrate_chain(a.target_rate_hz, rep, fraction, a.calibrate_tau);
      chain = rep_.calibration->chain;
      rep_.notes.push_back("efficiency chain calibration: " + rep_.calibration->derivation);
    } else {
      chain.validate();
      std::string f;
      for (const auto& [k, v] : chain.factors) f += (f.empty() ? "" : " * ") + k + " " + fmt_num(v);
      rep_.notes.push_back("efficiency chain: " + f + " = " + fmt_num(chain.product()));
    }
    for (auto& r : rows) r.rate = rep * chain.product() * r.transmitted_fraction;
    rep_.tradeoff = rows;
    write_csv("tradeoff.csv", [&](std::ostream& os) { write_tradeoff_csv(os, rows); });
    for (const auto& r : rows)
      rep_.notes.push_back("tau_mod " + (std::isinf(r.tau_mod) ? std::string("inf") : fmt_num(r.tau_mod)) +
                           " ns: delay " + fmt_num(r.delay_opt) + " ns, indistinguishability " +
                           fmt_num(r.indist_exact) + " (simple ratio " + fmt_num(r.indist_simple) + "), fraction " +
                           fmt_num(r.transmitted_fraction) + ", rate " + fmt_num(r.rate) + " /s");

    for (double tc : a.compare_tau_coh) {
      const auto model = coherence_params(s_.tau_sp, tc, s_.wavelength_nm);
      auto alt = tradeoff_sweep(model, a.taus, rep, chain, opt);
      write_csv("tradeoff_tcoh_" + fmt_num(tc) + ".csv", [&](std::ostream& os) { write_tradeoff_csv(os, alt); });
      rep_.tradeoff_compare.emplace_back(tc, std::move(alt));
    }
    plots();
  }

  void plots() {
    std::vector<std::string> csvs, hists;
    for (const auto& f : rep_.files) {
      const auto p = std::filesystem::path(f);
      if (p.extension() != ".csv") continue;
      const auto stem = p.stem().string();
      if (stem.ends_with("_timestamps") || stem.ends_with("_expected") || stem.ends_with("_envelope")) continue;
      csvs.push_back(f);
      if (stem.ends_with("_histogram")) hists.push_back(f);
    }
    for (const auto& f : emit_plots(csvs, out_, false)) rep_.files.push_back(f);
    if (hists.size() > 1)
      for (const auto& f : emit_plots(hists, out_, true, "overlay")) rep_.files.push_back(f);
  }

  const Scenario& s_;
  std::string out_;
  RunReport rep_;
};

}  // namespace detail

inline std::string RunReport::text() const {
  std::ostringstream os;
  os << "scenario: " << name << "\nmode: " << to_string(mode) << "\nseed: " << seed << "\n";
  if (mode != ScenarioMode::tradeoff) os << "n_pulses: " << n_pulses << "\n";
  os << "output directory: " << out_dir << "\n";
  if (!traces.empty()) {
    os << "\ntraces:\n";
    for (const auto& t : traces) {
      os << "  " << t.label << ": " << t.gated << " gated cycles, " << t.histogram.total_detected
         << " counts, transmitted fraction " << fmt_num(t.fraction) << "\n";
      const auto f = detail::fit_line(t);
      if (!f.empty()) os << "    " << f << "\n";
    }
  }
  if (!notes.empty()) {
    os << "\nresults:\n";
    for (const auto& n : notes) os << "  " << n << "\n";
  }
  os << "\nfiles:\n";
  for (const auto& f : files) os << "  " << f << "\n";
  os << "\nwarnings:" << (warnings.empty() ? " none" : "") << "\n";
  for (const auto& w : warnings) os << "  " << w << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", seconds);
  os << "\nduration_s: " << buf << "\n";
  return os.str();
}

inline RunReport run_scenario(const Scenario& s, const std::string& out_dir) {
  return detail::Runner(s, out_dir).run();
}

inline RunReport run_scenario(const std::string& config_path, const std::string& out_dir) {
  return run_scenario(load_scenario_file(config_path), out_dir);
}

}  // namespace qdshape::app
