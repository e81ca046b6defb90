#pragma once

// Scenario files: a YAML block-mapping subset with the sections name, mode,
// seed, emitter, eom, drives, timing, detector and analysis. Unknown keys
// are rejected so that typos surface as named errors.

#include <yaml-cpp/yaml.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qdshape/analyze.hpp"
#include "qdshape/csv.hpp"
#include "qdshape/detect.hpp"
#include "qdshape/emitter.hpp"
#include "qdshape/eomod.hpp"
#include "qdshape/error.hpp"

namespace qdshape::app {

enum class ScenarioMode { photon, laser, tradeoff };

inline std::string to_string(ScenarioMode m) {
  switch (m) {
    case ScenarioMode::photon: return "photon";
    case ScenarioMode::laser: return "laser";
    case ScenarioMode::tradeoff: return "tradeoff";
  }
  return "unknown";
}

struct DriveSpec {
  std::string label;
  std::string key;  // config path, for error messages
  DriveShape shape = DriveShape::gaussian;
  double v_peak = 4.0;         // V
  double optical_fwhm = 0.72;  // ns; pulse width for square drives
  double delay = 0.0;          // ns after the photon arrival (laser: window center)
  bool inverted = false;
  bool predistort = true;
  std::optional<double> bias;  // rad, overrides eom.bias
  std::vector<std::pair<double, double>> points;
};

struct AnalysisSpec {
  double bin_width = 0.05;   // ns
  double dt = 0.001;         // ns
  double arrival = 1.0;      // ns from gate opening to emission / cw window start
  bool include_unmodulated = true;
  double tail_skip_sigmas = 3.0;
  bool write_timestamps = true;
  std::uint64_t target_counts = 0;  // laser mode: size each histogram to this many counts
  double cw_window = 10.0;          // ns
  double fit_margin = 0.5;          // ns trimmed from each cw window edge before fitting
  double peak_fit_halfwidth = 0.0;  // ns around the envelope center; 0 = 1.5 optical FWHM
  std::vector<double> taus;         // tradeoff sweep, ns (inf allowed)
  std::optional<double> rep_rate_hz;
  double target_rate_hz = 6.8e4;
  double calibrate_tau = 0.14;
  std::vector<std::pair<std::string, double>> chain;  // empty: calibrate
  DelayObjective objective = DelayObjective::fraction;
  std::vector<double> compare_tau_coh;
  double horizon_lifetimes = 10.0;
};

struct Scenario {
  std::string name = "scenario";
  ScenarioMode mode = ScenarioMode::photon;
  std::uint64_t seed = 1;
  double tau_sp = 1.4;
  double tau_coh = 0.28;
  double wavelength_nm = 1302.5;
  EmitterModel emitter;
  EomParams eom;
  bool eom_bias_set = false;
  std::vector<DriveSpec> drives;
  TimingConfig timing;
  DetectorModel detector;
  AnalysisSpec analysis;
  std::vector<std::string> warnings;

  double rep_rate_hz() const { return analysis.rep_rate_hz.value_or(1e9 / timing.t_rep); }
};

namespace detail {

inline std::optional<double> parse_special_number(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == ".inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  return std::nullopt;
}

// One mapping block. Every accessor records the key; finish() rejects the rest.
class Block {
 public:
  Block(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_, "expected a block of key: value pairs");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull(); }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double def) {
    seen_.insert(key);
    if (!has(key)) return def;
    return to_number(node_[key], key_path(key));
  }

  std::string text(const std::string& key, const std::string& def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const auto n = node_[key];
    if (!n.IsScalar()) throw ConfigError(key_path(key), "expected a single value");
    return n.Scalar();
  }

  bool flag(const std::string& key, bool def) {
    seen_.insert(key);
    if (!has(key)) return def;
    try {
      return node_[key].as<bool>();
    } catch (const YAML::Exception&) {
      throw ConfigError(key_path(key), "expected true or false, got '" + node_[key].Scalar() + "'");
    }
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    const double v = number(key, static_cast<double>(def));
    if (!(v >= 0.0) || v != std::floor(v) || v > 9e18)
      throw ConfigError(key_path(key), "expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }

  std::vector<double> numbers(const std::string& key) {
    seen_.insert(key);
    std::vector<double> out;
    if (!has(key)) return out;
    const auto n = node_[key];
    if (n.IsScalar()) return {to_number(n, key_path(key))};
    if (!n.IsSequence()) throw ConfigError(key_path(key), "expected a list of numbers");
    for (std::size_t i = 0; i < n.size(); ++i)
      out.push_back(to_number(n[i], key_path(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  Block child(const std::string& key) {
    seen_.insert(key);
    return Block(has(key) ? node_[key] : YAML::Node(), key_path(key));
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  std::vector<std::pair<std::string, double>> entries() {
    std::vector<std::pair<std::string, double>> out;
    if (!node_ || !node_.IsMap()) return out;
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      seen_.insert(k);
      out.emplace_back(k, to_number(kv.second, key_path(k)));
    }
    return out;
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!seen_.count(k)) throw ConfigError(key_path(k), "unknown key");
    }
  }

  static double to_number(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ConfigError(path, "expected a number");
    if (auto s = parse_special_number(n.Scalar())) return *s;
    try {
      const double v = n.as<double>();
      if (std::isnan(v)) throw ConfigError(path, "NaN is not allowed");
      return v;
    } catch (const YAML::Exception&) {
      throw ConfigError(path, "expected a number, got '" + n.Scalar() + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline double parse_bias(Block& b, const std::string& key, double def) {
  if (!b.has(key)) {
    b.text(key, "");
    return def;
  }
  const auto s = b.text(key, "");
  if (s == "min" || s == "null_point") return kBiasNull;
  if (s == "max") return kBiasMax;
  if (s == "quadrature") return kBiasMax / 2.0;
  return b.number(key, def);
}

inline std::string delay_label(const std::string& base, double delay) { return base + "_d" + fmt_num(delay); }

inline void parse_drive(YAML::Node node, const std::string& path, std::vector<DriveSpec>& out) {
  Block b(node, path);
  DriveSpec d;
  d.key = path;
  const auto shape = b.text("shape", "gaussian");
  try {
    d.shape = parse_drive_shape(shape);
  } catch (const Error& e) {
    throw ConfigError(b.key_path("shape"), e.what());
  }
  d.v_peak = b.number("v_peak_V", d.v_peak);
  d.optical_fwhm = b.number("optical_fwhm_ns", d.optical_fwhm);
  d.inverted = b.flag("inverted", d.shape == DriveShape::inverted_gaussian);
  if (d.inverted && d.shape == DriveShape::gaussian) d.shape = DriveShape::inverted_gaussian;
  d.predistort = b.flag("predistort", true);
  if (b.has("bias")) d.bias = parse_bias(b, "bias", kBiasNull);
  else b.text("bias", "");
  d.label = b.text("label", d.inverted ? "notch" : "mod");
  for (char c : d.label)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      throw ConfigError(b.key_path("label"), "labels may use letters, digits, '_', '-' and '.' only");
  const auto pts = b.raw("points");
  if (pts && !pts.IsNull()) {
    if (!pts.IsSequence()) throw ConfigError(b.key_path("points"), "expected a list of [t_ns, volts] pairs");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto p = pts[i];
      const auto pp = b.key_path("points") + "[" + std::to_string(i) + "]";
      if (!p.IsSequence() || p.size() != 2) throw ConfigError(pp, "expected [t_ns, volts]");
      d.points.emplace_back(Block::to_number(p[0], pp), Block::to_number(p[1], pp));
    }
  }
  const bool has_single = b.has("delay_ns");
  const auto delays = b.numbers("delays_ns");
  const double single = b.number("delay_ns", 0.0);
  b.finish();
  if (has_single && !delays.empty()) throw ConfigError(path, "give either delay_ns or delays_ns, not both");
  if (delays.empty()) {
    d.delay = single;
    out.push_back(d);
    return;
  }
  for (std::size_t i = 0; i < delays.size(); ++i) {
    DriveSpec e = d;
    e.delay = delays[i];
    e.label = delay_label(d.label, delays[i]);
    e.key = path + ".delays_ns[" + std::to_string(i) + "]";
    out.push_back(e);
  }
}

}  // namespace detail

// Modulator settings for one drive. Notches default to the maximum bias
// unless a bias was configured.
inline EomParams drive_params(const Scenario& s, const DriveSpec& d) {
  EomParams p = s.eom;
  if (d.bias) p.bias_phase = *d.bias;
  else if (d.inverted && !s.eom_bias_set) p.bias_phase = kBiasMax;
  return p;
}

// Parses and validates. Nothing is computed beyond the checks; every
// violation is reported as a ConfigError naming the key.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<config>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, std::string("not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) throw ConfigError(source, "empty configuration");
  detail::Block top(root, "");
  Scenario s;
  s.name = top.text("name", s.name);
  for (char c : s.name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      throw ConfigError("name", "names may use letters, digits, '_', '-' and '.' only");
  const auto mode = top.text("mode", "photon");
  if (mode == "photon") s.mode = ScenarioMode::photon;
  else if (mode == "laser") s.mode = ScenarioMode::laser;
  else if (mode == "tradeoff") s.mode = ScenarioMode::tradeoff;
  else throw ConfigError("mode", "expected photon, laser or tradeoff, got '" + mode + "'");
  s.seed = top.count("seed", s.seed);

  auto em = top.child("emitter");
  s.tau_sp = em.number("tau_sp_ns", s.tau_sp);
  s.tau_coh = em.number("tau_coh_ns", s.tau_coh);
  s.wavelength_nm = em.number("wavelength_nm", s.wavelength_nm);
  em.finish();

  auto eo = top.child("eom");
  s.eom.v_pi = eo.number("v_pi_V", s.eom.v_pi);
  s.eom.extinction_db = eo.number("extinction_db", s.eom.extinction_db);
  s.eom.t_max = eo.number("t_max", s.eom.t_max);
  s.eom_bias_set = eo.has("bias");
  s.eom.bias_phase = detail::parse_bias(eo, "bias", kBiasNull);
  eo.finish();

  const auto drives = top.raw("drives");
  if (drives && !drives.IsNull()) {
    if (!drives.IsSequence()) throw ConfigError("drives", "expected a list of drive blocks");
    for (std::size_t i = 0; i < drives.size(); ++i)
      detail::parse_drive(drives[i], "drives[" + std::to_string(i) + "]", s.drives);
  }

  auto tm = top.child("timing");
  s.timing.t_rep = tm.number("t_rep_ns", s.timing.t_rep);
  const double div = tm.number("gate_divider", s.timing.gate_divider);
  if (div != std::floor(div) || div < 1 || div > 1e9) throw ConfigError("timing.gate_divider", "expected an integer >= 1");
  s.timing.gate_divider = static_cast<int>(div);
  s.timing.t_gate = tm.number("t_gate_ns", s.timing.t_gate);
  s.timing.delta_t_mod = tm.number("delta_t_mod_ns", s.timing.delta_t_mod);
  s.timing.n_pulses = tm.count("n_pulses", s.timing.n_pulses);
  tm.finish();

  auto de = top.child("detector");
  s.detector.jitter_fwhm = de.number("jitter_fwhm_ns", s.detector.jitter_fwhm);
  s.detector.efficiency = de.number("efficiency", s.detector.efficiency);
  s.detector.dark_rate = de.number("dark_rate_per_ns", s.detector.dark_rate);
  if (de.has("seed")) s.seed = de.count("seed", s.seed);
  else de.count("seed", 0);
  de.finish();

  auto an = top.child("analysis");
  auto& a = s.analysis;
  a.bin_width = an.number("bin_width_ns", a.bin_width);
  a.dt = an.number("dt_ns", a.dt);
  a.arrival = an.number("arrival_ns", a.arrival);
  a.include_unmodulated = an.flag("include_unmodulated", a.include_unmodulated);
  a.tail_skip_sigmas = an.number("tail_skip_sigmas", a.tail_skip_sigmas);
  a.write_timestamps = an.flag("write_timestamps", a.write_timestamps);
  a.target_counts = an.count("target_counts", a.target_counts);
  a.cw_window = an.number("cw_window_ns", a.cw_window);
  a.fit_margin = an.number("fit_margin_ns", a.fit_margin);
  a.peak_fit_halfwidth = an.number("peak_fit_halfwidth_ns", a.peak_fit_halfwidth);
  a.taus = an.numbers("tau_mod_ns");
  if (an.has("rep_rate_hz")) a.rep_rate_hz = an.number("rep_rate_hz", 0.0);
  else an.number("rep_rate_hz", 0.0);
  a.target_rate_hz = an.number("target_rate_hz", a.target_rate_hz);
  a.calibrate_tau = an.number("calibrate_tau_ns", a.calibrate_tau);
  auto chain = an.child("chain");
  a.chain = chain.entries();
  chain.finish();
  const auto obj = an.text("objective", "fraction");
  if (obj == "fraction") a.objective = DelayObjective::fraction;
  else if (obj == "indistinguishability") a.objective = DelayObjective::indistinguishability;
  else if (obj == "product") a.objective = DelayObjective::product;
  else throw ConfigError("analysis.objective", "expected fraction, indistinguishability or product");
  a.compare_tau_coh = an.numbers("compare_tau_coh_ns");
  a.horizon_lifetimes = an.number("horizon_lifetimes", a.horizon_lifetimes);
  an.finish();
  top.finish();
  return s;
}

// Checks every block against its module invariants and collects warnings.
inline void validate_scenario(Scenario& s) {
  auto check = [](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(key, e.what());
    }
  };
  check("emitter", [&] {
    require(s.wavelength_nm > 0.0 && std::isfinite(s.wavelength_nm), "wavelength_nm must be positive");
  });
  check("emitter.tau_coh_ns", [&] { s.emitter = coherence_params(s.tau_sp, s.tau_coh, s.wavelength_nm); });
  check("eom.extinction_db", [&] { require(s.eom.extinction_db > 0.0, "must be positive"); });
  check("eom", [&] { s.eom.validate(); });
  check("timing", [&] { s.timing.validate(); });
  check("detector", [&] { s.detector.validate(); });

  const auto& a = s.analysis;
  if (!(a.bin_width > 0.0) || !std::isfinite(a.bin_width)) throw ConfigError("analysis.bin_width_ns", "must be positive");
  if (!(a.dt > 0.0) || a.dt > a.bin_width) throw ConfigError("analysis.dt_ns", "must be positive and no larger than the bin width");
  if (a.bin_width > s.timing.t_gate) throw ConfigError("analysis.bin_width_ns", "wider than the gate");
  if (!(a.arrival >= 0.0) || a.arrival >= s.timing.t_gate)
    throw ConfigError("analysis.arrival_ns", "the photon must arrive inside the gate");
  if (!(a.tail_skip_sigmas >= 0.0)) throw ConfigError("analysis.tail_skip_sigmas", "must be >= 0");
  if (!(a.fit_margin >= 0.0)) throw ConfigError("analysis.fit_margin_ns", "must be >= 0");
  if (!(a.peak_fit_halfwidth >= 0.0)) throw ConfigError("analysis.peak_fit_halfwidth_ns", "must be >= 0");
  if (!(a.horizon_lifetimes > 0.0)) throw ConfigError("analysis.horizon_lifetimes", "must be positive");
  const double f_gate = a.bin_width * std::round(s.timing.t_gate / a.bin_width);
  if (std::abs(f_gate - s.timing.t_gate) > 1e-9 * s.timing.t_gate)
    s.warnings.push_back("histogram span snapped to " + fmt_num(f_gate) + " ns (whole bins of " +
                         fmt_num(a.bin_width) + " ns)");

  if (s.mode == ScenarioMode::laser) {
    if (!(a.cw_window > 2.0 * a.fit_margin) || a.arrival + a.cw_window > s.timing.t_gate)
      throw ConfigError("analysis.cw_window_ns", "the cw window must fit inside the gate and exceed twice the fit margin");
    if (s.drives.empty()) throw ConfigError("drives", "laser mode needs at least one drive");
  }
  if (s.mode == ScenarioMode::photon && s.drives.empty() && !a.include_unmodulated)
    throw ConfigError("drives", "nothing to simulate: no drives and include_unmodulated is false");
  if (s.mode == ScenarioMode::tradeoff) {
    if (a.taus.empty()) throw ConfigError("analysis.tau_mod_ns", "the sweep needs at least one width");
    for (std::size_t i = 0; i < a.taus.size(); ++i)
      if (!(a.taus[i] > 0.0)) throw ConfigError("analysis.tau_mod_ns[" + std::to_string(i) + "]", "must be positive");
    if (!(s.rep_rate_hz() > 0.0) || !std::isfinite(s.rep_rate_hz())) throw ConfigError("analysis.rep_rate_hz", "must be positive");
    if (!(a.target_rate_hz > 0.0)) throw ConfigError("analysis.target_rate_hz", "must be positive");
    if (a.chain.empty() && !(a.calibrate_tau > 0.0)) throw ConfigError("analysis.calibrate_tau_ns", "must be positive");
    for (const auto& [k, v] : a.chain)
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("analysis.chain." + k, "efficiency factors must lie in [0, 1]");
    for (std::size_t i = 0; i < a.compare_tau_coh.size(); ++i)
      check("analysis.compare_tau_coh_ns[" + std::to_string(i) + "]",
            [&] { coherence_params(s.tau_sp, a.compare_tau_coh[i], s.wavelength_nm); });
  }

  std::set<std::string> labels;
  if (a.include_unmodulated && s.mode == ScenarioMode::photon) labels.insert("unmodulated");
  for (const auto& d : s.drives) {
    if (!labels.insert(d.label).second) throw ConfigError(d.key + ".label", "duplicate label '" + d.label + "'");
    if (!std::isfinite(d.delay)) throw ConfigError(d.key, "delay must be finite");
    const EomParams p = drive_params(s, d);
    DriveWaveform w;
    check(d.key, [&] {
      if (d.shape == DriveShape::gaussian || d.shape == DriveShape::inverted_gaussian) {
        require(d.optical_fwhm > 0.0 && std::isfinite(d.optical_fwhm), "optical_fwhm_ns must be positive");
        w = gaussian_drive(p, d.v_peak, d.optical_fwhm, 0.0, d.inverted, d.predistort);
      } else {
        w.shape = d.shape;
        w.v_peak = d.v_peak;
        w.fwhm = d.optical_fwhm;
        w.points = d.points;
        w.validate();
      }
    });
    for (const auto& msg : drive_warnings(w)) s.warnings.push_back(d.key + ": " + msg + " (kept as configured)");
  }

  const double end = s.mode == ScenarioMode::tradeoff ? s.tau_sp * a.horizon_lifetimes : s.timing.t_gate;
  const auto g = make_time_grid(s.mode == ScenarioMode::tradeoff ? 0.0 : a.arrival, end, a.dt);
  if (g.snapped())
    s.warnings.push_back("time grid end snapped from " + fmt_num(g.requested_end()) + " to " + fmt_num(g.t_end()) +
                         " ns (dt " + fmt_num(a.dt) + " ns)");
}

inline Scenario load_scenario_text(const std::string& text, const std::string& source) {
  auto s = parse_scenario(text, source);
  validate_scenario(s);
  return s;
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scenario_text(ss.str(), path);
}

}  // namespace qdshape::app
