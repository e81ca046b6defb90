#pragma once

// Built-in scenarios. `qdshape preset <name> --print` shows the text, which
// doubles as a starting point for custom scenario files.

#include <string>
#include <utility>
#include <vector>

#include "qdshape/error.hpp"

namespace qdshape::app {

namespace detail {

constexpr const char* kCommonBlocks = R"(emitter:
  tau_sp_ns: 1.4
  tau_coh_ns: 0.28
  wavelength_nm: 1302.5
timing:
  t_rep_ns: 20          # 50 MHz excitation
  gate_divider: 10      # one 50 ns gate every 10 pulses
  t_gate_ns: 50
  delta_t_mod_ns: 0
  n_pulses: 1000000
detector:
  jitter_fwhm_ns: 0.25
  efficiency: 1.0
  dark_rate_per_ns: 0
)";

constexpr const char* kFig2 = R"(name: fig2
mode: photon
seed: 2011
eom:
  v_pi_V: 4
  extinction_db: 20
  bias: min
drives:
  - label: g720
    shape: gaussian
    v_peak_V: 4
    optical_fwhm_ns: 0.72
    delays_ns: [0.0, 0.8, 1.6, 2.4, 3.2, 4.0]
analysis:
  bin_width_ns: 0.05
  dt_ns: 0.001
  arrival_ns: 1.0
  include_unmodulated: true
)";

constexpr const char* kFig3a = R"(name: fig3a
mode: photon
seed: 2012
eom:
  v_pi_V: 4
  extinction_db: 20
  bias: min
drives:
  - label: g520
    shape: gaussian
    v_peak_V: 4
    optical_fwhm_ns: 0.52
    delay_ns: 0.8
analysis:
  bin_width_ns: 0.05
  dt_ns: 0.001
  arrival_ns: 1.0
)";

constexpr const char* kFig3b = R"(name: fig3b
mode: photon
seed: 2013
eom:
  v_pi_V: 4
  extinction_db: 20
  bias: max             # notches start from full transmission
drives:
  - label: notch770
    shape: gaussian
    inverted: true
    v_peak_V: 4
    optical_fwhm_ns: 0.77
    delays_ns: [0.0, 0.8, 1.6, 2.4]
analysis:
  bin_width_ns: 0.05
  dt_ns: 0.001
  arrival_ns: 1.0
)";

constexpr const char* kLaserCal = R"(name: laser-cal
mode: laser
seed: 2014
eom:
  v_pi_V: 4
  extinction_db: 20
  bias: min
drives:
  - label: cal720
    optical_fwhm_ns: 0.72
    v_peak_V: 4
  - label: cal520
    optical_fwhm_ns: 0.52
    v_peak_V: 4
  - label: cal770n
    optical_fwhm_ns: 0.77
    v_peak_V: 4
    inverted: true
    bias: max
analysis:
  bin_width_ns: 0.05
  dt_ns: 0.001
  arrival_ns: 1.0
  cw_window_ns: 10      # attenuated cw light, flat over the window
  fit_margin_ns: 0.5
  target_counts: 100000 # each histogram sized to about 1e5 counts
)";

constexpr const char* kTradeoff = R"(name: tradeoff
mode: tradeoff
seed: 2015
eom:
  v_pi_V: 4
  extinction_db: inf    # ideal floor
  bias: min
analysis:
  dt_ns: 0.001
  tau_mod_ns: [0.05, 0.1, 0.14, 0.2, 0.3, 0.52, 0.72, 1.0, 1.5, 2.0, inf]
  objective: fraction
  rep_rate_hz: 5.0e7
  target_rate_hz: 6.8e4
  calibrate_tau_ns: 0.14
  compare_tau_coh_ns: [0.58]
)";

}  // namespace detail

inline const std::vector<std::pair<std::string, std::string>>& presets() {
  static const std::vector<std::pair<std::string, std::string>> all = {
      {"fig2", std::string(detail::kFig2) + detail::kCommonBlocks},
      {"fig3a", std::string(detail::kFig3a) + detail::kCommonBlocks},
      {"fig3b", std::string(detail::kFig3b) + detail::kCommonBlocks},
      {"laser-cal", std::string(detail::kLaserCal) + detail::kCommonBlocks},
      {"tradeoff", std::string(detail::kTradeoff) + detail::kCommonBlocks},
  };
  return all;
}

inline const std::string& preset_text(const std::string& name) {
  for (const auto& [n, text] : presets())
    if (n == name) return text;
  std::string known;
  for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.first;
  throw ConfigError("preset", "unknown preset '" + name + "' (available: " + known + ")");
}

}  // namespace qdshape::app
