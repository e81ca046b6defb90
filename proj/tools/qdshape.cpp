// qdshape: run scenarios, presets, fits, sweeps and plots from the command line.
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "qdshape/app/plot.hpp"
#include "qdshape/app/presets.hpp"
#include "qdshape/app/runner.hpp"
#include "qdshape/app/scenario.hpp"
#include "qdshape/csv.hpp"
#include "qdshape/fit.hpp"

using namespace qdshape;
using namespace qdshape::app;

namespace {

struct Globals {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> pulses;
};

std::string output_dir(const Globals& g, const std::string& fallback) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("QDSHAPE_OUT"); env && *env) return (std::filesystem::path(env) / fallback).string();
  return (std::filesystem::path("qdshape_out") / fallback).string();
}

void apply_overrides(Scenario& s, const Globals& g) {
  if (g.seed) {
    s.seed = *g.seed;
    s.warnings.push_back("seed overridden to " + std::to_string(*g.seed) + " by --seed");
  }
  if (g.pulses) {
    if (*g.pulses == 0) throw ConfigError("--pulses", "must be >= 1");
    s.timing.n_pulses = *g.pulses;
    s.warnings.push_back("timing.n_pulses overridden to " + std::to_string(*g.pulses) + " by --pulses");
  }
}

int execute(Scenario s, const Globals& g) {
  apply_overrides(s, g);
  const auto report = run_scenario(s, output_dir(g, s.name));
  std::cout << report.text();
  return 0;
}

FitResult fit_csv(const std::string& path, const std::string& model, double jitter, double skip) {
  const auto h = histogram_from_table(read_csv_file(path));
  if (model == "exponential") return fit_exponential(h, {.start_after_peak = skip});
  const GaussianFitOptions opt{.jitter_fwhm = jitter};
  if (model == "gaussian") return fit_gaussian(h, false, opt);
  if (model == "notch") return fit_gaussian(h, true, opt);
  throw ConfigError("--model", "expected exponential, gaussian or notch");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal shaping of single photons: simulation, fitting and plotting"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--out", g.out, "output directory (default: $QDSHAPE_OUT/<name> or qdshape_out/<name>)");
  app.add_option("--seed", g.seed, "override the scenario seed");
  app.add_option("--pulses", g.pulses, "override timing.n_pulses");

  std::string config;
  auto* run = app.add_subcommand("run", "run a scenario file");
  run->add_option("config", config, "scenario file")->required();
  run->fallthrough();

  std::string preset_name;
  bool print = false, list = false;
  auto* preset = app.add_subcommand("preset", "run a built-in scenario");
  preset->add_option("name", preset_name, "fig2, fig3a, fig3b, laser-cal or tradeoff");
  preset->add_flag("--print", print, "print the preset scenario text instead of running it");
  preset->add_flag("--list", list, "list the built-in presets");
  preset->fallthrough();

  std::string csv, model = "exponential";
  double jitter = 0.25, skip = -1.0;
  auto* fit = app.add_subcommand("fit", "fit a histogram CSV");
  fit->add_option("csv", csv, "histogram CSV (bin_start_ns,count)")->required();
  fit->add_option("--model", model, "exponential, gaussian or notch")->capture_default_str();
  fit->add_option("--jitter-fwhm", jitter, "known detector jitter FWHM to deconvolve, ns")->capture_default_str();
  fit->add_option("--skip", skip, "ns skipped after the peak bin before an exponential fit (default 3 jitter sigma)");
  fit->fallthrough();

  std::string sweep_config;
  auto* sweep = app.add_subcommand("sweep", "run the indistinguishability/rate sweep of a scenario file");
  sweep->add_option("config", sweep_config, "scenario file with analysis.tau_mod_ns")->required();
  sweep->fallthrough();

  std::vector<std::string> plot_files;
  bool overlay = false;
  auto* plot = app.add_subcommand("plot", "render CSV outputs as SVG");
  plot->add_option("csv", plot_files, "CSV files")->required();
  plot->add_flag("--overlay", overlay, "draw all histograms into one overlay.svg");
  plot->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return execute(load_scenario_file(config), g);
    if (*sweep) {
      auto s = load_scenario_file(sweep_config);
      if (s.mode != ScenarioMode::tradeoff) {
        s.mode = ScenarioMode::tradeoff;
        s.warnings.clear();
        validate_scenario(s);
      }
      return execute(s, g);
    }
    if (*preset) {
      if (list) {
        for (const auto& p : presets()) std::cout << p.first << "\n";
        return 0;
      }
      if (preset_name.empty()) throw ConfigError("preset", "name required (try --list)");
      if (print) {
        std::cout << preset_text(preset_name);
        return 0;
      }
      return execute(load_scenario_text(preset_text(preset_name), preset_name), g);
    }
    if (*fit) {
      if (skip < 0.0) skip = 3.0 * jitter / kFwhmPerSigma;
      const auto r = fit_csv(csv, model, jitter, skip);
      std::ostringstream os;
      write_fit_text(os, r);
      const auto dir = output_dir(g, "fit");
      std::filesystem::create_directories(dir);
      auto stem = std::filesystem::path(csv).stem().string();
      if (stem.ends_with("_histogram")) stem.resize(stem.size() - 10);
      const auto file = (std::filesystem::path(dir) / (stem + "_fit.txt")).string();
      write_text_file(file, os.str());
      std::cout << os.str() << "written: " << file << "\n";
      return 0;
    }
    if (*plot) {
      for (const auto& f : emit_plots(plot_files, output_dir(g, "plots"), overlay)) std::cout << f << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
