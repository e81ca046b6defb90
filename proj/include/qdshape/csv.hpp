#pragma once

// CSV export/import for traces, wavepackets, timestamp streams, histograms,
// trade-off tables and fit summaries.

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qdshape/analyze.hpp"
#include "qdshape/detect.hpp"
#include "qdshape/eomod.hpp"
#include "qdshape/error.hpp"
#include "qdshape/fit.hpp"
#include "qdshape/sigcore.hpp"

namespace qdshape {

class IoError : public Error {
 public:
  using Error::Error;
};

// Shortest round-trip-safe rendering is not needed; 10 significant digits is.
inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const IntensityTrace& tr, const std::string& column = "value") {
  os << "t_ns," << column << '\n';
  for (std::size_t k = 0; k < tr.size(); ++k) os << fmt_num(tr.grid().time(k)) << ',' << fmt_num(tr[k]) << '\n';
}

inline void write_envelope_csv(std::ostream& os, const TransmissionEnvelope& env) {
  write_trace_csv(os, env.trace(), "transmission");
}

inline void write_wavepacket_csv(std::ostream& os, const Wavepacket& psi) {
  os << "t_ns,re,im\n";
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const auto a = psi.amplitude(k);
    os << fmt_num(psi.grid().time(k)) << ',' << fmt_num(a.real()) << ',' << fmt_num(a.imag()) << '\n';
  }
}

inline void write_timestamps_csv(std::ostream& os, std::span<const Timestamp> stamps) {
  os << "cycle_index,t_ns\n";
  for (const auto& s : stamps) os << s.cycle << ',' << fmt_num(s.t) << '\n';
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin_start_ns,count\n";
  for (std::size_t j = 0; j < h.size(); ++j) os << fmt_num(h.bin_start(j)) << ',' << h.counts[j] << '\n';
}

inline void write_expectation_csv(std::ostream& os, const HistogramExpectation& e) {
  os << "bin_start_ns,expected\n";
  for (std::size_t j = 0; j < e.expected.size(); ++j)
    os << fmt_num(e.bin_width * static_cast<double>(j)) << ',' << fmt_num(e.expected[j]) << '\n';
}

inline void write_tradeoff_csv(std::ostream& os, std::span<const TradeoffRow> rows) {
  os << "tau_mod_ns,delay_ns,indist_exact,indist_simple,fraction,rate_hz\n";
  for (const auto& r : rows) {
    os << (std::isinf(r.tau_mod) ? std::string("inf") : fmt_num(r.tau_mod)) << ',' << fmt_num(r.delay_opt) << ','
       << fmt_num(r.indist_exact) << ',' << fmt_num(r.indist_simple) << ',' << fmt_num(r.transmitted_fraction)
       << ',' << fmt_num(r.rate) << '\n';
  }
}

inline void write_fit_text(std::ostream& os, const FitResult& r) {
  os << "# model: " << to_string(r.model) << '\n'
     << "# converged: " << (r.converged ? "true" : "false") << '\n'
     << "# iterations: " << r.iterations << '\n'
     << "# points: " << r.n_points << '\n'
     << "# residual_norm: " << fmt_num(r.residual_norm) << '\n'
     << "# t_ref: " << fmt_num(r.t_ref) << '\n'
     << "param,value,ci95\n";
  for (const auto& p : r.params) os << p.name << ',' << fmt_num(p.value) << ',' << fmt_num(p.ci95) << '\n';
}

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError(path + ": missing column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

// Numeric CSV with one header row. Lines starting with '#' are skipped.
inline CsvTable read_csv(std::istream& is, const std::string& name) {
  CsvTable t;
  t.path = name;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw IoError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                    " fields, found " + std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        const double v = std::stod(c, &used);
        if (used != c.size()) throw std::invalid_argument(c);
        row.push_back(v);
      } catch (const std::exception&) {
        throw IoError(name + ":" + std::to_string(lineno) + ": not a number: '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw IoError(name + ":1: missing header row");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_csv(in, path);
}

inline Histogram histogram_from_table(const CsvTable& t) {
  const auto cs = t.column("bin_start_ns");
  const auto cc = t.column("count");
  if (t.rows.size() < 2) throw IoError(t.path + ": histogram needs at least two bins");
  Histogram h;
  h.bin_width = t.rows[1][cs] - t.rows[0][cs];
  if (!(h.bin_width > 0.0)) throw IoError(t.path + ": bin starts must increase");
  if (std::abs(t.rows[0][cs]) > 1e-9 * h.bin_width) throw IoError(t.path + ": first bin must start at 0");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double c = t.rows[i][cc];
    if (c < 0.0 || c != std::floor(c))
      throw IoError(t.path + ":" + std::to_string(i + 2) + ": count must be a non-negative integer");
    h.counts.push_back(static_cast<std::uint64_t>(c));
    h.total_detected += h.counts.back();
  }
  h.total_pulses = h.total_detected;
  return h;
}

// Reads the text written by write_fit_text.
inline FitResult read_fit_text(std::istream& is, const std::string& name) {
  FitResult r;
  std::string line;
  std::size_t lineno = 0;
  bool header = false, have_model = false;
  while (std::getline(is, line)) {
    ++lineno;
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = name + ":" + std::to_string(lineno);
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      auto key = line.substr(1, colon - 1);
      auto val = line.substr(colon + 1);
      key.erase(0, key.find_first_not_of(' '));
      val.erase(0, val.find_first_not_of(' '));
      if (key == "model") {
        if (val == "exponential") r.model = FitModel::exponential;
        else if (val == "gaussian") r.model = FitModel::gaussian;
        else if (val == "notch") r.model = FitModel::notch;
        else throw IoError(where + ": unknown fit model '" + val + "'");
        have_model = true;
      } else if (key == "converged") {
        r.converged = val == "true";
      } else if (key == "t_ref") {
        r.t_ref = std::stod(val);
      }
      continue;
    }
    const auto cells = split_csv_line(line);
    if (!header) {
      if (cells != std::vector<std::string>{"param", "value", "ci95"}) throw IoError(where + ": expected header param,value,ci95");
      header = true;
      continue;
    }
    if (cells.size() != 3) throw IoError(where + ": expected 3 fields, found " + std::to_string(cells.size()));
    try {
      r.params.push_back({cells[0], std::stod(cells[1]), std::stod(cells[2])});
    } catch (const std::exception&) {
      throw IoError(where + ": not a number");
    }
  }
  if (!have_model || !header) throw IoError(name + ": not a fit summary");
  return r;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace qdshape
