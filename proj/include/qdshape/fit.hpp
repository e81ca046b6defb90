#pragma once

// Weighted nonlinear least squares for TCSPC histograms: single-exponential
// tails and (inverted) Gaussian peaks, with linearized 95% intervals.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qdshape/detect.hpp"
#include "qdshape/error.hpp"

namespace qdshape {

enum class FitModel { exponential, gaussian, notch };

inline std::string to_string(FitModel m) {
  switch (m) {
    case FitModel::exponential: return "exponential";
    case FitModel::gaussian: return "gaussian";
    case FitModel::notch: return "notch";
  }
  return "unknown";
}

struct FitParam {
  std::string name;
  double value = 0.0;
  double ci95 = 0.0;  // half-width
};

struct FitResult {
  FitModel model = FitModel::exponential;
  std::vector<FitParam> params;
  double residual_norm = 0.0;  // chi^2 per degree of freedom
  int iterations = 0;
  bool converged = false;
  std::size_t n_points = 0;
  double t_ref = 0.0;  // exponential: time at which `amplitude` applies

  const FitParam& get(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw Error("fit result has no parameter '" + name + "'");
  }
  double value(const std::string& name) const { return get(name).value; }
  double ci95(const std::string& name) const { return get(name).ci95; }
  bool has(const std::string& name) const {
    return std::any_of(params.begin(), params.end(), [&](const FitParam& p) { return p.name == name; });
  }
};

class FitError : public Error {
 public:
  FitError(const std::string& what, FitResult best) : Error(what), best_(std::move(best)) {}
  const FitResult& best() const noexcept { return best_; }

 private:
  FitResult best_;
};

constexpr double kZ95 = 1.959963984540054;

namespace detail {

// f(t, p, grad) returns the model value and fills d f / d p.
using ModelFn = std::function<double(double, const Eigen::VectorXd&, Eigen::Ref<Eigen::VectorXd>)>;

struct LmOutcome {
  Eigen::VectorXd p;
  Eigen::MatrixXd cov;  // unscaled (J^T W J)^-1
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Gauss-Newton with Marquardt diagonal scaling. Stops when every
// parameter moves by less than rel_tol relative to max(|p|, floor).
inline LmOutcome levenberg_marquardt(const ModelFn& f, std::span<const double> t, std::span<const double> y,
                                     std::span<const double> w, Eigen::VectorXd p,
                                     const Eigen::VectorXd& floors,
                                     const std::function<bool(const Eigen::VectorXd&)>& valid,
                                     int max_iter = 200, double rel_tol = 1e-8) {
  const auto n = static_cast<Eigen::Index>(t.size());
  const auto np = p.size();
  Eigen::VectorXd grad(np);
  auto chi2_of = [&](const Eigen::VectorXd& q) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y[i] - f(t[i], q, grad);
      s += w[i] * r * r;
    }
    return s;
  };
  auto normal_eq = [&](const Eigen::VectorXd& q, Eigen::MatrixXd& a, Eigen::VectorXd& g) {
    a.setZero(np, np);
    g.setZero(np);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y[i] - f(t[i], q, grad);
      a.noalias() += w[i] * grad * grad.transpose();
      g.noalias() += w[i] * r * grad;
    }
  };

  LmOutcome out;
  double chi2 = chi2_of(p);
  double lambda = 1e-3;
  Eigen::MatrixXd a;
  Eigen::VectorXd g;
  int it = 0;
  bool converged = false;
  for (; it < max_iter && !converged; ++it) {
    normal_eq(p, a, g);
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = a;
      for (Eigen::Index i = 0; i < np; ++i) damped(i, i) += lambda * std::max(a(i, i), 1e-300);
      const Eigen::VectorXd step = damped.ldlt().solve(g);
      const Eigen::VectorXd trial = p + step;
      if (step.allFinite() && valid(trial)) {
        const double c = chi2_of(trial);
        if (c <= chi2) {
          bool small = true;
          for (Eigen::Index i = 0; i < np; ++i)
            if (std::abs(step[i]) >= rel_tol * std::max(std::abs(trial[i]), floors[i])) small = false;
          p = trial;
          chi2 = c;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          converged = small;
          continue;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        // No descent direction left: at the minimum to working precision.
        accepted = true;
        converged = true;
      }
    }
  }
  normal_eq(p, a, g);
  out.p = p;
  out.cov = a.ldlt().solve(Eigen::MatrixXd::Identity(np, np));
  out.chi2 = chi2;
  out.iterations = it;
  out.converged = converged;
  return out;
}

inline std::vector<double> poisson_weights(std::span<const double> y) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) w[i] = 1.0 / std::max(y[i], 1.0);
  return w;
}

// Count-weighted fit followed by reweighting with the model's expected
// counts. The fixed point solves the Poisson likelihood equations, which
// removes the low-count bias of 1/max(y,1) weights in sparse tails.
inline LmOutcome poisson_fit(const ModelFn& f, std::span<const double> t, std::span<const double> y,
                             Eigen::VectorXd p, const Eigen::VectorXd& floors,
                             const std::function<bool(const Eigen::VectorXd&)>& valid, int max_iter,
                             std::vector<double>& w) {
  w = poisson_weights(y);
  LmOutcome lm = levenberg_marquardt(f, t, y, w, std::move(p), floors, valid, max_iter);
  Eigen::VectorXd grad(lm.p.size());
  for (int round = 0; round < 50 && lm.converged; ++round) {
    for (std::size_t i = 0; i < t.size(); ++i) w[i] = 1.0 / std::max(f(t[i], lm.p, grad), 1e-2);
    const Eigen::VectorXd prev = lm.p;
    lm = levenberg_marquardt(f, t, y, w, prev, floors, valid, max_iter);
    bool settled = true;
    for (Eigen::Index i = 0; i < prev.size(); ++i)
      if (std::abs(lm.p[i] - prev[i]) >= 1e-10 * std::max(std::abs(lm.p[i]), floors[i])) settled = false;
    if (settled) break;
  }
  return lm;
}

// Reduced chi^2 over bins expecting at least five counts. Sparser bins have
// a skewed Pearson term whose mean falls below one, which would shrink the
// intervals; if too few bins qualify, all are used.
inline double reduced_chi2(const ModelFn& f, std::span<const double> t, std::span<const double> y,
                           std::span<const double> w, const Eigen::VectorXd& p) {
  Eigen::VectorXd grad(p.size());
  double all = 0.0, dense = 0.0;
  std::size_t n_dense = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double m = f(t[i], p, grad);
    const double c = w[i] * (y[i] - m) * (y[i] - m);
    all += c;
    if (m >= 5.0) {
      dense += c;
      ++n_dense;
    }
  }
  const auto np = static_cast<std::size_t>(p.size());
  if (n_dense > np + 1) return dense / static_cast<double>(n_dense - np);
  return all / std::max(1.0, static_cast<double>(t.size()) - static_cast<double>(np));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace detail

struct ExponentialFitOptions {
  double start_after_peak = 0.0;  // ns skipped after the peak bin
  int max_iter = 200;
};

// a exp(-(t - t_ref)/tau) + b on points (t, y) from index `first` onward.
inline FitResult fit_exponential(std::span<const double> t, std::span<const double> y,
                                 const ExponentialFitOptions& opt = {}) {
  require(t.size() == y.size(), "fit_exponential: t and y differ in length");
  if (y.empty() || std::all_of(y.begin(), y.end(), [](double v) { return v <= 0.0; }))
    throw FitError("fit_exponential: degenerate (all-zero) input", {});

  const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  std::size_t first = peak;
  while (first < t.size() && t[first] < t[peak] + opt.start_after_peak - 1e-12) ++first;
  const auto ts = t.subspan(first);
  const auto ys = y.subspan(first);
  const auto nonempty = std::count_if(ys.begin(), ys.end(), [](double v) { return v > 0.0; });
  if (nonempty < 10) throw FitError("fit_exponential: fewer than 10 nonempty bins past the peak", {});

  const double t_ref = ts.front();
  // Moment-based starting point: tail level, log-slope over the decay.
  const std::size_t tail = std::max<std::size_t>(1, ys.size() / 10);
  double b0 = 0.0;
  for (std::size_t i = ys.size() - tail; i < ys.size(); ++i) b0 += ys[i];
  b0 /= static_cast<double>(tail);
  const double a0 = std::max(ys.front() - b0, 1e-12);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, sw = 0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double v = ys[i] - b0;
    if (v <= 0.05 * a0) continue;
    const double x = ts[i] - t_ref, l = std::log(v), wt = v;
    sw += wt; sx += wt * x; sy += wt * l; sxx += wt * x * x; sxy += wt * x * l;
  }
  double tau0 = 0.25 * (ts.back() - t_ref);
  const double den = sw * sxx - sx * sx;
  if (sw > 0 && den > 0) {
    const double slope = (sw * sxy - sx * sy) / den;
    if (slope < 0) tau0 = -1.0 / slope;
  }

  Eigen::VectorXd p(3);
  p << a0, tau0, b0;
  Eigen::VectorXd floors(3);
  const double ymax = *std::max_element(ys.begin(), ys.end());
  const double bw = ts.size() > 1 ? ts[1] - ts[0] : 1.0;
  floors << 1e-6 * ymax, 1e-6 * bw, 1e-6 * ymax;

  const detail::ModelFn model = [t_ref](double x, const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> gr) {
    const double e = std::exp(-(x - t_ref) / q[1]);
    gr[0] = e;
    gr[1] = q[0] * e * (x - t_ref) / (q[1] * q[1]);
    gr[2] = 1.0;
    return q[0] * e + q[2];
  };
  std::vector<double> w;
  auto lm = detail::poisson_fit(model, ts, ys, p, floors, [](const Eigen::VectorXd& q) { return q[1] > 0.0; },
                                opt.max_iter, w);

  FitResult r;
  r.model = FitModel::exponential;
  r.n_points = ts.size();
  r.t_ref = t_ref;
  r.iterations = lm.iterations;
  r.converged = lm.converged;
  r.residual_norm = detail::reduced_chi2(model, ts, ys, w, lm.p);
  const Eigen::MatrixXd cov = lm.cov * r.residual_norm;
  auto ci = [&](int i) { return kZ95 * std::sqrt(std::max(0.0, cov(i, i))); };
  r.params = {{"amplitude", lm.p[0], ci(0)}, {"tau", lm.p[1], ci(1)}, {"baseline", lm.p[2], ci(2)}};
  if (!lm.converged) throw FitError("fit_exponential: no convergence after bounded iterations", r);
  return r;
}

inline std::vector<double> histogram_centers(const Histogram& h) {
  std::vector<double> t(h.size());
  for (std::size_t j = 0; j < h.size(); ++j) t[j] = h.bin_center(j);
  return t;
}

inline std::vector<double> histogram_values(const Histogram& h) {
  return std::vector<double>(h.counts.begin(), h.counts.end());
}

inline FitResult fit_exponential(const Histogram& h, const ExponentialFitOptions& opt = {}) {
  const auto t = histogram_centers(h);
  const auto y = histogram_values(h);
  return fit_exponential(t, y, opt);
}

struct GaussianFitOptions {
  double jitter_fwhm = 0.0;  // known instrument width to deconvolve, ns
  int max_iter = 200;
};

// b + s a exp(-(t - t0)^2 / (2 sigma^2)), s = -1 for a notch. Reports the
// FWHM, the extremum height and, when a jitter width is known, the
// quadrature-deconvolved FWHM.
inline FitResult fit_gaussian(std::span<const double> t, std::span<const double> y, bool inverted,
                              const GaussianFitOptions& opt = {}) {
  require(t.size() == y.size(), "fit_gaussian: t and y differ in length");
  if (t.size() < 5 || std::all_of(y.begin(), y.end(), [](double v) { return v <= 0.0; }))
    throw FitError("fit_gaussian: degenerate input", {});
  const double sign = inverted ? -1.0 : 1.0;

  const double b0 = detail::median(std::vector<double>(y.begin(), y.end()));
  const auto ext_it = inverted ? std::min_element(y.begin(), y.end()) : std::max_element(y.begin(), y.end());
  const auto ext = static_cast<std::size_t>(ext_it - y.begin());
  const double a0 = std::max(sign * (*ext_it - b0), 1e-12);
  std::size_t lo = ext, hi = ext;
  while (lo > 0 && sign * (y[lo] - b0) > 0.5 * a0) --lo;
  while (hi + 1 < y.size() && sign * (y[hi] - b0) > 0.5 * a0) ++hi;
  const double bw = t[1] - t[0];
  const double sigma0 = std::max(t[hi] - t[lo], bw) / kFwhmPerSigma;

  Eigen::VectorXd p(4);
  p << a0, t[ext], sigma0, b0;
  const double ymax = *std::max_element(y.begin(), y.end());
  Eigen::VectorXd floors(4);
  floors << 1e-6 * ymax, 1e-6 * bw, 1e-6 * bw, 1e-6 * ymax;

  const detail::ModelFn model = [sign](double x, const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> gr) {
    const double d = x - q[1];
    const double s2 = q[2] * q[2];
    const double e = std::exp(-0.5 * d * d / s2);
    gr[0] = sign * e;
    gr[1] = sign * q[0] * e * d / s2;
    gr[2] = sign * q[0] * e * d * d / (s2 * q[2]);
    gr[3] = 1.0;
    return q[3] + sign * q[0] * e;
  };
  std::vector<double> w;
  auto lm = detail::poisson_fit(model, t, y, p, floors, [](const Eigen::VectorXd& q) { return q[2] > 0.0; },
                                opt.max_iter, w);

  FitResult r;
  r.model = inverted ? FitModel::notch : FitModel::gaussian;
  r.n_points = t.size();
  r.iterations = lm.iterations;
  r.converged = lm.converged;
  r.residual_norm = detail::reduced_chi2(model, t, y, w, lm.p);
  const Eigen::MatrixXd cov = lm.cov * r.residual_norm;
  auto sd = [&](int i) { return std::sqrt(std::max(0.0, cov(i, i))); };

  const double fw = kFwhmPerSigma * lm.p[2];
  const double fw_ci = kZ95 * kFwhmPerSigma * sd(2);
  const double height = lm.p[3] + sign * lm.p[0];
  const double height_var = cov(3, 3) + cov(0, 0) + 2.0 * sign * cov(0, 3);
  r.params = {{"amplitude", lm.p[0], kZ95 * sd(0)},
              {"center", lm.p[1], kZ95 * sd(1)},
              {"sigma", lm.p[2], kZ95 * sd(2)},
              {"baseline", lm.p[3], kZ95 * sd(3)},
              {"fwhm", fw, fw_ci},
              {"height", height, kZ95 * std::sqrt(std::max(0.0, height_var))}};
  if (opt.jitter_fwhm > 0.0 && fw > opt.jitter_fwhm) {
    const double dec = std::sqrt(fw * fw - opt.jitter_fwhm * opt.jitter_fwhm);
    r.params.push_back({"fwhm_deconvolved", dec, fw_ci * fw / dec});
  }
  if (!lm.converged) throw FitError("fit_gaussian: no convergence after bounded iterations", r);
  return r;
}

inline FitResult fit_gaussian(const Histogram& h, bool inverted, const GaussianFitOptions& opt = {}) {
  const auto t = histogram_centers(h);
  const auto y = histogram_values(h);
  return fit_gaussian(t, y, inverted, opt);
}

// Model curve of a fit evaluated at t.
inline double evaluate_fit(const FitResult& r, double t) {
  switch (r.model) {
    case FitModel::exponential:
      if (t < r.t_ref) return 0.0;
      return r.value("amplitude") * std::exp(-(t - r.t_ref) / r.value("tau")) + r.value("baseline");
    case FitModel::gaussian:
    case FitModel::notch: {
      const double s = r.model == FitModel::notch ? -1.0 : 1.0;
      const double d = t - r.value("center");
      const double sg = r.value("sigma");
      return r.value("baseline") + s * r.value("amplitude") * std::exp(-0.5 * d * d / (sg * sg));
    }
  }
  return 0.0;
}

}  // namespace qdshape
