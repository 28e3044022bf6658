#pragma once

// Fit of the twin-beam model (paired + noise Mandel-Rice parts, detector
// efficiencies) to a joint signal/idler photocount histogram by maximizing
// the multinomial likelihood.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "twinbeam/core_stats.hpp"
#include "twinbeam/detector.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/histogram.hpp"
#include "twinbeam/parallel.hpp"
#include "twinbeam/simplex.hpp"

namespace twinbeam {

/// Camera layout that is known independently of the fit.
struct DetectorGeometry {
  std::size_t signal_pixels = 1;
  std::size_t idler_pixels = 1;
  double signal_dark_per_pixel = 0.0;
  double idler_dark_per_pixel = 0.0;
};

struct FitResult {
  TwinBeamParams params;
  double signal_efficiency = 0.0;
  double idler_efficiency = 0.0;
  double objective_value = 0.0;  // mean log-likelihood per run
  bool converged = false;
  std::size_t evaluations = 0;
  std::vector<double> objective_trace;  // best log-likelihood per accepted step (winning restart)

  DetectorModel signal_detector(const DetectorGeometry& g) const {
    return {g.signal_pixels, signal_efficiency, g.signal_dark_per_pixel};
  }
  DetectorModel idler_detector(const DetectorGeometry& g) const {
    return {g.idler_pixels, idler_efficiency, g.idler_dark_per_pixel};
  }
};

struct FitOptions {
  std::size_t restarts = 8;
  std::size_t max_evals = 6000;  // per restart, summed over simplex rebuilds
  double tail_tol = 1e-8;
  std::size_t n_max_cap = 4096;
  unsigned workers = worker_count();
};

/// Model photocount probabilities f^t(c_s, c_i) for c_s <= cs_max and
/// c_i <= ci_max, row-major. Uses the factorized form
///   f^t = sum_n p_p(n) g_s(c_s; n) g_i(c_i; n),
///   g_a(c; n) = sum_m p_a(m) T_a(c, n + m).
inline std::vector<double> model_photocount_joint(const TwinBeamParams& params, const DetectorModel& signal,
                                                  const DetectorModel& idler, std::size_t cs_max, std::size_t ci_max,
                                                  double tail_tol = 1e-8, std::size_t n_max_cap = 4096) {
  params.validate();
  signal.validate();
  idler.validate();
  Truncation trunc{tail_tol / 3.0, n_max_cap, std::nullopt};
  const auto pp = make_distribution(MandelRice{params.paired_modes, params.paired_mean}, trunc).probs();
  const auto ps = make_distribution(MandelRice{params.signal_modes, params.signal_mean}, trunc).probs();
  const auto pi = make_distribution(MandelRice{params.idler_modes, params.idler_mean}, trunc).probs();

  auto arm = [&](const DetectorModel& det, const std::vector<double>& noise, std::size_t c_max) {
    const std::size_t n_top = pp.size() - 1 + noise.size() - 1;
    const std::size_t c_hi = std::min(c_max, det.pixels);
    const std::vector<double> T = detail::tabulate_response(det, c_hi, n_top);
    std::vector<double> g((c_max + 1) * pp.size(), 0.0);
    for (std::size_t c = 0; c <= c_hi; ++c)
      for (std::size_t n = 0; n < pp.size(); ++n) {
        double s = 0.0;
        const double* row = T.data() + c * (n_top + 1) + n;
        for (std::size_t m = 0; m < noise.size(); ++m) s += noise[m] * row[m];
        g[c * pp.size() + n] = s;
      }
    return g;
  };
  const std::vector<double> gs = arm(signal, ps, cs_max);
  const std::vector<double> gi = arm(idler, pi, ci_max);

  std::vector<double> f((cs_max + 1) * (ci_max + 1), 0.0);
  for (std::size_t cs = 0; cs <= cs_max; ++cs)
    for (std::size_t n = 0; n < pp.size(); ++n) {
      const double w = pp[n] * gs[cs * pp.size() + n];
      if (w == 0.0) continue;
      double* out = f.data() + cs * (ci_max + 1);
      for (std::size_t ci = 0; ci <= ci_max; ++ci) out[ci] += w * gi[ci * pp.size() + n];
    }
  return f;
}

/// Mean log-likelihood per run of the histogram under the model.
inline double fit_log_likelihood(const JointPhotocountHistogram& hist, const TwinBeamParams& params,
                                 const DetectorModel& signal, const DetectorModel& idler, double tail_tol = 1e-8,
                                 std::size_t n_max_cap = 4096) {
  const std::size_t cs_max = hist.signal_extent() - 1, ci_max = hist.idler_extent() - 1;
  const auto f = model_photocount_joint(params, signal, idler, cs_max, ci_max, tail_tol, n_max_cap);
  double ll = 0.0;
  for (std::size_t cs = 0; cs <= cs_max; ++cs)
    for (std::size_t ci = 0; ci <= ci_max; ++ci) {
      const auto k = hist(cs, ci);
      if (k == 0) continue;
      const double p = f[cs * (ci_max + 1) + ci];
      if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
      ll += static_cast<double>(k) * std::log(p);
    }
  return ll / static_cast<double>(hist.total());
}

namespace detail {

using FitVector = std::array<double, 8>;

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline FitVector encode(const TwinBeamParams& p, double eta_s, double eta_i) {
  return {std::log(p.paired_modes), std::log(p.paired_mean), std::log(p.signal_modes), std::log(p.signal_mean),
          std::log(p.idler_modes),  std::log(p.idler_mean),  logit(eta_s),             logit(eta_i)};
}

inline void decode(const std::vector<double>& x, TwinBeamParams& p, double& eta_s, double& eta_i) {
  p = {std::exp(x[0]), std::exp(x[1]), std::exp(x[2]), std::exp(x[3]), std::exp(x[4]), std::exp(x[5])};
  eta_s = logistic(x[6]);
  eta_i = logistic(x[7]);
}

struct PhotocountMoments {
  double mean_s = 0, mean_i = 0, var_s = 0, var_i = 0, cov = 0;
};

inline PhotocountMoments histogram_moments(const JointPhotocountHistogram& h) {
  PhotocountMoments m;
  const double N = static_cast<double>(h.total());
  for (std::size_t s = 0; s < h.signal_extent(); ++s)
    for (std::size_t i = 0; i < h.idler_extent(); ++i) {
      const double w = static_cast<double>(h(s, i)) / N;
      m.mean_s += w * static_cast<double>(s);
      m.mean_i += w * static_cast<double>(i);
    }
  for (std::size_t s = 0; s < h.signal_extent(); ++s)
    for (std::size_t i = 0; i < h.idler_extent(); ++i) {
      const double w = static_cast<double>(h(s, i)) / N;
      const double ds = static_cast<double>(s) - m.mean_s, di = static_cast<double>(i) - m.mean_i;
      m.var_s += w * ds * ds;
      m.var_i += w * di * di;
      m.cov += w * ds * di;
    }
  return m;
}

// Starting point from photocount moments for an assumed efficiency pair,
// inverting binomial thinning and splitting the mean 98/2 between the
// paired and noise parts.
inline FitVector moment_seed(const PhotocountMoments& m, const DetectorGeometry& g, double eta_s, double eta_i) {
  const double dark_s = g.signal_dark_per_pixel * static_cast<double>(g.signal_pixels);
  const double dark_i = g.idler_dark_per_pixel * static_cast<double>(g.idler_pixels);
  const double ns = std::max((m.mean_s - dark_s) / eta_s, 1e-3);
  const double ni = std::max((m.mean_i - dark_i) / eta_i, 1e-3);
  const double cov_n = std::max(m.cov / (eta_s * eta_i), 1e-6);
  const double vs = std::max((m.var_s - eta_s * (1 - eta_s) * ns) / (eta_s * eta_s), 1e-6);
  const double vi = std::max((m.var_i - eta_i * (1 - eta_i) * ni) / (eta_i * eta_i), 1e-6);

  const double paired_mean_total = 0.98 * std::min(ns, ni);
  const double bp = std::clamp(cov_n / paired_mean_total - 1.0, 1e-3, 10.0);
  TwinBeamParams p;
  p.paired_mean = bp;
  p.paired_modes = paired_mean_total / bp;
  auto noise = [&](double total_mean, double total_var, double& modes, double& mean) {
    const double mu = std::max(total_mean - paired_mean_total, 0.02 * total_mean);
    const double var = std::max(total_var - cov_n, mu * 1.01);
    mean = std::clamp(var / mu - 1.0, 1e-2, 50.0);
    modes = mu / mean;
  };
  noise(ns, vs, p.signal_modes, p.signal_mean);
  noise(ni, vi, p.idler_modes, p.idler_mean);
  return encode(p, eta_s, eta_i);
}

}  // namespace detail

/// Maximum-likelihood twin-beam parameters and efficiencies for `hist`.
/// Runs `restarts` simplex searches from moment-based seeds spread over
/// efficiency, then keeps the best (ties broken by parameter order).
inline FitResult fit_twin_beam(const JointPhotocountHistogram& hist, const DetectorGeometry& geometry,
                               const FitOptions& opt = {}) {
  detail::require(hist.total() >= 10000, "fit needs at least 1e4 runs, histogram has " + std::to_string(hist.total()));
  detail::require(geometry.signal_pixels >= 1 && geometry.idler_pixels >= 1, "geometry needs pixels >= 1");
  const auto mom = detail::histogram_moments(hist);
  if (!(mom.mean_s > 0.0) || !(mom.mean_i > 0.0) || !(mom.var_s > 0.0) || !(mom.var_i > 0.0))
    throw validation_error("degenerate photocount histogram: an arm never registers counts or never fluctuates");

  auto objective = [&](const std::vector<double>& x) {
    for (double v : x)
      if (!std::isfinite(v) || std::fabs(v) > 40.0) return std::numeric_limits<double>::infinity();
    TwinBeamParams p;
    double es, ei;
    detail::decode(x, p, es, ei);
    if (p.signal_photon_mean() > 500.0 || p.idler_photon_mean() > 500.0 || es >= 1.0 - 1e-9 || ei >= 1.0 - 1e-9)
      return std::numeric_limits<double>::infinity();
    try {
      return -fit_log_likelihood(hist, p, {geometry.signal_pixels, es, geometry.signal_dark_per_pixel},
                                 {geometry.idler_pixels, ei, geometry.idler_dark_per_pixel}, opt.tail_tol,
                                 opt.n_max_cap);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const std::size_t restarts = std::max<std::size_t>(1, opt.restarts);
  std::vector<NelderMeadResult> runs(restarts);
  parallel_for(
      restarts,
      [&](std::size_t r) {
        const double eta = 0.1 + 0.5 * static_cast<double>(r) / static_cast<double>(std::max<std::size_t>(1, restarts - 1));
        const auto seed = detail::moment_seed(mom, geometry, eta, eta);
        std::vector<double> x(seed.begin(), seed.end());
        NelderMeadResult total;
        std::vector<double> trace;
        double step = 0.3;
        // Rebuild the simplex around the incumbent until it stops moving.
        while (total.evaluations < opt.max_evals) {
          NelderMeadOptions nm;
          nm.initial_step = step;
          nm.max_evals = opt.max_evals - total.evaluations;
          auto res = nelder_mead(objective, x, nm);
          total.evaluations += res.evaluations;
          for (double v : res.best_trace)
            if (trace.empty() || v <= trace.back()) trace.push_back(v);
          const bool improved = res.value < total.value - 1e-11;
          if (res.value <= total.value) {
            total.value = res.value;
            total.x = res.x;
          }
          x = total.x;
          total.converged = res.converged;
          if (!improved && res.converged) break;
          step = std::max(0.05, step * 0.7);
        }
        total.best_trace = std::move(trace);
        runs[r] = std::move(total);
      },
      opt.workers);

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].value < runs[best].value ||
        (runs[r].value == runs[best].value && runs[r].x < runs[best].x))
      best = r;
  }
  const auto& win = runs[best];
  if (!std::isfinite(win.value)) throw numerical_error("twin-beam fit found no feasible parameters");

  FitResult out;
  detail::decode(win.x, out.params, out.signal_efficiency, out.idler_efficiency);
  out.objective_value = -win.value;
  out.converged = win.converged;
  for (const auto& r : runs) out.evaluations += r.evaluations;
  for (double v : win.best_trace) out.objective_trace.push_back(-v);
  return out;
}

}  // namespace twinbeam
