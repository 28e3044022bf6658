#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace twinbeam {

struct NelderMeadOptions {
  double initial_step = 0.3;
  std::size_t max_evals = 4000;
  double f_tol = 1e-11;  // spread of simplex values
  double x_tol = 1e-7;   // largest vertex distance from the best
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
  bool converged = false;
  std::vector<double> best_trace;  // best value after each iteration
};

/// Downhill simplex minimization. Non-finite objective values are treated
/// as +infinity, which keeps the search inside the feasible region.
template <class F>
NelderMeadResult nelder_mead(F&& objective, std::vector<double> x0, const NelderMeadOptions& opt = {}) {
  const std::size_t d = x0.size();
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = objective(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> pts(d + 1, x0);
  for (std::size_t j = 0; j < d; ++j) pts[j + 1][j] += opt.initial_step;
  std::vector<double> vals(d + 1);
  for (std::size_t j = 0; j <= d; ++j) vals[j] = eval(pts[j]);

  std::vector<std::size_t> idx(d + 1);
  auto order = [&] {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
  };

  while (res.evaluations < opt.max_evals) {
    order();
    const std::size_t best = idx.front(), worst = idx.back(), second = idx[d - 1];
    res.best_trace.push_back(vals[best]);

    double spread = std::fabs(vals[worst] - vals[best]);
    double size = 0.0;
    for (std::size_t j = 0; j <= d; ++j)
      for (std::size_t k = 0; k < d; ++k) size = std::max(size, std::fabs(pts[j][k] - pts[best][k]));
    if (std::isfinite(vals[worst]) && spread <= opt.f_tol * (1.0 + std::fabs(vals[best])) && size <= opt.x_tol) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(d, 0.0);
    for (std::size_t j = 0; j <= d; ++j)
      if (j != worst)
        for (std::size_t k = 0; k < d; ++k) centroid[k] += pts[j][k] / static_cast<double>(d);
    auto along = [&](double t) {
      std::vector<double> x(d);
      for (std::size_t k = 0; k < d; ++k) x[k] = centroid[k] + t * (pts[worst][k] - centroid[k]);
      return x;
    };

    auto xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      auto xe = along(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = std::move(xe);
        vals[worst] = fe;
      } else {
        pts[worst] = std::move(xr);
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = std::move(xr);
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    auto xc = along(outside ? -0.5 : 0.5);
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = std::move(xc);
      vals[worst] = fc;
      continue;
    }
    for (std::size_t j = 0; j <= d; ++j) {
      if (j == best) continue;
      for (std::size_t k = 0; k < d; ++k) pts[j][k] = pts[best][k] + 0.5 * (pts[j][k] - pts[best][k]);
      vals[j] = eval(pts[j]);
    }
  }
  order();
  res.x = pts[idx.front()];
  res.value = vals[idx.front()];
  res.best_trace.push_back(res.value);
  return res;
}

}  // namespace twinbeam
