#pragma once

// Maximum-likelihood reconstruction of a photon-number distribution from a
// photocount histogram by expectation-maximization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twinbeam/core_stats.hpp"
#include "twinbeam/detector.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/histogram.hpp"

namespace twinbeam {

struct ConditionalRow {
  std::vector<double> frequencies;  // f_i(c_i; c_s), sums to 1
  std::uint64_t total = 0;          // N_r
};

/// Normalized idler histogram of the runs with exactly c_s signal counts.
inline ConditionalRow conditional_histogram(const JointPhotocountHistogram& joint, std::size_t cs) {
  const PhotocountHistogram row = joint.idler_row(cs);
  if (row.total() == 0) throw validation_error("no runs with c_s=" + std::to_string(cs));
  return {row.normalized(), row.total()};
}

struct EmDiagnostics {
  std::size_t iterations = 0;
  double final_delta = 0.0;
  bool converged = false;
  std::vector<double> log_likelihood_trace;
};

struct EmOptions {
  double tol = 1e-9;
  std::size_t max_iter = 10000;
  std::optional<PhotonDistribution> initial;  // uniform over 0..n_max when empty
};

struct EmResult {
  PhotonDistribution distribution;
  EmDiagnostics diagnostics;
};

namespace detail {

constexpr double kEmTiny = 1e-300;

inline void check_em_dims(const PhotonDistribution& p, std::span<const double> f, const ResponseMatrix& T) {
  if (p.n_max() > T.n_max())
    throw validation_error("EM iterate extends to n=" + std::to_string(p.n_max()) + " beyond the response matrix (" +
                           std::to_string(T.n_max()) + ")");
  detail::require(!f.empty(), "EM needs a nonempty photocount distribution");
  if (f.size() > T.c_max() + 1)
    throw validation_error("photocounts reach c=" + std::to_string(f.size() - 1) + " beyond the response matrix (" +
                           std::to_string(T.c_max()) + ")");
}

inline std::vector<double> predicted_counts(const std::vector<double>& p, std::size_t c_extent, const ResponseMatrix& T) {
  std::vector<double> den(c_extent, 0.0);
  for (std::size_t c = 0; c < c_extent; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) s += T(c, n) * p[n];
    den[c] = s;
  }
  return den;
}

inline double log_likelihood_of(const std::vector<double>& den, std::span<const double> f) {
  double ll = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c)
    if (f[c] > 0.0 && den[c] >= kEmTiny) ll += f[c] * std::log(den[c]);
  return ll;
}

}  // namespace detail

/// sum_c f(c) log(sum_n T(c, n) p(n)) over cells with nonzero frequency.
inline double em_log_likelihood(const PhotonDistribution& p, std::span<const double> f, const ResponseMatrix& T) {
  detail::check_em_dims(p, f, T);
  return detail::log_likelihood_of(detail::predicted_counts(p.probs(), f.size(), T), f);
}

/// One EM update
///   p'(n) = p(n) sum_c f(c) T(c, n) / sum_n' T(c, n') p(n'),
/// renormalized to unit mass. Cells whose prediction underflows are skipped.
inline PhotonDistribution em_step(const PhotonDistribution& p, std::span<const double> f, const ResponseMatrix& T) {
  detail::check_em_dims(p, f, T);
  const auto& cur = p.probs();
  const std::vector<double> den = detail::predicted_counts(cur, f.size(), T);
  std::vector<double> next(cur.size(), 0.0);
  for (std::size_t c = 0; c < f.size(); ++c) {
    if (f[c] <= 0.0 || den[c] < detail::kEmTiny) continue;
    const double w = f[c] / den[c];
    for (std::size_t n = 0; n < cur.size(); ++n) next[n] += w * T(c, n);
  }
  double mass = 0.0;
  for (std::size_t n = 0; n < cur.size(); ++n) {
    next[n] *= cur[n];
    mass += next[n];
  }
  if (!(mass > 0.0)) throw numerical_error("EM update lost all probability mass");
  for (double& v : next) v /= mass;
  return PhotonDistribution(std::move(next));
}

/// Iterates em_step until the largest change of any p(n) drops below `tol`.
/// Non-convergence is reported in the diagnostics, not thrown.
inline EmResult em_reconstruct(std::span<const double> f, const ResponseMatrix& T, const EmOptions& opt = {}) {
  double fsum = 0.0;
  for (double v : f) {
    detail::require(std::isfinite(v) && v >= 0.0, "photocount frequencies must be nonnegative");
    fsum += v;
  }
  detail::require(std::fabs(fsum - 1.0) < 1e-9, "photocount frequencies must be normalized");

  PhotonDistribution p = opt.initial ? *opt.initial
                                     : PhotonDistribution(std::vector<double>(
                                           T.n_max() + 1, 1.0 / static_cast<double>(T.n_max() + 1)));
  EmDiagnostics diag;
  diag.log_likelihood_trace.push_back(em_log_likelihood(p, f, T));
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    PhotonDistribution next = em_step(p, f, T);
    double delta = 0.0;
    for (std::size_t n = 0; n <= p.n_max(); ++n) delta = std::max(delta, std::fabs(next[n] - p[n]));
    p = std::move(next);
    diag.iterations = it + 1;
    diag.final_delta = delta;
    diag.log_likelihood_trace.push_back(em_log_likelihood(p, f, T));
    if (delta < opt.tol) {
      diag.converged = true;
      break;
    }
  }
  return {std::move(p), std::move(diag)};
}

}  // namespace twinbeam
