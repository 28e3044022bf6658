#pragma once

// Response of a pixelated photon-counting camera (intensified CCD): N pixels,
// each photon lands on a uniformly random pixel and registers with
// probability eta, each pixel dark-fires with probability D, and a pixel
// reports at most one count per frame.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/mpfr.hpp>

#include "twinbeam/core_stats.hpp"
#include "twinbeam/errors.hpp"

namespace twinbeam {

struct DetectorModel {
  std::size_t pixels = 1;
  double efficiency = 0.0;
  double dark_per_pixel = 0.0;

  /// Dark counts given as the total rate d over the whole sensor; D = d / N.
  static DetectorModel from_total_dark(std::size_t pixels, double efficiency, double dark_total) {
    detail::require(pixels >= 1, "detector needs at least one pixel");
    DetectorModel m{pixels, efficiency, dark_total / static_cast<double>(pixels)};
    m.validate();
    return m;
  }

  double dark_total() const noexcept { return dark_per_pixel * static_cast<double>(pixels); }

  void validate() const {
    detail::require(pixels >= 1, "detector needs at least one pixel");
    detail::require(efficiency >= 0.0 && efficiency < 1.0, "detector efficiency must lie in [0, 1)");
    detail::require(dark_per_pixel >= 0.0 && dark_per_pixel < 1.0, "per-pixel dark-count rate must lie in [0, 1)");
  }

  friend bool operator==(const DetectorModel&, const DetectorModel&) = default;
};

inline constexpr double kColumnTol = 1e-9;

/// T(c, n): probability of c photocounts given n incident photons.
class ResponseMatrix {
 public:
  ResponseMatrix(std::vector<double> table, std::size_t c_max, std::size_t n_max, double col_tol = kColumnTol)
      : c_max_(c_max), n_max_(n_max), table_(std::move(table)) {
    detail::require(table_.size() == (c_max + 1) * (n_max + 1), "response table has wrong size");
    for (double t : table_)
      detail::require(std::isfinite(t) && t >= 0.0 && t <= 1.0, "response entries must lie in [0, 1]");
    for (std::size_t n = 0; n <= n_max_; ++n) {
      const double s = column_sum(n);
      if (s > 1.0 + 1e-12 || s < 1.0 - col_tol)
        throw numerical_error("response column n=" + std::to_string(n) + " sums to " + std::to_string(s));
    }
  }

  std::size_t c_max() const noexcept { return c_max_; }
  std::size_t n_max() const noexcept { return n_max_; }
  double operator()(std::size_t c, std::size_t n) const noexcept {
    return (c <= c_max_ && n <= n_max_) ? table_[c * (n_max_ + 1) + n] : 0.0;
  }

  double column_sum(std::size_t n) const noexcept {
    double s = 0.0;
    for (std::size_t c = 0; c <= c_max_; ++c) s += (*this)(c, n);
    return s;
  }

 private:
  std::size_t c_max_;
  std::size_t n_max_;
  std::vector<double> table_;
};

namespace detail {

template <unsigned Digits10>
using mp_real = boost::multiprecision::number<boost::multiprecision::mpfr_float_backend<Digits10>,
                                              boost::multiprecision::et_off>;

struct SignedSum {
  double value = 0.0;       // T(c, n) as a double, before clamping
  double rel_error = 0.0;   // estimated relative error of `value`
  bool negligible = false;  // |T| bounded below the double range
};

inline double to_double(double x) { return x; }
template <class R>
double to_double(const R& x) {
  return x.template convert_to<double>();
}

// Response element for one (c, n) in arithmetic of type R:
//   T = C(N,c) (1-D)^N (1-eta)^n (-1)^c
//       * sum_l C(c,l) (-1)^l (1-D)^-l (1 + l eta / (N (1-eta)))^n.
// Terms are formed as signed log-magnitudes, scaled by the largest, and
// added smallest-first with Neumaier compensation. The condition number
// sum|t| / |sum t| drives the error estimate.
template <class R>
SignedSum signed_response_sum(const DetectorModel& m, std::size_t c, std::size_t n, double unit_roundoff) {
  using std::exp;
  using std::log;
  using std::log1p;
  using std::abs;
  const R one(1);
  const R eta(m.efficiency);
  const R dark(m.dark_per_pixel);
  const R pixels(static_cast<double>(m.pixels));
  const R ratio = eta / (one - eta) / pixels;
  const R log_keep_dark = log1p(-dark);
  const R nn(static_cast<double>(n));

  std::vector<R> logmag(c + 1);
  R log_binom(0);
  for (std::size_t l = 0; l <= c; ++l) {
    if (l > 0) log_binom += log(R(static_cast<double>(c - l + 1))) - log(R(static_cast<double>(l)));
    logmag[l] = log_binom - R(static_cast<double>(l)) * log_keep_dark +
                nn * log1p(R(static_cast<double>(l)) * ratio);
  }
  std::vector<std::size_t> order(c + 1);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logmag[a] < logmag[b]; });
  const R top = logmag[order.back()];

  R sum(0), comp(0), abs_sum(0);
  double max_abs_log = 0.0;
  for (std::size_t l : order) {
    max_abs_log = std::max(max_abs_log, std::abs(to_double(logmag[l])));
    R t = exp(logmag[l] - top);
    abs_sum += t;
    if ((l + c) % 2 == 1) t = -t;  // (-1)^c (-1)^l
    const R s = sum + t;
    if (abs(sum) >= abs(t))
      comp += (sum - s) + t;
    else
      comp += (t - s) + sum;
    sum = s;
  }
  sum += comp;

  // log prefactor: log C(N,c) + N log(1-D) + n log(1-eta)
  R log_pref(0);
  for (std::size_t j = 0; j < c; ++j)
    log_pref += log(pixels - R(static_cast<double>(j))) - log(R(static_cast<double>(j + 1)));
  log_pref += pixels * log_keep_dark + nn * log1p(-eta);

  SignedSum out;
  const double bound_log = to_double(log_pref + top + log(abs_sum));
  if (bound_log < -745.0) {
    out.negligible = true;
    return out;
  }
  if (!(sum > R(0))) {
    out.rel_error = std::numeric_limits<double>::infinity();
    return out;
  }
  const double cond = to_double(abs_sum / sum);
  out.rel_error = cond * unit_roundoff * (2.0 * static_cast<double>(c + 1) + max_abs_log + 1.0);
  out.value = to_double(exp(log_pref + top + log(sum)));
  return out;
}

template <unsigned Digits10>
SignedSum signed_response_sum_mp(const DetectorModel& m, std::size_t c, std::size_t n) {
  return signed_response_sum<mp_real<Digits10>>(m, c, n, std::pow(10.0, -static_cast<double>(Digits10)));
}

// Pixels fired by photons only: P(k | n) for k = 0..c_max, every n up to
// n_max. Adding a photon fires a new pixel with probability eta (N-k)/N.
inline std::vector<double> photon_fired_pixels(const DetectorModel& m, std::size_t c_max, std::size_t n_max) {
  const double N = static_cast<double>(m.pixels);
  const double eta = m.efficiency;
  std::vector<double> out((n_max + 1) * (c_max + 1), 0.0);
  std::vector<double> p(c_max + 1, 0.0), q(c_max + 1);
  p[0] = 1.0;
  for (std::size_t n = 0; n <= n_max; ++n) {
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(n * (c_max + 1)));
    for (std::size_t k = 0; k <= c_max; ++k) {
      const double kd = static_cast<double>(k);
      double v = p[k] * (1.0 - eta * std::max(N - kd, 0.0) / N);
      if (k > 0) v += p[k - 1] * eta * std::max(N - kd + 1.0, 0.0) / N;
      q[k] = v;
    }
    std::swap(p, q);
  }
  return out;
}

// Raw T(c, n) for c <= c_max, n <= n_max through the positive-term
// decomposition: k photon-fired pixels, then c - k dark pixels among the
// remaining N - k. Algebraically identical to the alternating sum.
inline std::vector<double> tabulate_response(const DetectorModel& m, std::size_t c_max, std::size_t n_max) {
  const std::size_t N = m.pixels;
  c_max = std::min(c_max, N);
  const std::vector<double> fired = photon_fired_pixels(m, c_max, n_max);
  const double D = m.dark_per_pixel;

  // dark(k, j) = C(N-k, j) D^j (1-D)^(N-k-j)
  std::vector<double> dark((c_max + 1) * (c_max + 1), 0.0);
  for (std::size_t k = 0; k <= c_max; ++k) {
    const double rest = static_cast<double>(N - k);
    for (std::size_t j = 0; k + j <= c_max; ++j) {
      double v;
      if (D == 0.0) {
        v = j == 0 ? 1.0 : 0.0;
      } else {
        const double jd = static_cast<double>(j);
        v = std::exp(std::lgamma(rest + 1.0) - std::lgamma(jd + 1.0) - std::lgamma(rest - jd + 1.0) +
                     jd * std::log(D) + (rest - jd) * std::log1p(-D));
      }
      dark[k * (c_max + 1) + j] = v;
    }
  }

  std::vector<double> table((c_max + 1) * (n_max + 1), 0.0);
  for (std::size_t n = 0; n <= n_max; ++n) {
    const double* pk = fired.data() + n * (c_max + 1);
    for (std::size_t c = 0; c <= c_max; ++c) {
      double t = 0.0;
      for (std::size_t k = 0; k <= c; ++k) t += pk[k] * dark[k * (c_max + 1) + (c - k)];
      table[c * (n_max + 1) + n] = std::clamp(t, 0.0, 1.0);
    }
  }
  return table;
}

}  // namespace detail

/// One element T(c, n) evaluated from the closed-form alternating sum.
/// The sum is first tried in double precision and redone in progressively
/// wider MPFR arithmetic until its estimated relative error is below 1e-13.
/// Throws instability_error if even the widest tier cannot certify 1e-6.
inline double response_element(const DetectorModel& model, std::size_t c, std::size_t n) {
  model.validate();
  detail::require(c <= model.pixels, "photocount exceeds the number of pixels");
  // Structural zeros: without dark counts no more pixels fire than photons
  // arrive, and a blind detector never fires.
  if (model.dark_per_pixel == 0.0 && (c > n || (model.efficiency == 0.0 && c > 0))) return 0.0;

  auto accept = [](const detail::SignedSum& s, double target, double& out) {
    if (s.negligible) {
      out = 0.0;
      return true;
    }
    if (s.rel_error <= target) {
      out = std::clamp(s.value, 0.0, 1.0);
      return true;
    }
    return false;
  };
  constexpr double kWanted = 1e-13;
  constexpr double kRequired = 1e-6;
  double out = 0.0;
  if (accept(detail::signed_response_sum<double>(model, c, n, std::numeric_limits<double>::epsilon()), kWanted, out))
    return out;
  if (accept(detail::signed_response_sum_mp<40>(model, c, n), kWanted, out)) return out;
  if (accept(detail::signed_response_sum_mp<100>(model, c, n), kWanted, out)) return out;
  if (accept(detail::signed_response_sum_mp<250>(model, c, n), kWanted, out)) return out;
  if (accept(detail::signed_response_sum_mp<600>(model, c, n), kWanted, out)) return out;
  const auto last = detail::signed_response_sum_mp<1500>(model, c, n);
  if (accept(last, kRequired, out)) return out;
  throw instability_error("response element T(" + std::to_string(c) + "," + std::to_string(n) +
                          ") cancels beyond 1500-digit arithmetic (estimated relative error " +
                          std::to_string(last.rel_error) + ")");
}

/// Full response table for n = 0..n_max. The photocount range starts at
/// `c_max` (or a small default) and is extended until every column carries
/// at least 1 - 1e-9 of its mass, then trimmed to the smallest such range.
inline ResponseMatrix build_response(const DetectorModel& model, std::size_t n_max,
                                     std::optional<std::size_t> c_max = std::nullopt) {
  model.validate();
  const std::size_t N = model.pixels;
  std::size_t cap = std::min(N, std::max(c_max.value_or(0), n_max + 16));
  std::vector<double> table;
  for (;;) {
    table = detail::tabulate_response(model, cap, n_max);
    double worst = 1.0;
    for (std::size_t n = 0; n <= n_max; ++n) {
      double s = 0.0;
      for (std::size_t c = 0; c <= cap; ++c) s += table[c * (n_max + 1) + n];
      worst = std::min(worst, s);
    }
    if (worst >= 1.0 - kColumnTol || cap == N) break;
    cap = std::min(N, 2 * cap);
  }

  // Smallest range keeping every column above 1 - col_tol.
  std::vector<double> sums(n_max + 1, 0.0);
  std::size_t needed = 0;
  for (std::size_t c = 0; c <= cap; ++c) {
    bool all = true;
    for (std::size_t n = 0; n <= n_max; ++n) {
      sums[n] += table[c * (n_max + 1) + n];
      all = all && sums[n] >= 1.0 - kColumnTol;
    }
    needed = c;
    if (all) break;
  }
  const std::size_t keep = std::max(needed, std::min(c_max.value_or(0), cap));
  table.resize((keep + 1) * (n_max + 1));
  return ResponseMatrix(std::move(table), keep, n_max);
}

/// Photocount distribution f(c) = sum_n T(c, n) p(n).
inline std::vector<double> apply_response(const ResponseMatrix& T, const PhotonDistribution& dist) {
  if (dist.n_max() > T.n_max())
    throw validation_error("distribution extends to n=" + std::to_string(dist.n_max()) +
                           " but the response matrix stops at n=" + std::to_string(T.n_max()));
  std::vector<double> f(T.c_max() + 1, 0.0);
  const auto& p = dist.probs();
  for (std::size_t c = 0; c <= T.c_max(); ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) s += T(c, n) * p[n];
    f[c] = s;
  }
  return f;
}

/// f_s^t(c_s) = sum_{n_s, n_i} T_s(c_s, n_s) p(n_s, n_i) for every c_s.
inline std::vector<double> signal_photocount_theory(const JointPhotonDistribution& joint, const ResponseMatrix& Ts) {
  return apply_response(Ts, joint.signal_marginal());
}

/// Idler photon-number distribution left after registering c_s signal counts.
inline PhotonDistribution conditional_theory(const JointPhotonDistribution& joint, const ResponseMatrix& Ts,
                                             std::size_t cs) {
  if (joint.n_max() > Ts.n_max())
    throw validation_error("signal response matrix stops at n=" + std::to_string(Ts.n_max()) +
                           ", joint distribution needs n=" + std::to_string(joint.n_max()));
  const std::size_t dim = joint.n_max() + 1;
  std::vector<double> p(dim, 0.0);
  for (std::size_t ns = 0; ns < dim; ++ns) {
    const double t = Ts(cs, ns);
    if (t == 0.0) continue;
    for (std::size_t ni = 0; ni < dim; ++ni) p[ni] += t * joint(ns, ni);
  }
  const double f = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(f > 1e-300))
    throw numerical_error("conditioning on c_s=" + std::to_string(cs) + " has zero probability");
  for (double& v : p) v /= f;
  return PhotonDistribution(std::move(p), joint.tail_tol());
}

/// Pixel-level simulation of one detection of n photons. The dark pixels are
/// drawn as a Binomial(N, D) count placed on distinct uniform pixels, which
/// has the same law as N independent Bernoulli(D) trials.
template <class URBG>
std::size_t sample_physical(const DetectorModel& model, std::size_t n, URBG& rng) {
  std::uniform_int_distribution<std::size_t> pixel(0, model.pixels - 1);
  std::bernoulli_distribution registers(model.efficiency);
  std::vector<std::size_t> fired;
  for (std::size_t j = 0; j < n; ++j)
    if (registers(rng)) fired.push_back(pixel(rng));

  if (model.dark_per_pixel > 0.0) {
    std::binomial_distribution<std::size_t> dark_count(model.pixels, model.dark_per_pixel);
    const std::size_t k = dark_count(rng);
    // Floyd's sampling of k distinct pixels.
    std::vector<std::size_t> dark;
    for (std::size_t j = model.pixels - k; j < model.pixels; ++j) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      if (std::find(dark.begin(), dark.end(), t) == dark.end())
        dark.push_back(t);
      else
        dark.push_back(j);
    }
    fired.insert(fired.end(), dark.begin(), dark.end());
  }
  std::sort(fired.begin(), fired.end());
  return static_cast<std::size_t>(std::unique(fired.begin(), fired.end()) - fired.begin());
}

}  // namespace twinbeam
