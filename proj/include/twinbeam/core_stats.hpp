#pragma once

// Photon-number distributions of multimode thermal light and their
// normally ordered (factorial) moments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "twinbeam/errors.hpp"
#include "twinbeam/histogram.hpp"

namespace twinbeam {

inline constexpr double kDefaultTailTol = 1e-10;
inline constexpr std::size_t kDefaultNMaxCap = 512;

/// How a distribution with unbounded support is cut off. With no explicit
/// `n_max`, the bound is the smallest n leaving less than `tail_tol` of the
/// mass above it, searched up to `n_max_cap`.
struct Truncation {
  double tail_tol = kDefaultTailTol;
  std::size_t n_max_cap = kDefaultNMaxCap;
  std::optional<std::size_t> n_max;
};

/// log p(n; M, B) for the Mandel-Rice (negative binomial) law of M thermal
/// modes with B mean photons per mode:
///   p(n; M, B) = Gamma(n+M) / (n! Gamma(M)) * B^n / (1+B)^(n+M).
inline double log_mandel_rice(std::size_t n, double modes, double mean_per_mode) {
  if (!(modes > 0.0) || !(mean_per_mode > 0.0))
    throw validation_error("Mandel-Rice parameters must be positive (M=" + std::to_string(modes) +
                           ", B=" + std::to_string(mean_per_mode) + ")");
  const double nd = static_cast<double>(n);
  // log Gamma(n+M)/Gamma(M). Differencing two lgammas loses ~M*eps when M is
  // large (near-Poisson fits), so use the ratio directly while it is finite.
  double rising = 0.0;
  if (n > 0 && modes > 1.0) {
    const double r = boost::math::tgamma_delta_ratio(modes, nd);  // <= 1 here
    rising = std::isnormal(r) ? -std::log(r) : std::lgamma(nd + modes) - std::lgamma(modes);
  } else if (n > 0) {
    rising = std::lgamma(nd + modes) - std::lgamma(modes);
  }
  return rising - std::lgamma(nd + 1.0) + nd * std::log(mean_per_mode) - (nd + modes) * std::log1p(mean_per_mode);
}

inline double mandel_rice(std::size_t n, double modes, double mean_per_mode) {
  return std::exp(log_mandel_rice(n, modes, mean_per_mode));
}

/// n!/(n-k)!, zero when n < k.
inline double falling_factorial(std::size_t n, unsigned k) {
  if (n < k) return 0.0;
  double r = 1.0;
  for (unsigned j = 0; j < k; ++j) r *= static_cast<double>(n - j);
  return r;
}

/// Probabilities p(n), n = 0..n_max. Construction checks nonnegativity and
/// that the mass lies in [1 - tail_tol, 1 + 1e-12].
class PhotonDistribution {
 public:
  PhotonDistribution() : probs_{1.0} {}
  explicit PhotonDistribution(std::vector<double> probs, double tail_tol = kDefaultTailTol)
      : probs_(std::move(probs)) {
    detail::require(!probs_.empty(), "photon distribution needs at least one entry");
    double s = 0.0;
    for (double p : probs_) {
      detail::require(std::isfinite(p) && p >= 0.0, "photon distribution has a negative or non-finite entry");
      s += p;
    }
    if (s > 1.0 + 1e-12) throw validation_error("photon distribution mass exceeds 1: " + std::to_string(s));
    if (s < 1.0 - tail_tol)
      throw truncation_error("photon distribution mass " + std::to_string(s) + " is below 1 - tail_tol");
  }

  const std::vector<double>& probs() const noexcept { return probs_; }
  std::size_t n_max() const noexcept { return probs_.size() - 1; }
  double operator[](std::size_t n) const noexcept { return n < probs_.size() ? probs_[n] : 0.0; }

  double mass() const noexcept {
    double s = 0.0;
    for (double p : probs_) s += p;
    return s;
  }

  double mean() const noexcept {
    double m = 0.0;
    for (std::size_t n = 0; n < probs_.size(); ++n) m += static_cast<double>(n) * probs_[n];
    return m;
  }

 private:
  std::vector<double> probs_;
};

/// p(n_s, n_i) over the square 0..n_max, row-major in n_s.
class JointPhotonDistribution {
 public:
  JointPhotonDistribution(std::vector<double> probs, std::size_t n_max, double tail_tol = kDefaultTailTol)
      : n_max_(n_max), probs_(std::move(probs)) {
    detail::require(probs_.size() == (n_max + 1) * (n_max + 1), "joint distribution has wrong size");
    double s = 0.0;
    for (double p : probs_) {
      detail::require(std::isfinite(p) && p >= 0.0, "joint distribution has a negative or non-finite entry");
      s += p;
    }
    if (s > 1.0 + 1e-12) throw validation_error("joint distribution mass exceeds 1");
    if (s < 1.0 - tail_tol) throw truncation_error("joint distribution mass " + std::to_string(s) + " below 1 - tail_tol");
    tail_tol_ = tail_tol;
  }

  std::size_t n_max() const noexcept { return n_max_; }
  double tail_tol() const noexcept { return tail_tol_; }
  double operator()(std::size_t ns, std::size_t ni) const noexcept {
    return (ns <= n_max_ && ni <= n_max_) ? probs_[ns * (n_max_ + 1) + ni] : 0.0;
  }
  const std::vector<double>& probs() const noexcept { return probs_; }

  double mass() const noexcept {
    double s = 0.0;
    for (double p : probs_) s += p;
    return s;
  }

  PhotonDistribution signal_marginal() const {
    std::vector<double> m(n_max_ + 1, 0.0);
    for (std::size_t s = 0; s <= n_max_; ++s)
      for (std::size_t i = 0; i <= n_max_; ++i) m[s] += (*this)(s, i);
    return PhotonDistribution(std::move(m), tail_tol_);
  }

  PhotonDistribution idler_marginal() const {
    std::vector<double> m(n_max_ + 1, 0.0);
    for (std::size_t s = 0; s <= n_max_; ++s)
      for (std::size_t i = 0; i <= n_max_; ++i) m[i] += (*this)(s, i);
    return PhotonDistribution(std::move(m), tail_tol_);
  }

 private:
  std::size_t n_max_;
  std::vector<double> probs_;
  double tail_tol_ = kDefaultTailTol;
};

/// Multimode twin beam: a paired part shared by both arms plus independent
/// signal and idler noise, each Mandel-Rice with (modes, mean per mode).
struct TwinBeamParams {
  double paired_modes = 1.0;
  double paired_mean = 1.0;
  double signal_modes = 1.0;
  double signal_mean = 1.0;
  double idler_modes = 1.0;
  double idler_mean = 1.0;

  void validate() const {
    for (double v : {paired_modes, paired_mean, signal_modes, signal_mean, idler_modes, idler_mean})
      detail::require(std::isfinite(v) && v > 0.0, "twin-beam parameters must be positive and finite");
  }

  double signal_photon_mean() const noexcept { return paired_modes * paired_mean + signal_modes * signal_mean; }
  double idler_photon_mean() const noexcept { return paired_modes * paired_mean + idler_modes * idler_mean; }

  friend bool operator==(const TwinBeamParams&, const TwinBeamParams&) = default;
};

enum class MomentSource { photon, photocount };

/// Normally ordered moments <:n^k:> for k = 1..K.
struct MomentSet {
  std::vector<double> values;
  MomentSource source = MomentSource::photon;

  std::size_t max_order() const noexcept { return values.size(); }

  /// <:n^k:>, with <:n^0:> = 1.
  double operator()(std::size_t k) const {
    if (k == 0) return 1.0;
    if (k > values.size())
      throw validation_error("moment of order " + std::to_string(k) + " not available (K=" +
                             std::to_string(values.size()) + ")");
    return values[k - 1];
  }
};

// Reference states.
struct MandelRice {
  double modes;
  double mean_per_mode;
};
struct Fock {
  std::size_t photons;
};
struct Poisson {
  double mean;
};
struct Thermal {
  double mean;
};
using StateKind = std::variant<MandelRice, Fock, Poisson, Thermal>;

namespace detail {

template <class Pmf>
std::vector<double> tabulate_truncated(Pmf&& pmf, const Truncation& trunc, const char* what) {
  std::vector<double> probs;
  double cum = 0.0;
  const std::size_t limit = trunc.n_max ? *trunc.n_max : trunc.n_max_cap;
  for (std::size_t n = 0; n <= limit; ++n) {
    const double p = pmf(n);
    probs.push_back(p);
    cum += p;
    if (!trunc.n_max && 1.0 - cum < trunc.tail_tol) return probs;
  }
  if (1.0 - cum > trunc.tail_tol)
    throw truncation_error(std::string(what) + ": tail mass " + std::to_string(1.0 - cum) + " above n_max=" +
                           std::to_string(limit) + " exceeds tail_tol");
  return probs;
}

}  // namespace detail

inline PhotonDistribution make_distribution(const StateKind& kind, const Truncation& trunc = {}) {
  return std::visit(
      [&](const auto& k) -> PhotonDistribution {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Fock>) {
          const std::size_t n_max = trunc.n_max.value_or(k.photons);
          detail::require(n_max >= k.photons, "Fock state does not fit under n_max");
          std::vector<double> probs(n_max + 1, 0.0);
          probs[k.photons] = 1.0;
          return PhotonDistribution(std::move(probs), trunc.tail_tol);
        } else if constexpr (std::is_same_v<K, Poisson>) {
          detail::require(std::isfinite(k.mean) && k.mean >= 0.0, "Poisson mean must be nonnegative");
          if (k.mean == 0.0) {
            std::vector<double> probs(trunc.n_max.value_or(0) + 1, 0.0);
            probs[0] = 1.0;
            return PhotonDistribution(std::move(probs), trunc.tail_tol);
          }
          auto pmf = [mu = k.mean](std::size_t n) {
            const double nd = static_cast<double>(n);
            return std::exp(nd * std::log(mu) - mu - std::lgamma(nd + 1.0));
          };
          return PhotonDistribution(detail::tabulate_truncated(pmf, trunc, "poisson"), trunc.tail_tol);
        } else if constexpr (std::is_same_v<K, Thermal>) {
          detail::require(std::isfinite(k.mean) && k.mean >= 0.0, "thermal mean must be nonnegative");
          if (k.mean == 0.0) {
            std::vector<double> probs(trunc.n_max.value_or(0) + 1, 0.0);
            probs[0] = 1.0;
            return PhotonDistribution(std::move(probs), trunc.tail_tol);
          }
          auto pmf = [mu = k.mean](std::size_t n) { return mandel_rice(n, 1.0, mu); };
          return PhotonDistribution(detail::tabulate_truncated(pmf, trunc, "thermal"), trunc.tail_tol);
        } else {
          auto pmf = [m = k.modes, b = k.mean_per_mode](std::size_t n) { return mandel_rice(n, m, b); };
          pmf(0);  // parameter validation
          return PhotonDistribution(detail::tabulate_truncated(pmf, trunc, "mandel_rice"), trunc.tail_tol);
        }
      },
      kind);
}

/// Joint photon-number law of the twin beam: the paired photon number n is
/// added to independent signal and idler noise photons,
///   p(n_s, n_i) = sum_n p(n_s-n; M_s,B_s) p(n_i-n; M_i,B_i) p(n; M_p,B_p).
inline JointPhotonDistribution twin_beam_joint(const TwinBeamParams& params, const Truncation& trunc = {}) {
  params.validate();
  const std::size_t cap = trunc.n_max ? *trunc.n_max : trunc.n_max_cap;
  std::vector<double> pp(cap + 1), ps(cap + 1), pi(cap + 1);
  for (std::size_t n = 0; n <= cap; ++n) {
    pp[n] = mandel_rice(n, params.paired_modes, params.paired_mean);
    ps[n] = mandel_rice(n, params.signal_modes, params.signal_mean);
    pi[n] = mandel_rice(n, params.idler_modes, params.idler_mean);
  }

  std::size_t n_max = cap;
  if (!trunc.n_max) {
    // Marginal tails bound the mass lost outside the square.
    std::vector<double> ms(cap + 1, 0.0), mi(cap + 1, 0.0);
    for (std::size_t a = 0; a <= cap; ++a) {
      if (pp[a] == 0.0) continue;
      for (std::size_t b = 0; a + b <= cap; ++b) {
        ms[a + b] += pp[a] * ps[b];
        mi[a + b] += pp[a] * pi[b];
      }
    }
    double cs = 0.0, ci = 0.0;
    bool found = false;
    for (std::size_t n = 0; n <= cap; ++n) {
      cs += ms[n];
      ci += mi[n];
      if ((1.0 - cs) + (1.0 - ci) < trunc.tail_tol) {
        n_max = n;
        found = true;
        break;
      }
    }
    if (!found)
      throw truncation_error("twin-beam joint distribution does not reach tail_tol below n_max cap " +
                             std::to_string(cap));
  }

  const std::size_t dim = n_max + 1;
  std::vector<double> joint(dim * dim, 0.0);
  for (std::size_t n = 0; n <= n_max; ++n) {
    const double w = pp[n];
    if (w == 0.0) continue;
    for (std::size_t s = n; s <= n_max; ++s) {
      const double ws = w * ps[s - n];
      if (ws == 0.0) continue;
      double* row = joint.data() + s * dim;
      for (std::size_t i = n; i <= n_max; ++i) row[i] += ws * pi[i - n];
    }
  }
  return JointPhotonDistribution(std::move(joint), n_max, trunc.tail_tol);
}

/// <:n^k:> = sum_n p(n) n!/(n-k)!.
inline double factorial_moment(const PhotonDistribution& dist, unsigned k) {
  detail::require(k >= 1, "factorial moment order must be >= 1");
  double m = 0.0;
  const auto& p = dist.probs();
  for (std::size_t n = k; n < p.size(); ++n) m += p[n] * falling_factorial(n, k);
  return m;
}

/// Factorial moment of the empirical photocount distribution.
inline double count_factorial_moment(const PhotocountHistogram& hist, unsigned k) {
  detail::require(k >= 1, "factorial moment order must be >= 1");
  detail::require(hist.total() > 0, "photocount histogram is empty");
  double m = 0.0;
  const auto& counts = hist.counts();
  for (std::size_t c = k; c < counts.size(); ++c) m += static_cast<double>(counts[c]) * falling_factorial(c, k);
  return m / static_cast<double>(hist.total());
}

inline MomentSet moments(const PhotonDistribution& dist, unsigned max_order) {
  detail::require(max_order >= 1, "maximum moment order must be >= 1");
  MomentSet m{{}, MomentSource::photon};
  for (unsigned k = 1; k <= max_order; ++k) m.values.push_back(factorial_moment(dist, k));
  return m;
}

inline MomentSet moments(const PhotocountHistogram& hist, unsigned max_order) {
  detail::require(max_order >= 1, "maximum moment order must be >= 1");
  MomentSet m{{}, MomentSource::photocount};
  for (unsigned k = 1; k <= max_order; ++k) m.values.push_back(count_factorial_moment(hist, k));
  return m;
}

namespace detail {

inline double fano_of_weights(const std::vector<double>& w) {
  double total = 0.0, mean = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    total += w[n];
    mean += static_cast<double>(n) * w[n];
  }
  mean /= total;
  if (!(mean > 0.0)) throw validation_error("Fano factor is undefined for the vacuum (zero mean)");
  double var = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    const double d = static_cast<double>(n) - mean;
    var += w[n] * d * d;
  }
  return var / total / mean;
}

}  // namespace detail

/// Variance-to-mean ratio of the photon-number distribution.
inline double fano(const PhotonDistribution& dist) { return detail::fano_of_weights(dist.probs()); }

inline double fano(const PhotocountHistogram& hist) { return detail::fano_of_weights(hist.normalized()); }

}  // namespace twinbeam
