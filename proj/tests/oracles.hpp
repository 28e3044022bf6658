#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "twinbeam/twinbeam.hpp"

namespace oracle {

// Closed-form factorial moments.
inline double poisson_moment(double mu, unsigned k) { return std::pow(mu, k); }
inline double thermal_moment(double mu, unsigned k) { return std::tgamma(k + 1.0) * std::pow(mu, k); }
inline double fock_moment(std::size_t m, unsigned k) {
  if (k > m) return 0.0;
  double r = 1.0;
  for (unsigned j = 0; j < k; ++j) r *= static_cast<double>(m - j);
  return r;
}
// <:n^k:> = Gamma(M+k)/Gamma(M) B^k for the Mandel-Rice law.
inline double mandel_rice_moment(double M, double B, unsigned k) {
  return std::exp(std::lgamma(M + k) - std::lgamma(M) + k * std::log(B));
}

// p(n; M, B) as prod_{j<n} (M+j)/(j+1) * B^n / (1+B)^(n+M) in long double.
inline long double mandel_rice_product(std::size_t n, double M, double B) {
  long double r = 1.0L;
  for (std::size_t j = 0; j < n; ++j) r *= (M + static_cast<long double>(j)) / static_cast<long double>(j + 1);
  return r * std::pow(static_cast<long double>(B), static_cast<long double>(n)) *
         std::exp(-(static_cast<long double>(n) + M) * std::log1p(static_cast<long double>(B)));
}

// Truncation deep enough that the discarded tail (about e^-80 of the last
// kept term) no longer affects fifth-order moments at double precision.
// Poisson is the B -> 0, M B = mu limit.
inline twinbeam::Truncation deep_truncation(double M, double B) {
  const double mean = M * B, sd = std::sqrt(M * B * (1.0 + B));
  const double decay = std::log1p(1.0 / B);
  const auto n = static_cast<std::size_t>(mean + 40.0 * sd + 80.0 / decay + 60.0);
  return {1e-12, n + 1, n};
}
inline twinbeam::Truncation deep_truncation_poisson(double mu) {
  const auto n = static_cast<std::size_t>(mu + 40.0 * std::sqrt(mu) + 80.0);
  return {1e-12, n + 1, n};
}

// Mean photocount of the pixel detector given n photons: a pixel stays dark
// only if it gets no dark count and no registered photon lands on it.
inline double mean_counts_given_n(const twinbeam::DetectorModel& m, std::size_t n) {
  const double N = static_cast<double>(m.pixels);
  return N * (1.0 - (1.0 - m.dark_per_pixel) * std::pow(1.0 - m.efficiency / N, static_cast<double>(n)));
}

// Pearson chi-square p-value of observed counts against expected
// probabilities. Cells with expectation below 5 are pooled from the ends.
inline double chi_square_p(const std::vector<std::uint64_t>& observed, const std::vector<double>& probs) {
  const std::size_t k = std::max(observed.size(), probs.size());
  double total = 0.0;
  for (auto o : observed) total += static_cast<double>(o);
  std::vector<double> o(k, 0.0), e(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    o[j] = j < observed.size() ? static_cast<double>(observed[j]) : 0.0;
    e[j] = j < probs.size() ? probs[j] * total : 0.0;
  }
  std::vector<double> po, pe;
  double acc_o = 0.0, acc_e = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    acc_o += o[j];
    acc_e += e[j];
    if (acc_e >= 5.0) {
      po.push_back(acc_o);
      pe.push_back(acc_e);
      acc_o = acc_e = 0.0;
    }
  }
  if (!pe.empty()) {
    po.back() += acc_o;
    pe.back() += acc_e;
  }
  if (pe.size() < 2) return 1.0;
  double chi = 0.0;
  for (std::size_t j = 0; j < pe.size(); ++j) chi += (po[j] - pe[j]) * (po[j] - pe[j]) / pe[j];
  boost::math::chi_squared dist(static_cast<double>(pe.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi));
}

// Histogram of `draws` pixel-level detections of exactly n photons.
inline std::vector<std::uint64_t> physical_histogram(const twinbeam::DetectorModel& m, std::size_t n,
                                                     std::size_t draws, std::uint64_t seed) {
  auto rng = twinbeam::make_stream(seed, n);
  std::vector<std::uint64_t> h;
  for (std::size_t j = 0; j < draws; ++j) {
    const std::size_t c = twinbeam::sample_physical(m, n, rng);
    if (c >= h.size()) h.resize(c + 1, 0);
    ++h[c];
  }
  return h;
}

// Brute-force irreducibility: lambda/mu split into two nonempty sub-pairs
// with equal sums where each sub-pair is still an ordered (majorizing) pair.
inline bool reducible(const std::vector<unsigned>& lam, const std::vector<unsigned>& mu) {
  const std::size_t a = lam.size(), b = mu.size();
  for (std::uint32_t ml = 0; ml < (1u << a); ++ml)
    for (std::uint32_t mm = 0; mm < (1u << b); ++mm) {
      std::vector<unsigned> l1, l2, m1, m2;
      for (std::size_t j = 0; j < a; ++j) ((ml >> j) & 1u ? l1 : l2).push_back(lam[j]);
      for (std::size_t j = 0; j < b; ++j) ((mm >> j) & 1u ? m1 : m2).push_back(mu[j]);
      if (l1.empty() || l2.empty() || m1.empty() || m2.empty()) continue;
      auto sum = [](const std::vector<unsigned>& v) { unsigned s = 0; for (unsigned x : v) s += x; return s; };
      if (sum(l1) != sum(m1)) continue;
      if (twinbeam::majorizes(twinbeam::Partition(l1), twinbeam::Partition(m1)) &&
          twinbeam::majorizes(twinbeam::Partition(l2), twinbeam::Partition(m2)))
        return true;
    }
  return false;
}

// Maximum-likelihood p on a 3-point photon range by exhaustive search on a
// refining simplex grid.
inline std::vector<double> grid_ml3(const std::vector<double>& f, const twinbeam::ResponseMatrix& T) {
  auto ll = [&](double a, double b) {
    const double p[3] = {a, b, 1.0 - a - b};
    double s = 0.0;
    for (std::size_t c = 0; c < f.size(); ++c) {
      if (f[c] == 0.0) continue;
      double d = 0.0;
      for (std::size_t n = 0; n < 3; ++n) d += T(c, n) * p[n];
      if (!(d > 0.0)) return -std::numeric_limits<double>::infinity();
      s += f[c] * std::log(d);
    }
    return s;
  };
  double ba = 1.0 / 3, bb = 1.0 / 3, width = 0.5;
  for (int level = 0; level < 40; ++level) {
    double best = -std::numeric_limits<double>::infinity(), na = ba, nb = bb;
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        const double a = ba + width * i / 20.0, b = bb + width * j / 20.0;
        if (a < 0 || b < 0 || a + b > 1) continue;
        const double v = ll(a, b);
        if (v > best) best = v, na = a, nb = b;
      }
    ba = na;
    bb = nb;
    width *= 0.5;
  }
  return {ba, bb, 1.0 - ba - bb};
}

}  // namespace oracle
