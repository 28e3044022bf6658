#pragma once

// Monte Carlo of the postselection experiment and the per-c_s conditional
// analysis of its joint photocount histogram.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "twinbeam/core_stats.hpp"
#include "twinbeam/criteria.hpp"
#include "twinbeam/detector.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/histogram.hpp"
#include "twinbeam/parallel.hpp"
#include "twinbeam/random.hpp"
#include "twinbeam/reconstruct.hpp"

namespace twinbeam {

struct ExperimentConfig {
  TwinBeamParams twin_beam;
  DetectorModel signal_detector;
  DetectorModel idler_detector;
  std::uint64_t runs = 1;
  std::uint64_t seed = 0;
  unsigned max_order = 5;
  unsigned bootstrap = 1000;

  void validate() const {
    twin_beam.validate();
    signal_detector.validate();
    idler_detector.validate();
    detail::require(runs >= 1, "runs must be >= 1");
  }
};

/// Runs are split into fixed chunks of this size; chunk k draws from
/// make_stream(seed, k), so the result does not depend on the worker count.
inline constexpr std::uint64_t kSimulationChunk = 1u << 16;

namespace detail {

inline std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> cdf(w.size());
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) cdf[j] = (s += w[j]);
  for (double& v : cdf) v /= s;
  cdf.back() = 1.0;
  return cdf;
}

inline std::size_t draw(const std::vector<double>& cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

inline std::vector<std::vector<double>> column_cdfs(const ResponseMatrix& T) {
  std::vector<std::vector<double>> out(T.n_max() + 1);
  for (std::size_t n = 0; n <= T.n_max(); ++n) {
    std::vector<double> col(T.c_max() + 1);
    for (std::size_t c = 0; c <= T.c_max(); ++c) col[c] = T(c, n);
    out[n] = cumulative(col);
  }
  return out;
}

}  // namespace detail

/// Draws (n_s, n_i) from the twin-beam law and photocounts from each arm's
/// response column, by inverse CDF on precomputed tables.
inline JointPhotocountHistogram simulate(const ExperimentConfig& config, unsigned workers = worker_count()) {
  config.validate();
  const JointPhotonDistribution joint = twin_beam_joint(config.twin_beam);
  const std::size_t dim = joint.n_max() + 1;
  const std::vector<double> joint_cdf = detail::cumulative(joint.probs());
  const auto signal_cdf = detail::column_cdfs(build_response(config.signal_detector, joint.n_max()));
  const auto idler_cdf = detail::column_cdfs(build_response(config.idler_detector, joint.n_max()));

  const std::uint64_t chunks = (config.runs + kSimulationChunk - 1) / kSimulationChunk;
  std::vector<JointPhotocountHistogram> parts(chunks);
  parallel_for(
      chunks,
      [&](std::size_t k) {
        Rng rng = make_stream(config.seed, k);
        const std::uint64_t begin = k * kSimulationChunk;
        const std::uint64_t end = std::min(config.runs, begin + kSimulationChunk);
        JointPhotocountHistogram h;
        for (std::uint64_t r = begin; r < end; ++r) {
          const std::size_t cell = detail::draw(joint_cdf, uniform01(rng));
          const std::size_t ns = cell / dim, ni = cell % dim;
          const std::size_t cs = detail::draw(signal_cdf[ns], uniform01(rng));
          const std::size_t ci = detail::draw(idler_cdf[ni], uniform01(rng));
          h.add(cs, ci);
        }
        parts[k] = std::move(h);
      },
      workers);
  JointPhotocountHistogram total;
  for (const auto& p : parts) total += p;
  return total;
}

/// sigma_x / sqrt(N_r) for the kernel x = g(c), sigma_x the population
/// standard deviation over the histogram.
inline double moment_error(const PhotocountHistogram& hist, const std::function<double(std::size_t)>& kernel) {
  detail::require(hist.total() >= 2, "moment error needs at least 2 counts");
  const double N = static_cast<double>(hist.total());
  double mean = 0.0;
  for (std::size_t c = 0; c < hist.extent(); ++c) mean += static_cast<double>(hist[c]) * kernel(c);
  mean /= N;
  double var = 0.0;
  for (std::size_t c = 0; c < hist.extent(); ++c) {
    const double d = kernel(c) - mean;
    var += static_cast<double>(hist[c]) * d * d;
  }
  return std::sqrt(var / N) / std::sqrt(N);
}

/// Multinomial resample of a histogram with the same total.
inline PhotocountHistogram resample(const PhotocountHistogram& hist, Rng& rng) {
  std::vector<std::uint64_t> out(hist.extent(), 0);
  std::uint64_t remaining = hist.total();
  std::uint64_t mass_left = hist.total();
  for (std::size_t c = 0; c < hist.extent() && remaining > 0; ++c) {
    if (hist[c] == 0) continue;
    if (hist[c] == mass_left) {
      out[c] = remaining;
      remaining = 0;
      break;
    }
    const double p = static_cast<double>(hist[c]) / static_cast<double>(mass_left);
    std::binomial_distribution<std::uint64_t> bin(remaining, p);
    const std::uint64_t k = bin(rng);
    out[c] = k;
    remaining -= k;
    mass_left -= hist[c];
  }
  return PhotocountHistogram(std::move(out));
}

using VectorStatistic = std::function<std::vector<double>(const PhotocountHistogram&)>;

/// Per-component standard deviation of a vector statistic over `n_boot`
/// multinomial resamples. Replicate b uses make_stream(seed, stream, b).
/// Replicates where the statistic throws or is non-finite are left out of
/// that component.
inline std::vector<double> bootstrap_errors(const PhotocountHistogram& hist, const VectorStatistic& stat,
                                            unsigned n_boot, std::uint64_t seed, std::uint64_t stream = 0,
                                            unsigned workers = worker_count()) {
  detail::require(hist.total() >= 10, "bootstrap needs at least 10 counts");
  detail::require(n_boot >= 2, "bootstrap needs at least 2 replicates");
  std::vector<std::vector<double>> reps(n_boot);
  parallel_for(
      n_boot,
      [&](std::size_t b) {
        Rng rng = make_stream(seed, stream, b);
        const PhotocountHistogram h = resample(hist, rng);
        try {
          reps[b] = stat(h);
        } catch (const std::exception&) {
          reps[b].clear();
        }
      },
      workers);
  std::size_t dims = 0;
  for (const auto& r : reps) dims = std::max(dims, r.size());
  std::vector<double> out(dims, 0.0);
  for (std::size_t j = 0; j < dims; ++j) {
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (const auto& r : reps)
      if (j < r.size() && std::isfinite(r[j])) {
        s += r[j];
        ++n;
      }
    if (n < 2) {
      out[j] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = s / static_cast<double>(n);
    for (const auto& r : reps)
      if (j < r.size() && std::isfinite(r[j])) s2 += (r[j] - mean) * (r[j] - mean);
    out[j] = std::sqrt(s2 / static_cast<double>(n - 1));
  }
  return out;
}

inline double bootstrap_error(const PhotocountHistogram& hist, const std::function<double(const PhotocountHistogram&)>& stat,
                              unsigned n_boot, std::uint64_t seed, std::uint64_t stream = 0) {
  const auto e = bootstrap_errors(
      hist, [&](const PhotocountHistogram& h) { return std::vector<double>{stat(h)}; }, n_boot, seed, stream);
  return e.empty() ? 0.0 : e.front();
}

/// Twin-beam model plus both detectors: enough to predict everything.
struct TheoryModel {
  TwinBeamParams twin_beam;
  DetectorModel signal_detector;
  DetectorModel idler_detector;
};

struct AnalyzeOptions {
  unsigned max_order = 5;
  std::size_t cs_min = 0;
  std::size_t cs_max = 10;
  unsigned bootstrap = 1000;     // replicates for photocount-level errors
  unsigned bootstrap_em = 100;   // replicates for reconstruction-level errors
  std::uint64_t seed = 0;
  std::uint64_t low_statistics_below = 50;
  EmOptions em;
};

struct VariantIdentifiers {
  std::vector<double> values;
  std::vector<double> errors;  // empty for the theory variant
};

struct ConditionalRecord {
  std::size_t cs = 0;
  std::uint64_t runs = 0;  // N_r
  bool low_statistics = false;
  double signal_fraction = 0.0;  // f_s(c_s)
  std::optional<double> signal_theory;  // f_s^t(c_s)

  std::optional<double> mean_counts, mean_counts_error;
  std::optional<double> mean_photons, mean_photons_error;
  std::optional<double> mean_photons_theory;
  std::optional<double> fano_counts, fano_counts_error;
  std::optional<double> fano_reconstructed, fano_reconstructed_error;
  std::optional<double> fano_theory;

  std::optional<VariantIdentifiers> photocount;
  std::optional<VariantIdentifiers> reconstructed;
  std::optional<VariantIdentifiers> theory;

  std::size_t em_iterations = 0;
  bool em_converged = false;
};

struct ConditionalReport {
  std::vector<IdentifierSpec> identifiers;
  std::vector<ConditionalRecord> rows;
  std::uint64_t total_runs = 0;
  unsigned max_order = 5;
  unsigned bootstrap = 0;
  unsigned bootstrap_em = 0;
  std::uint64_t seed = 0;
  std::optional<TheoryModel> theory;
};

namespace detail {

inline std::vector<double> identifier_values(const std::vector<IdentifierSpec>& specs, const MomentSet& m) {
  std::vector<double> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(evaluate_identifier(s, m).value);
  return out;
}

}  // namespace detail

/// Per-c_s analysis: photocount moments, EM reconstruction against the
/// idler response, and (when a model is given) the predicted conditional
/// state. Rows with no runs are kept with their statistics absent.
inline ConditionalReport analyze(const JointPhotocountHistogram& joint, const ResponseMatrix& idler_T,
                                 const std::optional<TheoryModel>& theory, const AnalyzeOptions& opt = {}) {
  detail::require(opt.max_order >= 2, "analysis needs max_order >= 2");
  detail::require(opt.cs_min <= opt.cs_max, "empty c_s range");
  detail::require(joint.total() > 0, "joint photocount histogram is empty");
  ConditionalReport report;
  report.identifiers = enumerate_identifiers(opt.max_order);
  report.total_runs = joint.total();
  report.max_order = opt.max_order;
  report.bootstrap = opt.bootstrap;
  report.bootstrap_em = opt.bootstrap_em;
  report.seed = opt.seed;
  report.theory = theory;
  const auto& specs = report.identifiers;

  std::optional<JointPhotonDistribution> model_joint;
  std::optional<ResponseMatrix> Ts;
  std::vector<double> fst;
  if (theory) {
    model_joint = twin_beam_joint(theory->twin_beam);
    Ts = build_response(theory->signal_detector, model_joint->n_max(), opt.cs_max);
    fst = signal_photocount_theory(*model_joint, *Ts);
  }

  const PhotocountHistogram signal = joint.signal_marginal();
  for (std::size_t cs = opt.cs_min; cs <= opt.cs_max; ++cs) {
    ConditionalRecord rec;
    rec.cs = cs;
    const PhotocountHistogram row = joint.idler_row(cs);
    rec.runs = row.total();
    rec.low_statistics = rec.runs < opt.low_statistics_below;
    rec.signal_fraction = static_cast<double>(signal[cs]) / static_cast<double>(joint.total());
    if (theory && cs < fst.size()) rec.signal_theory = fst[cs];

    if (theory) {
      const PhotonDistribution cond = conditional_theory(*model_joint, *Ts, cs);
      rec.mean_photons_theory = cond.mean();
      const MomentSet m = moments(cond, opt.max_order);
      if (m(1) > 0.0) {
        rec.fano_theory = fano(cond);
        rec.theory = VariantIdentifiers{detail::identifier_values(specs, m), {}};
      }
    }

    if (rec.runs > 0) {
      const std::vector<double> f = row.normalized();
      rec.mean_counts = count_factorial_moment(row, 1);
      if (rec.runs >= 2) rec.mean_counts_error = moment_error(row, [](std::size_t c) { return static_cast<double>(c); });

      const MomentSet mc = moments(row, opt.max_order);
      const bool enough = rec.runs >= 10 && opt.bootstrap >= 2;
      if (mc(1) > 0.0) {
        VariantIdentifiers v{detail::identifier_values(specs, mc), {}};
        rec.fano_counts = fano(row);
        if (enough) {
          auto stat = [&](const PhotocountHistogram& h) {
            auto vals = detail::identifier_values(specs, moments(h, opt.max_order));
            vals.push_back(fano(h));
            return vals;
          };
          auto err = bootstrap_errors(row, stat, opt.bootstrap, opt.seed, 2 * cs);
          err.resize(specs.size() + 1, std::numeric_limits<double>::quiet_NaN());
          rec.fano_counts_error = err.back();
          err.pop_back();
          v.errors = std::move(err);
        }
        rec.photocount = std::move(v);
      }

      EmResult em = em_reconstruct(f, idler_T, opt.em);
      rec.em_iterations = em.diagnostics.iterations;
      rec.em_converged = em.diagnostics.converged;
      const PhotonDistribution& rp = em.distribution;
      rec.mean_photons = rp.mean();
      {
        double var = 0.0;
        for (std::size_t n = 0; n <= rp.n_max(); ++n) {
          const double d = static_cast<double>(n) - *rec.mean_photons;
          var += rp[n] * d * d;
        }
        rec.mean_photons_error = std::sqrt(var) / std::sqrt(static_cast<double>(rec.runs));
      }
      const MomentSet mr = moments(rp, opt.max_order);
      if (mr(1) > 0.0) {
        VariantIdentifiers v{detail::identifier_values(specs, mr), {}};
        rec.fano_reconstructed = fano(rp);
        if (rec.runs >= 10 && opt.bootstrap_em >= 2) {
          EmOptions warm = opt.em;
          warm.initial = rp;
          auto stat = [&](const PhotocountHistogram& h) {
            const auto fh = h.normalized();
            const EmResult r = em_reconstruct(fh, idler_T, warm);
            auto vals = detail::identifier_values(specs, moments(r.distribution, opt.max_order));
            vals.push_back(fano(r.distribution));
            return vals;
          };
          auto err = bootstrap_errors(row, stat, opt.bootstrap_em, opt.seed, 2 * cs + 1);
          err.resize(specs.size() + 1, std::numeric_limits<double>::quiet_NaN());
          rec.fano_reconstructed_error = err.back();
          err.pop_back();
          v.errors = std::move(err);
        }
        rec.reconstructed = std::move(v);
      }
    }
    report.rows.push_back(std::move(rec));
  }
  return report;
}

}  // namespace twinbeam
