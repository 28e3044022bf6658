#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "twinbeam/twinbeam.hpp"

using namespace twinbeam;

namespace {

const DetectorModel kSmall{20, 0.5, 1e-3};
const DetectorModel kSignal = DetectorModel::from_total_dark(6528, 0.23, 0.04);
const DetectorModel kIdler = DetectorModel::from_total_dark(6784, 0.22, 0.04);

double binomial_pmf(std::size_t N, std::size_t c, double p) {
  return std::exp(std::lgamma(N + 1.0) - std::lgamma(c + 1.0) - std::lgamma(N - c + 1.0) + c * std::log(p) +
                  (N - c) * std::log1p(-p));
}

}  // namespace

TEST(Detector, Validation) {
  EXPECT_THROW((DetectorModel{0, 0.5, 0.0}.validate()), validation_error);
  EXPECT_THROW((DetectorModel{10, 1.0, 0.0}.validate()), validation_error);
  EXPECT_THROW((DetectorModel{10, 0.5, -0.1}.validate()), validation_error);
  EXPECT_NEAR(kSignal.dark_per_pixel, 0.04 / 6528, 1e-18);
}

TEST(Response, NoPhotonsNoCounts) {
  for (const auto& m : {kSmall, kSignal, kIdler})
    EXPECT_NEAR(response_element(m, 0, 0) / std::pow(1.0 - m.dark_per_pixel, double(m.pixels)), 1.0, 1e-12);
}

TEST(Response, BlindDetectorIsDarkBinomial) {
  for (std::size_t N : {20u, 500u}) {
    const DetectorModel m{N, 0.0, 1e-2};
    for (std::size_t c = 0; c <= 8; ++c)
      for (std::size_t n : {0u, 3u, 40u})
        EXPECT_NEAR(response_element(m, c, n) / binomial_pmf(N, c, 1e-2), 1.0, 1e-12) << N << " " << c << " " << n;
  }
}

TEST(Response, IdealCountingWithoutDarkCounts) {
  const DetectorModel m{5, 0.0, 0.0};
  const auto T = build_response(m, 6);
  EXPECT_EQ(T.c_max(), 0u);
  for (std::size_t n = 0; n <= 6; ++n) EXPECT_EQ(T(0, n), 1.0);
}

TEST(Response, ClosedFormAgreesWithRecursionRoute) {
  // The closed-form alternating sum and the positive-term tabulation are two
  // independent evaluations of the same quantity.
  for (const auto& m : {kSmall, kIdler, DetectorModel{64, 0.9, 0.05}}) {
    const std::size_t n_max = 40;
    const auto T = build_response(m, n_max);
    for (std::size_t c = 0; c <= std::min<std::size_t>(T.c_max(), 30); ++c)
      for (std::size_t n = 0; n <= n_max; ++n) {
        const double a = response_element(m, c, n), b = T(c, n);
        if (a > 1e-200)
          ASSERT_NEAR(b / a, 1.0, 1e-8) << m.pixels << " c=" << c << " n=" << n;
        else
          ASSERT_LT(b, 1e-15);
      }
  }
}

TEST(Response, ColumnsAreNormalized) {
  for (const auto& m : {kSmall, kSignal, kIdler, DetectorModel{3, 0.7, 0.2}}) {
    const auto T = build_response(m, 120, 2);
    for (std::size_t n = 0; n <= 120; ++n) {
      EXPECT_GE(T.column_sum(n), 1.0 - 1e-9);
      EXPECT_LE(T.column_sum(n), 1.0 + 1e-12);
    }
  }
}

TEST(Response, MeanCountMatchesPixelOccupancy) {
  const auto T = build_response(kIdler, 60);
  for (std::size_t n = 0; n <= 60; ++n) {
    double mean = 0.0;
    for (std::size_t c = 0; c <= T.c_max(); ++c) mean += c * T(c, n);
    EXPECT_NEAR(mean, oracle::mean_counts_given_n(kIdler, n), 1e-8) << n;
  }
}

TEST(Response, RejectsBadTables) {
  EXPECT_THROW(ResponseMatrix({0.5, 0.2}, 1, 0), numerical_error);
  EXPECT_THROW(ResponseMatrix({1.5, -0.5}, 1, 0), validation_error);
  EXPECT_THROW(ResponseMatrix({1.0}, 1, 0), validation_error);
}

TEST(Response, CatastrophicCancellationIsReported) {
  // Exact value is below 1e-4000; the alternating terms are O(1).
  const DetectorModel m{100, 0.0, 1e-200};
  EXPECT_THROW(response_element(m, 20, 0), instability_error);
}

TEST(ApplyResponse, NearIdealDetectorIsIdentity) {
  const DetectorModel m{1000000, 0.999999, 0.0};
  const auto p = make_distribution(Poisson{3.0});
  const auto T = build_response(m, p.n_max());
  const auto f = apply_response(T, p);
  for (std::size_t n = 0; n <= p.n_max(); ++n) EXPECT_NEAR(f[n], p[n], 1e-3);
}

TEST(ApplyResponse, VacuumGivesDarkCounts) {
  const auto T = build_response(kSmall, 0);
  const auto f = apply_response(T, PhotonDistribution{});
  for (std::size_t c = 0; c < f.size(); ++c) EXPECT_NEAR(f[c], binomial_pmf(20, c, 1e-3), 1e-15);
}

TEST(ApplyResponse, RejectsShortMatrix) {
  const auto T = build_response(kSmall, 3);
  EXPECT_THROW(apply_response(T, make_distribution(Fock{5})), validation_error);
}

TEST(ApplyResponse, PhotocountMeanOfPublishedIdler) {
  const TwinBeamParams p{270, 0.032, 0.01, 7.6, 0.026, 5.3};
  const auto j = twin_beam_joint(p);
  const auto T = build_response(kIdler, j.n_max());
  const auto marginal = j.idler_marginal();
  const auto f = apply_response(T, marginal);
  double mean = 0.0, want = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) mean += c * f[c];
  for (std::size_t n = 0; n <= marginal.n_max(); ++n) want += marginal[n] * oracle::mean_counts_given_n(kIdler, n);
  EXPECT_NEAR(mean, want, 1e-7);
}

TEST(ApplyResponse, MonteCarloAgreesWithPhysicalSampler) {
  const auto p = make_distribution(Poisson{6.0});
  const auto T = build_response(kSmall, p.n_max());
  const auto f = apply_response(T, p);
  auto rng = make_stream(99);
  std::vector<double> cdf;
  double s = 0.0;
  for (double x : p.probs()) cdf.push_back(s += x);
  std::vector<std::uint64_t> h;
  for (int j = 0; j < 200000; ++j) {
    const double u = uniform01(rng) * s;
    const std::size_t n = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    const std::size_t c = sample_physical(kSmall, std::min(n, p.n_max()), rng);
    if (c >= h.size()) h.resize(c + 1);
    ++h[c];
  }
  EXPECT_GT(oracle::chi_square_p(h, f), 1e-3);
}

TEST(PhysicalSampler, DegenerateCases) {
  auto rng = make_stream(1);
  EXPECT_EQ(sample_physical(DetectorModel{10, 0.0, 0.0}, 50, rng), 0u);
  EXPECT_EQ(sample_physical(DetectorModel{10, 0.9, 0.0}, 0, rng), 0u);
  for (int j = 0; j < 100; ++j) EXPECT_LE(sample_physical(DetectorModel{4, 0.9, 0.5}, 30, rng), 4u);
}

TEST(PhysicalSampler, MatchesResponseColumns) {
  const auto T = build_response(kSmall, 10);
  for (std::size_t n : {0u, 4u, 10u}) {
    const auto h = oracle::physical_histogram(kSmall, n, 200000, 5);
    std::vector<double> col;
    for (std::size_t c = 0; c <= T.c_max(); ++c) col.push_back(T(c, n));
    EXPECT_GT(oracle::chi_square_p(h, col), 1e-3) << n;
  }
}

TEST(Conditional, PerfectPairingWithIdealDetector) {
  const TwinBeamParams p{4.0, 0.5, 1.0, 1e-12, 1.0, 1e-12};
  const auto j = twin_beam_joint(p);
  const DetectorModel ideal{10000000, 0.999999, 0.0};
  const auto Ts = build_response(ideal, j.n_max());
  for (std::size_t cs = 0; cs <= 5; ++cs) EXPECT_GT(conditional_theory(j, Ts, cs)[cs], 0.999) << cs;
}

TEST(Conditional, VacuumStaysVacuum) {
  const TwinBeamParams p{1.0, 1e-12, 1.0, 1e-12, 1.0, 1e-12};
  const auto j = twin_beam_joint(p);
  const auto Ts = build_response(kSmall, j.n_max());
  EXPECT_NEAR(conditional_theory(j, Ts, 0)[0], 1.0, 1e-9);
}

TEST(Conditional, ImpossibleConditionThrows) {
  const TwinBeamParams p{4.0, 0.5, 1.0, 0.1, 1.0, 0.1};
  const auto j = twin_beam_joint(p);
  const auto Ts = build_response(DetectorModel{50, 0.0, 0.0}, j.n_max(), 3);
  EXPECT_THROW(conditional_theory(j, Ts, 1), numerical_error);
}

TEST(Conditional, PublishedParametersHeraldBrighterIdler) {
  const TwinBeamParams p{270, 0.032, 0.01, 7.6, 0.026, 5.3};
  const auto j = twin_beam_joint(p);
  const auto Ts = build_response(kSignal, j.n_max());
  std::vector<double> means;
  for (std::size_t cs = 0; cs <= 10; ++cs) means.push_back(conditional_theory(j, Ts, cs).mean());
  // Rising over the well-populated range; the far tail is dominated by
  // signal noise photons that carry no idler partner.
  for (std::size_t cs = 1; cs <= 9; ++cs) EXPECT_GT(means[cs], means[cs - 1]) << cs;
  EXPECT_NEAR(means[0], 7.0, 0.5);
  EXPECT_NEAR(*std::max_element(means.begin(), means.end()), 14.0, 0.5);
}
