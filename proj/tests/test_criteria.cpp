#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <random>
#include <set>

#include "oracles.hpp"
#include "twinbeam/twinbeam.hpp"

using namespace twinbeam;

namespace {

const std::set<std::string> kFifteen{
    "R_{1,1}^{2,0}",         "R_{2,1}^{3,0}",         "R_{2,2}^{3,1}",     "R_{2,2}^{4,0}",
    "R_{3,1}^{4,0}",         "R_{4,1}^{5,0}",         "R_{3,2}^{4,1}",     "R_{3,2}^{5,0}",
    "R_{1,1,1}^{3,0,0}",     "R_{2,1,1}^{4,0,0}",     "R_{2,2,1}^{5,0,0}", "R_{3,1,1}^{5,0,0}",
    "R_{1,1,1,1}^{4,0,0,0}", "R_{2,1,1,1}^{5,0,0,0}", "R_{1,1,1,1,1}^{5,0,0,0,0}"};

MomentSet exact_moments(double (*f)(double, unsigned), double mu, unsigned K) {
  MomentSet m;
  for (unsigned k = 1; k <= K; ++k) m.values.push_back(f(mu, k));
  return m;
}

}  // namespace

TEST(Partition, Canonical) {
  const Partition p{1, 0, 3, 1};
  EXPECT_EQ(p.parts(), (std::vector<unsigned>{3, 1, 1}));
  EXPECT_EQ(p.sum(), 5u);
}

TEST(Majorization, Examples) {
  EXPECT_TRUE(majorizes(Partition{2}, Partition{1, 1}));
  EXPECT_TRUE(majorizes(Partition{3, 1}, Partition{2, 2}));
  EXPECT_FALSE(majorizes(Partition{2, 2}, Partition{3, 1}));
  EXPECT_TRUE(majorizes(Partition{2, 1}, Partition{2, 1}));
  EXPECT_FALSE(strictly_majorizes(Partition{2, 1}, Partition{2, 1}));
  EXPECT_FALSE(majorizes(Partition{3}, Partition{1, 1}));
  // Incomparable pair.
  EXPECT_FALSE(majorizes(Partition{3, 1, 1, 1}, Partition{2, 2, 2}));
  EXPECT_FALSE(majorizes(Partition{2, 2, 2}, Partition{3, 1, 1, 1}));
}

TEST(Enumeration, SmallOrders) {
  const auto two = enumerate_identifiers(2);
  ASSERT_EQ(two.size(), 1u);
  EXPECT_EQ(two[0].lambda, (Partition{2}));
  EXPECT_EQ(two[0].mu, (Partition{1, 1}));
  EXPECT_EQ(two[0].name(), "R_{1,1}^{2,0}");

  std::set<std::string> three;
  for (const auto& s : enumerate_identifiers(3)) three.insert(s.name());
  EXPECT_EQ(three, (std::set<std::string>{"R_{1,1}^{2,0}", "R_{2,1}^{3,0}", "R_{1,1,1}^{3,0,0}"}));
  EXPECT_THROW(enumerate_identifiers(1), validation_error);
}

TEST(Enumeration, FifthOrderSet) {
  const auto start = std::chrono::steady_clock::now();
  const auto specs = enumerate_identifiers(5);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1.0);
  std::set<std::string> names;
  std::map<unsigned, int> per_order;
  for (const auto& s : specs) {
    names.insert(s.name());
    ++per_order[s.order()];
  }
  EXPECT_EQ(specs.size(), 15u);
  EXPECT_EQ(names, kFifteen);
  EXPECT_EQ(per_order, (std::map<unsigned, int>{{2, 1}, {3, 2}, {4, 5}, {5, 7}}));
}

TEST(Enumeration, DeterministicOrder) {
  const auto a = enumerate_identifiers(5), b = enumerate_identifiers(5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.front().name(), "R_{1,1}^{2,0}");
  for (std::size_t j = 1; j < a.size(); ++j) {
    const auto key = [](const IdentifierSpec& s) { return std::tuple(s.order(), s.lambda, s.mu); };
    EXPECT_LT(key(a[j - 1]), key(a[j]));
  }
}

TEST(Enumeration, EverySpecSatisfiesInvariants) {
  for (const auto& s : enumerate_identifiers(6)) {
    EXPECT_EQ(s.lambda.sum(), s.mu.sum());
    EXPECT_TRUE(strictly_majorizes(s.lambda, s.mu));
    for (unsigned x : s.lambda.parts())
      EXPECT_EQ(std::count(s.mu.parts().begin(), s.mu.parts().end(), x), 0) << s.name();
    EXPECT_FALSE(oracle::reducible(s.lambda.parts(), s.mu.parts())) << s.name();
  }
}

TEST(Enumeration, RejectedPairsFailAnInvariant) {
  // Anything strictly ordered and part-disjoint but missing from the list is reducible.
  const auto specs = enumerate_identifiers(5);
  for (unsigned S = 2; S <= 5; ++S)
    for (const auto& l : partitions_of(S))
      for (const auto& m : partitions_of(S)) {
        if (!strictly_majorizes(l, m) || share_a_part(l, m)) continue;
        const bool listed = std::find(specs.begin(), specs.end(), IdentifierSpec{l, m}) != specs.end();
        EXPECT_EQ(listed, !oracle::reducible(l.parts(), m.parts())) << IdentifierSpec{l, m}.name();
      }
}

TEST(Identifier, Examples) {
  const IdentifierSpec r2{Partition{2}, Partition{1, 1}};
  const auto fock = moments(make_distribution(Fock{5}), 5);
  EXPECT_NEAR(evaluate_identifier(r2, fock).value, -0.2, 1e-15);
  EXPECT_TRUE(evaluate_identifier(r2, fock).nonclassical);
  EXPECT_NEAR(evaluate_identifier(r2, exact_moments(oracle::thermal_moment, 1.7, 2)).value, 1.0, 1e-14);
  for (const auto& s : enumerate_identifiers(5))
    EXPECT_NEAR(evaluate_identifier(s, exact_moments(oracle::poisson_moment, 2.3, 5)).value, 0.0, 1e-12);
}

TEST(Identifier, Errors) {
  const IdentifierSpec r2{Partition{2}, Partition{1, 1}};
  EXPECT_THROW(evaluate_identifier(r2, moments(make_distribution(Poisson{0.0}), 2)), validation_error);
  const IdentifierSpec r5{Partition{5}, Partition{4, 1}};
  EXPECT_THROW(evaluate_identifier(r5, moments(make_distribution(Fock{3}), 3)), validation_error);
}

TEST(Identifier, FockStatesAreNonclassical) {
  // Below four photons some identifiers compare two vanishing products and
  // are exactly zero; from four photons on every one is strictly negative.
  for (std::size_t m = 1; m <= 20; ++m) {
    const auto mom = moments(make_distribution(Fock{m}), 5);
    for (const auto& s : enumerate_identifiers(5)) {
      const double v = evaluate_identifier(s, mom).value;
      if (m >= 4)
        EXPECT_LT(v, 0.0) << m << s.name();
      else
        EXPECT_LE(v, 0.0) << m << s.name();
    }
  }
  EXPECT_EQ(evaluate_identifier({Partition{3}, Partition{2, 1}}, moments(make_distribution(Fock{1}), 5)).value, 0.0);
}

TEST(Identifier, ClassicalStatesAreNotFlagged) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> logM(std::log(0.01), std::log(300.0)), logB(std::log(0.01), std::log(10.0));
  const auto specs = enumerate_identifiers(5);
  for (int trial = 0; trial < 200; ++trial) {
    const double M = std::exp(logM(rng)), B = std::exp(logB(rng));
    const auto d = make_distribution(MandelRice{M, B}, oracle::deep_truncation(M, B));
    const auto mom = moments(d, 5);
    for (const auto& s : specs) EXPECT_GE(evaluate_identifier(s, mom).value, -1e-9) << M << " " << B << " " << s.name();
    for (const auto& c : minor_criteria(mom)) EXPECT_GE(c.determinant, -1e-9 * c.scale) << M << " " << B;
  }
}

TEST(MomentMatrix, Examples) {
  const auto pois = exact_moments(oracle::poisson_moment, 1.5, 4);
  EXPECT_NEAR(determinant(moment_matrix(pois, {0, 1})), 0.0, 1e-14);
  const auto fock = moments(make_distribution(Fock{5}), 4);
  EXPECT_NEAR(determinant(moment_matrix(fock, {0, 1})), -5.0, 1e-12);
  EXPECT_THROW(moment_matrix(moments(make_distribution(Fock{5}), 3), {0, 1, 2}), validation_error);
  EXPECT_THROW(moment_matrix(fock, {1, 0}), validation_error);
}

TEST(MomentMatrix, MinorSubsets) {
  const auto m = moments(make_distribution(Thermal{1.0}, Truncation{1e-14, 4096, std::nullopt}), 5);
  const auto minors = minor_criteria(m);
  std::vector<std::vector<unsigned>> idx;
  for (const auto& c : minors) idx.push_back(c.indices);
  EXPECT_EQ(idx, (std::vector<std::vector<unsigned>>{{0, 1}, {0, 2}, {1, 2}, {0, 1, 2}}));
  EXPECT_NEAR(minors[0].determinant, m(2) - m(1) * m(1), 1e-12);
  for (const auto& c : minors) EXPECT_GE(c.determinant, 0.0);
}

TEST(Mapping, Examples) {
  EXPECT_EQ(minor_to_majorization(0, 1).name(), "R_{1,1}^{2,0}");
  EXPECT_EQ(minor_to_majorization(0, 2).name(), "R_{2,2}^{4,0}");
  const auto s = minor_to_majorization(1, 2);
  EXPECT_EQ(s.lambda, (Partition{4, 2}));
  EXPECT_EQ(s.mu, (Partition{3, 3}));
  EXPECT_THROW(minor_to_majorization(2, 2), validation_error);
}

TEST(Mapping, MinorAndIdentifierAgreeInSign) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    // Mixture of a Fock state and a thermal background.
    const std::size_t m = 1 + trial % 8;
    const double w = u(rng);
    auto th = make_distribution(Thermal{0.2 + 3 * u(rng)}, Truncation{1e-12, 4096, std::nullopt}).probs();
    th.resize(std::max(th.size(), m + 1), 0.0);
    for (double& x : th) x *= (1 - w);
    th[m] += w;
    const auto mom = moments(PhotonDistribution(th, 1e-9), 4);
    for (auto [k, l] : {std::pair{0u, 1u}, {0u, 2u}, {1u, 2u}}) {
      const double det = determinant(moment_matrix(mom, {k, l}));
      const double R = evaluate_identifier(minor_to_majorization(k, l), mom).value;
      const double scaled = det / std::pow(mom(1), 2.0 * (k + l));
      EXPECT_NEAR(scaled, R, 1e-9 * (1 + std::fabs(R)));
    }
  }
}
