#pragma once

// Nonclassicality criteria built from normally ordered intensity moments:
// principal minors of the moment matrix M_{jj'} = <:n^{j+j'}:>, and
// majorization identifiers comparing two products of moments of equal total
// order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "twinbeam/core_stats.hpp"
#include "twinbeam/errors.hpp"

namespace twinbeam {

/// Integer partition with nonincreasing positive parts.
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::vector<unsigned> parts) : parts_(std::move(parts)) {
    parts_.erase(std::remove(parts_.begin(), parts_.end(), 0u), parts_.end());
    std::sort(parts_.begin(), parts_.end(), std::greater<>());
  }
  Partition(std::initializer_list<unsigned> parts) : Partition(std::vector<unsigned>(parts)) {}

  const std::vector<unsigned>& parts() const noexcept { return parts_; }
  std::size_t size() const noexcept { return parts_.size(); }
  unsigned sum() const noexcept { return std::accumulate(parts_.begin(), parts_.end(), 0u); }

  friend bool operator==(const Partition&, const Partition&) = default;
  friend auto operator<=>(const Partition&, const Partition&) = default;

 private:
  std::vector<unsigned> parts_;
};

/// Dominance order: equal totals and every prefix sum of a at least that of b.
inline bool majorizes(const Partition& a, const Partition& b) {
  if (a.sum() != b.sum()) return false;
  const std::size_t len = std::max(a.size(), b.size());
  unsigned pa = 0, pb = 0;
  for (std::size_t j = 0; j < len; ++j) {
    pa += j < a.size() ? a.parts()[j] : 0;
    pb += j < b.size() ? b.parts()[j] : 0;
    if (pa < pb) return false;
  }
  return true;
}

inline bool strictly_majorizes(const Partition& a, const Partition& b) { return a != b && majorizes(a, b); }

/// A majorization identifier
///   R = prod_i <:n^{lambda_i}:> / <:n:>^S - prod_j <:n^{mu_j}:> / <:n:>^S
/// with lambda strictly majorizing mu; R < 0 certifies nonclassicality.
struct IdentifierSpec {
  Partition lambda;  // leading product
  Partition mu;      // subtracted product

  unsigned order() const noexcept { return lambda.sum(); }

  /// "R_{mu}^{lambda}" with both index lists zero-padded to equal length,
  /// e.g. R_{2,1}^{3,0}.
  std::string name() const {
    const std::size_t len = std::max(lambda.size(), mu.size());
    auto join = [len](const Partition& p) {
      std::string s;
      for (std::size_t j = 0; j < len; ++j) {
        if (j) s += ',';
        s += std::to_string(j < p.size() ? p.parts()[j] : 0u);
      }
      return s;
    };
    return "R_{" + join(mu) + "}^{" + join(lambda) + "}";
  }

  /// Formula in terms of normalized moments, for listings.
  std::string definition() const {
    auto product = [](const Partition& p) {
      std::string s;
      for (unsigned k : p.parts()) {
        if (k == 1) continue;
        if (!s.empty()) s += " ";
        s += "<:n^" + std::to_string(k) + ":>";
      }
      return s.empty() ? std::string("1") : s;
    };
    return "[" + product(lambda) + " - " + product(mu) + "] / <:n:>^" + std::to_string(order());
  }

  friend bool operator==(const IdentifierSpec&, const IdentifierSpec&) = default;
};

struct IdentifierValue {
  IdentifierSpec spec;
  double value = 0.0;
  std::optional<double> std_error;
  bool nonclassical = false;
};

/// All partitions of `total`, each nonincreasing, in lexicographic order.
inline std::vector<Partition> partitions_of(unsigned total) {
  std::vector<Partition> out;
  std::vector<unsigned> cur;
  std::function<void(unsigned, unsigned)> rec = [&](unsigned remaining, unsigned max_part) {
    if (remaining == 0) {
      out.emplace_back(cur);
      return;
    }
    for (unsigned p = 1; p <= std::min(remaining, max_part); ++p) {
      cur.push_back(p);
      rec(remaining - p, p);
      cur.pop_back();
    }
  };
  rec(total, total);
  std::sort(out.begin(), out.end());
  return out;
}

inline bool share_a_part(const Partition& a, const Partition& b) {
  for (unsigned x : a.parts())
    if (std::find(b.parts().begin(), b.parts().end(), x) != b.parts().end()) return true;
  return false;
}

/// True when (lambda, mu) splits into two complementary sub-pairs with
/// matching sums, each ordered by (non-strict) majorization. All factorial
/// moments are nonnegative, so such a composite is implied by its parts.
inline bool is_reducible(const IdentifierSpec& spec) {
  const auto& l = spec.lambda.parts();
  const auto& m = spec.mu.parts();
  if (l.size() < 2 && m.size() < 2) return false;
  const std::size_t nl = l.size(), nm = m.size();
  auto pick = [](const std::vector<unsigned>& v, unsigned mask, bool in) {
    std::vector<unsigned> out;
    for (std::size_t j = 0; j < v.size(); ++j)
      if (((mask >> j) & 1u) == static_cast<unsigned>(in)) out.push_back(v[j]);
    return Partition(out);
  };
  for (unsigned a = 1; a + 1 < (1u << nl); ++a) {
    const Partition l1 = pick(l, a, true), l2 = pick(l, a, false);
    for (unsigned b = 1; b + 1 < (1u << nm); ++b) {
      const Partition m1 = pick(m, b, true), m2 = pick(m, b, false);
      if (l1.sum() != m1.sum()) continue;
      if (!majorizes(l1, m1) || !majorizes(l2, m2)) continue;
      if (l1 == m1 && l2 == m2) continue;
      return true;
    }
  }
  return false;
}

/// Irreducible identifiers with no part common to both products, for total
/// orders 2..max_order. Sorted by order, then lambda, then mu.
inline std::vector<IdentifierSpec> enumerate_identifiers(unsigned max_order) {
  detail::require(max_order >= 2, "identifier enumeration needs max_order >= 2");
  std::vector<IdentifierSpec> out;
  for (unsigned s = 2; s <= max_order; ++s) {
    const auto parts = partitions_of(s);
    for (const auto& lambda : parts)
      for (const auto& mu : parts) {
        if (!strictly_majorizes(lambda, mu) || share_a_part(lambda, mu)) continue;
        IdentifierSpec spec{lambda, mu};
        if (!is_reducible(spec)) out.push_back(std::move(spec));
      }
  }
  return out;
}

/// Identifier from a 2x2 minor over indices {k, l}: lambda = (2l, 2k),
/// mu = (k+l, k+l). Its value equals the minor divided by <:n:>^{2(k+l)}.
inline IdentifierSpec minor_to_majorization(unsigned k, unsigned l) {
  detail::require(k < l, "minor_to_majorization needs 0 <= k < l");
  return IdentifierSpec{Partition{2 * l, 2 * k}, Partition{k + l, k + l}};
}

inline IdentifierValue evaluate_identifier(const IdentifierSpec& spec, const MomentSet& m) {
  const double mean = m(1);
  if (!(mean > 0.0)) throw validation_error("identifiers are undefined for the vacuum (<:n:> = 0)");
  auto normalized_product = [&](const Partition& p) {
    double r = 1.0;
    for (unsigned k : p.parts()) r *= m(k) / std::pow(mean, static_cast<double>(k));
    return r;
  };
  IdentifierValue v;
  v.spec = spec;
  v.value = normalized_product(spec.lambda) - normalized_product(spec.mu);
  v.nonclassical = v.value < 0.0;
  return v;
}

/// Symmetric matrix of moments over an index subset.
struct MomentMatrix {
  std::vector<unsigned> indices;
  std::vector<double> entries;  // row-major, indices.size()^2

  std::size_t dim() const noexcept { return indices.size(); }
  double operator()(std::size_t a, std::size_t b) const noexcept { return entries[a * dim() + b]; }
};

/// M_{jj'} = <:n^{j+j'}:> over `index_set`; with `normalized`, each entry is
/// divided by <:n:>^{j+j'}.
inline MomentMatrix moment_matrix(const MomentSet& m, const std::vector<unsigned>& index_set, bool normalized = false) {
  detail::require(!index_set.empty(), "moment matrix needs a nonempty index set");
  detail::require(std::is_sorted(index_set.begin(), index_set.end()) &&
                      std::adjacent_find(index_set.begin(), index_set.end()) == index_set.end(),
                  "moment-matrix index set must be strictly ascending");
  const unsigned top = index_set.back();
  if (2 * top > m.max_order())
    throw validation_error("moment matrix over index " + std::to_string(top) + " needs moments up to order " +
                           std::to_string(2 * top) + ", have " + std::to_string(m.max_order()));
  const double mean = m(1);
  if (normalized && !(mean > 0.0)) throw validation_error("normalized moment matrix undefined for the vacuum");
  MomentMatrix out{index_set, {}};
  for (unsigned a : index_set)
    for (unsigned b : index_set) {
      double v = m(a + b);
      if (normalized) v /= std::pow(mean, static_cast<double>(a + b));
      out.entries.push_back(v);
    }
  return out;
}

/// Determinant by Gaussian elimination with partial pivoting.
inline double determinant(const MomentMatrix& mat) {
  const std::size_t d = mat.dim();
  std::vector<long double> a(mat.entries.begin(), mat.entries.end());
  long double det = 1.0L;
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::fabs(a[r * d + col]) > std::fabs(a[piv * d + col])) piv = r;
    if (a[piv * d + col] == 0.0L) return 0.0;
    if (piv != col) {
      for (std::size_t c = 0; c < d; ++c) std::swap(a[piv * d + c], a[col * d + c]);
      det = -det;
    }
    det *= a[col * d + col];
    for (std::size_t r = col + 1; r < d; ++r) {
      const long double f = a[r * d + col] / a[col * d + col];
      for (std::size_t c = col; c < d; ++c) a[r * d + c] -= f * a[col * d + c];
    }
  }
  return static_cast<double>(det);
}

struct MinorCriterion {
  std::vector<unsigned> indices;
  double determinant = 0.0;
  double normalized_determinant = 0.0;  // with entries divided by <:n:>^{j+j'}
  double scale = 0.0;                   // product of the (unnormalized) diagonal
  bool nonclassical = false;
};

/// Every principal minor of size >= 2 over indices {i_1 < ... < i_d} with
/// 2 i_d <= K, ordered by size then lexicographically.
inline std::vector<MinorCriterion> minor_criteria(const MomentSet& m) {
  detail::require(m.max_order() >= 2, "minor criteria need moments up to order >= 2");
  const unsigned top = static_cast<unsigned>(m.max_order() / 2);
  const bool can_normalize = m(1) > 0.0;
  std::vector<MinorCriterion> out;
  const unsigned count = top + 1;
  std::vector<std::vector<unsigned>> subsets;
  for (unsigned mask = 0; mask < (1u << count); ++mask) {
    std::vector<unsigned> s;
    for (unsigned j = 0; j < count; ++j)
      if ((mask >> j) & 1u) s.push_back(j);
    if (s.size() >= 2) subsets.push_back(std::move(s));
  }
  std::sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  for (auto& s : subsets) {
    MinorCriterion c;
    const MomentMatrix mat = moment_matrix(m, s);
    c.determinant = determinant(mat);
    c.normalized_determinant = can_normalize ? determinant(moment_matrix(m, s, true)) : c.determinant;
    c.scale = 1.0;
    for (std::size_t j = 0; j < mat.dim(); ++j) c.scale *= std::fabs(mat(j, j));
    c.nonclassical = c.determinant < 0.0;
    c.indices = std::move(s);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace twinbeam
