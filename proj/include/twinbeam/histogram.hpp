#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "twinbeam/errors.hpp"

namespace twinbeam {

/// Counts of photocount outcomes c = 0..c_max for a single detector arm.
class PhotocountHistogram {
 public:
  PhotocountHistogram() = default;
  explicit PhotocountHistogram(std::vector<std::uint64_t> counts) : counts_(std::move(counts)) {
    total_ = std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
  }

  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
  std::uint64_t total() const noexcept { return total_; }
  std::size_t extent() const noexcept { return counts_.size(); }
  std::uint64_t operator[](std::size_t c) const noexcept { return c < counts_.size() ? counts_[c] : 0; }

  void add(std::size_t c, std::uint64_t k = 1) {
    if (c >= counts_.size()) counts_.resize(c + 1, 0);
    counts_[c] += k;
    total_ += k;
  }

  /// Relative frequencies; throws on an empty histogram.
  std::vector<double> normalized() const {
    detail::require(total_ > 0, "photocount histogram is empty");
    std::vector<double> f(counts_.size());
    for (std::size_t c = 0; c < counts_.size(); ++c)
      f[c] = static_cast<double>(counts_[c]) / static_cast<double>(total_);
    return f;
  }

  friend bool operator==(const PhotocountHistogram& a, const PhotocountHistogram& b) {
    const std::size_t n = std::max(a.extent(), b.extent());
    for (std::size_t c = 0; c < n; ++c)
      if (a[c] != b[c]) return false;
    return true;
  }

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Joint signal/idler photocount counts f(c_s, c_i), stored densely.
class JointPhotocountHistogram {
 public:
  JointPhotocountHistogram() = default;
  JointPhotocountHistogram(std::size_t signal_extent, std::size_t idler_extent)
      : rows_(signal_extent), cols_(idler_extent), counts_(signal_extent * idler_extent, 0) {}

  std::size_t signal_extent() const noexcept { return rows_; }
  std::size_t idler_extent() const noexcept { return cols_; }
  std::uint64_t total() const noexcept { return total_; }

  std::uint64_t operator()(std::size_t cs, std::size_t ci) const noexcept {
    return (cs < rows_ && ci < cols_) ? counts_[cs * cols_ + ci] : 0;
  }

  void add(std::size_t cs, std::size_t ci, std::uint64_t k = 1) {
    if (cs >= rows_ || ci >= cols_) grow(std::max(rows_, cs + 1), std::max(cols_, ci + 1));
    counts_[cs * cols_ + ci] += k;
    total_ += k;
  }

  /// Merge another histogram by integer addition.
  JointPhotocountHistogram& operator+=(const JointPhotocountHistogram& other) {
    grow(std::max(rows_, other.rows_), std::max(cols_, other.cols_));
    for (std::size_t s = 0; s < other.rows_; ++s)
      for (std::size_t i = 0; i < other.cols_; ++i) counts_[s * cols_ + i] += other(s, i);
    total_ += other.total_;
    return *this;
  }

  /// Idler counts conditioned on c_s signal photocounts.
  PhotocountHistogram idler_row(std::size_t cs) const {
    std::vector<std::uint64_t> row(cols_, 0);
    if (cs < rows_) std::copy_n(counts_.begin() + static_cast<std::ptrdiff_t>(cs * cols_), cols_, row.begin());
    return PhotocountHistogram(std::move(row));
  }

  PhotocountHistogram signal_marginal() const {
    std::vector<std::uint64_t> m(rows_, 0);
    for (std::size_t s = 0; s < rows_; ++s)
      for (std::size_t i = 0; i < cols_; ++i) m[s] += counts_[s * cols_ + i];
    return PhotocountHistogram(std::move(m));
  }

  PhotocountHistogram idler_marginal() const {
    std::vector<std::uint64_t> m(cols_, 0);
    for (std::size_t s = 0; s < rows_; ++s)
      for (std::size_t i = 0; i < cols_; ++i) m[i] += counts_[s * cols_ + i];
    return PhotocountHistogram(std::move(m));
  }

  friend bool operator==(const JointPhotocountHistogram& a, const JointPhotocountHistogram& b) {
    if (a.total_ != b.total_) return false;
    const std::size_t r = std::max(a.rows_, b.rows_), c = std::max(a.cols_, b.cols_);
    for (std::size_t s = 0; s < r; ++s)
      for (std::size_t i = 0; i < c; ++i)
        if (a(s, i) != b(s, i)) return false;
    return true;
  }

 private:
  void grow(std::size_t rows, std::size_t cols) {
    if (rows == rows_ && cols == cols_) return;
    std::vector<std::uint64_t> next(rows * cols, 0);
    for (std::size_t s = 0; s < rows_; ++s)
      for (std::size_t i = 0; i < cols_; ++i) next[s * cols + i] = counts_[s * cols_ + i];
    counts_ = std::move(next);
    rows_ = rows;
    cols_ = cols;
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

}  // namespace twinbeam
