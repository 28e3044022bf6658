#pragma once

#include <stdexcept>
#include <string>

namespace twinbeam {

// Bad input: malformed files, out-of-domain parameters, empty histograms.
// The CLI maps these to exit code 1.
class validation_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The inputs were fine but the numbers were not: truncation, cancellation,
// underflowing conditions. The CLI maps these to exit code 2.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class truncation_error : public numerical_error {
 public:
  using numerical_error::numerical_error;
};

class instability_error : public numerical_error {
 public:
  using numerical_error::numerical_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw validation_error(what);
}

}  // namespace detail
}  // namespace twinbeam
