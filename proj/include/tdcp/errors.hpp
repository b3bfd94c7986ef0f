#pragma once

#include <stdexcept>
#include <string>

namespace tdcp {

/// Invalid user input: degenerate ranges, non-dividing steps, bad keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not deliver a result (overflow, no bracket).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A potential or initial state produced a non-finite value.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EigenSearchError : public NumericalError {
 public:
  EigenSearchError(int index, double lo, double hi, const std::string& what)
      : NumericalError(what + " (index " + std::to_string(index) +
                       ", bracket [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "])"),
        index_(index),
        lo_(lo),
        hi_(hi) {}

  int index() const noexcept { return index_; }
  double lower() const noexcept { return lo_; }
  double upper() const noexcept { return hi_; }

 private:
  int index_;
  double lo_;
  double hi_;
};

}  // namespace tdcp
