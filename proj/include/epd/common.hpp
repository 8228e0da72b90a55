#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace epd {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Raised when an iterate stops being finite.
class NumericalAbort : public Error {
 public:
  using Error::Error;
};

inline void require_size(Index got, Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                         std::to_string(got));
  }
}

/// Layout of a stacked basis-material image: D blocks of N = n_side^2 pixels,
/// each block row-major from the top-left pixel.
struct ImageShape {
  Index n_side = 0;
  Index n_materials = 1;

  Index pixels() const { return n_side * n_side; }
  Index size() const { return pixels() * n_materials; }
};

/// View of a stacked image as an N x D matrix, one column per material.
inline Eigen::Map<const Matrix> as_columns(const Vector& f, Index n_pixels) {
  return {f.data(), n_pixels, f.size() / n_pixels};
}

inline Eigen::Map<Matrix> as_columns(Vector& f, Index n_pixels) { return {f.data(), n_pixels, f.size() / n_pixels}; }

}  // namespace epd
