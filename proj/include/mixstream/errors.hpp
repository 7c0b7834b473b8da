#ifndef MIXSTREAM_ERRORS_HPP
#define MIXSTREAM_ERRORS_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace mixstream {

// Error taxonomy. The CLI maps these onto exit codes:
//   usage errors -> 1, DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input, empty training windows, bad labels, schema violations.
class DataError : public Error {
 public:
  using Error::Error;
};

// Feature index or coefficient shape outside the declared schema.
class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

// Failed factorization, non-finite objective, and similar breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Solver did not reach the gradient-norm tolerance within the iteration
// budget. Carries the last iterate so callers can inspect or dead-letter it.
class SolverError : public NumericError {
 public:
  SolverError(std::string message, Eigen::VectorXd last_iterate, double grad_norm)
      : NumericError(std::move(message)),
        last_iterate(std::move(last_iterate)),
        grad_norm(grad_norm) {}

  Eigen::VectorXd last_iterate;
  double grad_norm;
};

}  // namespace mixstream

#endif  // MIXSTREAM_ERRORS_HPP
