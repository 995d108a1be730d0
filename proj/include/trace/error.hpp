#pragma once

#include <stdexcept>
#include <string>

namespace trace {

// Error taxonomy shared by every module and mapped onto CLI exit codes:
// usage -> 1, data -> 2, numeric -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad invocation: unknown flag, missing argument, inconsistent options.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or invalid input data: parse failures, schema violations,
// coverage gaps, catalog/version mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

// Domain violations and numerical breakdowns: zero-norm vectors,
// singular designs, non-finite results.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace trace
