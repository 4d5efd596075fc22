#pragma once

#include <stdexcept>
#include <string>

namespace eigensampler {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix or vector exceeds the dense caps, or shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class NotHermitianError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public Error {
 public:
  using Error::Error;
};

// Invalid argument values (negative shifts, empty lists, bad step size...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A post-selected step left (numerically) nothing of the state.
class AnnihilatedStateError : public Error {
 public:
  using Error::Error;
};

class RestartsExhaustedError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace eigensampler
