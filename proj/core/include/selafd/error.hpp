// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace selafd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration (rank >= d, placement mismatch, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad user data: unknown labels, too-short recordings, empty splits.
class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or similar numerical failure during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// API misuse: non-scalar loss, double merge, backward called twice.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace selafd
