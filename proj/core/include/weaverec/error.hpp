// SPDX-FileCopyrightText: 2026 The WeaveRec Lab Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace weaverec {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity escaped a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent or insufficient interaction data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid model input (unknown item, empty prefix, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Optimization diverged or could not run.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class MergeError : public Error {
 public:
  using Error::Error;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

/// WVRC container failures. Each failure mode has its own kind so callers can
/// tell tampering from truncation from a format revision.
class CheckpointError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kVersionMismatch, kTruncated, kHashMismatch, kFormat };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace weaverec
