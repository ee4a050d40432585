// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mudaif {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced or encountered.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the differentiation tape (e.g. second backward on a released graph).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Violated calling contract, such as a non-scalar loss.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Every key of some query row is masked out.
class DegenerateMaskError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range token id or index.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Fusion mode cannot be applied to the given operands.
class ModeError : public Error {
 public:
  using Error::Error;
};

/// Sequence longer than the model supports.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Invalid decoding or optimizer parameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents; the message carries the byte offset.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mudaif
