// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace htseq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (dataset, schema or config file).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a schema or data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape or layout mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training (non-finite loss or gradient).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace htseq
