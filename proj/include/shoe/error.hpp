// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace shoe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two operands disagree on a length (code length, feature dim, row count).
class LengthMismatch : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input data cannot support the requested computation (e.g. all rows identical).
class DegenerateData : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration; raised before any computation starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

inline void require_same(std::size_t a, std::size_t b, const std::string& what) {
  if (a != b) {
    throw LengthMismatch(what + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail
}  // namespace shoe
