// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kascade {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

class InvalidPlan : public Error {
 public:
  using Error::Error;
};

// Non-finite value met during attention; carries where it happened.
class NumericError : public Error {
 public:
  NumericError(std::size_t layer, std::size_t head, std::size_t row)
      : Error("non-finite attention value at layer " + std::to_string(layer) +
              ", head " + std::to_string(head) + ", row " + std::to_string(row)),
        layer_(layer),
        head_(head),
        row_(row) {}

  std::size_t layer() const noexcept { return layer_; }
  std::size_t head() const noexcept { return head_; }
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t layer_;
  std::size_t head_;
  std::size_t row_;
};

// Malformed trace, plan or report. For binary inputs `byte_offset` points at
// the first offending byte; for structured text `field_path` names the field.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        detail_(what),
        byte_offset_(byte_offset) {}
  FormatError(const std::string& what, std::string field_path)
      : Error(what + " (at " + field_path + ")"),
        detail_(what),
        byte_offset_(kNoOffset),
        field_path_(std::move(field_path)) {}

  static constexpr std::uint64_t kNoOffset = ~std::uint64_t{0};

  // Message without the location suffix.
  const std::string& detail() const noexcept { return detail_; }
  std::uint64_t byte_offset() const noexcept { return byte_offset_; }
  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string detail_;
  std::uint64_t byte_offset_;
  std::string field_path_;
};

}  // namespace kascade
