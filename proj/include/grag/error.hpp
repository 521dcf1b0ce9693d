#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grag {

enum class ErrorCode {
  invalid_argument,
  invalid_key,
  provenance,
  integrity,
  dimension_mismatch,
  unknown_node,
  zero_norm,
  extraction_format,
  transport,
  timeout,
  auth,
  rate_limit,
  malformed_response,
  scripting_gap,
  template_error,
  dataset,
  version_mismatch,
  corrupt_record,
  config,
  io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `retryable()` is true only for
/// transport-level provider failures (network, timeout, rate limit).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  bool retryable() const noexcept {
    return code_ == ErrorCode::transport || code_ == ErrorCode::timeout ||
           code_ == ErrorCode::rate_limit;
  }

 private:
  ErrorCode code_;
};

/// Raised when an LLM reply cannot be read as a list of records.
class ExtractionFormatError : public Error {
 public:
  ExtractionFormatError(const std::string& message, std::string raw)
      : Error(ErrorCode::extraction_format, message), raw_(std::move(raw)) {}

  const std::string& raw_response() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Raised by line-oriented readers; the line number is 1-based.
class RecordError : public Error {
 public:
  RecordError(ErrorCode code, std::size_t line, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace grag
