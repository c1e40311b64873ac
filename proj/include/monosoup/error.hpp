#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace monosoup {

enum class ErrorCode {
  MalformedHeader,
  OffsetOverlap,
  UnsupportedDtype,
  IoFailure,
  SchemaMismatch,
  NonFiniteInput,
  AllZeroSpectrum,
  IndexOutOfRange,
  OutOfRange,
  ShapeMismatch,
  EmptyPool,
  DegenerateAngle,
  UnknownBlockStructure,
  EvaluatorFailure,
  SampleCountMismatch,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::OffsetOverlap: return "OffsetOverlap";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::AllZeroSpectrum: return "AllZeroSpectrum";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::DegenerateAngle: return "DegenerateAngle";
    case ErrorCode::UnknownBlockStructure: return "UnknownBlockStructure";
    case ErrorCode::EvaluatorFailure: return "EvaluatorFailure";
    case ErrorCode::SampleCountMismatch: return "SampleCountMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library. The code is what callers branch on;
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Schema errors carry the offending tensor name separately so the CLI can
/// report it verbatim.
class SchemaMismatchError : public Error {
 public:
  SchemaMismatchError(std::string tensor, const std::string& detail)
      : Error(ErrorCode::SchemaMismatch, "tensor '" + tensor + "': " + detail),
        tensor_(std::move(tensor)) {}

  [[nodiscard]] const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace monosoup
