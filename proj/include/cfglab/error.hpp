#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfglab {

enum class ErrorCode {
  MalformedHeader,
  TruncatedPayload,
  CountOverflow,
  FillerMismatch,
  PayloadTooLarge,
  MissingTrailingKnowledge,
  BlockOutOfRange,
  WrongInterface,
  NoKeyLoaded,
  UnknownRegister,
  UnexpectedSuccess,
  OracleDefended,
  NonWordAligned,
  OrderingViolation,
  LedgerConflict,
  UnsafeFooter,
  MalformedInput,
  Io,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this one exception type; callers
// branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cfglab
