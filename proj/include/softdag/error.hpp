#pragma once

#include <stdexcept>
#include <string>

namespace softdag {

// Failure categories. The C API maps each one onto a status code.
enum class ErrorCode {
  kInvalidArgument,
  kParse,
  kIo,
  kLimit,         // configured size bound or 128-bit count overflow
  kPrecondition,  // operation not applicable to this graph / scheme / params
  kViolation,     // a checked identity failed
  kDiverged,      // non-finite loss or gradient during training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace softdag
