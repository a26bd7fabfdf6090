#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lmolab {

// Failure categories shared by every module. The CLI maps the validation
// kinds to exit code 2 and everything else to 1.
enum class ErrorKind {
  kInvalidParameter,
  kInvalidInput,
  kInvalidState,
  kNumericFailure,
  kDegenerateInput,
  kUnsupportedNorm,
  kOracleTooLarge,
  kInsufficientData,
  kProfileConstructionFailed,
  kDegenerateInstance,
  kPreconditionViolation,
  kIncompatibleCheckpoint,
  kIo,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace lmolab
