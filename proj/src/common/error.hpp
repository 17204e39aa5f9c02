#pragma once

#include <stdexcept>
#include <string>

namespace readtwice {

// Failure categories shared by every module; the C API maps them 1:1 onto
// rt_status codes.
enum class ErrorKind {
  kInvalidArgument,
  kDimension,
  kContract,
  kParse,
  kIo,
  kNumeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace readtwice
